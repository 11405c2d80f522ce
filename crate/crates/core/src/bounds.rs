//! Closed-form region-count bounds in arbitrary-precision arithmetic.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Pow, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::gcn::{param_count, GcnSpec};
use crate::graph::NormalizedAdjacency;
use crate::linalg::{dot, Matrix, EPS};

/// Default cap on `D* · N'` for subset enumeration in [`kset_count`].
pub const KSET_CAP: usize = 20;

pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) after each step.
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// `Σ_{i=0}^{min(n0, n1)} C(n1, i)`: regions of `n1` generic hyperplanes in
/// `R^{n0}`.
pub fn binom_sum(n0: usize, n1: usize) -> BigUint {
    (0..=n0.min(n1)).map(|i| binomial(n1, i)).sum()
}

/// `2^n`.
pub fn naive_bound(n: usize) -> BigUint {
    BigUint::one() << n
}

/// Maximal region count of a one-layer GCN, `(Σ_{i≤N} C(N', i))^{D*}`.
pub fn one_layer_max(d_star: usize, n_in: usize, n_out: usize) -> BigUint {
    binom_sum(n_in, n_out).pow(d_star)
}

/// Number of linearly independent index subsets (the empty one included) of
/// the rank-one normals `ã_i ⊗ w_j`, `i < D*`, `j < N'`.
pub fn kset_count(adj: &NormalizedAdjacency, w: &Matrix) -> Result<BigUint> {
    kset_count_capped(adj, w, KSET_CAP)
}

pub fn kset_count_capped(adj: &NormalizedAdjacency, w: &Matrix, cap: usize) -> Result<BigUint> {
    let rows = adj.a_tilde.rows();
    let total = rows * w.cols();
    if total > cap {
        return Err(Error::CapExceeded {
            module: "bounds",
            what: "D*·N'",
            actual: total,
            cap,
            advice: "use the closed-form one_layer_max instead",
        });
    }
    let n = w.rows();
    let mut normals = Vec::with_capacity(total);
    for i in 0..rows {
        let a = adj.a_tilde.row(i);
        for j in 0..w.cols() {
            let col = w.column(j);
            let v: Vec<f64> = a.iter().flat_map(|&ak| col.iter().map(move |&wl| ak * wl)).collect();
            normals.push(v);
        }
    }
    debug_assert!(normals.iter().all(|v| v.len() == adj.node_count() * n));
    let mut basis = Vec::new();
    Ok(BigUint::from(count_independent(&normals, 0, &mut basis)))
}

// Independent sets are closed under subsets, so extending only independent
// prefixes enumerates all of them.
fn count_independent(vectors: &[Vec<f64>], next: usize, basis: &mut Vec<Vec<f64>>) -> u64 {
    if next == vectors.len() {
        return 1;
    }
    let mut total = count_independent(vectors, next + 1, basis);
    if let Some(q) = orthogonal_residual(&vectors[next], basis) {
        basis.push(q);
        total += count_independent(vectors, next + 1, basis);
        basis.pop();
    }
    total
}

/// Unit component of `v` orthogonal to the orthonormal `basis`, or `None`
/// when `v` lies in its span (relative tolerance `EPS`).
fn orthogonal_residual(v: &[f64], basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let scale = dot(v, v).sqrt();
    if scale == 0.0 {
        return None;
    }
    let mut r = v.to_vec();
    // Two passes of modified Gram-Schmidt.
    for _ in 0..2 {
        for q in basis {
            let c = dot(&r, q);
            for (x, y) in r.iter_mut().zip(q) {
                *x -= c * y;
            }
        }
    }
    let rn = dot(&r, &r).sqrt();
    (rn > EPS * scale).then(|| r.iter().map(|x| x / rn).collect())
}

/// Upper bound for an `L`-layer GCN: the first layer's one-layer maximum
/// times `Σ_{i≤D·N_0} C(D·N_l, i)` for each later layer.
pub fn multi_upper(spec: &GcnSpec, adj: &NormalizedAdjacency) -> BigUint {
    let d = adj.node_count();
    let n0 = spec.input_features();
    let first = one_layer_max(adj.d_star, n0, spec.width(1));
    (2..=spec.layers()).fold(first, |acc, l| acc * binom_sum(d * n0, d * spec.width(l)))
}

/// Checks `N_l ≥ N_0` for every hidden layer `l ∈ [1, L−1]`.
pub fn check_lower_hypothesis(spec: &GcnSpec, module: &'static str) -> Result<()> {
    let n0 = spec.input_features();
    match (1..spec.layers()).find(|&l| spec.width(l) < n0) {
        Some(l) => Err(Error::Hypothesis {
            module,
            detail: format!(
                "Assume that N_l >= N_0: layer {l} has width {} < N_0 = {n0}",
                spec.width(l)
            ),
        }),
        None => Ok(()),
    }
}

/// Lower bound for the maximal region count of an `L`-layer GCN:
/// `one_layer_max(D*, N_0, N_L) · Π_{l<L} ⌊N_l/N_0⌋^{N_0·rank_a}`.
pub fn multi_lower(spec: &GcnSpec, adj: &NormalizedAdjacency, rank_a: usize) -> Result<BigUint> {
    check_lower_hypothesis(spec, "bounds")?;
    let n0 = spec.input_features();
    let last = one_layer_max(adj.d_star, n0, spec.width(spec.layers()));
    Ok((1..spec.layers()).fold(last, |acc, l| {
        acc * BigUint::from(spec.width(l) / n0).pow(n0 * rank_a)
    }))
}

/// Composition bound for a fully connected ReLU network with the given
/// input dimension and layer widths.
pub fn nn_upper(input_dim: usize, widths: &[usize]) -> BigUint {
    widths.iter().map(|&w| binom_sum(input_dim, w)).product()
}

pub fn per_param_ratio(region_bound: &BigUint, spec: &GcnSpec) -> BigRational {
    BigRational::new(region_bound.clone().into(), param_count(spec).into())
}

/// Exponent `D*·N` in the growth rate `(N')^{D*·N}` of the one-layer
/// maximum as `N'` grows.
pub fn asymptotic_exponent(d_star: usize, n_in: usize) -> usize {
    d_star * n_in
}

fn ser_big<S: Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

fn ser_big_opt<S: Serializer>(v: &Option<BigUint>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.serialize_some(&v.to_string()),
        None => s.serialize_none(),
    }
}

fn ser_ratio_opt<S: Serializer>(
    v: &Option<BigRational>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.serialize_some(&v.to_string()),
        None => s.serialize_none(),
    }
}

/// All bounds for one architecture on one graph. Integers serialize as
/// decimal strings and ratios as `num/den`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub widths: Vec<usize>,
    pub nodes: usize,
    pub d_star: usize,
    pub rank_a: usize,
    pub neurons: usize,
    #[serde(serialize_with = "ser_big")]
    pub naive: BigUint,
    #[serde(serialize_with = "ser_big_opt")]
    pub one_layer_max: Option<BigUint>,
    #[serde(serialize_with = "ser_big_opt")]
    pub multi_lower: Option<BigUint>,
    #[serde(serialize_with = "ser_big_opt")]
    pub multi_upper: Option<BigUint>,
    #[serde(serialize_with = "ser_big")]
    pub params: BigUint,
    #[serde(serialize_with = "ser_ratio_opt")]
    pub ratio_lower: Option<BigRational>,
    #[serde(serialize_with = "ser_ratio_opt")]
    pub ratio_upper: Option<BigRational>,
    #[serde(serialize_with = "ser_big_opt")]
    pub exact: Option<BigUint>,
    #[serde(serialize_with = "ser_big_opt")]
    pub estimated: Option<BigUint>,
}

impl BoundReport {
    pub fn new(spec: &GcnSpec, adj: &NormalizedAdjacency) -> Self {
        Self::with_rank(spec, adj, adj.rank())
    }

    pub fn with_rank(spec: &GcnSpec, adj: &NormalizedAdjacency, rank_a: usize) -> Self {
        let d = adj.node_count();
        let neurons = spec.neuron_count(d);
        let one = (spec.layers() == 1)
            .then(|| one_layer_max(adj.d_star, spec.input_features(), spec.width(1)));
        let lower = multi_lower(spec, adj, rank_a).ok();
        let upper = Some(multi_upper(spec, adj));
        Self {
            widths: spec.widths().to_vec(),
            nodes: d,
            d_star: adj.d_star,
            rank_a,
            neurons,
            naive: naive_bound(neurons),
            one_layer_max: one,
            ratio_lower: lower.as_ref().map(|b| per_param_ratio(b, spec)),
            ratio_upper: upper.as_ref().map(|b| per_param_ratio(b, spec)),
            multi_lower: lower,
            multi_upper: upper,
            params: param_count(spec),
            exact: None,
            estimated: None,
        }
    }
}
