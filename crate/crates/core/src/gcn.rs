//! ReLU GCN architectures, parameters, forward evaluation and activation
//! patterns.
//!
//! A layer computes `X⁽ˡ⁾ = ReLU(Â X⁽ˡ⁻¹⁾ W_l + 1 b_lᵀ)`. Neurons are ordered
//! lexicographically by `(layer, node, feature)`.

use std::fmt;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::linalg::Matrix;

/// Layer widths `[N_0, N_1, ..., N_L]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SpecFile", into = "SpecFile")]
pub struct GcnSpec {
    widths: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    widths: Vec<usize>,
}

impl TryFrom<SpecFile> for GcnSpec {
    type Error = Error;
    fn try_from(f: SpecFile) -> Result<Self> {
        GcnSpec::new(f.widths)
    }
}

impl From<GcnSpec> for SpecFile {
    fn from(s: GcnSpec) -> Self {
        SpecFile { widths: s.widths }
    }
}

impl GcnSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidSpec(widths));
        }
        Ok(Self { widths })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_features(&self) -> usize {
        self.widths[0]
    }

    /// Output width of layer `l` (1-based, `l = 0` is the input).
    pub fn width(&self, l: usize) -> usize {
        self.widths[l]
    }

    /// Total neuron count `D · (N_1 + ... + N_L)`.
    pub fn neuron_count(&self, nodes: usize) -> usize {
        nodes * self.widths[1..].iter().sum::<usize>()
    }

    /// Flattened input dimension `D · N_0`.
    pub fn input_dim(&self, nodes: usize) -> usize {
        nodes * self.widths[0]
    }
}

impl fmt::Display for GcnSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Weights `W_l` (`N_(l-1) × N_l`) and biases `b_l` (length `N_l`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Parameters {
    pub fn zeros(spec: &GcnSpec) -> Self {
        let w = spec.widths();
        Self {
            weights: w.windows(2).map(|p| Matrix::zeros(p[0], p[1])).collect(),
            biases: w[1..].iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Checks shapes against `spec`, naming the first inconsistent layer.
    pub fn check(&self, spec: &GcnSpec) -> Result<()> {
        let l = spec.layers();
        if self.weights.len() != l || self.biases.len() != l {
            return Err(Error::Shape {
                layer: self.weights.len().min(self.biases.len()) + 1,
                detail: format!(
                    "{} weight matrices and {} bias vectors for {l} layers",
                    self.weights.len(),
                    self.biases.len()
                ),
            });
        }
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let want = (spec.width(i), spec.width(i + 1));
            if w.shape() != want {
                return Err(Error::Shape {
                    layer: i + 1,
                    detail: format!("weight is {:?}, expected {want:?}", w.shape()),
                });
            }
            if b.len() != want.1 {
                return Err(Error::Shape {
                    layer: i + 1,
                    detail: format!("bias has length {}, expected {}", b.len(), want.1),
                });
            }
        }
        Ok(())
    }

    pub fn entry_count(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }
}

/// Per-layer outputs and preactivations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub outputs: Vec<Matrix>,
    pub preacts: Vec<Matrix>,
}

/// Affine part of one layer: `Â X W + 1 bᵀ`.
pub fn layer_preact(adj: &Matrix, x: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
    let mut z = adj.matmul(x).matmul(w);
    for i in 0..z.rows() {
        for (v, bj) in z.row_mut(i).iter_mut().zip(b) {
            *v += bj;
        }
    }
    z
}

pub fn forward(
    spec: &GcnSpec,
    adj: &NormalizedAdjacency,
    params: &Parameters,
    x0: &Matrix,
) -> Result<ForwardTrace> {
    params.check(spec)?;
    let d = adj.node_count();
    if x0.shape() != (d, spec.input_features()) {
        return Err(Error::Shape {
            layer: 0,
            detail: format!("input is {:?}, expected {:?}", x0.shape(), (d, spec.input_features())),
        });
    }
    let mut outputs = Vec::with_capacity(spec.layers());
    let mut preacts = Vec::with_capacity(spec.layers());
    let mut x = x0.clone();
    for (w, b) in params.weights.iter().zip(&params.biases) {
        let z = layer_preact(&adj.a_hat, &x, w, b);
        x = Matrix::from_fn(z.rows(), z.cols(), |i, j| z[(i, j)].max(0.0));
        preacts.push(z);
        outputs.push(x.clone());
    }
    Ok(ForwardTrace { outputs, preacts })
}

/// Sign word over all neurons: bit set means active (`+1`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivationPattern {
    len: usize,
    words: Vec<u64>,
}

impl ActivationPattern {
    pub fn new(len: usize) -> Self {
        Self { len, words: vec![0; len.div_ceil(64)] }
    }

    pub fn from_signs(signs: impl IntoIterator<Item = bool>) -> Self {
        let mut p = Self::new(0);
        for s in signs {
            p.push(s);
        }
        p
    }

    pub fn push(&mut self, active: bool) {
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        if active {
            self.words[self.len / 64] |= 1 << (self.len % 64);
        }
        self.len += 1;
    }

    pub fn set(&mut self, i: usize, active: bool) {
        assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if active {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    /// Signs as `+1` / `-1`.
    pub fn signs(&self) -> impl Iterator<Item = i8> + '_ {
        (0..self.len).map(|i| if self.is_active(i) { 1 } else { -1 })
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn extend(&mut self, other: &ActivationPattern) {
        for i in 0..other.len {
            self.push(other.is_active(i));
        }
    }

    pub(crate) fn clear(&mut self) {
        self.len = 0;
        self.words.clear();
    }
}

impl fmt::Display for ActivationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.is_active(i) { "+" } else { "-" })?;
        }
        Ok(())
    }
}

/// Classifies preactivations into a sign word. Values within `tol` of zero
/// count as inactive.
pub fn pattern(preacts: &[Matrix], tol: f64) -> ActivationPattern {
    let mut p = ActivationPattern::new(0);
    for z in preacts {
        for &v in z.as_slice() {
            p.push(v > tol);
        }
    }
    p
}

/// Exact parameter count `Σ_l (N_(l-1)·N_l + N_l)`.
pub fn param_count(spec: &GcnSpec) -> BigUint {
    spec.widths()
        .windows(2)
        .map(|p| BigUint::from(p[0]) * BigUint::from(p[1]) + BigUint::from(p[1]))
        .sum()
}

// Each entry owns a fixed block of the ChaCha keystream, so entries can be
// generated in any order.
const WORDS_PER_ENTRY: u128 = 16;

fn entry_rng(seed: u64, stream: u64, entry: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(entry as u128 * WORDS_PER_ENTRY);
    rng
}

/// Kaiming-normal weights (variance `2 / fan_in`) and uniform
/// `±1/sqrt(fan_in)` biases, keyed by `(seed, layer, entry)`.
pub fn init_kaiming(spec: &GcnSpec, seed: u64) -> Parameters {
    let w = spec.widths();
    let mut params = Parameters::zeros(spec);
    for (l, &fan_in) in w.iter().take(spec.layers()).enumerate() {
        let fan_in = fan_in as f64;
        let std = (2.0 / fan_in).sqrt();
        let bound = 1.0 / fan_in.sqrt();
        let weight = &mut params.weights[l];
        let cols = weight.cols();
        for r in 0..weight.rows() {
            for c in 0..cols {
                let z: f64 = entry_rng(seed, 2 * l as u64, r * cols + c).sample(StandardNormal);
                weight[(r, c)] = std * z;
            }
        }
        for (j, b) in params.biases[l].iter_mut().enumerate() {
            *b = entry_rng(seed, 2 * l as u64 + 1, j).random_range(-bound..bound);
        }
    }
    params
}

/// Allocation-free evaluator used on hot paths (sampling, rasterization).
pub struct Evaluator<'a> {
    adj: &'a Matrix,
    params: &'a Parameters,
    nodes: usize,
    x: Vec<f64>,
    ax: Vec<f64>,
    z: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(spec: &GcnSpec, adj: &'a NormalizedAdjacency, params: &'a Parameters) -> Result<Self> {
        params.check(spec)?;
        let widest = *spec.widths().iter().max().expect("non-empty widths");
        let d = adj.node_count();
        Ok(Self {
            adj: &adj.a_hat,
            params,
            nodes: d,
            x: vec![0.0; d * widest],
            ax: vec![0.0; d * widest],
            z: vec![0.0; d * widest],
        })
    }

    /// Writes the activation pattern of flattened input `x0` (row-major
    /// `D × N_0`) into `out`, and returns the flattened final-layer output.
    pub fn pattern_into(&mut self, x0: &[f64], tol: f64, out: &mut ActivationPattern) -> &[f64] {
        out.clear();
        let d = self.nodes;
        let mut n_in = x0.len() / d;
        self.x[..x0.len()].copy_from_slice(x0);
        for (w, b) in self.params.weights.iter().zip(&self.params.biases) {
            let n_out = w.cols();
            // ax = Â x
            for i in 0..d {
                let row = &mut self.ax[i * n_in..(i + 1) * n_in];
                row.fill(0.0);
                for k in 0..d {
                    let a = self.adj[(i, k)];
                    if a == 0.0 {
                        continue;
                    }
                    for (r, xv) in row.iter_mut().zip(&self.x[k * n_in..(k + 1) * n_in]) {
                        *r += a * xv;
                    }
                }
            }
            // z = ax W + 1 bᵀ
            for i in 0..d {
                let zrow = &mut self.z[i * n_out..(i + 1) * n_out];
                zrow.copy_from_slice(b);
                for k in 0..n_in {
                    let a = self.ax[i * n_in + k];
                    for (zv, wv) in zrow.iter_mut().zip(w.row(k)) {
                        *zv += a * wv;
                    }
                }
            }
            for (xv, &zv) in self.x.iter_mut().zip(&self.z[..d * n_out]) {
                out.push(zv > tol);
                *xv = zv.max(0.0);
            }
            n_in = n_out;
        }
        &self.x[..d * n_in]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize, Fixture};

    fn spec(w: &[usize]) -> GcnSpec {
        GcnSpec::new(w.to_vec()).unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_everything() {
        let s = spec(&[2, 3, 2]);
        let adj = normalize(&Fixture::Path3.graph());
        let x0 = Matrix::from_fn(3, 2, |i, j| (i as f64) - (j as f64) * 2.5);
        let t = forward(&s, &adj, &Parameters::zeros(&s), &x0).unwrap();
        for m in t.preacts.iter().chain(&t.outputs) {
            assert!(m.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scalar_single_node() {
        let s = spec(&[1, 1]);
        let adj = normalize(&Fixture::Single1.graph());
        let p = Parameters { weights: vec![Matrix::from_vec(1, 1, vec![2.0])], biases: vec![vec![-1.0]] };
        let t = forward(&s, &adj, &p, &Matrix::from_vec(1, 1, vec![3.0])).unwrap();
        assert_eq!(t.preacts[0][(0, 0)], 5.0);
        assert_eq!(t.outputs[0][(0, 0)], 5.0);
    }

    #[test]
    fn path3_first_column() {
        let s = spec(&[1, 1]);
        let adj = normalize(&Fixture::Path3.graph());
        let p = Parameters { weights: vec![Matrix::from_vec(1, 1, vec![1.0])], biases: vec![vec![0.0]] };
        let t = forward(&s, &adj, &p, &Matrix::from_vec(3, 1, vec![1.0, 0.0, 0.0])).unwrap();
        let expect = [0.5, 1.0 / 6f64.sqrt(), 0.0];
        for (got, want) in t.preacts[0].as_slice().iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_errors_name_layer() {
        let s = spec(&[1, 2, 3]);
        let mut p = Parameters::zeros(&s);
        p.weights[1] = Matrix::zeros(3, 3);
        let adj = normalize(&Fixture::Single1.graph());
        let err = forward(&s, &adj, &p, &Matrix::zeros(1, 1)).unwrap_err();
        assert!(matches!(err, Error::Shape { layer: 2, .. }), "{err}");
        let err = forward(&s, &adj, &Parameters::zeros(&s), &Matrix::zeros(2, 1)).unwrap_err();
        assert!(matches!(err, Error::Shape { layer: 0, .. }));
    }

    #[test]
    fn tie_rule_and_order() {
        let z1 = Matrix::from_rows(&[[1.0, 0.0], [-2.0, 3.0]]).unwrap();
        let z2 = Matrix::from_rows(&[[1e-12], [5.0]]).unwrap();
        let p = pattern(&[z1, z2], 0.0);
        assert_eq!(p.to_string(), "+--+++");
        assert_eq!(pattern(&[Matrix::from_rows(&[[1e-12]]).unwrap()], 1e-9).to_string(), "-");
        assert_eq!(pattern(&[Matrix::from_rows(&[[2.0, 3.0]]).unwrap()], 0.0).to_string(), "++");
    }

    #[test]
    fn pattern_words_span_many_bits() {
        let p = ActivationPattern::from_signs((0..130).map(|i| i % 3 == 0));
        assert_eq!(p.len(), 130);
        assert_eq!(p.words().len(), 3);
        assert!(p.is_active(129) && !p.is_active(128));
        assert_eq!(p.signs().filter(|&s| s == 1).count(), 44);
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(param_count(&spec(&[1, 1])), BigUint::from(2u32));
        assert_eq!(param_count(&spec(&[1, 2, 3])), BigUint::from(13u32));
        assert_eq!(param_count(&spec(&[2, 2, 5])), BigUint::from(21u32));
        for w in [[1, 1, 1], [3, 5, 2], [2, 7, 4]] {
            let s = spec(&w);
            assert_eq!(param_count(&s), BigUint::from(init_kaiming(&s, 3).entry_count()));
        }
    }

    #[test]
    fn kaiming_is_deterministic_and_seeded() {
        let s = spec(&[2, 4, 3]);
        assert_eq!(init_kaiming(&s, 11), init_kaiming(&s, 11));
        assert_ne!(init_kaiming(&s, 11), init_kaiming(&s, 12));
        let p = init_kaiming(&s, 5);
        p.check(&s).unwrap();
        assert!(p.biases[0].iter().all(|b| b.abs() < 1.0 / 2f64.sqrt()));
    }

    #[test]
    fn kaiming_weight_variance() {
        let s = spec(&[4, 100_000]);
        let p = init_kaiming(&s, 2024);
        let w = p.weights[0].row(0);
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / 0.5 - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn spec_json_and_validation() {
        let s: GcnSpec = serde_json::from_str(r#"{"widths": [2, 2, 3]}"#).unwrap();
        assert_eq!(s.layers(), 2);
        assert_eq!(s.neuron_count(3), 15);
        assert!(serde_json::from_str::<GcnSpec>(r#"{"widths": [2]}"#).is_err());
        assert!(GcnSpec::new(vec![1, 0]).is_err());
    }

    #[test]
    fn evaluator_matches_forward() {
        let s = spec(&[2, 3, 4]);
        let adj = normalize(&Fixture::Fig2Graph4.graph());
        let p = init_kaiming(&s, 9);
        let x0 = Matrix::from_fn(4, 2, |i, j| (i as f64 * 0.7 - j as f64 * 1.3).sin() * 3.0);
        let t = forward(&s, &adj, &p, &x0).unwrap();
        let mut ev = Evaluator::new(&s, &adj, &p).unwrap();
        let mut pat = ActivationPattern::new(0);
        let out = ev.pattern_into(x0.as_slice(), 0.0, &mut pat).to_vec();
        assert_eq!(pat, pattern(&t.preacts, 0.0));
        assert!(out.iter().zip(t.outputs[1].as_slice()).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
