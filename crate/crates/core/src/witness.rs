//! Explicit GCN parameters that reach the multi-layer lower bound by space
//! folding, plus numerical checks of each step of the construction.
//!
//! Each hidden layer folds every coordinate `y = (ÂH)_{a,k}` of a window
//! `[α, α + c]` with a `p`-tooth sawtooth, so `p` input cells per coordinate
//! share one image. The alternating-sign combination of the sawtooth units is
//! a linear map without activation; it is merged into the next layer's
//! weight. The last layer is generic, with hyperplanes passing through the
//! window that the previous fold covers.

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrangement::{exact_count_multi, ser_big, CountOptions};
use crate::bounds::{check_lower_hypothesis, multi_lower};
use crate::error::{Error, Result};
use crate::gcn::{layer_preact, GcnSpec, Parameters};
use crate::graph::NormalizedAdjacency;
use crate::linalg::{Matrix, EPS};

const CHECK_TOL: f64 = 1e-9;
// Bias of surplus units whose weights are zero: always inactive.
const DEAD_BIAS: f64 = -1.0;
// Final-layer hyperplanes pass within this fraction of the half-width of the
// window center.
const FINAL_JITTER: f64 = 0.25;
const FINAL_STREAM: u64 = 0xf1;

/// The input interval `[alpha, alpha + c]` folded (or, for the last layer,
/// cut) by one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldWindow {
    pub alpha: f64,
    pub c: f64,
}

impl FoldWindow {
    fn center(&self) -> f64 {
        self.alpha + 0.5 * self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessPlan {
    /// `⌊N_l / N_0⌋` for each hidden layer.
    pub p_per_layer: Vec<usize>,
    /// Diagonal of `M`; `Â` maps `∏_a [0, sqrt(r_a)]` into itself.
    pub r: Vec<f64>,
    pub widths: Vec<usize>,
    pub final_seed: u64,
    /// Fold window of each hidden layer.
    pub windows: Vec<FoldWindow>,
    pub final_window: FoldWindow,
}

/// `relu(p y) + Σ_{m=2..p} (−1)^{m+1} relu(2(p y − (m−1) c))`: maps each
/// `[i c/p, (i+1) c/p]` onto `[0, c]`, alternately up and down.
pub fn sawtooth_fold(p: usize, c: f64, y: f64) -> f64 {
    let py = p as f64 * y;
    let mut s = py.max(0.0);
    for m in 2..=p {
        let sign = if m % 2 == 0 { -1.0 } else { 1.0 };
        s += sign * (2.0 * (py - (m - 1) as f64 * c)).max(0.0);
    }
    s
}

/// Weights, biases and the sign-combination matrix `W*` (`N_l × N_0`) of one
/// folding layer. Feature block `k` reads only input feature `k`.
fn fold_layer(p: usize, n0: usize, n_out: usize, win: FoldWindow) -> (Matrix, Vec<f64>, Matrix) {
    let pf = p as f64;
    let mut w = Matrix::zeros(n0, n_out);
    let mut b = vec![DEAD_BIAS; n_out];
    let mut star = Matrix::zeros(n_out, n0);
    for k in 0..n0 {
        for m in 1..=p {
            let j = p * k + m - 1;
            if m == 1 {
                w[(k, j)] = pf;
                b[j] = -pf * win.alpha;
                star[(j, k)] = 1.0;
            } else {
                w[(k, j)] = 2.0 * pf;
                b[j] = -2.0 * pf * win.alpha - 2.0 * (m - 1) as f64 * win.c;
                star[(j, k)] = if m % 2 == 0 { -1.0 } else { 1.0 };
            }
        }
    }
    (w, b, star)
}

/// Window of `ÂH` that is fully covered when every column of `H` ranges over
/// `[0, c]^D`: a cube around `t·1`, reached from `H = t·g` with `Âg = 1`.
fn covered_window(adj: &NormalizedAdjacency, c: f64) -> Result<FoldWindow> {
    let pinv = adj.a_hat.symmetric_pinv(EPS);
    let d = adj.node_count();
    let g = pinv.matvec(&vec![1.0; d]);
    let residual = adj.a_hat.matvec(&g).iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    if residual > CHECK_TOL {
        return Err(Error::Witness(format!(
            "the all-ones vector is not in the column space of the adjacency (residual {residual:.3e})"
        )));
    }
    if g.iter().any(|&x| x <= 0.0) {
        return Err(Error::Witness(format!("Â⁺1 = {g:?} is not positive; no centered fold window")));
    }
    let gmax = g.iter().cloned().fold(0.0, f64::max);
    let t = c / (2.0 * gmax);
    let mu = g.iter().map(|&x| (t * x).min(c - t * x)).fold(f64::INFINITY, f64::min);
    let h = mu / pinv.inf_norm();
    Ok(FoldWindow { alpha: t - h, c: 2.0 * h })
}

fn final_layer(n0: usize, n_out: usize, win: FoldWindow, seed: u64) -> (Matrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(FINAL_STREAM);
    let w = Matrix::from_fn(n0, n_out, |_, _| rng.sample(StandardNormal));
    let jitter = FINAL_JITTER * 0.5 * win.c;
    let b = (0..n_out)
        .map(|j| {
            -(0..n0)
                .map(|k| w[(k, j)] * (win.center() + jitter * rng.random_range(-1.0..1.0)))
                .sum::<f64>()
        })
        .collect();
    (w, b)
}

fn plan_for(spec: &GcnSpec, adj: &NormalizedAdjacency, final_seed: u64) -> Result<WitnessPlan> {
    check_lower_hypothesis(spec, "witness")?;
    let n0 = spec.input_features();
    let hidden = spec.layers() - 1;
    let p_per_layer: Vec<usize> = (1..=hidden).map(|l| spec.width(l) / n0).collect();
    let mut windows = Vec::with_capacity(hidden);
    if hidden > 0 {
        windows.push(FoldWindow { alpha: 0.0, c: 1.0 });
    }
    for _ in 1..hidden {
        let prev = windows.last().expect("first window pushed").c;
        windows.push(covered_window(adj, prev)?);
    }
    let final_window = match windows.last() {
        Some(w) => covered_window(adj, w.c)?,
        None => FoldWindow { alpha: -1.0, c: 2.0 },
    };
    Ok(WitnessPlan {
        p_per_layer,
        r: adj.degrees.clone(),
        widths: spec.widths().to_vec(),
        final_seed,
        windows,
        final_window,
    })
}

/// Builds the folding network for `spec` on `adj`.
pub fn build_witness(
    spec: &GcnSpec,
    adj: &NormalizedAdjacency,
    final_seed: u64,
) -> Result<(Parameters, WitnessPlan)> {
    let plan = plan_for(spec, adj, final_seed)?;
    let n0 = spec.input_features();
    let mut params = Parameters::zeros(spec);
    let mut star: Option<Matrix> = None;
    for (i, (&p, &win)) in plan.p_per_layer.iter().zip(&plan.windows).enumerate() {
        let (w, b, s) = fold_layer(p, n0, spec.width(i + 1), win);
        params.weights[i] = match &star {
            Some(prev) => prev.matmul(&w),
            None => w,
        };
        params.biases[i] = b;
        star = Some(s);
    }
    let last = spec.layers() - 1;
    let (w, b) = final_layer(n0, spec.width(last + 1), plan.final_window, final_seed);
    params.weights[last] = match &star {
        Some(prev) => prev.matmul(&w),
        None => w,
    };
    params.biases[last] = b;
    Ok((params, plan))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub pass: bool,
    pub worst_residual: f64,
    /// First failing cell or point, if any.
    pub failure: Option<String>,
}

impl CheckOutcome {
    fn from_residual(worst_residual: f64, failure: Option<String>) -> Self {
        Self { pass: failure.is_none() && worst_residual <= CHECK_TOL, worst_residual, failure }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldingReport {
    pub hypercube_invariance: CheckOutcome,
    pub sawtooth_equality: CheckOutcome,
    pub cell_surjectivity: CheckOutcome,
    pub pass: bool,
    pub probes: usize,
    pub seed: u64,
}

fn check_hypercube(adj: &NormalizedAdjacency, r: &[f64], probes: usize, rng: &mut ChaCha8Rng) -> CheckOutcome {
    let top: Vec<f64> = r.iter().map(|x| x.sqrt()).collect();
    let mut worst = 0.0f64;
    let mut failure = None;
    let corner = top.clone();
    let points = std::iter::once(corner)
        .chain((0..probes).map(|_| top.iter().map(|&t| rng.random_range(0.0..=t)).collect()))
        .collect::<Vec<Vec<f64>>>();
    for x in points {
        let y = adj.a_hat.matvec(&x);
        for (a, (&ya, &ta)) in y.iter().zip(&top).enumerate() {
            let v = (-ya).max(ya - ta).max(0.0);
            if v > CHECK_TOL && failure.is_none() {
                failure = Some(format!("point {x:?} leaves the box at node {a} ({ya})"));
            }
            worst = worst.max(v);
        }
    }
    CheckOutcome::from_residual(worst, failure)
}

fn check_sawtooth(
    adj: &NormalizedAdjacency,
    plan: &WitnessPlan,
    probes: usize,
    rng: &mut ChaCha8Rng,
) -> CheckOutcome {
    let n0 = plan.widths[0];
    let d = adj.node_count();
    let mut worst = 0.0f64;
    let mut failure = None;
    for (i, (&p, &win)) in plan.p_per_layer.iter().zip(&plan.windows).enumerate() {
        let (w, b, star) = fold_layer(p, n0, plan.widths[i + 1], win);
        let (lo, hi) = if i == 0 { (-1.0, 2.0) } else { (0.0, plan.windows[i - 1].c) };
        for _ in 0..probes {
            let h = Matrix::from_fn(d, n0, |_, _| rng.random_range(lo..hi));
            let y = adj.a_hat.matmul(&h);
            let z = layer_preact(&adj.a_hat, &h, &w, &b);
            let relu = Matrix::from_fn(z.rows(), z.cols(), |a, j| z[(a, j)].max(0.0));
            let out = relu.matmul(&star);
            for a in 0..d {
                for k in 0..n0 {
                    let want = sawtooth_fold(p, win.c, y[(a, k)] - win.alpha);
                    let err = (out[(a, k)] - want).abs();
                    if err > CHECK_TOL && failure.is_none() {
                        failure = Some(format!("layer {}, node {a}, feature {k}: {} vs {want}", i + 1, out[(a, k)]));
                    }
                    worst = worst.max(err);
                }
            }
        }
    }
    CheckOutcome::from_residual(worst, failure)
}

/// Endpoint error of cell `i`, or a description of a non-monotone or
/// boundary-touching interior probe.
fn check_cell(p: usize, c: f64, i: usize, probes: usize, seed: u64) -> (f64, Option<String>) {
    let width = c / p as f64;
    let (y0, y1) = (i as f64 * width, (i + 1) as f64 * width);
    let (e0, e1) = if i.is_multiple_of(2) { (0.0, c) } else { (c, 0.0) };
    let (f0, f1) = (sawtooth_fold(p, c, y0), sawtooth_fold(p, c, y1));
    let err = (f0 - e0).abs().max((f1 - e1).abs()) / c;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let mut ys: Vec<f64> = (0..probes).map(|_| y0 + width * rng.random_range(0.01..0.99)).collect();
    ys.sort_by(f64::total_cmp);
    let increasing = i.is_multiple_of(2);
    let mut prev = f0;
    for y in ys {
        let f = sawtooth_fold(p, c, y);
        if f <= 0.0 || f >= c {
            return (err, Some(format!("p={p}, cell {i}: interior point {y} maps to boundary value {f}")));
        }
        if (f > prev) != increasing {
            return (err, Some(format!("p={p}, cell {i}: not monotone at {y}")));
        }
        prev = f;
    }
    (err, None)
}

fn check_cells(plan: &WitnessPlan, probes: usize, seed: u64) -> CheckOutcome {
    let jobs: Vec<(usize, f64, usize)> = plan
        .p_per_layer
        .iter()
        .zip(&plan.windows)
        .flat_map(|(&p, w)| (0..p).map(move |i| (p, w.c, i)))
        .collect();
    let results: Vec<(f64, Option<String>)> =
        jobs.par_iter().map(|&(p, c, i)| check_cell(p, c, i, probes, seed)).collect();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let failure = results.into_iter().find_map(|r| r.1);
    CheckOutcome::from_residual(worst, failure)
}

/// Runs the three folding checks with `probes` random points per cell.
pub fn verify_folding(
    adj: &NormalizedAdjacency,
    plan: &WitnessPlan,
    probes: usize,
    seed: u64,
) -> FoldingReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hypercube_invariance = check_hypercube(adj, &plan.r, probes, &mut rng);
    let sawtooth_equality = check_sawtooth(adj, plan, probes, &mut rng);
    let cell_surjectivity = check_cells(plan, probes, seed);
    let pass = hypercube_invariance.pass && sawtooth_equality.pass && cell_surjectivity.pass;
    FoldingReport { hypercube_invariance, sawtooth_equality, cell_surjectivity, pass, probes, seed }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionCheck {
    #[serde(serialize_with = "ser_big")]
    pub exact: BigUint,
    #[serde(serialize_with = "ser_big")]
    pub lower: BigUint,
    pub pass: bool,
}

/// Exact region count of the witness network against the lower bound.
pub fn witness_region_check(
    spec: &GcnSpec,
    adj: &NormalizedAdjacency,
    final_seed: u64,
    bound: f64,
) -> Result<RegionCheck> {
    let (params, _) = build_witness(spec, adj, final_seed)?;
    let exact = exact_count_multi(spec, adj, &params, CountOptions::with_bound(bound))?.count;
    let lower = multi_lower(spec, adj, adj.rank())?;
    Ok(RegionCheck { pass: exact >= lower, exact, lower })
}
