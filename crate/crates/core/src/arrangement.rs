//! Exact linear-region counting by incremental hyperplane insertion.
//!
//! A region is a sign vector over the inserted hyperplanes whose open cell
//! meets the box `[−B, B]^d`. Strict feasibility is decided by maximizing the
//! normalized slack of the defining inequalities with the simplex in
//! [`crate::lp`].

use std::fmt;

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gcn::{ActivationPattern, GcnSpec, Parameters};
use crate::graph::NormalizedAdjacency;
use crate::linalg::{dot, norm, Matrix};
use crate::lp::{LinearProgram, LpOutcome};

/// Slack a region must exceed to count as a region rather than a sliver.
pub const SLACK_THRESHOLD: f64 = 1e-7;
/// LP optima at or below this slack mark a draw as near-degenerate.
pub const BORDERLINE_SLACK: f64 = 1e-5;
pub const DEFAULT_BOX: f64 = 1e4;
pub const PLANE_CAP: usize = 40;
pub const NEURON_CAP: usize = 24;

// Normals shorter than this (relative to the largest in the same layer)
// are treated as zero: the neuron's sign is then fixed by its offset.
const ZERO_NORMAL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Hyperplane {
    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) + self.offset
    }
}

/// The half-space `sign · (normal·x + offset) > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityResult {
    pub feasible: bool,
    pub max_slack: f64,
    pub point: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    #[serde(serialize_with = "ser_signs")]
    pub signs: Vec<i8>,
    pub witness: Vec<f64>,
    pub slack: f64,
}

fn ser_signs<S: serde::Serializer>(signs: &[i8], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&signs_to_string(signs))
}

pub fn signs_to_string(signs: &[i8]) -> String {
    signs.iter().map(|&s| if s > 0 { '+' } else { '-' }).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct CountOptions {
    pub bound: f64,
    pub plane_cap: usize,
    pub neuron_cap: usize,
}

impl Default for CountOptions {
    fn default() -> Self {
        Self { bound: DEFAULT_BOX, plane_cap: PLANE_CAP, neuron_cap: NEURON_CAP }
    }
}

impl CountOptions {
    pub fn with_bound(bound: f64) -> Self {
        Self { bound, ..Self::default() }
    }
}

/// Maximizes `t` subject to `sign·(n·x + o) ≥ t·‖n‖`, `|x_i| ≤ bound`,
/// `t ≤ 1`. Feasible iff the optimum exceeds [`SLACK_THRESHOLD`].
pub fn max_slack(constraints: &[HalfSpace], dim: usize, bound: f64) -> Result<FeasibilityResult> {
    assert!(dim >= 1 && bound > 0.0);
    let infeasible = FeasibilityResult { feasible: false, max_slack: f64::NEG_INFINITY, point: None };
    // Variables: y = x + bound (so y ≥ 0), then t ≥ 0. Restricting t ≥ 0
    // cannot change whether the optimum exceeds the positive threshold.
    let mut objective = vec![0.0; dim + 1];
    objective[dim] = 1.0;
    let mut lp = LinearProgram::new(objective);
    for h in constraints {
        let nn = norm(&h.normal);
        if nn == 0.0 {
            if f64::from(h.sign) * h.offset > 0.0 {
                continue;
            }
            return Ok(infeasible);
        }
        let s = f64::from(h.sign);
        let mut row: Vec<f64> = h.normal.iter().map(|a| -s * a / nn).collect();
        row.push(1.0);
        let shift: f64 = h.normal.iter().sum::<f64>() * bound;
        lp.add_le(row, s * (h.offset - shift) / nn);
    }
    for i in 0..dim {
        let mut row = vec![0.0; dim + 1];
        row[i] = 1.0;
        lp.add_le(row, 2.0 * bound);
    }
    let mut row = vec![0.0; dim + 1];
    row[dim] = 1.0;
    lp.add_le(row, 1.0);

    match lp.solve()? {
        LpOutcome::Optimal { x, value } => {
            let point: Vec<f64> = x[..dim].iter().map(|y| y - bound).collect();
            Ok(FeasibilityResult { feasible: value > SLACK_THRESHOLD, max_slack: value, point: Some(point) })
        }
        LpOutcome::Infeasible => Ok(infeasible),
        LpOutcome::Unbounded => unreachable!("slack LP is bounded by the box and t ≤ 1"),
    }
}

/// Hyperplanes of a one-layer GCN over the flattened `D·N` input.
#[derive(Debug, Clone)]
pub struct OneLayerArrangement {
    pub planes: Vec<Hyperplane>,
    /// `(node, feature)` of each retained plane.
    pub sources: Vec<(usize, usize)>,
    pub notes: Vec<String>,
    pub dim: usize,
}

/// One hyperplane `{vec(a_i ⊗ w_j)·x + b_j = 0}` per node `i` and output
/// feature `j`; zero normals are dropped and noted.
pub fn build_one_layer_arrangement(adj: &NormalizedAdjacency, w: &Matrix, b: &[f64]) -> OneLayerArrangement {
    assert_eq!(w.cols(), b.len(), "bias length");
    let d = adj.node_count();
    let n = w.rows();
    let mut out = OneLayerArrangement { planes: Vec::new(), sources: Vec::new(), notes: Vec::new(), dim: d * n };
    for i in 0..d {
        let a = adj.a_hat.row(i);
        for (j, &bj) in b.iter().enumerate() {
            let col = w.column(j);
            let normal: Vec<f64> = a.iter().flat_map(|&ak| col.iter().map(move |&wl| ak * wl)).collect();
            if normal.iter().all(|&v| v == 0.0) {
                out.notes.push(format!("node {i} feature {j}: zero normal dropped (offset {bj})"));
                continue;
            }
            out.planes.push(Hyperplane { normal, offset: bj });
            out.sources.push((i, j));
        }
    }
    out
}

/// Diagnostics gathered while counting.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CountStats {
    pub lp_calls: usize,
    /// Feasibility decisions whose optimum fell in `(−∞, BORDERLINE_SLACK]`
    /// while still above zero, i.e. near the region/sliver threshold.
    pub borderline: usize,
    pub min_region_slack: f64,
}

impl CountStats {
    fn merge(&mut self, other: &CountStats) {
        self.lp_calls += other.lp_calls;
        self.borderline += other.borderline;
        self.min_region_slack = self.min_region_slack.min(other.min_region_slack);
    }

    fn empty() -> Self {
        Self { lp_calls: 0, borderline: 0, min_region_slack: f64::INFINITY }
    }
}

#[derive(Debug, Clone)]
struct Cell {
    signs: Vec<i8>,
    witness: Vec<f64>,
    slack: f64,
}

fn is_zero_normal(p: &Hyperplane, scale: f64) -> bool {
    norm(&p.normal) <= ZERO_NORMAL * scale.max(1.0)
}

/// Constraint list of `cell` inside `base` after inserting `planes[..k]`.
fn cell_constraints(base: &[HalfSpace], planes: &[Hyperplane], signs: &[i8], scale: f64) -> Vec<HalfSpace> {
    let mut c = base.to_vec();
    for (p, &s) in planes.iter().zip(signs) {
        if !is_zero_normal(p, scale) {
            c.push(HalfSpace { normal: p.normal.clone(), offset: p.offset, sign: s });
        }
    }
    c
}

fn probe(constraints: &[HalfSpace], dim: usize, bound: f64, stats: &mut CountStats) -> Result<FeasibilityResult> {
    stats.lp_calls += 1;
    let r = max_slack(constraints, dim, bound)?;
    if r.max_slack > 0.0 && r.max_slack <= BORDERLINE_SLACK {
        stats.borderline += 1;
    }
    Ok(r)
}

/// Splits `cell` by plane `k`, returning its one or two children.
fn split(
    cell: &Cell,
    base: &[HalfSpace],
    planes: &[Hyperplane],
    k: usize,
    dim: usize,
    bound: f64,
    scale: f64,
) -> Result<(Vec<Cell>, CountStats)> {
    let mut stats = CountStats::empty();
    let plane = &planes[k];
    let child = |sign: i8, witness: Vec<f64>, slack: f64| {
        let mut signs = cell.signs.clone();
        signs.push(sign);
        Cell { signs, witness, slack }
    };
    if is_zero_normal(plane, scale) {
        // Constant preactivation: the tie rule maps 0 to inactive.
        let sign = if plane.offset > 0.0 { 1 } else { -1 };
        return Ok((vec![child(sign, cell.witness.clone(), cell.slack)], stats));
    }
    let nn = norm(&plane.normal);
    let v = plane.eval(&cell.witness) / nn;
    let mut out = Vec::with_capacity(2);
    let mut constraints = cell_constraints(base, &planes[..k], &cell.signs, scale);
    if v.abs() > SLACK_THRESHOLD {
        let own = if v > 0.0 { 1 } else { -1 };
        constraints.push(HalfSpace { normal: plane.normal.clone(), offset: plane.offset, sign: -own });
        let other = probe(&constraints, dim, bound, &mut stats)?;
        let mine = child(own, cell.witness.clone(), cell.slack.min(v.abs()));
        if other.feasible {
            let theirs = child(-own, other.point.expect("feasible point"), other.max_slack);
            if own > 0 {
                out.extend([mine, theirs]);
            } else {
                out.extend([theirs, mine]);
            }
        } else {
            out.push(mine);
        }
    } else {
        for sign in [1i8, -1] {
            let mut c = constraints.clone();
            c.push(HalfSpace { normal: plane.normal.clone(), offset: plane.offset, sign });
            let r = probe(&c, dim, bound, &mut stats)?;
            if r.feasible {
                out.push(child(sign, r.point.expect("feasible point"), r.max_slack));
            }
        }
        constraints.clear();
    }
    for c in &out {
        stats.min_region_slack = stats.min_region_slack.min(c.slack);
    }
    Ok((out, stats))
}

/// Refines the cell described by `base` (with interior `witness`) by
/// `planes`. Cells are processed in parallel per insertion step and merged in
/// order, so the result does not depend on the thread count.
fn refine(
    base: &[HalfSpace],
    witness: Vec<f64>,
    slack: f64,
    planes: &[Hyperplane],
    dim: usize,
    bound: f64,
) -> Result<(Vec<Cell>, CountStats)> {
    let scale = planes.iter().map(|p| norm(&p.normal)).fold(0.0, f64::max);
    let mut cells = vec![Cell { signs: Vec::new(), witness, slack }];
    let mut stats = CountStats::empty();
    for k in 0..planes.len() {
        let parts: Vec<(Vec<Cell>, CountStats)> = cells
            .par_iter()
            .map(|c| split(c, base, planes, k, dim, bound, scale))
            .collect::<Result<_>>()?;
        cells = Vec::with_capacity(parts.len() * 2);
        for (children, s) in parts {
            stats.merge(&s);
            cells.extend(children);
        }
    }
    Ok((cells, stats))
}

fn root_cell(dim: usize, bound: f64) -> (Vec<f64>, f64) {
    (vec![0.0; dim], bound.min(1.0))
}

/// Counts the regions of `planes` inside `[−bound, bound]^dim`.
pub fn count_regions(planes: &[Hyperplane], dim: usize, bound: f64) -> Result<(BigUint, Vec<Region>)> {
    count_regions_with_stats(planes, dim, bound, PLANE_CAP).map(|(c, r, _)| (c, r))
}

pub fn count_regions_with_stats(
    planes: &[Hyperplane],
    dim: usize,
    bound: f64,
    plane_cap: usize,
) -> Result<(BigUint, Vec<Region>, CountStats)> {
    if planes.len() > plane_cap {
        return Err(Error::CapExceeded {
            module: "arrangement",
            what: "hyperplane count",
            actual: planes.len(),
            cap: plane_cap,
            advice: "estimate the region count with the sampler instead",
        });
    }
    let (w, s) = root_cell(dim, bound);
    let (cells, stats) = refine(&[], w, s, planes, dim, bound)?;
    let regions: Vec<Region> =
        cells.into_iter().map(|c| Region { signs: c.signs, witness: c.witness, slack: c.slack }).collect();
    Ok((BigUint::from(regions.len()), regions, stats))
}

/// Exact region count of a one-layer GCN with weight `w` and bias `b`.
pub fn exact_count_one_layer(adj: &NormalizedAdjacency, w: &Matrix, b: &[f64], bound: f64) -> Result<BigUint> {
    Ok(exact_count_one_layer_checked(adj, w, b, bound)?.count)
}

#[derive(Debug, Clone, Serialize)]
pub struct OneLayerCount {
    #[serde(serialize_with = "crate::arrangement::ser_big")]
    pub count: BigUint,
    pub stats: CountStats,
    /// Set when the parameter draw looks non-generic.
    pub degeneracy: Option<String>,
    pub notes: Vec<String>,
}

pub(crate) fn ser_big<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

/// Like [`exact_count_one_layer`], also reporting whether the parameters are
/// close to the measure-zero set where the count drops below its maximum.
pub fn exact_count_one_layer_checked(
    adj: &NormalizedAdjacency,
    w: &Matrix,
    b: &[f64],
    bound: f64,
) -> Result<OneLayerCount> {
    let arr = build_one_layer_arrangement(adj, w, b);
    let (count, _, stats) = count_regions_with_stats(&arr.planes, arr.dim, bound, PLANE_CAP)?;
    let mut reasons = Vec::new();
    if let Some(r) = weight_degeneracy(w) {
        reasons.push(r);
    }
    if let Some(r) = coincident_planes(&arr.planes) {
        reasons.push(r);
    }
    if stats.borderline > 0 {
        reasons.push(format!("{} feasibility decisions within slack {BORDERLINE_SLACK}", stats.borderline));
    }
    let degeneracy = (!reasons.is_empty()).then(|| reasons.join("; "));
    Ok(OneLayerCount { count, stats, degeneracy, notes: arr.notes })
}

/// Flags weights where some `min(N, N')` columns are (nearly) dependent.
pub fn weight_degeneracy(w: &Matrix) -> Option<String> {
    const REL: f64 = 1e-6;
    let (n, np) = w.shape();
    let k = n.min(np);
    let cols: Vec<Vec<f64>> = (0..np).map(|j| w.column(j)).collect();
    let scale = w.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Some("weight matrix is zero".into());
    }
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        let rows: Vec<&[f64]> = subset.iter().map(|&j| cols[j].as_slice()).collect();
        let sv = Matrix::from_rows(&rows).expect("equal columns").singular_values();
        let smallest = sv.get(k - 1).copied().unwrap_or(0.0);
        if smallest <= REL * scale {
            return Some(format!("weight columns {subset:?} are nearly dependent"));
        }
        // next k-combination of 0..np
        let mut i = k;
        loop {
            if i == 0 {
                return None;
            }
            i -= 1;
            if subset[i] < np - k + i {
                subset[i] += 1;
                for j in i + 1..k {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Flags pairs of distinct planes that are parallel within angle `1e-6` and
/// whose normalized offsets agree within `1e-6`.
fn coincident_planes(planes: &[Hyperplane]) -> Option<String> {
    const ANGLE: f64 = 1e-6;
    for (i, p) in planes.iter().enumerate() {
        let np = norm(&p.normal);
        for (j, q) in planes.iter().enumerate().skip(i + 1) {
            let nq = norm(&q.normal);
            let cos = dot(&p.normal, &q.normal) / (np * nq);
            if 1.0 - cos.abs() <= ANGLE * ANGLE / 2.0 {
                let op = p.offset / np;
                let oq = q.offset / nq * cos.signum();
                if (op - oq).abs() <= ANGLE * (1.0 + op.abs()) {
                    return Some(format!("planes {i} and {j} nearly coincide"));
                }
            }
        }
    }
    None
}

/// Affine map `x ↦ lin·x + off` of the flattened input.
#[derive(Debug, Clone)]
pub struct Affine {
    pub lin: Matrix,
    pub off: Vec<f64>,
}

impl Affine {
    pub fn identity(dim: usize) -> Self {
        Self { lin: Matrix::identity(dim), off: vec![0.0; dim] }
    }

    /// Applies a GCN layer's affine part to the `D × N_in` feature matrix this
    /// map produces. Rows of the result are indexed `node · N_out + feature`.
    pub fn through_layer(&self, adj: &Matrix, w: &Matrix, b: &[f64]) -> Affine {
        let d = adj.rows();
        let n_in = w.rows();
        let n_out = w.cols();
        let cols = self.lin.cols();
        // T[(i,m), c] = Σ_k Â[i,k] lin[(k,m), c], same for the offset.
        let mut t = Matrix::zeros(d * n_in, cols);
        let mut t_off = vec![0.0; d * n_in];
        for i in 0..d {
            for k in 0..d {
                let a = adj[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for m in 0..n_in {
                    let src = self.lin.row(k * n_in + m).to_vec();
                    for (dst, s) in t.row_mut(i * n_in + m).iter_mut().zip(&src) {
                        *dst += a * s;
                    }
                    t_off[i * n_in + m] += a * self.off[k * n_in + m];
                }
            }
        }
        let mut lin = Matrix::zeros(d * n_out, cols);
        let mut off = vec![0.0; d * n_out];
        for i in 0..d {
            for j in 0..n_out {
                let r = i * n_out + j;
                off[r] = b[j];
                for m in 0..n_in {
                    let wmj = w[(m, j)];
                    if wmj == 0.0 {
                        continue;
                    }
                    let src = t.row(i * n_in + m).to_vec();
                    for (dst, s) in lin.row_mut(r).iter_mut().zip(&src) {
                        *dst += wmj * s;
                    }
                    off[r] += wmj * t_off[i * n_in + m];
                }
            }
        }
        Affine { lin, off }
    }

    pub fn planes(&self) -> Vec<Hyperplane> {
        (0..self.lin.rows())
            .map(|r| Hyperplane { normal: self.lin.row(r).to_vec(), offset: self.off[r] })
            .collect()
    }

    /// Zeroes the rows of inactive neurons (ReLU restricted to a region).
    pub fn masked(mut self, signs: &[i8]) -> Affine {
        for (r, &s) in signs.iter().enumerate() {
            if s < 0 {
                self.lin.row_mut(r).fill(0.0);
                self.off[r] = 0.0;
            }
        }
        self
    }
}

#[derive(Debug, Clone)]
pub struct MultiCount {
    pub count: BigUint,
    /// Full activation patterns of the regions, in depth-first order.
    pub patterns: Vec<ActivationPattern>,
    pub regions: Vec<Region>,
    pub stats: CountStats,
}

struct Walk<'a> {
    spec: &'a GcnSpec,
    adj: &'a NormalizedAdjacency,
    params: &'a Parameters,
    dim: usize,
    bound: f64,
}

struct Leaf {
    pattern: Vec<i8>,
    witness: Vec<f64>,
    slack: f64,
}

impl Walk<'_> {
    fn descend(
        &self,
        layer: usize,
        base: Vec<HalfSpace>,
        witness: Vec<f64>,
        slack: f64,
        map: Affine,
        prefix: Vec<i8>,
    ) -> Result<(Vec<Leaf>, CountStats)> {
        let next = map.through_layer(&self.adj.a_hat, &self.params.weights[layer], &self.params.biases[layer]);
        let planes = next.planes();
        let (cells, mut stats) = refine(&base, witness, slack, &planes, self.dim, self.bound)
            .map_err(|e| Error::SolverAt { pattern: signs_to_string(&prefix), source: Box::new(e) })?;
        let last = layer + 1 == self.spec.layers();
        let scale = planes.iter().map(|p| norm(&p.normal)).fold(0.0, f64::max);
        let results: Vec<(Vec<Leaf>, CountStats)> = cells
            .into_par_iter()
            .map(|cell| {
                let mut pattern = prefix.clone();
                pattern.extend_from_slice(&cell.signs);
                if last {
                    return Ok((vec![Leaf { pattern, witness: cell.witness, slack: cell.slack }], CountStats::empty()));
                }
                let constraints = cell_constraints(&base, &planes, &cell.signs, scale);
                let child_map = next.clone().masked(&cell.signs);
                self.descend(layer + 1, constraints, cell.witness, cell.slack, child_map, pattern)
            })
            .collect::<Result<_>>()?;
        let mut leaves = Vec::new();
        for (l, s) in results {
            stats.merge(&s);
            leaves.extend(l);
        }
        Ok((leaves, stats))
    }
}

/// Exact region count of a multi-layer GCN by depth-first refinement: within
/// a region of layers `1..l−1` the layer-`l` preactivations are affine in the
/// input, so their hyperplanes refine that region.
pub fn exact_count_multi(
    spec: &GcnSpec,
    adj: &NormalizedAdjacency,
    params: &Parameters,
    opts: CountOptions,
) -> Result<MultiCount> {
    params.check(spec)?;
    let d = adj.node_count();
    let neurons = spec.neuron_count(d);
    if neurons > opts.neuron_cap {
        return Err(Error::CapExceeded {
            module: "arrangement",
            what: "neuron count",
            actual: neurons,
            cap: opts.neuron_cap,
            advice: "estimate the region count with the sampler instead",
        });
    }
    let dim = spec.input_dim(d);
    let walk = Walk { spec, adj, params, dim, bound: opts.bound };
    let (w, s) = root_cell(dim, opts.bound);
    let (leaves, stats) = walk.descend(0, Vec::new(), w, s, Affine::identity(dim), Vec::new())?;
    let patterns = leaves
        .iter()
        .map(|l| ActivationPattern::from_signs(l.pattern.iter().map(|&s| s > 0)))
        .collect();
    let regions = leaves
        .into_iter()
        .map(|l| Region { signs: l.pattern, witness: l.witness, slack: l.slack })
        .collect::<Vec<_>>();
    Ok(MultiCount { count: BigUint::from(regions.len()), patterns, regions, stats })
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (slack {:.3e})", signs_to_string(&self.signs), self.slack)
    }
}
