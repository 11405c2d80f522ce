//! Region slices as PPM images, and the bound tables and curves as CSV and
//! aligned text.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use num_bigint::BigUint;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{binom_sum, multi_lower, multi_upper, naive_bound, one_layer_max};
use crate::error::{Error, Result};
use crate::gcn::{init_kaiming, ActivationPattern, Evaluator, GcnSpec, Parameters};
use crate::graph::{normalize, Fixture, NormalizedAdjacency};
use crate::linalg::{dot, norm, EPS};
use crate::sampler::standard_sweep_with;

pub const DEFAULT_GRID: usize = 300;
pub const DEFAULT_RANGE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    /// Three points of the flattened input space spanning the slice plane.
    pub anchors: [Vec<f64>; 3],
    pub grid: usize,
    /// Half-width of the square `[−range, range]²` in slice coordinates.
    pub range: f64,
    pub seed: u64,
}

impl SliceSpec {
    /// Standard-normal anchors drawn from `seed`.
    pub fn random(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut point = || (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<f64>>();
        Self { anchors: [point(), point(), point()], grid: DEFAULT_GRID, range: DEFAULT_RANGE, seed }
    }

    /// Origin `a0` and an orthonormal basis of the plane through the anchors.
    fn frame(&self) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let [a0, a1, a2] = &self.anchors;
        if a1.len() != a0.len() || a2.len() != a0.len() {
            return Err(Error::Shape { layer: 0, detail: "slice anchors have different lengths".into() });
        }
        let u: Vec<f64> = a1.iter().zip(a0).map(|(x, y)| x - y).collect();
        let v: Vec<f64> = a2.iter().zip(a0).map(|(x, y)| x - y).collect();
        let scale = norm(&u).max(norm(&v));
        let nu = norm(&u);
        if nu <= EPS * scale.max(1.0) {
            return Err(Error::DegenerateSlice);
        }
        let e1: Vec<f64> = u.iter().map(|x| x / nu).collect();
        let proj = dot(&v, &e1);
        let r: Vec<f64> = v.iter().zip(&e1).map(|(x, e)| x - proj * e).collect();
        let nr = norm(&r);
        if nr <= EPS * scale {
            return Err(Error::DegenerateSlice);
        }
        Ok((a0.clone(), e1, r.iter().map(|x| x / nr).collect()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub pixels: Vec<[u8; 3]>,
    pub distinct_patterns: usize,
}

impl SliceImage {
    /// Binary PPM (P6).
    pub fn write_ppm(&self, mut out: impl Write) -> io::Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        out.write_all(&bytes)
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = io::BufWriter::new(f);
        self.write_ppm(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn distinct_colors(&self) -> usize {
        self.pixels.iter().collect::<HashSet<_>>().len()
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable color of a pattern; `salt` resolves collisions.
fn pattern_color(p: &ActivationPattern, salt: u64) -> [u8; 3] {
    let mut h = splitmix(salt ^ p.len() as u64);
    for &w in p.words() {
        h = splitmix(h ^ w);
    }
    let [r, g, b, ..] = h.to_le_bytes();
    [r, g, b]
}

/// Colors each pixel of the slice by its activation pattern.
pub fn rasterize_slice(
    spec: &GcnSpec,
    adj: &NormalizedAdjacency,
    params: &Parameters,
    slice: &SliceSpec,
) -> Result<SliceImage> {
    params.check(spec)?;
    let dim = spec.input_dim(adj.node_count());
    let (origin, e1, e2) = slice.frame()?;
    if origin.len() != dim {
        return Err(Error::Shape {
            layer: 0,
            detail: format!("slice anchors have length {}, input dimension is {dim}", origin.len()),
        });
    }
    let g = slice.grid;
    let step = 2.0 * slice.range / g as f64;
    let coord = |i: usize| -slice.range + (i as f64 + 0.5) * step;
    let rows: Vec<Vec<ActivationPattern>> = (0..g)
        .into_par_iter()
        .map(|r| {
            let mut ev = Evaluator::new(spec, adj, params)?;
            let t = -coord(r);
            let mut x = vec![0.0; dim];
            let mut pat = ActivationPattern::new(0);
            let mut row = Vec::with_capacity(g);
            for c in 0..g {
                let s = coord(c);
                for (k, xk) in x.iter_mut().enumerate() {
                    *xk = origin[k] + s * e1[k] + t * e2[k];
                }
                ev.pattern_into(&x, 0.0, &mut pat);
                row.push(pat.clone());
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut colors: BTreeMap<&ActivationPattern, [u8; 3]> = rows.iter().flatten().map(|p| (p, [0; 3])).collect();
    let mut used = HashSet::new();
    for (p, color) in colors.iter_mut() {
        let mut salt = 0;
        let mut c = pattern_color(p, salt);
        while !used.insert(c) {
            salt += 1;
            c = pattern_color(p, salt);
        }
        *color = c;
    }
    let pixels = rows.iter().flatten().map(|p| colors[p]).collect();
    Ok(SliceImage { width: g, height: g, pixels, distinct_patterns: colors.len() })
}

/// A small table rendered as CSV or aligned text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in std::iter::once(&self.header).chain(&self.rows) {
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let cols = self.header.len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| {
                std::iter::once(&self.header)
                    .chain(&self.rows)
                    .map(|r| r.get(c).map_or(0, |s| s.len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for line in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }

    /// Cell of the row whose first column is `label`.
    pub fn cell(&self, label: &str, col: usize) -> Option<&str> {
        self.rows.iter().find(|r| r[0] == label).and_then(|r| r.get(col)).map(String::as_str)
    }
}

/// One-layer comparison on the 3-node path with one input feature: the
/// almost-sure count, the fully connected bound and the naive bound.
pub fn emit_table1(n1_range: &[usize]) -> Table {
    let mut header = vec!["quantity".to_string()];
    header.extend(n1_range.iter().map(|n| format!("N1={n}")));
    let row = |label: &str, f: &dyn Fn(usize) -> BigUint| {
        std::iter::once(label.to_string()).chain(n1_range.iter().map(|&n| f(n).to_string())).collect()
    };
    Table {
        header,
        rows: vec![
            row("R_N", &|n| one_layer_max(3, 1, n)),
            row("fully_connected_upper", &|n| binom_sum(3, 3 * n)),
            row("naive_upper", &|n| naive_bound(3 * n)),
        ],
    }
}

/// Two-layer bounds on the 3-node path, widths `[2, 2, N2]`, with the largest
/// sampled count over the standard input distributions in between.
pub fn emit_table2(n2_range: &[usize], seed: u64, samples: u64) -> Result<Table> {
    let adj = normalize(&Fixture::Path3.graph());
    let mut header = vec!["quantity".to_string()];
    let mut lower = vec!["lower".to_string()];
    let mut estimate = vec!["estimate".to_string()];
    let mut upper = vec!["upper".to_string()];
    for &n2 in n2_range {
        let spec = GcnSpec::new(vec![2, 2, n2])?;
        header.push(format!("N2={n2}"));
        lower.push(multi_lower(&spec, &adj, adj.rank())?.to_string());
        upper.push(multi_upper(&spec, &adj).to_string());
        let params = init_kaiming(&spec, seed);
        estimate.push(standard_sweep_with(&spec, &adj, &params, seed, samples)?.max_over_configs.to_string());
    }
    Ok(Table { header, rows: vec![lower, estimate, upper] })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub n1: usize,
    pub one_layer_optimal: BigUint,
    pub fully_connected_upper: BigUint,
    pub naive_upper: BigUint,
    /// `None` when `N1 < N0`, where the lower bound does not apply.
    pub lower_formula_derived: Option<BigUint>,
    pub lower_printed: BigUint,
    pub upper_formula_derived: BigUint,
    pub upper_printed: BigUint,
}

impl CurveRow {
    pub fn lower_discrepancy(&self) -> bool {
        self.lower_formula_derived.as_ref() != Some(&self.lower_printed)
    }

    pub fn upper_discrepancy(&self) -> bool {
        self.upper_formula_derived != self.upper_printed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureCurves {
    pub fixture: Fixture,
    pub input_features: usize,
    pub second_layer_width: usize,
    pub rows: Vec<CurveRow>,
}

impl FigureCurves {
    pub fn to_table(&self) -> Table {
        let header = [
            "n1",
            "one_layer_optimal",
            "fully_connected_upper",
            "naive_upper",
            "two_layer_lower_formula_derived",
            "two_layer_lower_printed",
            "lower_discrepancy",
            "two_layer_upper_formula_derived",
            "two_layer_upper_printed",
            "upper_discrepancy",
        ];
        let rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.n1.to_string(),
                    r.one_layer_optimal.to_string(),
                    r.fully_connected_upper.to_string(),
                    r.naive_upper.to_string(),
                    r.lower_formula_derived.as_ref().map_or(String::new(), |v| v.to_string()),
                    r.lower_printed.to_string(),
                    r.lower_discrepancy().to_string(),
                    r.upper_formula_derived.to_string(),
                    r.upper_printed.to_string(),
                    r.upper_discrepancy().to_string(),
                ]
            })
            .collect();
        Table { header: header.map(String::from).to_vec(), rows }
    }
}

/// Bound curves for the two figure graphs. The two-layer network has widths
/// `[N0, N1, 3]`, with `N0 = 1` on `fig2_graph4` and `N0 = 2` on `star3`.
/// The figure captions print different two-layer formulas from the ones the
/// general bounds give; both are emitted.
pub fn emit_figure_curves(fixture: Fixture, n1_range: &[usize]) -> Result<FigureCurves> {
    let adj = normalize(&fixture.graph());
    let d = adj.node_count();
    let n0 = match fixture {
        Fixture::Fig2Graph4 => 1,
        Fixture::Star3 => 2,
        other => {
            return Err(Error::Config(format!(
                "figure curves exist for fig2_graph4 and star3, not {other}"
            )))
        }
    };
    let n2 = 3;
    let rows = n1_range
        .iter()
        .map(|&n1| {
            let spec = GcnSpec::new(vec![n0, n1, n2])?;
            let one_layer = one_layer_max(adj.d_star, n0, n1);
            let (lower_printed, upper_printed) = match fixture {
                Fixture::Fig2Graph4 => (
                    BigUint::from(625u32) * BigUint::from(n1).pow(4),
                    one_layer.clone() * naive_bound(d * n1),
                ),
                _ => (
                    BigUint::from(343u32) * BigUint::from(n1 / 2).pow(3),
                    one_layer.clone() * naive_bound(d * n1),
                ),
            };
            Ok(CurveRow {
                n1,
                fully_connected_upper: binom_sum(d * n0, d * n1),
                naive_upper: naive_bound(d * n1),
                lower_formula_derived: multi_lower(&spec, &adj, adj.rank()).ok(),
                lower_printed,
                upper_formula_derived: multi_upper(&spec, &adj),
                upper_printed,
                one_layer_optimal: one_layer,
            })
        })
        .collect::<Result<_>>()?;
    Ok(FigureCurves { fixture, input_features: n0, second_layer_width: n2, rows })
}
