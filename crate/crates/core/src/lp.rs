//! Dense tableau simplex for `max cᵀx  s.t.  A x ≤ b, x ≥ 0`.
//!
//! Phase one uses a single auxiliary variable. Pivoting follows Dantzig's
//! rule and falls back to Bland's rule once `2·n` consecutive degenerate
//! pivots have been made.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    /// Number of structural variables.
    pub vars: usize,
    pub objective: Vec<f64>,
    /// Constraint rows `(coefficients, rhs)` meaning `a·x ≤ rhs`.
    pub rows: Vec<(Vec<f64>, f64)>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self { vars: objective.len(), objective, rows: Vec::new() }
    }

    pub fn add_le(&mut self, coeffs: Vec<f64>, rhs: f64) {
        assert_eq!(coeffs.len(), self.vars, "constraint width");
        self.rows.push((coeffs, rhs));
    }

    pub fn default_iteration_cap(&self) -> usize {
        let s = self.vars + self.rows.len();
        10 * s * s
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        self.solve_with_cap(self.default_iteration_cap())
    }

    pub fn solve_with_cap(&self, cap: usize) -> Result<LpOutcome> {
        Tableau::new(self).run(cap)
    }
}

struct Tableau {
    n: usize,
    m: usize,
    // Columns: n structural, 1 auxiliary, m slack, then the rhs.
    width: usize,
    t: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    objective: Vec<f64>,
    aux_allowed: bool,
    iterations: usize,
    degenerate_run: usize,
    bland: bool,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.vars;
        let m = lp.rows.len();
        let width = n + 1 + m + 1;
        let mut t = vec![0.0; m * width];
        for (r, (a, b)) in lp.rows.iter().enumerate() {
            let row = &mut t[r * width..(r + 1) * width];
            row[..n].copy_from_slice(a);
            row[n] = -1.0;
            row[n + 1 + r] = 1.0;
            row[width - 1] = *b;
        }
        Self {
            n,
            m,
            width,
            t,
            obj: vec![0.0; width],
            basis: (0..m).map(|r| n + 1 + r).collect(),
            objective: lp.objective.clone(),
            aux_allowed: false,
            iterations: 0,
            degenerate_run: 0,
            bland: false,
        }
    }

    fn rhs(&self, r: usize) -> f64 {
        self.t[r * self.width + self.width - 1]
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.width + c]
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let p = self.t[r * w + e];
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + e];
            if f != 0.0 {
                for (v, pv) in self.t[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                self.t[i * w + e] = 0.0;
            }
        }
        let f = self.obj[e];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[e] = 0.0;
        }
        self.basis[r] = e;
    }

    fn eligible(&self, c: usize) -> bool {
        c != self.n || self.aux_allowed
    }

    fn entering(&self) -> Option<usize> {
        let cols = 0..self.width - 1;
        if self.bland {
            cols.into_iter().find(|&c| self.eligible(c) && self.obj[c] > COST_TOL)
        } else {
            cols.into_iter()
                .filter(|&c| self.eligible(c) && self.obj[c] > COST_TOL)
                .max_by(|&a, &b| self.obj[a].total_cmp(&self.obj[b]).then(b.cmp(&a)))
        }
    }

    fn leaving(&self, e: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.m {
            let a = self.at(r, e);
            if a > PIVOT_TOL {
                let ratio = self.rhs(r).max(0.0) / a;
                best = match best {
                    None => Some((r, ratio)),
                    Some((br, bratio)) => {
                        let better = ratio < bratio - 1e-12
                            || ((ratio - bratio).abs() <= 1e-12 && self.basis[r] < self.basis[br]);
                        if better { Some((r, ratio)) } else { Some((br, bratio)) }
                    }
                };
            }
        }
        best.map(|(r, _)| r)
    }

    /// Runs simplex iterations on the current objective. `Ok(false)` means
    /// unbounded.
    fn optimize(&mut self, cap: usize) -> Result<bool> {
        loop {
            let Some(e) = self.entering() else { return Ok(true) };
            let Some(r) = self.leaving(e) else { return Ok(false) };
            self.iterations += 1;
            if self.iterations > cap {
                return Err(Error::IterationCap { iterations: cap, basis: self.basis.clone() });
            }
            if self.rhs(r) <= PIVOT_TOL {
                self.degenerate_run += 1;
                if self.degenerate_run >= 2 * self.n.max(1) {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
            }
            self.pivot(r, e);
        }
    }

    fn run(mut self, cap: usize) -> Result<LpOutcome> {
        let n = self.n;
        let lowest = (0..self.m).min_by(|&a, &b| self.rhs(a).total_cmp(&self.rhs(b)));
        if let Some(r) = lowest.filter(|&r| self.rhs(r) < 0.0) {
            // Phase one: maximize -x_aux.
            self.aux_allowed = true;
            self.obj.fill(0.0);
            self.obj[n] = -1.0;
            self.pivot(r, n);
            self.optimize(cap)?;
            let aux_value = (0..self.m)
                .find(|&i| self.basis[i] == n)
                .map_or(0.0, |i| self.rhs(i));
            if aux_value > 1e-7 {
                return Ok(LpOutcome::Infeasible);
            }
            if let Some(r) = (0..self.m).find(|&i| self.basis[i] == n) {
                // Degenerate: move the auxiliary variable out of the basis.
                if let Some(e) = (0..self.width - 1)
                    .filter(|&c| c != n)
                    .max_by(|&a, &b| self.at(r, a).abs().total_cmp(&self.at(r, b).abs()))
                    .filter(|&c| self.at(r, c).abs() > PIVOT_TOL)
                {
                    self.pivot(r, e);
                }
            }
            self.aux_allowed = false;
            self.bland = false;
            self.degenerate_run = 0;
        }
        // Phase two objective in terms of the current nonbasic variables.
        self.obj.fill(0.0);
        self.obj[..n].copy_from_slice(&self.objective);
        for r in 0..self.m {
            let b = self.basis[r];
            let cb = self.obj[b];
            if cb != 0.0 {
                let w = self.width;
                for c in 0..w {
                    self.obj[c] -= cb * self.t[r * w + c];
                }
            }
        }
        if !self.optimize(cap)? {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![0.0; n];
        for r in 0..self.m {
            if self.basis[r] < n {
                x[self.basis[r]] = self.rhs(r).max(0.0);
            }
        }
        let value = -self.obj[self.width - 1];
        Ok(LpOutcome::Optimal { x, value })
    }
}
