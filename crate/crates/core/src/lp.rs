//! Dense two-phase primal simplex for small linear programs.
//!
//! Minimizes `c·x` subject to linear rows and `x ≥ 0`. Pricing is Dantzig's
//! rule, switching to Bland's rule after a run of degenerate pivots so the
//! method cannot cycle. Every returned solution is re-checked against the
//! original rows; a residual above tolerance is reported as an error.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("infeasible (phase-one residual {0:e})")]
    Infeasible(f64),
    #[error("unbounded")]
    Unbounded,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min c·x  s.t.  rows, x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-11;
const DEGENERATE_SWITCH: usize = 30;

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn set_objective(&mut self, c: Vec<f64>) {
        assert_eq!(c.len(), self.num_vars);
        self.objective = c;
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars);
        self.rows.push(Row {
            coeffs,
            relation,
            rhs,
        });
    }

    /// Adds a row given as sparse `(var, coeff)` pairs.
    pub fn add_sparse_row(&mut self, terms: &[(usize, f64)], relation: Relation, rhs: f64) {
        let mut coeffs = vec![0.0; self.num_vars];
        for &(j, a) in terms {
            coeffs[j] += a;
        }
        self.add_row(coeffs, relation, rhs);
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let sol = Tableau::build(self).solve(self)?;
        self.verify(&sol)?;
        Ok(sol)
    }

    fn verify(&self, sol: &LpSolution) -> Result<(), LpError> {
        for (k, r) in self.rows.iter().enumerate() {
            let lhs: f64 = r.coeffs.iter().zip(&sol.x).map(|(a, x)| a * x).sum();
            let scale = 1.0
                + r.rhs.abs()
                + r.coeffs
                    .iter()
                    .zip(&sol.x)
                    .map(|(a, x)| (a * x).abs())
                    .fold(0.0, f64::max);
            let tol = 1e-8 * scale;
            let bad = match r.relation {
                Relation::Le => lhs > r.rhs + tol,
                Relation::Ge => lhs < r.rhs - tol,
                Relation::Eq => (lhs - r.rhs).abs() > tol,
            };
            if bad {
                return Err(LpError::Numerical(format!(
                    "row {k} residual: lhs {lhs} vs rhs {}",
                    r.rhs
                )));
            }
        }
        if let Some(j) = sol.x.iter().position(|&v| v < -1e-8) {
            return Err(LpError::Numerical(format!("variable {j} negative: {}", sol.x[j])));
        }
        Ok(())
    }
}

struct Tableau {
    rows: usize,
    cols: usize, // excluding rhs
    /// row-major, `rows + 2` rows (phase-two cost, phase-one cost last),
    /// `cols + 1` columns (rhs last)
    data: Vec<f64>,
    basis: Vec<usize>,
    artificial_start: usize,
    dead: Vec<bool>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let n = lp.num_vars;
        let slacks = lp
            .rows
            .iter()
            .filter(|r| r.relation != Relation::Eq)
            .count();
        // normalized relation after making rhs non-negative
        let norm: Vec<(f64, Relation)> = lp
            .rows
            .iter()
            .map(|r| {
                if r.rhs < 0.0 {
                    let flipped = match r.relation {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (-1.0, flipped)
                } else {
                    (1.0, r.relation)
                }
            })
            .collect();
        let artificials = norm.iter().filter(|(_, rel)| *rel != Relation::Le).count();
        let cols = n + slacks + artificials;
        let width = cols + 1;
        let mut data = vec![0.0; (m + 2) * width];
        let mut basis = vec![0; m];
        let mut slack_col = n;
        let mut art_col = n + slacks;
        for (i, (r, &(sign, rel))) in lp.rows.iter().zip(&norm).enumerate() {
            let row = &mut data[i * width..(i + 1) * width];
            for (cell, &a) in row[..n].iter_mut().zip(&r.coeffs) {
                *cell = sign * a;
            }
            row[cols] = sign * r.rhs;
            match rel {
                Relation::Le => {
                    row[slack_col] = 1.0;
                    basis[i] = slack_col;
                    slack_col += 1;
                }
                Relation::Ge => {
                    row[slack_col] = -1.0;
                    slack_col += 1;
                    row[art_col] = 1.0;
                    basis[i] = art_col;
                    art_col += 1;
                }
                Relation::Eq => {
                    row[art_col] = 1.0;
                    basis[i] = art_col;
                    art_col += 1;
                }
            }
        }
        // phase-two costs
        data[m * width..m * width + n].copy_from_slice(&lp.objective);
        // phase-one costs: sum of artificials, priced out against the basis
        let p1 = (m + 1) * width;
        for i in 0..m {
            if basis[i] >= n + slacks {
                for j in 0..width {
                    if j < n + slacks || j == cols {
                        data[p1 + j] -= data[i * width + j];
                    }
                }
            }
        }
        Tableau {
            rows: m,
            cols,
            data,
            basis,
            artificial_start: n + slacks,
            dead: vec![false; m],
        }
    }

    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width() + c]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let p = self.data[r * w + c];
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v /= p;
        }
        self.data[r * w + c] = 1.0;
        let prow = self.data[r * w..(r + 1) * w].to_vec();
        for i in (0..self.rows + 2).filter(|&i| i != r) {
            let row = &mut self.data[i * w..(i + 1) * w];
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations on cost row `cost_row` over columns `< limit`.
    fn optimize(&mut self, cost_row: usize, limit: usize, budget: usize) -> Result<usize, LpError> {
        let mut pivots = 0;
        let mut degenerate = 0;
        loop {
            if pivots >= budget {
                return Err(LpError::IterationLimit(budget));
            }
            let bland = degenerate >= DEGENERATE_SWITCH;
            let mut enter = None;
            let mut best = -COST_TOL;
            for j in 0..limit {
                let rc = self.at(cost_row, j);
                if rc < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(c) = enter else {
                return Ok(pivots);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                if self.dead[i] {
                    continue;
                }
                let a = self.at(i, c);
                if a > PIVOT_TOL {
                    let ratio = self.at(i, self.cols) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Err(LpError::Unbounded);
            };
            if ratio.abs() <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
            pivots += 1;
        }
    }

    fn solve(mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let m = self.rows;
        let budget = 50_000 + 100 * (m + self.cols);
        let mut pivots = 0;
        if self.artificial_start < self.cols {
            pivots += self.optimize(m + 1, self.artificial_start, budget)?;
            let residual = -self.at(m + 1, self.cols);
            let scale = 1.0 + lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
            if residual > 1e-9 * scale {
                return Err(LpError::Infeasible(residual));
            }
            // drive zero-level artificials out of the basis
            for i in 0..m {
                if self.basis[i] >= self.artificial_start {
                    let col = (0..self.artificial_start)
                        .filter(|&j| self.at(i, j).abs() > 1e-9)
                        .max_by(|&a, &b| self.at(i, a).abs().total_cmp(&self.at(i, b).abs()));
                    match col {
                        Some(j) => {
                            let w = self.width();
                            self.data[i * w + self.cols] = 0.0;
                            self.pivot(i, j);
                        }
                        None => self.dead[i] = true,
                    }
                }
            }
        }
        pivots += self.optimize(m, self.artificial_start, budget)?;
        let mut x = vec![0.0; lp.num_vars];
        for i in 0..m {
            if !self.dead[i] && self.basis[i] < lp.num_vars {
                x[self.basis[i]] = self.at(i, self.cols).max(0.0);
            }
        }
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        if !x.iter().all(|v| v.is_finite()) {
            return Err(LpError::Numerical("non-finite solution".into()));
        }
        Ok(LpSolution {
            x,
            objective,
            pivots,
        })
    }
}
