//! Dense two-phase simplex for the small linear programs that show up in
//! pruning, norm computation and best-interpolation queries.
//!
//! Problems are stated as
//!
//! ```text
//! maximize    c·x
//! subject to  A_i·x (<=, =, >=) b_i
//!             x_j >= 0   unless variable j is declared free
//! ```
//!
//! The tableau is dense; the programs solved here have at most a few hundred
//! rows and columns. Entering variables follow Dantzig's rule and switch to
//! Bland's rule after a run of degenerate pivots, which rules out cycling.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("infeasible")]
    Infeasible,
    #[error("unbounded")]
    Unbounded,
    #[error("iteration limit reached")]
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
struct Constraint {
    coeffs: Vec<f64>,
    relation: Relation,
    rhs: f64,
}

/// A maximization problem over `num_vars` variables.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    free: Vec<bool>,
    constraints: Vec<Constraint>,
    minimizing: bool,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

const PIVOT_EPS: f64 = 1e-10;
const COST_EPS: f64 = 1e-10;
/// Reduced costs below this that admit no ratio test are treated as noise.
const NOISE_COST: f64 = 1e-7;
/// Feasibility slack of the Harris ratio test.
const HARRIS_TOL: f64 = 1e-9;
const MAX_ITERS: usize = 100_000;
const DEGENERATE_SWITCH: usize = 50;

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            free: vec![false; num_vars],
            constraints: Vec::new(),
            minimizing: false,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Sets the (maximized) objective.
    pub fn maximize(&mut self, coeffs: &[f64]) -> &mut Self {
        assert_eq!(coeffs.len(), self.num_vars);
        self.objective.copy_from_slice(coeffs);
        self.minimizing = false;
        self
    }

    /// Sets the objective to be minimized.
    pub fn minimize(&mut self, coeffs: &[f64]) -> &mut Self {
        assert_eq!(coeffs.len(), self.num_vars);
        for (o, c) in self.objective.iter_mut().zip(coeffs) {
            *o = -c;
        }
        self.minimizing = true;
        self
    }

    /// Marks a variable as unrestricted in sign.
    pub fn set_free(&mut self, var: usize) -> &mut Self {
        self.free[var] = true;
        self
    }

    pub fn add_constraint(&mut self, coeffs: &[f64], relation: Relation, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.num_vars);
        self.constraints.push(Constraint {
            coeffs: coeffs.to_vec(),
            relation,
            rhs,
        });
        self
    }

    /// Solves the program. The reported objective is in the caller's sense
    /// (the minimum for programs built with [`LinearProgram::minimize`]).
    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    rows: usize,
    cols: usize, // structural + slack + artificial columns, excluding rhs
    data: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    artificial_start: usize,
    // structural column index -> (original var, sign)
    column_var: Vec<(usize, f64)>,
    structural: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let mut column_var = Vec::new();
        let mut var_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.num_vars];
        for v in 0..lp.num_vars {
            var_cols[v].push((column_var.len(), 1.0));
            column_var.push((v, 1.0));
            if lp.free[v] {
                var_cols[v].push((column_var.len(), -1.0));
                column_var.push((v, -1.0));
            }
        }
        let structural = column_var.len();
        let rows = lp.constraints.len();
        let num_slack = lp
            .constraints
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();
        // Normalize every row to a nonnegative right-hand side first so we
        // know which rows need artificials.
        let mut normalized: Vec<(Vec<f64>, Relation, f64)> = lp
            .constraints
            .iter()
            .map(|c| {
                if c.rhs < 0.0 {
                    let rel = match c.relation {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (c.coeffs.iter().map(|x| -x).collect(), rel, -c.rhs)
                } else {
                    (c.coeffs.clone(), c.relation, c.rhs)
                }
            })
            .collect();
        let num_art = normalized
            .iter()
            .filter(|c| c.1 != Relation::Le)
            .count();
        let artificial_start = structural + num_slack;
        let cols = artificial_start + num_art;
        let width = cols + 1;
        let mut data = vec![0.0; rows * width];
        let mut basis = vec![0; rows];
        let mut slack = structural;
        let mut art = artificial_start;
        for (i, (coeffs, rel, rhs)) in normalized.drain(..).enumerate() {
            let row = &mut data[i * width..(i + 1) * width];
            for (v, &a) in coeffs.iter().enumerate() {
                for &(col, sign) in &var_cols[v] {
                    row[col] = sign * a;
                }
            }
            row[cols] = rhs;
            match rel {
                Relation::Le => {
                    row[slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    row[art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    row[art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Self {
            rows,
            cols,
            data,
            obj: vec![0.0; width],
            basis,
            artificial_start,
            column_var,
            structural,
        }
    }

    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width() + c]
    }

    fn set_objective(&mut self, costs: &[f64]) {
        let w = self.width();
        self.obj.iter_mut().for_each(|x| *x = 0.0);
        self.obj[..self.cols].copy_from_slice(&costs[..self.cols]);
        for r in 0..self.rows {
            let cb = costs[self.basis[r]];
            if cb != 0.0 {
                let row = &self.data[r * w..(r + 1) * w];
                for (o, &t) in self.obj.iter_mut().zip(row) {
                    *o -= cb * t;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width();
        let p = self.at(r, e);
        {
            let row = &mut self.data[r * w..(r + 1) * w];
            for x in row.iter_mut() {
                *x /= p;
            }
            row[e] = 1.0;
        }
        let pivot_row: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.data[i * w + e];
            if f != 0.0 {
                let row = &mut self.data[i * w..(i + 1) * w];
                for (x, &pr) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * pr;
                }
                row[e] = 0.0;
            }
        }
        let f = self.obj[e];
        if f != 0.0 {
            for (x, &pr) in self.obj.iter_mut().zip(&pivot_row) {
                *x -= f * pr;
            }
            self.obj[e] = 0.0;
        }
        self.basis[r] = e;
    }

    /// Leaving row for entering column `e`. Outside Bland mode this is a
    /// two-pass Harris test: rows whose ratio is within a small tolerance of
    /// the minimum are candidates and the largest pivot among them wins,
    /// which keeps degenerate pivots from dividing by tiny entries. In Bland
    /// mode the exact minimum ratio is used with the lowest basic index.
    fn ratio_test(&self, e: usize, bland: bool) -> Option<usize> {
        let rhs = self.cols;
        let col_max = (0..self.rows).map(|r| self.at(r, e).abs()).fold(0.0, f64::max);
        let floor = PIVOT_EPS * col_max.max(1.0);
        let candidates = || (0..self.rows).filter(move |&r| self.at(r, e) > floor);
        if bland {
            let mut leave: Option<(usize, f64)> = None;
            for r in candidates() {
                let ratio = self.at(r, rhs).max(0.0) / self.at(r, e);
                let better = match leave {
                    None => true,
                    Some((l, best)) => ratio < best - 1e-12 || (ratio <= best + 1e-12 && self.basis[r] < self.basis[l]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
            return leave.map(|(r, _)| r);
        }
        let bound = candidates()
            .map(|r| (self.at(r, rhs).max(0.0) + HARRIS_TOL) / self.at(r, e))
            .fold(f64::INFINITY, f64::min);
        candidates()
            .filter(|&r| self.at(r, rhs).max(0.0) / self.at(r, e) <= bound)
            .max_by(|&x, &y| self.at(x, e).total_cmp(&self.at(y, e)).then(y.cmp(&x)))
    }

    /// Runs the simplex iterations on the current objective row. Columns at
    /// or beyond `allowed` may not enter.
    fn iterate(&mut self, allowed: usize, cost_scale: f64, bounded: bool) -> Result<(), LpError> {
        let eps = COST_EPS * cost_scale.max(1.0);
        let mut blocked = vec![false; allowed];
        let rhs = self.cols;
        let mut degenerate = 0usize;
        // Once switched on, Bland's rule stays on: it is the only rule here
        // with a termination guarantee.
        let mut bland = false;
        for _ in 0..MAX_ITERS {
            bland |= degenerate >= DEGENERATE_SWITCH;
            let mut enter = None;
            let mut best = eps;
            for j in 0..allowed {
                if blocked[j] {
                    continue;
                }
                let d = self.obj[j];
                if d > eps {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if d > best {
                        best = d;
                        enter = Some(j);
                    }
                }
            }
            let Some(e) = enter else {
                return Ok(());
            };
            let leave = self.ratio_test(e, bland);
            let Some(r) = leave else {
                if bounded || self.obj[e] <= NOISE_COST * cost_scale.max(1.0) {
                    blocked[e] = true;
                    continue;
                }
                return Err(LpError::Unbounded);
            };
            if self.at(r, rhs) <= HARRIS_TOL {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, e);
            blocked.iter_mut().for_each(|b| *b = false);
        }
        Err(LpError::IterationLimit)
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let rhs_col = self.cols;
        if self.cols > self.artificial_start {
            let mut costs = vec![0.0; self.cols];
            for c in costs.iter_mut().skip(self.artificial_start) {
                *c = -1.0;
            }
            self.set_objective(&costs);
            self.iterate(self.cols, 1.0, true)?;
            let scale = (0..self.rows)
                .map(|r| self.at(r, rhs_col).abs())
                .fold(1.0, f64::max);
            let infeasibility: f64 = (0..self.rows)
                .filter(|&r| self.basis[r] >= self.artificial_start)
                .map(|r| self.at(r, rhs_col))
                .sum();
            if infeasibility > 1e-9 * scale {
                return Err(LpError::Infeasible);
            }
            // Drive remaining (zero-level) artificials out of the basis; rows
            // where that is impossible are redundant and get dropped.
            let mut r = 0;
            while r < self.rows {
                if self.basis[r] >= self.artificial_start {
                    let col = (0..self.artificial_start)
                        .filter(|&j| self.at(r, j).abs() > 1e-9)
                        .max_by(|&a, &b| self.at(r, a).abs().total_cmp(&self.at(r, b).abs()));
                    match col {
                        Some(j) => {
                            self.pivot(r, j);
                            r += 1;
                        }
                        None => {
                            let w = self.width();
                            self.data.drain(r * w..(r + 1) * w);
                            self.basis.remove(r);
                            self.rows -= 1;
                        }
                    }
                } else {
                    r += 1;
                }
            }
        }
        let mut costs = vec![0.0; self.cols];
        for (col, &(v, sign)) in self.column_var.iter().enumerate() {
            costs[col] = sign * lp.objective[v];
        }
        let scale = lp.objective.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        self.set_objective(&costs);
        self.iterate(self.artificial_start, scale, false)?;

        let mut x = vec![0.0; lp.num_vars];
        for r in 0..self.rows {
            let b = self.basis[r];
            if b < self.structural {
                let (v, sign) = self.column_var[b];
                x[v] += sign * self.at(r, rhs_col);
            }
        }
        let value: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let objective = if lp.minimizing { -value } else { value };
        Ok(LpSolution { x, objective })
    }
}
