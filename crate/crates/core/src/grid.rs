//! Grid-based value approximation.
//!
//! A [`GridValueFn`] stores values at a finite set of beliefs and extends
//! them to the whole simplex with a convex rule: every estimate is a convex
//! combination of stored values. Updates built on such rules are
//! contractions, and the rules that also reproduce the query point as the
//! same combination of grid points (sawtooth, best LP interpolation) give
//! upper bounds when fed upper bounds.
//!
//! For context on regular grids: the Freudenthal grid of resolution 1, 2
//! and 3 over 20 states has 20, 210 and 1540 points. Those grids are not
//! built here; grids are either supplied or grown adaptively.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::lookahead_action;
use crate::lp::{LinearProgram, Relation};
use crate::mdp::{FiniteMdp, MdpRow};
use crate::model::{sample_index, Belief, Pomdp, IMPOSSIBLE_OBS};
use crate::pwlc::dot;
use crate::value::ValueFunction;

/// Two beliefs closer than this in the max norm are the same grid point.
pub const DUPLICATE_TOL: f64 = 1e-12;
/// Membership tolerance used when growing a grid.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Simulation steps allowed per extreme when growing a grid.
pub const EXPAND_STEP_CAP: usize = 1000;

fn linf(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// A set of distinct beliefs. Extremes are tracked so interpolation rules
/// can find them in constant time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Belief>", into = "Vec<Belief>")]
pub struct Grid {
    points: Vec<Belief>,
    /// `extremes[s]` is the index of `e_s` if present.
    extremes: Vec<Option<usize>>,
}

impl TryFrom<Vec<Belief>> for Grid {
    type Error = Error;

    fn try_from(points: Vec<Belief>) -> Result<Self> {
        Grid::new(points)
    }
}

impl From<Grid> for Vec<Belief> {
    fn from(g: Grid) -> Self {
        g.points
    }
}

impl Grid {
    pub fn new(points: Vec<Belief>) -> Result<Self> {
        let n = points
            .first()
            .map(|p| p.len())
            .ok_or_else(|| Error::Validation("grid has no points".into()))?;
        let mut g = Grid {
            points: Vec::with_capacity(points.len()),
            extremes: vec![None; n],
        };
        for p in points {
            if p.len() != n {
                return Err(Error::LengthMismatch { left: p.len(), right: n });
            }
            if let Some(j) = g.find(&p, DUPLICATE_TOL) {
                return Err(Error::Validation(format!("grid point {} duplicates point {j}", g.len())));
            }
            g.push_unchecked(p);
        }
        Ok(g)
    }

    /// The `|S|` extreme beliefs in state order.
    pub fn extremes(num_states: usize) -> Self {
        Grid::new((0..num_states).map(|s| Belief::extreme(num_states, s)).collect()).expect("extremes are distinct")
    }

    /// Extremes followed by `extra`; extra points that duplicate earlier
    /// ones are skipped.
    pub fn extremes_plus(num_states: usize, extra: impl IntoIterator<Item = Belief>) -> Self {
        let mut g = Grid::extremes(num_states);
        for p in extra {
            g.insert(p, DUPLICATE_TOL);
        }
        g
    }

    fn push_unchecked(&mut self, p: Belief) {
        if let Some(s) = p.iter().position(|&x| x == 1.0) {
            self.extremes[s] = Some(self.points.len());
        }
        self.points.push(p);
    }

    /// Adds `p` unless it is within `tol` of an existing point.
    pub fn insert(&mut self, p: Belief, tol: f64) -> bool {
        if self.find(&p, tol).is_some() {
            return false;
        }
        self.push_unchecked(p);
        true
    }

    /// Index of a point within `tol` in the max norm.
    pub fn find(&self, b: &[f64], tol: f64) -> Option<usize> {
        self.points.iter().position(|p| linf(p, b) <= tol)
    }

    pub fn points(&self) -> &[Belief] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.extremes.len()
    }

    pub fn contains_extremes(&self) -> bool {
        self.extremes.iter().all(Option::is_some)
    }

    pub fn extreme_index(&self, s: usize) -> Option<usize> {
        self.extremes[s]
    }
}

/// How grid values are extended to other beliefs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InterpRule {
    /// Value of the Euclidean-nearest point, lowest index on ties.
    NearestNeighbor,
    /// Gaussian-weighted average with bandwidth `sigma`.
    Kernel { sigma: f64 },
    /// Minimum over interpolations through one interior point and the
    /// extremes.
    #[default]
    Sawtooth,
    /// Minimum over all convex interpolations, by linear programming.
    BestLp,
}

pub const DEFAULT_KERNEL_SIGMA: f64 = 0.25;

/// Grid values plus the rule that extends them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridValueFn {
    pub rule: InterpRule,
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridValueFn {
    pub fn new(grid: Grid, values: Vec<f64>, rule: InterpRule) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: grid.len(),
                right: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("grid values must be finite".into()));
        }
        if matches!(rule, InterpRule::Sawtooth | InterpRule::BestLp) && !grid.contains_extremes() {
            return Err(Error::Validation("interpolation rules need every extreme in the grid".into()));
        }
        if let InterpRule::Kernel { sigma } = rule {
            if !(sigma > 0.0) {
                return Err(Error::Validation(format!("kernel width {sigma} must be positive")));
            }
        }
        Ok(Self { rule, grid, values })
    }

    /// Grid values taken from another value function.
    pub fn from_fn<V: ValueFunction + ?Sized>(grid: Grid, v: &V, rule: InterpRule) -> Result<Self> {
        let values = grid.points().iter().map(|b| v.value(b)).collect();
        Self::new(grid, values, rule)
    }

    pub fn eval(&self, b: &[f64]) -> f64 {
        match self.rule {
            InterpRule::NearestNeighbor => nn_eval(self, b),
            InterpRule::Kernel { sigma } => kernel_eval(self, b, sigma),
            InterpRule::Sawtooth => sawtooth_eval(self, b),
            InterpRule::BestLp => best_interp_lp(&self.grid, &self.values, b).map_or(f64::NAN, |r| r.0),
        }
    }

    /// Convex weights `(grid index, lambda)` the rule uses at `b`.
    pub fn weights(&self, b: &[f64]) -> Result<Vec<(usize, f64)>> {
        Ok(match self.rule {
            InterpRule::NearestNeighbor => vec![(nearest(&self.grid, b), 1.0)],
            InterpRule::Kernel { sigma } => kernel_weights(&self.grid, b, sigma).into_iter().enumerate().collect(),
            InterpRule::Sawtooth => sawtooth_weights(self, b),
            InterpRule::BestLp => best_interp_lp(&self.grid, &self.values, b)?
                .1
                .into_iter()
                .enumerate()
                .filter(|&(_, l)| l > 0.0)
                .collect(),
        })
    }
}

impl ValueFunction for GridValueFn {
    fn value(&self, b: &[f64]) -> f64 {
        self.eval(b)
    }
}

fn nearest(grid: &Grid, b: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, p) in grid.points().iter().enumerate() {
        let d = sq_dist(p, b);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

pub fn nn_eval(g: &GridValueFn, b: &[f64]) -> f64 {
    g.values[nearest(&g.grid, b)]
}

fn kernel_weights(grid: &Grid, b: &[f64], sigma: f64) -> Vec<f64> {
    let d: Vec<f64> = grid.points().iter().map(|p| sq_dist(p, b)).collect();
    // Shift by the smallest distance so the largest weight is one.
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = d.iter().map(|x| (-(x - dmin) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

pub fn kernel_eval(g: &GridValueFn, b: &[f64], sigma: f64) -> f64 {
    dot(&kernel_weights(&g.grid, b, sigma), &g.values)
}

/// Values at the extremes, in state order.
fn extreme_values(g: &GridValueFn) -> Vec<f64> {
    (0..g.grid.num_states())
        .map(|s| g.values[g.grid.extreme_index(s).expect("extremes present")])
        .collect()
}

/// `min_s b(s) / p(s)` over the support of `p`.
fn max_weight(b: &[f64], p: &[f64]) -> f64 {
    b.iter()
        .zip(p)
        .filter(|(_, &q)| q > 0.0)
        .map(|(x, q)| x / q)
        .fold(f64::INFINITY, f64::min)
}

fn is_extreme_point(g: &Grid, j: usize) -> bool {
    (0..g.num_states()).any(|s| g.extreme_index(s) == Some(j))
}

/// Best sawtooth interpolation at `b`: `None` for the pure-extremes one,
/// otherwise the interior point and its weight.
fn sawtooth_choice(g: &GridValueFn, ve: &[f64], b: &[f64]) -> (f64, Option<(usize, f64)>) {
    let base = dot(b, ve);
    let mut best = (base, None);
    for (j, p) in g.grid.points().iter().enumerate() {
        let excess = g.values[j] - dot(p, ve);
        if excess >= 0.0 || is_extreme_point(&g.grid, j) {
            continue;
        }
        let c = max_weight(b, p);
        let v = base + c * excess;
        if v < best.0 {
            best = (v, Some((j, c)));
        }
    }
    best
}

pub fn sawtooth_eval(g: &GridValueFn, b: &[f64]) -> f64 {
    sawtooth_choice(g, &extreme_values(g), b).0
}

fn sawtooth_weights(g: &GridValueFn, b: &[f64]) -> Vec<(usize, f64)> {
    let ve = extreme_values(g);
    let choice = sawtooth_choice(g, &ve, b).1;
    let mut w: Vec<(usize, f64)> = Vec::with_capacity(b.len() + 1);
    let (c, p) = match choice {
        Some((j, c)) => {
            w.push((j, c));
            (c, Some(&g.grid.points()[j]))
        }
        None => (0.0, None),
    };
    for s in 0..b.len() {
        let lambda = b[s] - p.map_or(0.0, |p| c * p[s]);
        if lambda > 0.0 {
            w.push((g.grid.extreme_index(s).expect("extremes present"), lambda));
        }
    }
    w
}

/// The lowest convex interpolation of the grid values at `b`, and its
/// weights.
pub fn best_interp_lp(grid: &Grid, values: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = grid.len();
    let mut lp = LinearProgram::new(n);
    lp.minimize(values);
    lp.add_constraint(&vec![1.0; n], Relation::Eq, 1.0);
    for s in 0..grid.num_states() {
        let row: Vec<f64> = grid.points().iter().map(|p| p[s]).collect();
        lp.add_constraint(&row, Relation::Eq, b[s]);
    }
    let sol = lp.solve()?;
    let total: f64 = sol.x.iter().map(|x| x.max(0.0)).sum();
    let lambda = sol.x.iter().map(|x| x.max(0.0) / total).collect();
    Ok((sol.objective, lambda))
}

/// One grid update: `max_a [rho(b_j, a) + gamma sum_o P(o|b_j, a) V(tau)]`
/// at every grid point, with `V` the current rule.
pub fn grid_backup(m: &Pomdp, g: &GridValueFn) -> Vec<f64> {
    g.grid
        .points()
        .iter()
        .map(|b| lookahead_action(m, g, b).1)
        .collect()
}

/// Fixed convex weights for every grid point, action and observation:
/// `weights[j][a][o]` lists `(k, lambda)`. Impossible observations have no
/// entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTable {
    pub weights: Vec<Vec<Vec<Vec<(usize, f64)>>>>,
}

impl LambdaTable {
    pub fn validate(&self, grid_len: usize) -> Result<()> {
        for (j, per_a) in self.weights.iter().enumerate() {
            for (a, per_o) in per_a.iter().enumerate() {
                for (o, row) in per_o.iter().enumerate() {
                    let total: f64 = row.iter().map(|w| w.1).sum();
                    let bad = row.iter().any(|&(k, l)| k >= grid_len || l < 0.0 || !l.is_finite());
                    if bad || (!row.is_empty() && (total - 1.0).abs() > 1e-9) {
                        return Err(Error::InvalidWeights(format!("row ({j}, {a}, {o}) is not a convex combination")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Freezes the weights the rule picks at every one-step successor of every
/// grid point.
pub fn interp_table(m: &Pomdp, g: &GridValueFn) -> Result<LambdaTable> {
    let weights = g
        .grid
        .points()
        .iter()
        .map(|b| {
            (0..m.num_actions())
                .map(|a| {
                    let mut per_o = vec![Vec::new(); m.num_obs()];
                    for (o, _, nb) in m.successors(b, a) {
                        per_o[o] = g.weights(&nb)?;
                    }
                    Ok(per_o)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LambdaTable { weights })
}

/// The fully observable MDP over grid points induced by fixed weights:
/// `P(k | j, a) = sum_o P(o | b_j, a) lambda[j][a][o][k]`.
pub fn to_grid_mdp(m: &Pomdp, grid: &Grid, table: &LambdaTable) -> Result<FiniteMdp> {
    table.validate(grid.len())?;
    if table.weights.len() != grid.len() {
        return Err(Error::LengthMismatch {
            left: table.weights.len(),
            right: grid.len(),
        });
    }
    let mut rows = Vec::with_capacity(grid.len() * m.num_actions());
    for (j, b) in grid.points().iter().enumerate() {
        for a in 0..m.num_actions() {
            let po = m.obs_prob(b, a);
            let mut next = vec![0.0; grid.len()];
            for (o, row) in table.weights[j][a].iter().enumerate() {
                if po[o] <= IMPOSSIBLE_OBS {
                    continue;
                }
                for &(k, l) in row {
                    next[k] += po[o] * l;
                }
            }
            rows.push(MdpRow {
                reward: m.expected_reward(b, a),
                next: next.into_iter().enumerate().filter(|x| x.1 > 0.0).collect(),
            });
        }
    }
    FiniteMdp::from_rows(grid.len(), m.num_actions(), rows, m.discount())
}

/// Result of solving a sequence of grid MDPs.
#[derive(Debug, Clone)]
pub struct GridSolve {
    pub value: GridValueFn,
    pub rounds: usize,
    pub converged: bool,
}

/// Alternates between freezing the minimizing interpolations at all
/// one-step successors and solving the induced grid MDP, starting from the
/// current values. Stops when grid values move by less than `epsilon`.
pub fn solve_sawtooth(m: &Pomdp, g: GridValueFn, epsilon: f64, max_rounds: usize) -> Result<GridSolve> {
    let gamma = m.discount();
    let inner = epsilon * (1.0 - gamma) / (2.0 * gamma.max(f64::EPSILON));
    let mut g = g;
    for round in 1..=max_rounds {
        let table = interp_table(m, &g)?;
        let mdp = to_grid_mdp(m, &g.grid, &table)?;
        let sol = mdp.value_iteration(Some(&g.values), inner, 100_000);
        let change = linf(&sol.values, &g.values);
        g.values = sol.values;
        if change < epsilon {
            return Ok(GridSolve {
                value: g,
                rounds: round,
                converged: true,
            });
        }
    }
    log::warn!("grid solve stopped after {max_rounds} rounds");
    Ok(GridSolve {
        value: g,
        rounds: max_rounds,
        converged: false,
    })
}

/// Iterates [`grid_backup`] until values move by at most `epsilon`.
pub fn iterate_grid_backup(m: &Pomdp, mut g: GridValueFn, epsilon: f64, max_iters: usize) -> GridValueFn {
    for _ in 0..max_iters {
        let next = grid_backup(m, &g);
        let change = linf(&next, &g.values);
        g.values = next;
        if change <= epsilon {
            break;
        }
    }
    g
}

/// Grows the grid by simulation: from each extreme, follow the greedy
/// lookahead action under `g` with sampled observations until the belief
/// leaves the grid and the points already found. At most one point per
/// extreme.
pub fn adaptive_expand<R: Rng + ?Sized>(m: &Pomdp, g: &GridValueFn, rng: &mut R) -> Vec<Belief> {
    let ns = m.num_states();
    let mut found: Vec<Belief> = Vec::with_capacity(ns);
    for s in 0..ns {
        let mut b = Belief::extreme(ns, s);
        let mut added = false;
        for _ in 0..EXPAND_STEP_CAP {
            let (a, _) = lookahead_action(m, g, &b);
            let po = m.obs_prob(&b, a);
            let o = sample_index(&po, rng.random());
            b = match m.belief_update(&b, a, o) {
                Ok(nb) => nb,
                Err(_) => break,
            };
            let known = g.grid.find(&b, MEMBERSHIP_TOL).is_some() || found.iter().any(|p| linf(p, &b) <= MEMBERSHIP_TOL);
            if !known {
                found.push(b.clone());
                added = true;
                break;
            }
        }
        if !added {
            log::warn!("no new grid point reached from extreme {s}");
        }
    }
    found
}

/// Adds points to a grid value function, valuing each by the current rule.
pub fn extend_warm(g: &GridValueFn, points: Vec<Belief>) -> GridValueFn {
    let mut out = g.clone();
    for p in points {
        let v = g.eval(&p);
        if out.grid.insert(p, MEMBERSHIP_TOL) {
            out.values.push(v);
        }
    }
    out
}

/// Sawtooth upper bound grown adaptively to at least `target` points
/// (or until no new points are found). Starts from `initial` at the
/// extremes, typically the MDP values.
pub fn grow_sawtooth<R: Rng + ?Sized>(
    m: &Pomdp,
    initial: &[f64],
    target: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<GridSolve> {
    let g = GridValueFn::new(Grid::extremes(m.num_states()), initial.to_vec(), InterpRule::Sawtooth)?;
    let mut solved = solve_sawtooth(m, g, epsilon, 100)?;
    while solved.value.grid.len() < target {
        let new = adaptive_expand(m, &solved.value, rng);
        if new.is_empty() {
            break;
        }
        let room = target - solved.value.grid.len();
        let grown = extend_warm(&solved.value, new.into_iter().take(room).collect());
        solved = solve_sawtooth(m, grown, epsilon, 100)?;
    }
    Ok(solved)
}
