//! Point-based lower bounds.
//!
//! A point backup builds the one vector of the exact backup that is optimal
//! at a chosen belief, without enumerating the rest. Unioning such vectors
//! into a set that already lower-bounds the optimal value keeps it a lower
//! bound and never lowers it anywhere.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::exact::lookahead_action;
use crate::fsm::FsmController;
use crate::grid::Grid;
use crate::model::{sample_belief_uniform, sample_index, Belief, Pomdp};
use crate::pwlc::{dot, pointwise_ge, AlphaVector, PwlcFn, PRUNE_TOL};
use crate::value::ValueFunction;

/// The vector of the exact backup of `f` that is maximal at `b`, tagged
/// with its action and the per-observation indices into `f`.
pub fn point_backup(m: &Pomdp, f: &PwlcFn, b: &[f64]) -> AlphaVector {
    let ns = m.num_states();
    let mut best: Option<(f64, AlphaVector)> = None;
    for a in 0..m.num_actions() {
        let mut coeffs = m.rho().column(a);
        let mut witnesses = Vec::with_capacity(m.num_obs());
        for o in 0..m.num_obs() {
            // Unnormalized posterior after (a, o).
            let mut post = vec![0.0; ns];
            for (s, &p) in b.iter().enumerate() {
                if p != 0.0 {
                    for (t, &q) in m.joint_row(a, o, s).iter().enumerate() {
                        post[t] += p * q;
                    }
                }
            }
            let (_, i) = f.eval(&post);
            witnesses.push(i);
            let alpha = &f.vectors()[i].coeffs;
            for (s, c) in coeffs.iter_mut().enumerate() {
                *c += m.discount() * dot(m.joint_row(a, o, s), alpha);
            }
        }
        let v = dot(&coeffs, b);
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, AlphaVector::new(coeffs).with_action(a).with_witnesses(witnesses)));
        }
    }
    best.expect("at least one action").1
}

/// Point backups at every grid point, duplicates removed. Not merged
/// with `f`.
pub fn gl_update(m: &Pomdp, f: &PwlcFn, grid: &Grid) -> Result<PwlcFn> {
    PwlcFn::new(grid.points().iter().map(|b| point_backup(m, f, b)).collect())
}

/// Repeats [`gl_update`]. The iteration need not converge; this just runs
/// `iters` rounds.
pub fn gl_iterate(m: &Pomdp, f: &PwlcFn, grid: &Grid, iters: usize) -> Result<PwlcFn> {
    let mut g = f.clone();
    for _ in 0..iters {
        g = gl_update(m, &g, grid)?;
    }
    Ok(g)
}

/// A PWLC lower bound. `certified` records that the initial set was the
/// value table of an evaluated controller, which is below the optimal value
/// function, so everything built from it by point backups is too.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundFn {
    pub f: PwlcFn,
    pub certified: bool,
}

impl LowerBoundFn {
    pub fn new(f: PwlcFn) -> Self {
        Self { f, certified: false }
    }

    pub fn from_fsm(c: &FsmController) -> Result<Self> {
        Ok(Self {
            f: c.induced_pwlc()?,
            certified: true,
        })
    }
}

impl ValueFunction for LowerBoundFn {
    fn value(&self, b: &[f64]) -> f64 {
        self.f.value(b)
    }
}

pub const DEFAULT_VECTOR_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementalConfig {
    /// Full LP pruning after each call instead of the pointwise check only.
    pub lp_prune: bool,
    /// Back up every point against the starting set instead of the growing
    /// one.
    pub batch: bool,
    pub max_vectors: usize,
}

impl Default for IncrementalConfig {
    fn default() -> Self {
        Self {
            lp_prune: false,
            batch: false,
            max_vectors: DEFAULT_VECTOR_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IncrementalOutcome {
    pub lb: LowerBoundFn,
    pub added: usize,
    /// The vector cap stopped the call early.
    pub capped: bool,
}

/// Unions `v` into `set`, dropping it if some member dominates it in every
/// coordinate and dropping members it dominates. Returns whether it was
/// added.
fn union_pointwise(set: &mut Vec<AlphaVector>, v: AlphaVector) -> bool {
    if set.iter().any(|u| pointwise_ge(&u.coeffs, &v.coeffs)) {
        return false;
    }
    set.retain(|u| !pointwise_ge(&v.coeffs, &u.coeffs));
    set.push(v);
    true
}

/// Adds the point backup of every point to the bound. Each added vector
/// only raises the maximum, and removed vectors are dominated by the one
/// that replaced them, so the value never decreases anywhere.
pub fn incremental_update(
    m: &Pomdp,
    lb: &LowerBoundFn,
    points: &[Belief],
    cfg: &IncrementalConfig,
) -> Result<IncrementalOutcome> {
    let start = lb.f.clone();
    let mut set: Vec<AlphaVector> = start.vectors().to_vec();
    let mut added = 0;
    let mut capped = false;
    for b in points {
        let v = if cfg.batch {
            point_backup(m, &start, b)
        } else {
            let current = PwlcFn::new(set.clone())?;
            point_backup(m, &current, b)
        };
        if set.len() >= cfg.max_vectors && !set.iter().any(|u| pointwise_ge(&v.coeffs, &u.coeffs)) {
            capped = true;
            log::warn!("lower bound reached {} vectors", cfg.max_vectors);
            break;
        }
        // Witness indices refer to a set that changes below.
        let v = AlphaVector {
            witnesses: None,
            ..v
        };
        if union_pointwise(&mut set, v) {
            added += 1;
        }
    }
    let mut f = PwlcFn::new(set)?;
    if cfg.lp_prune {
        f = f.prune(PRUNE_TOL)?;
    }
    Ok(IncrementalOutcome {
        lb: LowerBoundFn {
            f,
            certified: lb.certified,
        },
        added,
        capped,
    })
}

/// Extremes ordered by how many transitions separate them from the state
/// the bound currently values most: breadth-first over reversed positive
/// transitions, ties and unreachable states by index.
pub fn order_extremes(m: &Pomdp, f: &PwlcFn) -> Vec<Belief> {
    let ns = m.num_states();
    let corner = f.corner_values();
    let mut start = 0;
    for s in 1..ns {
        if corner[s] > corner[start] {
            start = s;
        }
    }
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); ns];
    for s in 0..ns {
        for a in 0..m.num_actions() {
            for (t, &p) in m.trans_row(a, s).iter().enumerate() {
                if p > 0.0 && !preds[t].contains(&s) {
                    preds[t].push(s);
                }
            }
        }
    }
    let mut dist = vec![usize::MAX; ns];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(t) = queue.pop_front() {
        for &s in &preds[t] {
            if dist[s] == usize::MAX {
                dist[s] = dist[t] + 1;
                queue.push_back(s);
            }
        }
    }
    let mut order: Vec<usize> = (0..ns).collect();
    order.sort_by_key(|&s| (dist[s], s));
    order.into_iter().map(|s| Belief::extreme(ns, s)).collect()
}

/// Beliefs visited by greedy lookahead under `f` from `b0`, `len` of them
/// including `b0`, latest first.
pub fn simulate_point_sequence<R: Rng + ?Sized>(
    m: &Pomdp,
    b0: &Belief,
    f: &PwlcFn,
    len: usize,
    rng: &mut R,
) -> Vec<Belief> {
    let mut seq = vec![b0.clone()];
    while seq.len() < len {
        let b = seq.last().expect("nonempty");
        let (a, _) = lookahead_action(m, f, b);
        let o = sample_index(&m.obs_prob(b, a), rng.random());
        match m.belief_update(b, a, o) {
            Ok(nb) => seq.push(nb),
            Err(_) => break,
        }
    }
    seq.reverse();
    seq
}

/// Where the points of one incremental cycle come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PointSource {
    Fixed(Vec<Belief>),
    /// Uniform samples from the simplex.
    Random(usize),
    /// All extremes in [`order_extremes`] order.
    HeurExtremes,
    /// The ordered extremes, then a reversed greedy trajectory from a
    /// random belief, `total` points in all.
    HeurTwoTier { total: usize },
}

impl PointSource {
    pub fn select<R: Rng + ?Sized>(&self, m: &Pomdp, f: &PwlcFn, rng: &mut R) -> Vec<Belief> {
        let ns = m.num_states();
        match self {
            PointSource::Fixed(p) => p.clone(),
            PointSource::Random(n) => (0..*n).map(|_| sample_belief_uniform(rng, ns)).collect(),
            PointSource::HeurExtremes => order_extremes(m, f),
            PointSource::HeurTwoTier { total } => {
                let mut pts = order_extremes(m, f);
                pts.truncate(*total);
                let rest = total - pts.len();
                if rest > 0 {
                    let b0 = sample_belief_uniform(rng, ns);
                    pts.extend(simulate_point_sequence(m, &b0, f, rest, rng));
                }
                pts
            }
        }
    }
}

/// Runs `cycles` incremental updates and records the bound's mean over
/// `probes` after each one.
pub fn incremental_cycles<R: Rng + ?Sized>(
    m: &Pomdp,
    lb: LowerBoundFn,
    source: &PointSource,
    cycles: usize,
    cfg: &IncrementalConfig,
    probes: &[Belief],
    rng: &mut R,
) -> Result<(LowerBoundFn, Vec<f64>)> {
    if cycles > 0 && matches!(source, PointSource::Random(0) | PointSource::HeurTwoTier { total: 0 }) {
        return Err(Error::InvalidConfig("a cycle needs at least one point".into()));
    }
    let mean = |lb: &LowerBoundFn| probes.iter().map(|b| lb.value(b)).sum::<f64>() / probes.len().max(1) as f64;
    let mut lb = lb;
    let mut trace = vec![mean(&lb)];
    for _ in 0..cycles {
        let pts = source.select(m, &lb.f, rng);
        let out = incremental_update(m, &lb, &pts, cfg)?;
        lb = out.lb;
        trace.push(mean(&lb));
        if out.capped {
            break;
        }
    }
    Ok((lb, trace))
}
