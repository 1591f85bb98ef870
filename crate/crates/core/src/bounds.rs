//! Bound approximations that avoid the exponential exact backup.
//!
//! Upper bounds: the fully observable MDP, QMDP, the fast informed bound and
//! its partitioned variant. Lower bound: the unobservable MDP. Each update is
//! a contraction and isotone; for the same input they are ordered
//! `UMDP <= exact <= FIB <= QMDP <= MDP`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{cross_sum, finish_backup, project, BackupConfig, Piece};
use crate::mdp::{FiniteMdp, MdpRow};
use crate::model::Pomdp;
use crate::pwlc::{dot, AlphaVector, PwlcFn, PRUNE_TOL};
use crate::value::ValueFunction;

/// Action values of the underlying fully observable MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    /// `q[s][a]`.
    pub q: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MdpMode {
    /// `sum_s b(s) max_a q(s,a)`.
    Mdp,
    /// `max_a sum_s b(s) q(s,a)`.
    Qmdp,
}

impl QTable {
    pub fn num_states(&self) -> usize {
        self.q.len()
    }

    pub fn num_actions(&self) -> usize {
        self.q.first().map_or(0, Vec::len)
    }

    /// `max_a q(s,a)` per state.
    pub fn v(&self) -> Vec<f64> {
        self.q
            .iter()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    pub fn value(&self, b: &[f64], mode: MdpMode) -> f64 {
        match mode {
            MdpMode::Mdp => dot(&self.v(), b),
            MdpMode::Qmdp => (0..self.num_actions())
                .map(|a| b.iter().zip(&self.q).map(|(p, r)| p * r[a]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// The bound as a PWLC function: one vector for `Mdp`, one per action
    /// for `Qmdp`.
    pub fn to_pwlc(&self, mode: MdpMode) -> PwlcFn {
        let vectors = match mode {
            MdpMode::Mdp => vec![AlphaVector::new(self.v())],
            MdpMode::Qmdp => (0..self.num_actions())
                .map(|a| AlphaVector::new(self.q.iter().map(|r| r[a]).collect()).with_action(a))
                .collect(),
        };
        PwlcFn::new(vectors).expect("finite table")
    }
}

/// `mdp_value` in either interpolation mode.
pub fn mdp_value(q: &QTable, b: &[f64], mode: MdpMode) -> f64 {
    q.value(b, mode)
}

/// The POMDP's state dynamics as a finite MDP with rewards `rho`.
pub fn underlying_mdp(m: &Pomdp) -> FiniteMdp {
    let (ns, na) = (m.num_states(), m.num_actions());
    let mut rows = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            rows.push(MdpRow {
                reward: m.rho().get(s, a),
                next: m
                    .trans_row(a, s)
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(t, &p)| (t, p))
                    .collect(),
            });
        }
    }
    FiniteMdp::from_rows(ns, na, rows, m.discount()).expect("model rows are valid")
}

/// Solves the fully observable MDP to Bellman error `epsilon`.
pub fn solve_fomdp(m: &Pomdp, epsilon: f64) -> QTable {
    let mdp = underlying_mdp(m);
    let sol = mdp.value_iteration(None, epsilon, usize::MAX);
    QTable {
        q: sol.q.chunks(m.num_actions()).map(<[f64]>::to_vec).collect(),
    }
}

/// `rho(s,a) + gamma sum_{s'} P(s'|s,a) c(s')` for every state.
fn expected_corner(m: &Pomdp, a: usize, corner: &[f64]) -> Vec<f64> {
    (0..m.num_states())
        .map(|s| m.rho().get(s, a) + m.discount() * dot(m.trans_row(a, s), corner))
        .collect()
}

/// The MDP update: a single vector.
pub fn mdp_backup(m: &Pomdp, f: &PwlcFn) -> PwlcFn {
    let corner = f.corner_values();
    let per_action: Vec<Vec<f64>> = (0..m.num_actions()).map(|a| expected_corner(m, a, &corner)).collect();
    let v = (0..m.num_states())
        .map(|s| per_action.iter().map(|r| r[s]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    PwlcFn::new(vec![AlphaVector::new(v)]).expect("finite")
}

/// The QMDP update: one action-tagged vector per action.
pub fn qmdp_backup(m: &Pomdp, f: &PwlcFn) -> PwlcFn {
    let corner = f.corner_values();
    let v = (0..m.num_actions())
        .map(|a| AlphaVector::new(expected_corner(m, a, &corner)).with_action(a))
        .collect();
    PwlcFn::new(v).expect("finite")
}

/// The fast informed bound update: one action-tagged vector per action.
pub fn fib_backup(m: &Pomdp, f: &PwlcFn) -> PwlcFn {
    let (ns, gamma) = (m.num_states(), m.discount());
    let projections: Vec<Vec<Vec<Vec<f64>>>> = (0..m.num_actions())
        .map(|a| {
            (0..m.num_obs())
                .map(|o| f.vectors().iter().map(|v| project(m, a, o, &v.coeffs)).collect())
                .collect()
        })
        .collect();
    let v = projections
        .iter()
        .enumerate()
        .map(|(a, per_obs)| {
            let coeffs = (0..ns)
                .map(|s| {
                    let future: f64 = per_obs
                        .iter()
                        .map(|proj| proj.iter().map(|p| p[s]).fold(f64::NEG_INFINITY, f64::max))
                        .sum();
                    m.rho().get(s, a) + gamma * future
                })
                .collect();
            AlphaVector::new(coeffs).with_action(a)
        })
        .collect();
    PwlcFn::new(v).expect("finite")
}

/// A disjoint cover of the state set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(num_states: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; num_states];
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            for &s in b {
                if s >= num_states {
                    return Err(Error::InvalidPartition(format!("state {s} out of range")));
                }
                if seen[s] {
                    return Err(Error::InvalidPartition(format!("state {s} appears twice")));
                }
                seen[s] = true;
            }
        }
        if let Some(s) = seen.iter().position(|x| !x) {
            return Err(Error::InvalidPartition(format!("state {s} is not covered")));
        }
        Ok(Self { blocks })
    }

    pub fn singletons(num_states: usize) -> Self {
        Self {
            blocks: (0..num_states).map(|s| vec![s]).collect(),
        }
    }

    pub fn whole(num_states: usize) -> Self {
        Self {
            blocks: vec![(0..num_states).collect()],
        }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }
}

/// Partitioned fast informed bound. The successor term takes a separate
/// maximum for every (observation, block) pair; each maximum is a PWLC
/// function of the belief restricted to the block, so the update is the
/// pruned cross-sum of the block-restricted projections. Singleton blocks
/// give the fast informed bound; a single block gives the exact backup.
pub fn partitioned_fib_backup(m: &Pomdp, f: &PwlcFn, partition: &Partition) -> Result<PwlcFn> {
    partitioned_fib_backup_with(m, f, partition, &BackupConfig::default())
}

pub fn partitioned_fib_backup_with(
    m: &Pomdp,
    f: &PwlcFn,
    partition: &Partition,
    cfg: &BackupConfig,
) -> Result<PwlcFn> {
    let ns = m.num_states();
    let covered: usize = partition.blocks.iter().map(Vec::len).sum();
    if covered != ns || partition.blocks.iter().flatten().any(|&s| s >= ns) {
        return Err(Error::InvalidPartition(format!("partition does not cover {ns} states")));
    }
    let gamma = m.discount();
    let mut per_action = Vec::with_capacity(m.num_actions());
    for a in 0..m.num_actions() {
        let mut pieces: Vec<Piece> = Vec::new();
        for o in 0..m.num_obs() {
            let proj: Vec<Vec<f64>> = f.vectors().iter().map(|v| project(m, a, o, &v.coeffs)).collect();
            for block in &partition.blocks {
                pieces.push(
                    proj.iter()
                        .enumerate()
                        .map(|(j, p)| {
                            let mut masked = vec![0.0; ns];
                            for &s in block {
                                masked[s] = gamma * p[s];
                            }
                            (masked, j)
                        })
                        .collect(),
                );
            }
        }
        per_action.push(cross_sum(pieces, cfg)?);
    }
    finish_backup(m, per_action, false, cfg.tol)
}

/// The unobservable-MDP update: every (action, vector) pair, pruned.
pub fn umdp_backup(m: &Pomdp, f: &PwlcFn) -> Result<PwlcFn> {
    PwlcFn::new(umdp_candidates(m, f))?.prune(PRUNE_TOL)
}

/// The `|A| |Gamma|` unpruned candidates of the unobservable-MDP update.
pub fn umdp_candidates(m: &Pomdp, f: &PwlcFn) -> Vec<AlphaVector> {
    let gamma = m.discount();
    let mut out = Vec::with_capacity(m.num_actions() * f.len());
    for a in 0..m.num_actions() {
        for (j, v) in f.vectors().iter().enumerate() {
            let coeffs = (0..m.num_states())
                .map(|s| m.rho().get(s, a) + gamma * dot(m.trans_row(a, s), &v.coeffs))
                .collect();
            out.push(AlphaVector::new(coeffs).with_action(a).with_witnesses(vec![j]));
        }
    }
    out
}

/// Fast-informed-bound vectors `alpha(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FibTable {
    /// `alpha[a][s]`.
    pub alpha: Vec<Vec<f64>>,
}

impl FibTable {
    pub fn to_pwlc(&self) -> PwlcFn {
        PwlcFn::new(
            self.alpha
                .iter()
                .enumerate()
                .map(|(a, v)| AlphaVector::new(v.clone()).with_action(a))
                .collect(),
        )
        .expect("finite")
    }
}

impl ValueFunction for FibTable {
    fn value(&self, b: &[f64]) -> f64 {
        self.alpha.iter().map(|v| dot(v, b)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// State index of `(s, a, o)` in the equivalent MDP.
fn sao_index(m: &Pomdp, s: usize, a: usize, o: usize) -> usize {
    (s * m.num_actions() + a) * m.num_obs() + o
}

/// The fast informed bound as a finite MDP over state-action-observation
/// triples. The value of `(s, a, o)` is the observation-`o` share of the
/// future term of `alpha(s, a)`; choosing `a'` earns
/// `sum_{s'} P(s', o|s, a) rho(s', a')` and moves with weight
/// `P(s', o|s, a)` to every `(s', a', o')`. Row weights sum to
/// `|O| P(o|s,a)`, not one.
pub fn fib_equivalent_mdp(m: &Pomdp) -> FiniteMdp {
    let (ns, na, no) = (m.num_states(), m.num_actions(), m.num_obs());
    let mut rows = Vec::with_capacity(ns * na * no * na);
    for s in 0..ns {
        for a in 0..na {
            for o in 0..no {
                let joint = m.joint_row(a, o, s);
                for a2 in 0..na {
                    let mut next = Vec::new();
                    let mut reward = 0.0;
                    for (s2, &p) in joint.iter().enumerate() {
                        if p > 0.0 {
                            reward += p * m.rho().get(s2, a2);
                            for o2 in 0..no {
                                next.push((sao_index(m, s2, a2, o2), p));
                            }
                        }
                    }
                    rows.push(MdpRow { reward, next });
                }
            }
        }
    }
    FiniteMdp::from_rows(ns * na * no, na, rows, m.discount()).expect("valid rows")
}

/// Fixed point of the fast informed bound, obtained by value iteration on
/// the equivalent MDP. Iteration stops once the induced `alpha(s, a)`
/// change by at most `epsilon` in one sweep.
pub fn fib_fixed_point(m: &Pomdp, epsilon: f64) -> FibTable {
    let mdp = fib_equivalent_mdp(m);
    let (ns, na, no) = (m.num_states(), m.num_actions(), m.num_obs());
    let gamma = m.discount();
    let induce = |v: &[f64]| -> Vec<Vec<f64>> {
        (0..na)
            .map(|a| {
                (0..ns)
                    .map(|s| m.rho().get(s, a) + gamma * (0..no).map(|o| v[sao_index(m, s, a, o)]).sum::<f64>())
                    .collect()
            })
            .collect()
    };
    let mut v = vec![0.0; mdp.num_states()];
    let mut alpha = induce(&v);
    loop {
        v = mdp.backup(&v);
        let next = induce(&v);
        let change = next
            .iter()
            .flatten()
            .zip(alpha.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        alpha = next;
        if change <= epsilon {
            break;
        }
    }
    FibTable { alpha }
}

/// Applies `update` `n` times starting from `f`.
pub fn iterate<F>(f: &PwlcFn, n: usize, mut update: F) -> Result<PwlcFn>
where
    F: FnMut(&PwlcFn) -> Result<PwlcFn>,
{
    let mut cur = f.clone();
    for _ in 0..n {
        cur = update(&cur)?;
    }
    Ok(cur)
}
