//! Exact dynamic programming over PWLC value functions.
//!
//! A backup generates, for each action, one projected set per observation,
//! combines them by cross-summing one observation at a time and prunes after
//! every step. The value function equals full enumeration followed by a
//! single prune, at a fraction of the candidate count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Belief, Pomdp};
use crate::pwlc::{dot, prune_indices, sup_norm_diff, AlphaVector, PwlcFn, PRUNE_TOL};
use crate::value::ValueFunction;

#[derive(Debug, Clone, Copy)]
pub struct BackupConfig {
    /// Largest cross-sum the backup will materialize before pruning.
    pub max_candidates: usize,
    pub tol: f64,
}

impl Default for BackupConfig {
    fn default() -> Self {
        Self {
            max_candidates: 1_000_000,
            tol: PRUNE_TOL,
        }
    }
}

/// `sum_{s'} P(s', o | s, a) alpha(s')` for every `s`.
pub(crate) fn project(m: &Pomdp, a: usize, o: usize, alpha: &[f64]) -> Vec<f64> {
    (0..m.num_states())
        .map(|s| dot(m.joint_row(a, o, s), alpha))
        .collect()
}

/// A set of vectors paired with the index that produced each one.
pub(crate) type Piece = Vec<(Vec<f64>, usize)>;

fn prune_piece(piece: Piece, tol: f64) -> Result<Piece> {
    let rows: Vec<&[f64]> = piece.iter().map(|p| p.0.as_slice()).collect();
    let keep = prune_indices(&rows, tol)?;
    let mut slots: Vec<Option<(Vec<f64>, usize)>> = piece.into_iter().map(Some).collect();
    Ok(keep.into_iter().map(|i| slots[i].take().expect("indices are unique")).collect())
}

/// Pruned cross-sum of all pieces; each result carries the per-piece index
/// of the summand it was built from.
pub(crate) fn cross_sum(pieces: Vec<Piece>, cfg: &BackupConfig) -> Result<Vec<(Vec<f64>, Vec<usize>)>> {
    let mut acc: Vec<(Vec<f64>, Vec<usize>)> = vec![(Vec::new(), Vec::new())];
    for piece in pieces {
        let piece = prune_piece(piece, cfg.tol)?;
        let count = acc.len() * piece.len();
        if count > cfg.max_candidates {
            return Err(Error::CandidateCap {
                count,
                cap: cfg.max_candidates,
            });
        }
        let mut next = Vec::with_capacity(count);
        for (sum, wit) in &acc {
            for (v, j) in &piece {
                let coeffs = if sum.is_empty() {
                    v.clone()
                } else {
                    sum.iter().zip(v).map(|(x, y)| x + y).collect()
                };
                let mut w = wit.clone();
                w.push(*j);
                next.push((coeffs, w));
            }
        }
        let rows: Vec<&[f64]> = next.iter().map(|p| p.0.as_slice()).collect();
        let keep = prune_indices(&rows, cfg.tol)?;
        let mut slots: Vec<Option<_>> = next.into_iter().map(Some).collect();
        acc = keep.into_iter().map(|i| slots[i].take().expect("unique")).collect();
    }
    Ok(acc)
}

/// Assembles action-tagged vectors `rho(., a) + sums` for every action and
/// prunes the union.
pub(crate) fn finish_backup(
    m: &Pomdp,
    per_action: Vec<Vec<(Vec<f64>, Vec<usize>)>>,
    keep_witnesses: bool,
    tol: f64,
) -> Result<PwlcFn> {
    let mut all = Vec::new();
    for (a, sums) in per_action.into_iter().enumerate() {
        let rho = m.rho().column(a);
        for (coeffs, wit) in sums {
            let coeffs = if coeffs.is_empty() {
                rho.clone()
            } else {
                coeffs.iter().zip(&rho).map(|(x, r)| x + r).collect()
            };
            let mut v = AlphaVector::new(coeffs).with_action(a);
            if keep_witnesses {
                v = v.with_witnesses(wit);
            }
            all.push(v);
        }
    }
    PwlcFn::new(all)?.prune(tol)
}

pub fn exact_backup(m: &Pomdp, f: &PwlcFn) -> Result<PwlcFn> {
    exact_backup_with(m, f, &BackupConfig::default())
}

/// The exact Bellman backup of `f`. Output vectors are tagged with their
/// action and with one index per observation into `f`.
pub fn exact_backup_with(m: &Pomdp, f: &PwlcFn, cfg: &BackupConfig) -> Result<PwlcFn> {
    let gamma = m.discount();
    let mut per_action = Vec::with_capacity(m.num_actions());
    for a in 0..m.num_actions() {
        let pieces: Vec<Piece> = (0..m.num_obs())
            .map(|o| {
                f.vectors()
                    .iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let p = project(m, a, o, &v.coeffs).into_iter().map(|x| gamma * x).collect();
                        (p, j)
                    })
                    .collect()
            })
            .collect();
        per_action.push(cross_sum(pieces, cfg)?);
    }
    finish_backup(m, per_action, true, cfg.tol)
}

/// The lower bound `min rho / (1 - gamma)` as a single vector.
pub fn default_initial(m: &Pomdp) -> PwlcFn {
    PwlcFn::constant(m.num_states(), m.rho().min() / (1.0 - m.discount()))
}

#[derive(Debug, Clone, Copy)]
pub struct ViConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    pub backup: BackupConfig,
    /// Keep every iterate (needed for policy-graph extraction).
    pub keep_history: bool,
}

impl ViConfig {
    pub fn new(epsilon: f64, max_iters: usize) -> Self {
        Self {
            epsilon,
            max_iters,
            backup: BackupConfig::default(),
            keep_history: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViStatus {
    Converged,
    IterationLimit,
    /// A backup exceeded the candidate cap; the last complete iterate is returned.
    CandidateCap,
}

#[derive(Debug, Clone)]
pub struct ViOutcome {
    pub f: PwlcFn,
    /// Max-norm distance between the last two iterates.
    pub bellman_error: f64,
    pub iters: usize,
    pub status: ViStatus,
    /// Iterates after the initial function, oldest first.
    pub history: Vec<PwlcFn>,
}

pub fn value_iteration(m: &Pomdp, f0: Option<PwlcFn>, epsilon: f64, max_iters: usize) -> Result<ViOutcome> {
    value_iteration_with(m, f0, &ViConfig::new(epsilon, max_iters))
}

/// Repeats exact backups until the Bellman error drops to `epsilon`.
pub fn value_iteration_with(m: &Pomdp, f0: Option<PwlcFn>, cfg: &ViConfig) -> Result<ViOutcome> {
    if !(cfg.epsilon > 0.0) {
        return Err(Error::InvalidConfig("epsilon must be positive".into()));
    }
    let mut f = f0.unwrap_or_else(|| default_initial(m));
    let mut history = Vec::new();
    let mut err = f64::INFINITY;
    let mut iters = 0;
    let mut status = ViStatus::IterationLimit;
    while iters < cfg.max_iters {
        let next = match exact_backup_with(m, &f, &cfg.backup) {
            Ok(n) => n,
            Err(Error::CandidateCap { count, cap }) => {
                log::warn!("backup {} needed {count} candidates (cap {cap}); stopping", iters + 1);
                status = ViStatus::CandidateCap;
                break;
            }
            Err(e) => return Err(e),
        };
        err = sup_norm_diff(&next, &f)?;
        f = next;
        iters += 1;
        if cfg.keep_history {
            history.push(f.clone());
        }
        if err <= cfg.epsilon {
            status = ViStatus::Converged;
            break;
        }
    }
    Ok(ViOutcome {
        f,
        bellman_error: err,
        iters,
        status,
        history,
    })
}

/// Lookahead action values `rho(b,a) + gamma sum_o P(o|b,a) V(tau(b,a,o))`
/// and the number of belief updates performed.
pub fn lookahead_q<V: ValueFunction + ?Sized>(m: &Pomdp, v: &V, b: &[f64]) -> (Vec<f64>, usize) {
    let mut updates = 0;
    let q = (0..m.num_actions())
        .map(|a| {
            let succ = m.successors(b, a);
            updates += succ.len();
            let future: f64 = succ.iter().map(|(_, p, nb)| p * v.value(nb)).sum();
            m.expected_reward(b, a) + m.discount() * future
        })
        .collect();
    (q, updates)
}

/// Greedy one-step lookahead; ties go to the lowest action.
pub fn lookahead_action<V: ValueFunction + ?Sized>(m: &Pomdp, v: &V, b: &[f64]) -> (usize, f64) {
    argmax(&lookahead_q(m, v, b).0)
}

pub(crate) fn argmax(xs: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &x) in xs.iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best
}

/// Action tag of the vector that is maximal at `b`.
pub fn direct_action(f: &PwlcFn, b: &[f64]) -> Result<usize> {
    let (_, i) = f.eval(b);
    f.vectors()[i].action.ok_or(Error::MissingAction { index: i })
}

/// One controller node: a vector from some stage of value iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNode {
    pub id: usize,
    pub action: usize,
    /// Successor per observation; empty for an open terminal node.
    pub edges: Vec<usize>,
    /// 0 for the oldest stage.
    pub stage: usize,
    pub vector: Vec<f64>,
}

/// A policy graph built from witness bookkeeping. Nodes of the newest stage
/// come first and are the candidates for the greedy start rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyGraph {
    pub start_rule: String,
    pub closed: bool,
    pub nodes: Vec<PolicyNode>,
}

impl PolicyGraph {
    fn newest_stage(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.stage)
    }

    /// Newest-stage node whose vector is maximal at `b`; lowest id on ties.
    pub fn start_node(&self, b: &[f64]) -> usize {
        let top = self.newest_stage();
        let mut best = (0, f64::NEG_INFINITY);
        for n in self.nodes.iter().take_while(|n| n.stage == top) {
            let v = dot(&n.vector, b);
            if v > best.1 {
                best = (n.id, v);
            }
        }
        best.0
    }

    pub fn action(&self, node: usize) -> usize {
        self.nodes[node].action
    }

    /// Successor after observing `o`, if the node has edges.
    pub fn next(&self, node: usize, o: usize) -> Option<usize> {
        self.nodes[node].edges.get(o).copied()
    }
}

/// Builds a policy graph from value-iteration iterates (oldest first). Each
/// vector of stage `i > 0` must carry witnesses into stage `i - 1`. With
/// `close_cycle`, oldest-stage nodes loop back to themselves.
pub fn extract_policy_graph(history: &[PwlcFn], close_cycle: bool) -> Result<PolicyGraph> {
    if history.is_empty() {
        return Err(Error::InvalidConfig("policy graph needs at least one stage".into()));
    }
    // Ids: newest stage first.
    let mut offsets = vec![0; history.len()];
    let mut next_id = 0;
    for stage in (0..history.len()).rev() {
        offsets[stage] = next_id;
        next_id += history[stage].len();
    }
    let num_obs = history
        .iter()
        .rev()
        .find_map(|f| f.vectors().iter().find_map(|v| v.witnesses.as_ref().map(Vec::len)));
    let mut nodes = Vec::with_capacity(next_id);
    for stage in (0..history.len()).rev() {
        for (i, v) in history[stage].vectors().iter().enumerate() {
            let id = offsets[stage] + i;
            let action = v.action.ok_or(Error::MissingAction { index: i })?;
            let edges = if stage == 0 {
                if close_cycle {
                    vec![id; num_obs.unwrap_or(1)]
                } else {
                    Vec::new()
                }
            } else {
                let wit = v.witnesses.as_ref().ok_or(Error::DanglingWitness { stage, vector: i, obs: 0 })?;
                let prev = history[stage - 1].len();
                wit.iter()
                    .enumerate()
                    .map(|(o, &j)| {
                        if j < prev {
                            Ok(offsets[stage - 1] + j)
                        } else {
                            Err(Error::DanglingWitness { stage, vector: i, obs: o })
                        }
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            nodes.push(PolicyNode {
                id,
                action,
                edges,
                stage,
                vector: v.coeffs.clone(),
            });
        }
    }
    Ok(PolicyGraph {
        start_rule: "greedy".into(),
        closed: close_cycle,
        nodes,
    })
}

/// Brute-force backup: every combination of one vector per observation,
/// for every action, followed by a single prune. Exponential; for checks.
pub fn enumerate_backup(m: &Pomdp, f: &PwlcFn) -> Result<PwlcFn> {
    let gamma = m.discount();
    let k = f.len();
    let no = m.num_obs();
    let mut all = Vec::new();
    for a in 0..m.num_actions() {
        let proj: Vec<Vec<Vec<f64>>> = (0..no)
            .map(|o| f.vectors().iter().map(|v| project(m, a, o, &v.coeffs)).collect())
            .collect();
        let total = k.pow(no as u32);
        for code in 0..total {
            let mut c = code;
            let mut coeffs = m.rho().column(a);
            let mut wit = Vec::with_capacity(no);
            for p in proj.iter() {
                let j = c % k;
                c /= k;
                wit.push(j);
                for (x, y) in coeffs.iter_mut().zip(&p[j]) {
                    *x += gamma * y;
                }
            }
            all.push(AlphaVector::new(coeffs).with_action(a).with_witnesses(wit));
        }
    }
    PwlcFn::new(all)?.prune(PRUNE_TOL)
}

/// `max_a [rho(b,a) + gamma sum_o P(o|b,a) V(tau(b,a,o))]` computed through
/// belief updates; a reference for any backup evaluated at `b`.
pub fn backup_value_at<V: ValueFunction + ?Sized>(m: &Pomdp, v: &V, b: &Belief) -> f64 {
    lookahead_action(m, v, b).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_pomdp, sample_belief_uniform, Labels};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state_switch() -> Pomdp {
        // Action 0 pays 1 in state 0; action 1 pays 1 in state 1; no movement.
        Pomdp::new(
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 2],
            vec![vec![vec![1.0], vec![1.0]]; 2],
            vec![
                vec![vec![1.0, 1.0], vec![0.0, 0.0]],
                vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            ],
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn single_action_single_observation() {
        let m = Pomdp::new(
            vec![vec![vec![0.3, 0.7], vec![0.6, 0.4]]],
            vec![vec![vec![1.0], vec![1.0]]],
            vec![vec![vec![1.0, 2.0], vec![3.0, 4.0]]],
            0.9,
        )
        .unwrap();
        let f = PwlcFn::from_coeffs(vec![vec![1.0, -1.0]]).unwrap();
        let g = exact_backup(&m, &f).unwrap();
        assert_eq!(g.len(), 1);
        let want0 = (0.3 * 1.0 + 0.7 * 2.0) + 0.9 * (0.3 - 0.7);
        let want1 = (0.6 * 3.0 + 0.4 * 4.0) + 0.9 * (0.6 - 0.4);
        assert!((g.vectors()[0].coeffs[0] - want0).abs() < 1e-12);
        assert!((g.vectors()[0].coeffs[1] - want1).abs() < 1e-12);
    }

    #[test]
    fn zero_seed_gives_reward_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_pomdp(&mut rng, (3, 3, 2), 0.9, 0.3);
        let g = exact_backup(&m, &PwlcFn::constant(3, 0.0)).unwrap();
        for v in g.vectors() {
            let a = v.action.unwrap();
            assert_eq!(v.coeffs, m.rho().column(a));
        }
    }

    #[test]
    fn matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let m = random_pomdp(&mut rng, (2, 2, 2), 0.9, 0.2);
            let f = PwlcFn::from_coeffs(
                (0..3)
                    .map(|_| (0..2).map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0)).collect())
                    .collect(),
            )
            .unwrap();
            let fast = exact_backup(&m, &f).unwrap();
            let slow = enumerate_backup(&m, &f).unwrap();
            for _ in 0..1000 {
                let b = sample_belief_uniform(&mut rng, 2);
                assert!((fast.value(&b) - slow.value(&b)).abs() < 1e-9);
                assert!((fast.value(&b) - backup_value_at(&m, &f, &b)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn undiscounted_step_converges_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_pomdp(&mut rng, (3, 2, 2), 0.0, 0.0);
        let out = value_iteration(&m, Some(PwlcFn::constant(3, 0.0)), 1e-6, 10).unwrap();
        assert!(out.iters <= 2);
        let b = sample_belief_uniform(&mut rng, 3);
        let want = (0..2).map(|a| m.expected_reward(&b, a)).fold(f64::NEG_INFINITY, f64::max);
        assert!((out.f.value(&b) - want).abs() < 1e-12);
    }

    #[test]
    fn loose_epsilon_stops_after_one_backup() {
        let m = two_state_switch();
        let out = value_iteration(&m, None, 1e6, 50).unwrap();
        assert_eq!(out.iters, 1);
        assert_eq!(out.status, ViStatus::Converged);
    }

    #[test]
    fn candidate_cap_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_pomdp(&mut rng, (3, 2, 3), 0.9, 0.0);
        let f = PwlcFn::from_coeffs(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let cfg = BackupConfig { max_candidates: 2, ..Default::default() };
        assert!(matches!(exact_backup_with(&m, &f, &cfg), Err(Error::CandidateCap { .. })));
    }

    #[test]
    fn lookahead_and_direct_examples() {
        let m = two_state_switch();
        let zero = PwlcFn::constant(2, 0.0);
        assert_eq!(lookahead_action(&m, &zero, &[0.9, 0.1]).0, 0);
        assert_eq!(lookahead_action(&m, &zero, &[0.2, 0.8]).0, 1);
        let f = PwlcFn::new(vec![
            AlphaVector::new(vec![1.0, 0.0]).with_action(0),
            AlphaVector::new(vec![0.0, 1.0]).with_action(1),
        ])
        .unwrap();
        assert_eq!(direct_action(&f, &[0.5, 0.5]).unwrap(), 0);
        assert_eq!(direct_action(&f, &[0.5 - 1e-9, 0.5 + 1e-9]).unwrap(), 1);
        assert_eq!(direct_action(&f, &[0.5 + 1e-9, 0.5 - 1e-9]).unwrap(), 0);
        assert!(matches!(direct_action(&zero, &[0.5, 0.5]), Err(Error::MissingAction { .. })));
    }

    #[test]
    fn policy_graph_shapes() {
        let single = PwlcFn::new(vec![AlphaVector::new(vec![1.0, 1.0]).with_action(0)]).unwrap();
        let g = extract_policy_graph(&[single], true).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert_eq!(g.next(0, 0), Some(0));

        let m = Pomdp::from_flat(
            2,
            2,
            2,
            vec![0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.5, 0.5],
            vec![0.8, 0.2, 0.3, 0.7, 0.5, 0.5, 0.5, 0.5],
            vec![1.0, 0.0, 0.0, 1.0, 0.4, 0.4, 0.4, 0.4],
            0.9,
            Labels::default(),
        )
        .unwrap();
        let cfg = ViConfig { keep_history: true, ..ViConfig::new(1e-3, 2) };
        let out = value_iteration_with(&m, None, &cfg).unwrap();
        let g = extract_policy_graph(&out.history, true).unwrap();
        assert!(g.nodes.iter().all(|n| n.edges.len() == 2));
        let b = [0.3, 0.7];
        let start = g.start_node(&b);
        assert_eq!(g.action(start), direct_action(&out.f, &b).unwrap());
    }

    #[test]
    fn dangling_witness_is_reported() {
        let s0 = PwlcFn::new(vec![AlphaVector::new(vec![0.0]).with_action(0)]).unwrap();
        let s1 = PwlcFn::new(vec![AlphaVector::new(vec![1.0]).with_action(0).with_witnesses(vec![3])]).unwrap();
        assert!(matches!(
            extract_policy_graph(&[s0, s1], false),
            Err(Error::DanglingWitness { stage: 1, vector: 0, obs: 0 })
        ));
    }
}
