//! Finite-state controllers: evaluation, fixed-strategy updates, policy
//! improvement by adding memory states, and the three ways of running one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{exact_backup_with, lookahead_q, BackupConfig, argmax};
use crate::harness::{OpCounters, Policy};
use crate::model::{Belief, Pomdp};
use crate::pwlc::{dot, pointwise_ge, AlphaVector, PwlcFn};
use crate::value::ValueFunction;

/// Systems up to this many unknowns are solved by dense LU.
pub const DIRECT_SOLVE_LIMIT: usize = 5000;

/// One memory state: the action it emits and its successor per observation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryState {
    pub action: usize,
    pub next: Vec<usize>,
}

/// A deterministic controller. The start state is picked greedily from the
/// initial belief once values are known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsmController {
    #[serde(default)]
    pub name: Option<String>,
    pub states: Vec<MemoryState>,
    /// `values[x][s]`, present once evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Vec<f64>>>,
}

impl FsmController {
    pub fn new(states: Vec<MemoryState>, num_actions: usize, num_obs: usize) -> Result<Self> {
        let c = Self {
            name: None,
            states,
            values: None,
        };
        c.validate(num_actions, num_obs)?;
        Ok(c)
    }

    pub fn validate(&self, num_actions: usize, num_obs: usize) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::InvalidController("no memory states".into()));
        }
        let n = self.states.len();
        for (x, st) in self.states.iter().enumerate() {
            if st.action >= num_actions {
                return Err(Error::InvalidController(format!("state {x} emits unknown action {}", st.action)));
            }
            if st.next.len() != num_obs {
                return Err(Error::InvalidController(format!(
                    "state {x} has {} successors for {num_obs} observations",
                    st.next.len()
                )));
            }
            if let Some(&y) = st.next.iter().find(|&&y| y >= n) {
                return Err(Error::InvalidController(format!("state {x} links to missing state {y}")));
            }
        }
        Ok(())
    }

    pub fn num_memory(&self) -> usize {
        self.states.len()
    }

    pub fn action(&self, x: usize) -> usize {
        self.states[x].action
    }

    /// Successor memory state after observing `o`.
    pub fn fsm_step(&self, x: usize, o: usize) -> usize {
        self.states[x].next[o]
    }

    pub fn values(&self) -> Result<&[Vec<f64>]> {
        self.values.as_deref().ok_or(Error::Unevaluated)
    }

    /// Evaluates the controller and stores its value table.
    pub fn evaluated(mut self, m: &Pomdp) -> Result<Self> {
        self.values = Some(evaluate_fsm(m, &self)?);
        Ok(self)
    }

    /// `max_x V(x, b)` and the maximizing memory state (lowest on ties).
    pub fn fsm_value(&self, b: &[f64]) -> Result<(f64, usize)> {
        let v = self.values()?;
        let mut best = (f64::NEG_INFINITY, 0);
        for (x, row) in v.iter().enumerate() {
            let val = dot(row, b);
            if val > best.0 {
                best = (val, x);
            }
        }
        Ok(best)
    }

    /// The value table as action-tagged vectors (duplicates dropped).
    pub fn induced_pwlc(&self) -> Result<PwlcFn> {
        let v = self.values()?;
        PwlcFn::new(
            v.iter()
                .zip(&self.states)
                .map(|(row, st)| AlphaVector::new(row.clone()).with_action(st.action))
                .collect(),
        )
    }
}

impl ValueFunction for FsmController {
    fn value(&self, b: &[f64]) -> f64 {
        self.fsm_value(b).expect("controller must be evaluated").0
    }
}

/// The controller that repeats action `a` forever.
pub fn make_one_action_fsm(a: usize, num_obs: usize) -> FsmController {
    FsmController {
        name: Some(format!("one-action-{a}")),
        states: vec![MemoryState {
            action: a,
            next: vec![0; num_obs],
        }],
        values: None,
    }
}

/// The union of all one-action controllers, one memory state per action.
pub fn one_action_collection(num_actions: usize, num_obs: usize) -> FsmController {
    FsmController {
        name: Some("one-action-collection".into()),
        states: (0..num_actions)
            .map(|a| MemoryState {
                action: a,
                next: vec![a; num_obs],
            })
            .collect(),
        values: None,
    }
}

/// Sparse rows of `P_C`: from `(x, s)` to `(x', s')` with probability
/// `sum_o P(s'|s,a) P(o|s',a) [phi(x,o) = x']`.
fn augmented_rows(m: &Pomdp, c: &FsmController) -> Vec<Vec<(usize, f64)>> {
    let ns = m.num_states();
    let mut rows = Vec::with_capacity(c.num_memory() * ns);
    for st in &c.states {
        let a = st.action;
        for s in 0..ns {
            let mut acc: Vec<(usize, f64)> = Vec::new();
            for (t, &p) in m.trans_row(a, s).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (o, &q) in m.obs_row(a, t).iter().enumerate() {
                    if q == 0.0 {
                        continue;
                    }
                    let col = st.next[o] * ns + t;
                    match acc.iter_mut().find(|(c, _)| *c == col) {
                        Some(e) => e.1 += p * q,
                        None => acc.push((col, p * q)),
                    }
                }
            }
            rows.push(acc);
        }
    }
    rows
}

fn reward_vector(m: &Pomdp, c: &FsmController) -> Vec<f64> {
    let ns = m.num_states();
    c.states
        .iter()
        .flat_map(|st| (0..ns).map(move |s| m.rho().get(s, st.action)))
        .collect()
}

/// Solves `(I - gamma P_C) v = r_C` over memory-state/state pairs and
/// returns `V(x, s)`.
pub fn evaluate_fsm(m: &Pomdp, c: &FsmController) -> Result<Vec<Vec<f64>>> {
    c.validate(m.num_actions(), m.num_obs())?;
    let ns = m.num_states();
    let n = c.num_memory() * ns;
    let rows = augmented_rows(m, c);
    let r = reward_vector(m, c);
    let gamma = m.discount();
    let v: Vec<f64> = if n <= DIRECT_SOLVE_LIMIT {
        let mut a = DMatrix::<f64>::identity(n, n);
        for (i, row) in rows.iter().enumerate() {
            for &(j, p) in row {
                a[(i, j)] -= gamma * p;
            }
        }
        let sol = a.lu().solve(&DVector::from_vec(r)).ok_or(Error::Singular)?;
        sol.iter().copied().collect()
    } else {
        // Fixed-policy iteration; the map is a gamma-contraction.
        let scale = r.iter().fold(1.0f64, |m, x| m.max(x.abs())) / (1.0 - gamma);
        let tol = 1e-12 * scale * (1.0 - gamma);
        let mut v = vec![0.0; n];
        loop {
            let next: Vec<f64> = rows
                .iter()
                .zip(&r)
                .map(|(row, ri)| ri + gamma * row.iter().map(|&(j, p)| p * v[j]).sum::<f64>())
                .collect();
            let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if change <= tol {
                break;
            }
        }
        v
    };
    Ok(v.chunks(ns).map(<[f64]>::to_vec).collect())
}

/// `max |(I - gamma P_C) v - r_C|` for a value table.
pub fn fsm_residual(m: &Pomdp, c: &FsmController, values: &[Vec<f64>]) -> f64 {
    let flat: Vec<f64> = values.iter().flatten().copied().collect();
    let rows = augmented_rows(m, c);
    let r = reward_vector(m, c);
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let lhs = flat[i] - m.discount() * row.iter().map(|&(j, p)| p * flat[j]).sum::<f64>();
            (lhs - r[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// The fixed-strategy update: one vector per memory state,
/// `rho(s, a_x) + gamma sum_o sum_s' P(s', o|s, a_x) f[phi(x, o)](s')`.
/// `f` is indexed by memory state.
pub fn h_fsm_update(m: &Pomdp, c: &FsmController, f: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let ns = m.num_states();
    c.states
        .iter()
        .map(|st| {
            let a = st.action;
            (0..ns)
                .map(|s| {
                    let future: f64 = (0..m.num_obs())
                        .map(|o| dot(m.joint_row(a, o, s), &f[st.next[o]]))
                        .sum();
                    m.rho().get(s, a) + m.discount() * future
                })
                .collect()
        })
        .collect()
}

/// Tolerance for treating a backed-up vector as a copy of an existing state.
fn same_vector(x: &[f64], y: &[f64]) -> bool {
    let scale = x.iter().chain(y).fold(1.0f64, |m, v| m.max(v.abs()));
    x.iter().zip(y).all(|(a, b)| (a - b).abs() <= 1e-9 * scale)
}

/// One round of policy improvement. Every vector of the exact backup of
/// the controller's value function becomes a memory state unless it
/// duplicates an existing one. If it dominates existing states in every
/// coordinate, it takes over the lowest-numbered of them and the others are
/// removed, with links into them redirected. The result is re-evaluated
/// and never worse than the input at any belief.
pub fn hansen_improve(m: &Pomdp, c: &FsmController) -> Result<FsmController> {
    hansen_improve_with(m, c, &BackupConfig::default())
}

pub fn hansen_improve_with(m: &Pomdp, c: &FsmController, cfg: &BackupConfig) -> Result<FsmController> {
    let old = c.values()?;
    let gamma_set = c.induced_pwlc()?;
    // Backup witnesses index the deduplicated set; map back to states.
    let owner: Vec<usize> = gamma_set
        .vectors()
        .iter()
        .map(|v| old.iter().position(|row| *row == v.coeffs).expect("vector came from the table"))
        .collect();
    let backed = exact_backup_with(m, &gamma_set, cfg)?;

    let mut states = c.states.clone();
    let mut current: Vec<Vec<f64>> = old.to_vec();
    let mut alive = vec![true; states.len()];
    // redirect[y] = x when state y was absorbed by x.
    let mut redirect: Vec<usize> = (0..states.len()).collect();
    let mut changed = false;

    for v in backed.vectors() {
        if current
            .iter()
            .zip(&alive)
            .any(|(row, &live)| live && same_vector(row, &v.coeffs))
        {
            continue;
        }
        let action = v.action.expect("backup tags actions");
        let next: Vec<usize> = v
            .witnesses
            .as_ref()
            .expect("backup records witnesses")
            .iter()
            .map(|&j| owner[j])
            .collect();
        let dominated: Vec<usize> = (0..c.num_memory())
            .filter(|&x| alive[x] && pointwise_ge(&v.coeffs, &current[x]))
            .collect();
        changed = true;
        match dominated.split_first() {
            Some((&keep, rest)) => {
                states[keep] = MemoryState { action, next };
                current[keep] = v.coeffs.clone();
                for &y in rest {
                    alive[y] = false;
                    redirect[y] = keep;
                }
            }
            None => {
                states.push(MemoryState { action, next });
                current.push(v.coeffs.clone());
                alive.push(true);
                redirect.push(redirect.len());
            }
        }
    }
    if !changed {
        return Ok(c.clone());
    }
    // Resolve redirect chains, then renumber the survivors.
    let resolve = |mut y: usize| {
        while redirect[y] != y {
            y = redirect[y];
        }
        y
    };
    let mut new_index = vec![usize::MAX; states.len()];
    let mut k = 0;
    for (x, &live) in alive.iter().enumerate() {
        if live {
            new_index[x] = k;
            k += 1;
        }
    }
    let improved: Vec<MemoryState> = states
        .iter()
        .zip(&alive)
        .filter(|(_, &live)| live)
        .map(|(st, _)| MemoryState {
            action: st.action,
            next: st.next.iter().map(|&y| new_index[resolve(y)]).collect(),
        })
        .collect();
    FsmController {
        name: c.name.clone(),
        states: improved,
        values: None,
    }
    .evaluated(m)
}

#[derive(Debug, Clone, Copy)]
pub struct PolicyIterationConfig {
    pub rounds: usize,
    /// Stop once no extreme belief improves by more than this.
    pub epsilon: f64,
    pub max_states: usize,
    pub backup: BackupConfig,
}

impl Default for PolicyIterationConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            epsilon: 1e-6,
            max_states: 500,
            backup: BackupConfig::default(),
        }
    }
}

/// Repeated improvement from an evaluated controller. Returns the final
/// controller and the number of rounds run.
pub fn policy_iteration(m: &Pomdp, start: FsmController, cfg: &PolicyIterationConfig) -> Result<(FsmController, usize)> {
    let mut c = if start.values.is_some() { start } else { start.evaluated(m)? };
    let ns = m.num_states();
    for round in 0..cfg.rounds {
        let next = match hansen_improve_with(m, &c, &cfg.backup) {
            Ok(n) => n,
            Err(Error::CandidateCap { count, cap }) => {
                log::warn!("improvement round {round} needed {count} candidates (cap {cap})");
                return Ok((c, round));
            }
            Err(e) => return Err(e),
        };
        let gain = (0..ns)
            .map(|s| {
                let e = Belief::extreme(ns, s);
                next.fsm_value(&e).map(|v| v.0).unwrap_or(f64::NEG_INFINITY)
                    - c.fsm_value(&e).map(|v| v.0).unwrap_or(f64::NEG_INFINITY)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let too_big = next.num_memory() > cfg.max_states;
        if !too_big {
            c = next;
        }
        if gain < cfg.epsilon || too_big {
            return Ok((c, round + 1));
        }
    }
    Ok((c, cfg.rounds))
}

/// Runs the controller as is: memory state from the start belief, then
/// transitions on observations. No belief tracking.
#[derive(Debug, Clone)]
pub struct FsmPolicy<'a> {
    c: &'a FsmController,
    x: usize,
    counters: OpCounters,
}

impl<'a> FsmPolicy<'a> {
    pub fn new(c: &'a FsmController) -> Result<Self> {
        c.values()?;
        Ok(Self {
            c,
            x: 0,
            counters: OpCounters::default(),
        })
    }
}

impl Policy for FsmPolicy<'_> {
    fn needs_belief(&self) -> bool {
        false
    }

    fn reset(&mut self, b0: &Belief) {
        self.x = self.c.fsm_value(b0).expect("evaluated").1;
        self.counters.dot_products += self.c.num_memory() as u64;
    }

    fn act(&mut self, _belief: Option<&Belief>) -> usize {
        self.counters.decisions += 1;
        self.c.action(self.x)
    }

    fn observe(&mut self, _action: usize, obs: usize) {
        self.x = self.c.fsm_step(self.x, obs);
    }

    fn counters(&self) -> OpCounters {
        self.counters
    }
}

/// Re-selects the best memory state for the tracked belief at every step.
#[derive(Debug, Clone)]
pub struct DirectFsmPolicy<'a> {
    c: &'a FsmController,
    counters: OpCounters,
}

impl<'a> DirectFsmPolicy<'a> {
    pub fn new(c: &'a FsmController) -> Result<Self> {
        c.values()?;
        Ok(Self {
            c,
            counters: OpCounters::default(),
        })
    }
}

impl Policy for DirectFsmPolicy<'_> {
    fn needs_belief(&self) -> bool {
        true
    }

    fn reset(&mut self, _b0: &Belief) {}

    fn act(&mut self, belief: Option<&Belief>) -> usize {
        let b = belief.expect("direct control tracks beliefs");
        self.counters.decisions += 1;
        self.counters.dot_products += self.c.num_memory() as u64;
        let x = self.c.fsm_value(b).expect("evaluated").1;
        self.c.action(x)
    }

    fn counters(&self) -> OpCounters {
        self.counters
    }
}

/// One-step lookahead on the controller's value function.
#[derive(Debug, Clone)]
pub struct LookaheadFsmPolicy<'a> {
    m: &'a Pomdp,
    c: &'a FsmController,
    counters: OpCounters,
}

impl<'a> LookaheadFsmPolicy<'a> {
    pub fn new(m: &'a Pomdp, c: &'a FsmController) -> Result<Self> {
        c.values()?;
        Ok(Self {
            m,
            c,
            counters: OpCounters::default(),
        })
    }
}

impl Policy for LookaheadFsmPolicy<'_> {
    fn needs_belief(&self) -> bool {
        true
    }

    fn reset(&mut self, _b0: &Belief) {}

    fn act(&mut self, belief: Option<&Belief>) -> usize {
        let b = belief.expect("lookahead tracks beliefs");
        let (q, updates) = lookahead_q(self.m, self.c, b);
        self.counters.decisions += 1;
        self.counters.belief_updates += updates as u64;
        self.counters.dot_products += (updates * self.c.num_memory()) as u64;
        argmax(&q).0
    }

    fn counters(&self) -> OpCounters {
        self.counters
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_pomdp, sample_belief_uniform, Labels};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fsm(rng: &mut ChaCha8Rng, m: &Pomdp, k: usize) -> FsmController {
        let states = (0..k)
            .map(|_| MemoryState {
                action: rng.random_range(0..m.num_actions()),
                next: (0..m.num_obs()).map(|_| rng.random_range(0..k)).collect(),
            })
            .collect();
        FsmController::new(states, m.num_actions(), m.num_obs()).unwrap()
    }

    #[test]
    fn single_state_geometric_value() {
        let m = Pomdp::from_flat(1, 1, 1, vec![1.0], vec![1.0], vec![1.0], 0.9, Labels::default()).unwrap();
        let c = make_one_action_fsm(0, 1).evaluated(&m).unwrap();
        assert!((c.values().unwrap()[0][0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn residual_is_tiny() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_pomdp(&mut rng, (2, 2, 2), 0.9, 0.2);
        let c = random_fsm(&mut rng, &m, 4);
        let v = evaluate_fsm(&m, &c).unwrap();
        assert_eq!(v.len() * v[0].len(), 8);
        assert!(fsm_residual(&m, &c, &v) <= 1e-9);
    }

    #[test]
    fn fixed_strategy_update_converges_to_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_pomdp(&mut rng, (3, 2, 2), 0.9, 0.3);
        let c = random_fsm(&mut rng, &m, 3);
        let exact = evaluate_fsm(&m, &c).unwrap();
        let mut f = vec![vec![0.0; 3]; 3];
        for _ in 0..400 {
            f = h_fsm_update(&m, &c, &f);
        }
        assert_eq!(f.len(), 3);
        for (x, y) in f.iter().flatten().zip(exact.iter().flatten()) {
            assert!((x - y).abs() < 1e-9);
        }
        let m0 = m.with_discount(0.0).unwrap();
        let g = h_fsm_update(&m0, &c, &f);
        for (x, st) in c.states.iter().enumerate() {
            assert_eq!(g[x], m.rho().column(st.action));
        }
    }

    #[test]
    fn greedy_start_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_pomdp(&mut rng, (3, 3, 2), 0.9, 0.3);
        let c = one_action_collection(3, 2).evaluated(&m).unwrap();
        for s in 0..3 {
            let (_, x) = c.fsm_value(&Belief::extreme(3, s)).unwrap();
            let v = c.values().unwrap();
            let best = (0..3).max_by(|&i, &j| v[i][s].total_cmp(&v[j][s]).then(j.cmp(&i))).unwrap();
            assert_eq!(x, best);
        }
        let single = make_one_action_fsm(1, 2).evaluated(&m).unwrap();
        assert_eq!(single.fsm_value(&[0.2, 0.3, 0.5]).unwrap().1, 0);
        assert!(matches!(make_one_action_fsm(0, 2).fsm_value(&[1.0, 0.0, 0.0]), Err(Error::Unevaluated)));
    }

    #[test]
    fn improvement_never_hurts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..3 {
            let m = random_pomdp(&mut rng, (3, 2, 2), 0.9, 0.3);
            let mut c = one_action_collection(2, 2).evaluated(&m).unwrap();
            for _ in 0..3 {
                let next = hansen_improve(&m, &c).unwrap();
                for _ in 0..1000 {
                    let b = sample_belief_uniform(&mut rng, 3);
                    assert!(next.value(&b) >= c.value(&b) - 1e-9);
                }
                c = next;
            }
        }
    }

    #[test]
    fn improvement_of_a_fixed_point_is_a_no_op() {
        // One state, one action: the only controller is optimal.
        let m = Pomdp::from_flat(2, 1, 1, vec![0.5, 0.5, 0.5, 0.5], vec![1.0, 1.0], vec![1.0; 4], 0.9, Labels::default())
            .unwrap();
        let c = make_one_action_fsm(0, 1).evaluated(&m).unwrap();
        let next = hansen_improve(&m, &c).unwrap();
        assert_eq!(next.num_memory(), 1);
        for (x, y) in next.values().unwrap()[0].iter().zip(&c.values().unwrap()[0]) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn improvement_switches_to_better_action() {
        // Action 1 pays more everywhere; the chain on action 0 must improve.
        let m = Pomdp::from_flat(
            2,
            2,
            1,
            vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
            vec![1.0; 4],
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
            0.9,
            Labels::default(),
        )
        .unwrap();
        let c = make_one_action_fsm(0, 1).evaluated(&m).unwrap();
        let next = hansen_improve(&m, &c).unwrap();
        for s in 0..2 {
            let e = Belief::extreme(2, s);
            assert!(next.value(&e) > c.value(&e) + 0.5);
        }
    }
}
