//! Controller simulation and scoring.
//!
//! Every episode owns a random stream derived from the master seed and the
//! start index. The stream is consumed in a fixed pattern (one draw for the
//! hidden start state, then one for the transition and one for the
//! observation at every step), so two policies run on the same start see the
//! same draws for as long as their actions agree.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{argmax, direct_action, lookahead_q};
use crate::model::{sample_belief_uniform, sample_index, Belief, Pomdp};
use crate::pwlc::PwlcFn;
use crate::value::ValueFunction;

/// Primitive operations a controller spent on its decisions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub decisions: u64,
    pub belief_updates: u64,
    pub dot_products: u64,
}

impl OpCounters {
    /// Flop-style cost: a belief update is `|S|^2`, a dot product `|S|`.
    pub fn cost(&self, num_states: usize) -> u64 {
        let n = num_states as u64;
        self.belief_updates * n * n + self.dot_products * n
    }

    /// Average cost per decision.
    pub fn cost_per_decision(&self, num_states: usize) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            self.cost(num_states) as f64 / self.decisions as f64
        }
    }

    fn merge(&mut self, other: OpCounters) {
        self.decisions += other.decisions;
        self.belief_updates += other.belief_updates;
        self.dot_products += other.dot_products;
    }
}

/// A controller that can be driven by [`simulate_episode`]. Counters are
/// cumulative over the policy's lifetime.
pub trait Policy {
    /// Whether the simulator must track the belief and pass it to `act`.
    fn needs_belief(&self) -> bool;
    /// Called at the start of each episode with the start belief.
    fn reset(&mut self, b0: &Belief);
    /// `belief` is present exactly when `needs_belief` is true.
    fn act(&mut self, belief: Option<&Belief>) -> usize;
    fn observe(&mut self, _action: usize, _obs: usize) {}
    fn counters(&self) -> OpCounters;
}

/// Acts by the action tag of the maximal vector.
#[derive(Debug, Clone)]
pub struct DirectPolicy<'a> {
    f: &'a PwlcFn,
    counters: OpCounters,
}

impl<'a> DirectPolicy<'a> {
    pub fn new(f: &'a PwlcFn) -> Result<Self> {
        if let Some(i) = f.vectors().iter().position(|v| v.action.is_none()) {
            return Err(Error::MissingAction { index: i });
        }
        Ok(Self {
            f,
            counters: OpCounters::default(),
        })
    }
}

impl Policy for DirectPolicy<'_> {
    fn needs_belief(&self) -> bool {
        true
    }

    fn reset(&mut self, _b0: &Belief) {}

    fn act(&mut self, belief: Option<&Belief>) -> usize {
        self.counters.decisions += 1;
        self.counters.dot_products += self.f.len() as u64;
        direct_action(self.f, belief.expect("direct control tracks beliefs")).expect("tags checked at construction")
    }

    fn counters(&self) -> OpCounters {
        self.counters
    }
}

/// One-step lookahead on any value function. `cost_per_eval` is the number
/// of dot products one evaluation of `v` costs (for the counters).
pub struct LookaheadPolicy<'a, V: ?Sized> {
    m: &'a Pomdp,
    v: &'a V,
    cost_per_eval: usize,
    counters: OpCounters,
}

impl<'a, V: ValueFunction + ?Sized> LookaheadPolicy<'a, V> {
    pub fn new(m: &'a Pomdp, v: &'a V, cost_per_eval: usize) -> Self {
        Self {
            m,
            v,
            cost_per_eval,
            counters: OpCounters::default(),
        }
    }
}

impl<V: ValueFunction + ?Sized> Policy for LookaheadPolicy<'_, V> {
    fn needs_belief(&self) -> bool {
        true
    }

    fn reset(&mut self, _b0: &Belief) {}

    fn act(&mut self, belief: Option<&Belief>) -> usize {
        let b = belief.expect("lookahead tracks beliefs");
        let (q, updates) = lookahead_q(self.m, self.v, b);
        self.counters.decisions += 1;
        self.counters.belief_updates += updates as u64;
        self.counters.dot_products += (updates * self.cost_per_eval) as u64;
        argmax(&q).0
    }

    fn counters(&self) -> OpCounters {
        self.counters
    }
}

/// Always the same action.
#[derive(Debug, Clone)]
pub struct ConstantPolicy {
    pub action: usize,
    counters: OpCounters,
}

impl ConstantPolicy {
    pub fn new(action: usize) -> Self {
        Self {
            action,
            counters: OpCounters::default(),
        }
    }
}

impl Policy for ConstantPolicy {
    fn needs_belief(&self) -> bool {
        false
    }

    fn reset(&mut self, _b0: &Belief) {}

    fn act(&mut self, _belief: Option<&Belief>) -> usize {
        self.counters.decisions += 1;
        self.action
    }

    fn counters(&self) -> OpCounters {
        self.counters
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeResult {
    pub discounted_return: f64,
    /// Updates done by the simulator to track the belief.
    pub tracking_updates: u64,
}

/// The random stream of episode `index` under `master_seed`.
pub fn episode_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Runs one episode and returns `sum_{t < horizon} gamma^t r_t` with the
/// realized rewards `R(s, a, s')`.
pub fn simulate_episode<P: Policy + ?Sized, R: Rng + ?Sized>(
    m: &Pomdp,
    p: &mut P,
    b0: &Belief,
    horizon: usize,
    rng: &mut R,
) -> EpisodeResult {
    let mut s = b0.sample_state(rng.random());
    let tracking = p.needs_belief();
    let mut belief = b0.clone();
    let mut tracking_updates = 0;
    let mut total = 0.0;
    let mut weight = 1.0;
    p.reset(b0);
    for _ in 0..horizon {
        let a = p.act(tracking.then_some(&belief));
        let (u_next, u_obs): (f64, f64) = (rng.random(), rng.random());
        let next = sample_index(m.trans_row(a, s), u_next);
        let o = sample_index(m.obs_row(a, next), u_obs);
        total += weight * m.reward_row(a, s)[next];
        weight *= m.discount();
        if tracking {
            // The realized observation has positive probability under the
            // tracked belief unless round-off says otherwise.
            belief = m
                .belief_update(&belief, a, o)
                .or_else(|_| Belief::normalized(m.predict(&belief, a)))
                .unwrap_or_else(|_| belief.clone());
            tracking_updates += 1;
        }
        p.observe(a, o);
        s = next;
    }
    EpisodeResult {
        discounted_return: total,
        tracking_updates,
    }
}

/// Per-start returns and their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlQuality {
    pub mean: f64,
    pub std_error: f64,
    pub returns: Vec<f64>,
    /// Decision work including belief tracking.
    pub counters: OpCounters,
}

/// One episode per start with common random numbers.
pub fn control_quality<P: Policy + ?Sized>(
    m: &Pomdp,
    p: &mut P,
    starts: &[Belief],
    horizon: usize,
    seed: u64,
) -> ControlQuality {
    let before = p.counters();
    let mut tracking = 0;
    let returns: Vec<f64> = starts
        .iter()
        .enumerate()
        .map(|(i, b0)| {
            let mut rng = episode_rng(seed, i as u64);
            let r = simulate_episode(m, p, b0, horizon, &mut rng);
            tracking += r.tracking_updates;
            r.discounted_return
        })
        .collect();
    let after = p.counters();
    let mut counters = OpCounters {
        decisions: after.decisions - before.decisions,
        belief_updates: after.belief_updates - before.belief_updates,
        dot_products: after.dot_products - before.dot_products,
    };
    counters.merge(OpCounters {
        decisions: 0,
        belief_updates: tracking,
        dot_products: 0,
    });
    let (mean, std_error) = mean_and_se(&returns);
    ControlQuality {
        mean,
        std_error,
        returns,
        counters,
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean of `V` over a fixed belief set.
pub fn bound_quality<V: ValueFunction + ?Sized>(v: &V, beliefs: &[Belief]) -> f64 {
    if beliefs.is_empty() {
        return 0.0;
    }
    beliefs.iter().map(|b| v.value(b)).sum::<f64>() / beliefs.len() as f64
}

/// `n` beliefs drawn uniformly from the simplex.
pub fn sample_beliefs(num_states: usize, n: usize, seed: u64) -> Vec<Belief> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_belief_uniform(&mut rng, num_states)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDiff {
    pub mean: f64,
    pub std_error: f64,
    /// `mean / std_error`; zero when both vanish.
    pub z: f64,
}

/// Summary of the per-start differences `a[i] - b[i]`.
pub fn paired_diff(a: &[f64], b: &[f64]) -> Result<PairedDiff> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, std_error) = mean_and_se(&d);
    let z = if std_error > 0.0 {
        mean / std_error
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    };
    Ok(PairedDiff { mean, std_error, z })
}
