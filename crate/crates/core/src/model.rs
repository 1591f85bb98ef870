//! POMDP models, beliefs and belief arithmetic.

use std::ops::Deref;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance for stochastic tables and beliefs.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Observations whose probability falls at or below this are never branched on.
pub const IMPOSSIBLE_OBS: f64 = 1e-12;

/// Optional display names for states, actions and observations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub states: Option<Vec<String>>,
    pub actions: Option<Vec<String>>,
    pub observations: Option<Vec<String>>,
}

/// Expected one-step reward `rho(s, a)`, stored state-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReward {
    num_actions: usize,
    table: Vec<f64>,
}

impl StepReward {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.table[s * self.num_actions + a]
    }

    /// `rho(., a)` as a vector over states.
    pub fn column(&self, a: usize) -> Vec<f64> {
        self.table
            .chunks(self.num_actions)
            .map(|row| row[a])
            .collect()
    }

    pub fn min(&self) -> f64 {
        self.table.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.table.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A finite discounted POMDP with dense tables.
///
/// `trans[a][s][s']` is `P(s'|s,a)`, `obs[a][s'][o]` is `P(o|s',a)` and
/// `reward[a][s][s']` is `R(s,a,s')`. The joint `P(s',o|s,a)` is cached as
/// `joint[a][o][s][s']`.
#[derive(Debug, Clone)]
pub struct Pomdp {
    num_states: usize,
    num_actions: usize,
    num_obs: usize,
    trans: Vec<f64>,
    obs: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
    labels: Labels,
    rho: StepReward,
    joint: Vec<f64>,
}

impl PartialEq for Pomdp {
    fn eq(&self, other: &Self) -> bool {
        self.num_states == other.num_states
            && self.num_actions == other.num_actions
            && self.num_obs == other.num_obs
            && self.trans == other.trans
            && self.obs == other.obs
            && self.reward == other.reward
            && self.discount == other.discount
            && self.labels == other.labels
    }
}

impl Pomdp {
    /// Builds and validates a model from nested tables.
    pub fn new(
        trans: Vec<Vec<Vec<f64>>>,
        obs: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<Vec<f64>>>,
        discount: f64,
    ) -> Result<Self> {
        let num_actions = trans.len();
        if num_actions == 0 {
            return Err(Error::Validation("model has no actions".into()));
        }
        let num_states = trans[0].len();
        if num_states == 0 {
            return Err(Error::Validation("model has no states".into()));
        }
        let num_obs = obs.first().and_then(|o| o.first()).map_or(0, Vec::len);
        if num_obs == 0 {
            return Err(Error::Validation("model has no observations".into()));
        }
        let flatten = |name: &str, t: Vec<Vec<Vec<f64>>>, inner: usize| -> Result<Vec<f64>> {
            if t.len() != num_actions {
                return Err(Error::Validation(format!(
                    "{name} has {} action blocks, expected {num_actions}",
                    t.len()
                )));
            }
            let mut flat = Vec::with_capacity(num_actions * num_states * inner);
            for (a, block) in t.into_iter().enumerate() {
                if block.len() != num_states {
                    return Err(Error::Validation(format!(
                        "{name}[{a}] has {} rows, expected {num_states}",
                        block.len()
                    )));
                }
                for (s, row) in block.into_iter().enumerate() {
                    if row.len() != inner {
                        return Err(Error::Validation(format!(
                            "{name}[{a}][{s}] has {} entries, expected {inner}",
                            row.len()
                        )));
                    }
                    flat.extend(row);
                }
            }
            Ok(flat)
        };
        let trans = flatten("transition", trans, num_states)?;
        let obs = flatten("observation", obs, num_obs)?;
        let reward = flatten("reward", reward, num_states)?;
        Self::from_flat(
            num_states,
            num_actions,
            num_obs,
            trans,
            obs,
            reward,
            discount,
            Labels::default(),
        )
    }

    /// Builds a model from flat row-major tables laid out as documented on
    /// [`Pomdp`].
    #[allow(clippy::too_many_arguments)]
    pub fn from_flat(
        num_states: usize,
        num_actions: usize,
        num_obs: usize,
        trans: Vec<f64>,
        obs: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        labels: Labels,
    ) -> Result<Self> {
        let (ns, na, no) = (num_states, num_actions, num_obs);
        if ns == 0 || na == 0 || no == 0 {
            return Err(Error::Validation("sizes must be positive".into()));
        }
        if trans.len() != na * ns * ns || reward.len() != na * ns * ns || obs.len() != na * ns * no {
            return Err(Error::Validation("table sizes do not match model sizes".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Validation(format!(
                "discount {discount} outside [0, 1)"
            )));
        }
        check_rows("transition", &trans, ns, ns)?;
        check_rows("observation", &obs, ns, no)?;
        if let Some(i) = reward.iter().position(|r| !r.is_finite()) {
            let (a, s) = (i / (ns * ns), (i / ns) % ns);
            return Err(Error::Validation(format!("reward[{a}][{s}] is not finite")));
        }
        let check_names = |what: &str, names: &Option<Vec<String>>, n: usize| -> Result<()> {
            match names {
                Some(v) if v.len() != n => Err(Error::Validation(format!(
                    "{} {what} names given for {n} {what}",
                    v.len()
                ))),
                _ => Ok(()),
            }
        };
        check_names("state", &labels.states, ns)?;
        check_names("action", &labels.actions, na)?;
        check_names("observation", &labels.observations, no)?;

        let mut rho = vec![0.0; ns * na];
        for a in 0..na {
            for s in 0..ns {
                let base = (a * ns + s) * ns;
                rho[s * na + a] = (0..ns).map(|t| trans[base + t] * reward[base + t]).sum();
            }
        }
        let mut joint = vec![0.0; na * no * ns * ns];
        for a in 0..na {
            for o in 0..no {
                for s in 0..ns {
                    let dst = ((a * no + o) * ns + s) * ns;
                    for t in 0..ns {
                        joint[dst + t] = trans[(a * ns + s) * ns + t] * obs[(a * ns + t) * no + o];
                    }
                }
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            num_obs,
            trans,
            obs,
            reward,
            discount,
            labels,
            rho: StepReward {
                num_actions: na,
                table: rho,
            },
            joint,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_obs(&self) -> usize {
        self.num_obs
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        let discount = self.discount;
        self = Self::from_flat(
            self.num_states,
            self.num_actions,
            self.num_obs,
            std::mem::take(&mut self.trans),
            std::mem::take(&mut self.obs),
            std::mem::take(&mut self.reward),
            discount,
            labels,
        )?;
        Ok(self)
    }

    /// Same dynamics under a different discount.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::from_flat(
            self.num_states,
            self.num_actions,
            self.num_obs,
            self.trans.clone(),
            self.obs.clone(),
            self.reward.clone(),
            discount,
            self.labels.clone(),
        )
    }

    /// Same dynamics with every reward increased by `shift`.
    pub fn with_reward_shift(&self, shift: f64) -> Self {
        let reward = self.reward.iter().map(|r| r + shift).collect();
        Self::from_flat(
            self.num_states,
            self.num_actions,
            self.num_obs,
            self.trans.clone(),
            self.obs.clone(),
            reward,
            self.discount,
            self.labels.clone(),
        )
        .expect("shifting rewards preserves validity")
    }

    /// `P(.|s,a)` over landing states.
    pub fn trans_row(&self, a: usize, s: usize) -> &[f64] {
        let n = self.num_states;
        &self.trans[(a * n + s) * n..(a * n + s + 1) * n]
    }

    /// `P(.|s',a)` over observations.
    pub fn obs_row(&self, a: usize, s_next: usize) -> &[f64] {
        let (n, k) = (self.num_states, self.num_obs);
        &self.obs[(a * n + s_next) * k..(a * n + s_next + 1) * k]
    }

    /// `R(s,a,.)` over landing states.
    pub fn reward_row(&self, a: usize, s: usize) -> &[f64] {
        let n = self.num_states;
        &self.reward[(a * n + s) * n..(a * n + s + 1) * n]
    }

    /// `P(., o|s, a)` over landing states.
    pub fn joint_row(&self, a: usize, o: usize, s: usize) -> &[f64] {
        let n = self.num_states;
        let base = ((a * self.num_obs + o) * n + s) * n;
        &self.joint[base..base + n]
    }

    pub fn rho(&self) -> &StepReward {
        &self.rho
    }

    /// Flat tables in the layout documented on [`Pomdp`].
    pub fn tables(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.trans, &self.obs, &self.reward)
    }

    /// `sum_s P(s'|s,a) b(s)` for every `s'`.
    pub fn predict(&self, b: &[f64], a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_states];
        for (s, &p) in b.iter().enumerate() {
            if p != 0.0 {
                for (o, &t) in out.iter_mut().zip(self.trans_row(a, s)) {
                    *o += p * t;
                }
            }
        }
        out
    }

    /// `P(o|b,a)` for every observation.
    pub fn obs_prob(&self, b: &[f64], a: usize) -> Vec<f64> {
        let pred = self.predict(b, a);
        let mut out = vec![0.0; self.num_obs];
        for (t, &p) in pred.iter().enumerate() {
            if p != 0.0 {
                for (o, &q) in out.iter_mut().zip(self.obs_row(a, t)) {
                    *o += p * q;
                }
            }
        }
        out
    }

    /// Bayes update `tau(b, a, o)`.
    pub fn belief_update(&self, b: &[f64], a: usize, o: usize) -> Result<Belief> {
        let pred = self.predict(b, a);
        self.condition(&pred, a, o)
    }

    fn condition(&self, pred: &[f64], a: usize, o: usize) -> Result<Belief> {
        let mut post: Vec<f64> = pred
            .iter()
            .enumerate()
            .map(|(t, &p)| p * self.obs_row(a, t)[o])
            .collect();
        let total: f64 = post.iter().sum();
        if total <= IMPOSSIBLE_OBS {
            return Err(Error::ImpossibleObservation {
                action: a,
                obs: o,
                prob: total,
            });
        }
        post.iter_mut().for_each(|x| *x /= total);
        Ok(Belief(post))
    }

    /// All possible observations after `a` in `b`, with their probabilities
    /// and posterior beliefs.
    pub fn successors(&self, b: &[f64], a: usize) -> Vec<(usize, f64, Belief)> {
        let pred = self.predict(b, a);
        let mut out = Vec::with_capacity(self.num_obs);
        for o in 0..self.num_obs {
            let prob: f64 = pred
                .iter()
                .enumerate()
                .map(|(t, &p)| p * self.obs_row(a, t)[o])
                .sum();
            if prob > IMPOSSIBLE_OBS {
                let post = self.condition(&pred, a, o).expect("probability checked");
                out.push((o, prob, post));
            }
        }
        out
    }

    /// `rho(b, a) = sum_s rho(s,a) b(s)`.
    pub fn expected_reward(&self, b: &[f64], a: usize) -> f64 {
        b.iter()
            .enumerate()
            .map(|(s, &p)| p * self.rho.get(s, a))
            .sum()
    }
}

fn check_rows(name: &str, table: &[f64], ns: usize, width: usize) -> Result<()> {
    for (i, row) in table.chunks(width).enumerate() {
        let (a, s) = (i / ns, i % ns);
        if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Validation(format!(
                "{name}[{a}][{s}] has entry {p} outside [0, 1]"
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::Validation(format!(
                "{name}[{a}][{s}] sums to {sum}, not 1"
            )));
        }
    }
    Ok(())
}

/// A probability distribution over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidBelief("empty".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidBelief(format!("entry {p} is negative or not finite")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidBelief(format!("sums to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Normalizes nonnegative weights into a belief.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidBelief("weights cannot be normalized".into()));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Self(weights))
    }

    /// The point mass `e_s`.
    pub fn extreme(num_states: usize, s: usize) -> Self {
        let mut v = vec![0.0; num_states];
        v[s] = 1.0;
        Self(v)
    }

    pub fn uniform(num_states: usize) -> Self {
        Self(vec![1.0 / num_states as f64; num_states])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Convex combination `lambda * self + (1 - lambda) * other`.
    pub fn mix(&self, other: &Belief, lambda: f64) -> Belief {
        Belief(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
                .collect(),
        )
    }

    /// Samples a state index.
    pub fn sample_state(&self, u: f64) -> usize {
        sample_index(&self.0, u)
    }
}

impl Deref for Belief {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Belief {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Belief {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Belief::new(v)
    }
}

impl From<Belief> for Vec<f64> {
    fn from(b: Belief) -> Self {
        b.0
    }
}

/// Index drawn from a discrete distribution using the uniform draw `u`.
/// Zero-probability entries are never returned.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// A uniform sample from the probability simplex over `n` states.
pub fn sample_belief_uniform<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Belief {
    assert!(n >= 1, "simplex dimension must be positive");
    Belief::normalized(dirichlet_row(rng, n)).expect("exponential draws are positive")
}

fn dirichlet_row<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let x: f64 = Exp1.sample(rng);
            x.max(f64::MIN_POSITIVE)
        })
        .collect()
}

/// A random model. Each stochastic row is a symmetric Dirichlet draw whose
/// entries are zeroed with probability `sparsity` (the largest entry is
/// always kept) and renormalized. Rewards are uniform on `[0, 1]`.
pub fn random_pomdp<R: Rng + ?Sized>(
    rng: &mut R,
    sizes: (usize, usize, usize),
    discount: f64,
    sparsity: f64,
) -> Pomdp {
    let (ns, na, no) = sizes;
    let row = |rng: &mut R, n: usize| -> Vec<f64> {
        let mut r = dirichlet_row(rng, n);
        let keep = r
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        for (i, x) in r.iter_mut().enumerate() {
            if i != keep && rng.random::<f64>() < sparsity {
                *x = 0.0;
            }
        }
        let sum: f64 = r.iter().sum();
        r.iter_mut().for_each(|x| *x /= sum);
        r
    };
    let mut trans = Vec::with_capacity(na * ns * ns);
    let mut obs = Vec::with_capacity(na * ns * no);
    for _ in 0..na * ns {
        trans.extend(row(rng, ns));
    }
    for _ in 0..na * ns {
        obs.extend(row(rng, no));
    }
    let reward = (0..na * ns * ns).map(|_| rng.random::<f64>()).collect();
    Pomdp::from_flat(ns, na, no, trans, obs, reward, discount, Labels::default())
        .expect("generated rows are stochastic")
}
