//! Least-squares value-function models.
//!
//! Two parametric families: one linear function per action (a linear
//! Q-function) and a softmax of linear functions,
//! `V(b) = (sum_j (alpha_j . b)^k)^(1/k)`, which is a smooth stand-in for
//! their maximum and needs every inner product to be positive. Targets come
//! from one step of lookahead on the previous model. Nothing here is
//! guaranteed to converge; runs that blow up are flagged rather than
//! returned as garbage.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::QTable;
use crate::error::{Error, Result};
use crate::exact::lookahead_q;
use crate::model::{Belief, Pomdp};
use crate::pwlc::{dot, AlphaVector, PwlcFn};
use crate::value::ValueFunction;

/// Weights beyond this magnitude count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
pub const DEFAULT_SOFTMAX_K: f64 = 5.0;

/// A model trainable by the delta rule.
pub trait Differentiable {
    fn predict(&self, b: &[f64]) -> Result<f64>;
    /// Partial derivatives in the order of [`Differentiable::params_mut`].
    fn gradient(&self, b: &[f64]) -> Result<Vec<f64>>;
    fn params_mut(&mut self) -> Vec<&mut f64>;
}

/// A single linear function `w . b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFn(pub Vec<f64>);

impl Differentiable for LinearFn {
    fn predict(&self, b: &[f64]) -> Result<f64> {
        Ok(dot(&self.0, b))
    }

    fn gradient(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(b.to_vec())
    }

    fn params_mut(&mut self) -> Vec<&mut f64> {
        self.0.iter_mut().collect()
    }
}

/// `w <- w - rate (f(b) - y) grad f(b)`. Returns the residual before the
/// step.
pub fn delta_step<M: Differentiable + ?Sized>(mdl: &mut M, b: &[f64], y: f64, rate: f64) -> Result<f64> {
    let residual = mdl.predict(b)? - y;
    if residual != 0.0 {
        let g = mdl.gradient(b)?;
        for (w, d) in mdl.params_mut().into_iter().zip(g) {
            *w -= rate * residual * d;
        }
    }
    Ok(residual)
}

/// One linear function per action: `Q(b, a) = w_a . b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearQModel {
    /// `weights[a][s]`.
    pub weights: Vec<Vec<f64>>,
}

impl LinearQModel {
    /// The QMDP action values as a starting model.
    pub fn from_qtable(q: &QTable) -> Self {
        Self {
            weights: (0..q.num_actions()).map(|a| q.q.iter().map(|r| r[a]).collect()).collect(),
        }
    }

    pub fn q(&self, b: &[f64]) -> Vec<f64> {
        self.weights.iter().map(|w| dot(w, b)).collect()
    }

    pub fn to_pwlc(&self) -> Result<PwlcFn> {
        PwlcFn::new(
            self.weights
                .iter()
                .enumerate()
                .map(|(a, w)| AlphaVector::new(w.clone()).with_action(a))
                .collect(),
        )
    }

    fn max_abs(&self) -> f64 {
        self.weights.iter().flatten().fold(0.0, |m, w| if w.is_nan() { f64::NAN } else { m.max(w.abs()) })
    }
}

impl ValueFunction for LinearQModel {
    fn value(&self, b: &[f64]) -> f64 {
        self.q(b).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `(sum_j (alpha_j . b)^k)^(1/k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    pub vectors: Vec<Vec<f64>>,
    pub k: f64,
}

impl SoftmaxModel {
    pub fn new(vectors: Vec<Vec<f64>>, k: f64) -> Result<Self> {
        if vectors.is_empty() || !(k >= 1.0) || !k.is_finite() {
            return Err(Error::InvalidConfig(format!("softmax needs vectors and a finite k >= 1, got k = {k}")));
        }
        Ok(Self { vectors, k })
    }

    /// `n` vectors cycling through the QMDP action values, each perturbed
    /// by a relative jitter so that copies can separate.
    pub fn from_qtable<R: Rng + ?Sized>(q: &QTable, n: usize, k: f64, rng: &mut R) -> Result<Self> {
        let base = LinearQModel::from_qtable(q).weights;
        let vectors = (0..n)
            .map(|i| {
                base[i % base.len()]
                    .iter()
                    .map(|w| w * (1.0 + 1e-3 * rng.random_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        Self::new(vectors, k)
    }

    fn inner(&self, b: &[f64]) -> Result<Vec<f64>> {
        let x: Vec<f64> = self.vectors.iter().map(|v| dot(v, b)).collect();
        match x.iter().find(|&&v| !(v > 0.0)) {
            Some(&value) => Err(Error::NonPositiveInner { value }),
            None => Ok(x),
        }
    }

    /// Scaled by the largest inner product so large `k` cannot overflow.
    fn eval_from(&self, x: &[f64]) -> f64 {
        let top = x.iter().copied().fold(0.0, f64::max);
        top * x.iter().map(|v| (v / top).powf(self.k)).sum::<f64>().powf(1.0 / self.k)
    }

    pub fn softmax_eval(&self, b: &[f64]) -> Result<f64> {
        Ok(self.eval_from(&self.inner(b)?))
    }

    /// `dV/d alpha_j(s) = (alpha_j . b / V)^(k-1) b(s)`, vector-major.
    pub fn softmax_gradient(&self, b: &[f64]) -> Result<Vec<Vec<f64>>> {
        let x = self.inner(b)?;
        let v = self.eval_from(&x);
        Ok(x.iter()
            .map(|xj| {
                let c = (xj / v).powf(self.k - 1.0);
                b.iter().map(|p| c * p).collect()
            })
            .collect())
    }

    fn max_abs(&self) -> f64 {
        self.vectors.iter().flatten().fold(0.0, |m, w| if w.is_nan() { f64::NAN } else { m.max(w.abs()) })
    }
}

impl Differentiable for SoftmaxModel {
    fn predict(&self, b: &[f64]) -> Result<f64> {
        self.softmax_eval(b)
    }

    fn gradient(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.softmax_gradient(b)?.into_iter().flatten().collect())
    }

    fn params_mut(&mut self) -> Vec<&mut f64> {
        self.vectors.iter_mut().flatten().collect()
    }
}

/// Per-action lookahead targets `rho(b,a) + gamma sum_o P(o|b,a) V(tau)`.
fn targets<V: ValueFunction + ?Sized>(m: &Pomdp, v: &V, b: &[f64]) -> Vec<f64> {
    lookahead_q(m, v, b).0
}

/// Least squares `min ||X w - y||` by SVD; the minimum-norm solution when
/// `X` is rank deficient.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Vec<f64>> {
    let svd = x.clone().svd(true, true);
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = top * 1e-12 * x.nrows().max(x.ncols()) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    if rank < x.ncols() {
        log::warn!("sample matrix has rank {rank} < {}; using the minimum-norm fit", x.ncols());
    }
    let w = svd.solve(y, eps).map_err(|_| Error::Singular)?;
    Ok(w.iter().copied().collect())
}

/// One least-squares fit per action to lookahead targets under `v_prev`.
pub fn fit_linear_q<V: ValueFunction + ?Sized>(m: &Pomdp, v_prev: &V, samples: &[Belief]) -> Result<LinearQModel> {
    let t: Vec<Vec<f64>> = samples.iter().map(|b| targets(m, v_prev, b)).collect();
    fit_linear_to(samples, &t, m.num_actions())
}

/// Fits `w_a` to `(samples[j], targets[j][a])` for every action.
pub fn fit_linear_to(samples: &[Belief], targets: &[Vec<f64>], num_actions: usize) -> Result<LinearQModel> {
    let ns = samples.first().map_or(0, |b| b.len());
    let x = DMatrix::from_fn(samples.len(), ns, |i, s| samples[i][s]);
    let weights = (0..num_actions)
        .map(|a| least_squares(&x, &DVector::from_fn(samples.len(), |i, _| targets[i][a])))
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearQModel { weights })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitScheme {
    /// Freeze the model, compute every target, fit, then swap.
    Synchronous,
    /// One live model, updated right after each target.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    LinearQ,
    Softmax { vectors: usize, k: f64 },
}

/// Learning rate falling linearly from `start` to `end` over the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    pub start: f64,
    pub end: f64,
}

impl Default for RateSchedule {
    fn default() -> Self {
        Self { start: 0.2, end: 0.001 }
    }
}

impl RateSchedule {
    pub fn at(&self, epoch: usize, epochs: usize) -> f64 {
        if epochs <= 1 {
            return self.start;
        }
        self.start + (self.end - self.start) * epoch as f64 / (epochs - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedModel {
    LinearQ(LinearQModel),
    Softmax(SoftmaxModel),
}

impl FittedModel {
    fn max_abs(&self) -> f64 {
        match self {
            FittedModel::LinearQ(q) => q.max_abs(),
            FittedModel::Softmax(s) => s.max_abs(),
        }
    }

    pub fn try_value(&self, b: &[f64]) -> Result<f64> {
        match self {
            FittedModel::LinearQ(q) => Ok(q.value(b)),
            FittedModel::Softmax(s) => s.softmax_eval(b),
        }
    }
}

impl ValueFunction for FittedModel {
    /// NaN where a softmax model is undefined.
    fn value(&self, b: &[f64]) -> f64 {
        self.try_value(b).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub kind: ModelKind,
    pub scheme: FitScheme,
    pub epochs: usize,
    pub rate: RateSchedule,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// The last model whose weights were all finite and in range.
    pub model: FittedModel,
    /// Mean absolute probe error after each completed epoch.
    pub trace: Vec<f64>,
    /// Why the run stopped early, if it did.
    pub diverged: Option<String>,
}

fn probe_error(m: &Pomdp, model: &FittedModel, probes: &[Belief], reference: Option<&dyn ValueFunction>) -> Result<f64> {
    let mut total = 0.0;
    for b in probes {
        let v = model.try_value(b)?;
        let r = match reference {
            Some(r) => r.value(b),
            None => lookahead_q(m, model, b).0.into_iter().fold(f64::NEG_INFINITY, f64::max),
        };
        total += (v - r).abs();
    }
    Ok(total / probes.len().max(1) as f64)
}

fn epoch_step<R: Rng + ?Sized>(
    m: &Pomdp,
    model: &mut FittedModel,
    samples: &[Belief],
    scheme: FitScheme,
    rate: f64,
    rng: &mut R,
) -> Result<()> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    match (scheme, &mut *model) {
        (FitScheme::Synchronous, FittedModel::LinearQ(q)) => {
            *q = fit_linear_q(m, &*q, samples)?;
        }
        (FitScheme::Synchronous, FittedModel::Softmax(s)) => {
            let frozen = s.clone();
            let y: Vec<f64> = samples
                .iter()
                .map(|b| targets(m, &FittedModel::Softmax(frozen.clone()), b).into_iter().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            for &j in &order {
                delta_step(s, &samples[j], y[j], rate)?;
            }
        }
        (FitScheme::GaussSeidel, FittedModel::LinearQ(q)) => {
            for &j in &order {
                let b = &samples[j];
                let y = targets(m, &*q, b);
                for (a, w) in q.weights.iter_mut().enumerate() {
                    let mut f = LinearFn(std::mem::take(w));
                    delta_step(&mut f, b, y[a], rate)?;
                    *w = f.0;
                }
            }
        }
        (FitScheme::GaussSeidel, FittedModel::Softmax(s)) => {
            for &j in &order {
                let b = &samples[j];
                let y = {
                    let live = FittedModel::Softmax(s.clone());
                    let t = targets(m, &live, b);
                    if t.iter().any(|x| x.is_nan()) {
                        return Err(Error::NonPositiveInner { value: f64::NAN });
                    }
                    t.into_iter().fold(f64::NEG_INFINITY, f64::max)
                };
                delta_step(s, b, y, rate)?;
            }
        }
    }
    Ok(())
}

/// Runs `cfg.epochs` epochs from `init`, recording the probe error after
/// each. `reference` is the function errors are measured against; without
/// it the error is the one-step lookahead residual of the model itself.
pub fn fit_scheme<R: Rng + ?Sized>(
    m: &Pomdp,
    init: FittedModel,
    samples: &[Belief],
    cfg: &FitConfig,
    probes: &[Belief],
    reference: Option<&dyn ValueFunction>,
    rng: &mut R,
) -> Result<FitOutcome> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("fitting needs samples".into()));
    }
    let mut model = init;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut next = model.clone();
        let step = epoch_step(m, &mut next, samples, cfg.scheme, cfg.rate.at(epoch, cfg.epochs), rng);
        let size = next.max_abs();
        let reason = match step {
            Err(e) => Some(format!("epoch {epoch}: {e}")),
            Ok(()) if !(size <= DIVERGENCE_LIMIT) => Some(format!("epoch {epoch}: weights reached {size:e}")),
            Ok(()) => None,
        };
        if let Some(reason) = reason {
            log::warn!("fit diverged at {reason}");
            return Ok(FitOutcome {
                model,
                trace,
                diverged: Some(reason),
            });
        }
        let reason = match probe_error(m, &next, probes, reference) {
            Ok(e) if e.is_finite() => {
                trace.push(e);
                None
            }
            Ok(e) => Some(format!("epoch {epoch}: probe error {e}")),
            Err(e) => Some(format!("epoch {epoch}: {e}")),
        };
        if let Some(reason) = reason {
            log::warn!("fit diverged at {reason}");
            return Ok(FitOutcome {
                model,
                trace,
                diverged: Some(reason),
            });
        }
        model = next;
    }
    Ok(FitOutcome {
        model,
        trace,
        diverged: None,
    })
}

/// The QMDP-seeded starting model of the requested kind.
pub fn seed_model<R: Rng + ?Sized>(q: &QTable, kind: ModelKind, rng: &mut R) -> Result<FittedModel> {
    Ok(match kind {
        ModelKind::LinearQ => FittedModel::LinearQ(LinearQModel::from_qtable(q)),
        ModelKind::Softmax { vectors, k } => FittedModel::Softmax(SoftmaxModel::from_qtable(q, vectors, k, rng)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::solve_fomdp;
    use crate::model::{random_pomdp, sample_belief_uniform};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn positive_model(rng: &mut ChaCha8Rng, n: usize, ns: usize, k: f64) -> SoftmaxModel {
        SoftmaxModel::new((0..n).map(|_| (0..ns).map(|_| rng.random_range(0.5..5.0)).collect()).collect(), k).unwrap()
    }

    #[test]
    fn softmax_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = sample_belief_uniform(&mut rng, 3);
        let one = positive_model(&mut rng, 1, 3, 7.0);
        assert!((one.softmax_eval(&b).unwrap() - dot(&one.vectors[0], &b)).abs() < 1e-12);
        let g = one.softmax_gradient(&b).unwrap();
        assert!(g[0].iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
        let mut lin = positive_model(&mut rng, 4, 3, 5.0);
        lin.k = 1.0;
        let sum: f64 = lin.vectors.iter().map(|v| dot(v, &b)).sum();
        assert!((lin.softmax_eval(&b).unwrap() - sum).abs() < 1e-12);
        for _ in 0..50 {
            let mut big = positive_model(&mut rng, 5, 3, 1e3);
            big.k = 1e3;
            let b = sample_belief_uniform(&mut rng, 3);
            let max = big.vectors.iter().map(|v| dot(v, &b)).fold(0.0, f64::max);
            assert!((big.softmax_eval(&b).unwrap() / max - 1.0).abs() < 0.01);
        }
        let e = Belief::extreme(3, 1);
        for row in positive_model(&mut rng, 3, 3, 5.0).softmax_gradient(&e).unwrap() {
            assert!(row[0] == 0.0 && row[2] == 0.0 && row[1] > 0.0);
        }
        let bad = SoftmaxModel::new(vec![vec![-1.0, -1.0]], 5.0).unwrap();
        assert!(matches!(bad.softmax_eval(&[0.5, 0.5]), Err(Error::NonPositiveInner { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn gradient_matches_finite_differences(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mdl = positive_model(&mut rng, 4, 4, DEFAULT_SOFTMAX_K);
            let b = sample_belief_uniform(&mut rng, 4);
            let g = mdl.softmax_gradient(&b).unwrap();
            let h = 1e-6;
            for j in 0..4 {
                for s in 0..4 {
                    let mut up = mdl.clone();
                    up.vectors[j][s] += h;
                    let mut down = mdl.clone();
                    down.vectors[j][s] -= h;
                    let fd = (up.softmax_eval(&b).unwrap() - down.softmax_eval(&b).unwrap()) / (2.0 * h);
                    let scale = g[j][s].abs().max(1e-3);
                    prop_assert!((fd - g[j][s]).abs() / scale < 1e-5, "{} vs {}", fd, g[j][s]);
                }
            }
        }
    }

    #[test]
    fn delta_rule_examples() {
        let mut f = LinearFn(vec![1.0, 2.0]);
        let b = [0.25, 0.75];
        let y = f.predict(&b).unwrap();
        assert_eq!(delta_step(&mut f, &b, y, 0.3).unwrap(), 0.0);
        assert_eq!(f.0, vec![1.0, 2.0]);
        // Single repeated sample: residual shrinks by (1 - rate |b|^2).
        let mut r0 = delta_step(&mut f, &b, 0.0, 0.1).unwrap();
        let factor = 1.0 - 0.1 * (0.25f64.powi(2) + 0.75f64.powi(2));
        for _ in 0..10 {
            let r = delta_step(&mut f, &b, 0.0, 0.1).unwrap();
            assert!((r - r0 * factor).abs() < 1e-12);
            r0 = r;
        }
        // Two samples disagreeing on the same belief settle at their mean.
        let mut g = LinearFn(vec![0.0]);
        for i in 0..2000 {
            let y = if i % 2 == 0 { 1.0 } else { 3.0 };
            delta_step(&mut g, &[1.0], y, 0.01).unwrap();
        }
        assert!((g.0[0] - 2.0).abs() < 0.02);
    }

    #[test]
    fn least_squares_recovers_linear_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples: Vec<Belief> = (0..12).map(|_| sample_belief_uniform(&mut rng, 4)).collect();
        let truth = [vec![1.0, -2.0, 3.5, 0.25], vec![0.0, 4.0, -1.0, 2.0]];
        let t: Vec<Vec<f64>> = samples.iter().map(|b| truth.iter().map(|w| dot(w, b)).collect()).collect();
        let fit = fit_linear_to(&samples, &t, 2).unwrap();
        assert_eq!(fit.weights.len(), 2);
        for (w, u) in fit.weights.iter().flatten().zip(truth.iter().flatten()) {
            assert!((w - u).abs() < 1e-9);
        }
        // Noisy targets: residuals orthogonal to every column.
        let noisy: Vec<Vec<f64>> = t.iter().map(|r| r.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect()).collect();
        let fit = fit_linear_to(&samples, &noisy, 2).unwrap();
        for a in 0..2 {
            for s in 0..4 {
                let g: f64 = samples.iter().zip(&noisy).map(|(b, y)| (dot(&fit.weights[a], b) - y[a]) * b[s]).sum();
                assert!(g.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn fit_linear_q_has_one_vector_per_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_pomdp(&mut rng, (3, 4, 2), 0.9, 0.2);
        let q = solve_fomdp(&m, 1e-9);
        let samples: Vec<Belief> = (0..20).map(|_| sample_belief_uniform(&mut rng, 3)).collect();
        let fit = fit_linear_q(&m, &LinearQModel::from_qtable(&q), &samples).unwrap();
        assert_eq!(fit.weights.len(), 4);
    }

    #[test]
    fn schemes_never_return_non_finite_silently() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_pomdp(&mut rng, (3, 2, 2), 0.9, 0.2).with_reward_shift(2.0);
        let q = solve_fomdp(&m, 1e-9);
        let samples: Vec<Belief> = (0..30).map(|_| sample_belief_uniform(&mut rng, 3)).collect();
        let probes: Vec<Belief> = (0..30).map(|_| sample_belief_uniform(&mut rng, 3)).collect();
        for kind in [ModelKind::LinearQ, ModelKind::Softmax { vectors: 4, k: 5.0 }] {
            for scheme in [FitScheme::Synchronous, FitScheme::GaussSeidel] {
                let cfg = FitConfig {
                    kind,
                    scheme,
                    epochs: 15,
                    rate: RateSchedule::default(),
                };
                let init = seed_model(&q, kind, &mut rng).unwrap();
                let out = fit_scheme(&m, init, &samples, &cfg, &probes, None, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
                assert!(out.diverged.is_some() || out.trace.len() == 15);
                assert!(out.trace.iter().all(|e| e.is_finite()));
                assert!(out.model.max_abs().is_finite());
                let again = fit_scheme(
                    &m,
                    seed_model(&q, ModelKind::LinearQ, &mut rng).unwrap(),
                    &samples,
                    &FitConfig { kind: ModelKind::LinearQ, ..cfg.clone() },
                    &probes,
                    None,
                    &mut ChaCha8Rng::seed_from_u64(7),
                )
                .unwrap();
                let twice = fit_scheme(
                    &m,
                    seed_model(&q, ModelKind::LinearQ, &mut rng).unwrap(),
                    &samples,
                    &FitConfig { kind: ModelKind::LinearQ, ..cfg.clone() },
                    &probes,
                    None,
                    &mut ChaCha8Rng::seed_from_u64(7),
                )
                .unwrap();
                assert_eq!(again.trace, twice.trace);
            }
        }
    }

    #[test]
    fn zero_epochs_keep_the_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_pomdp(&mut rng, (3, 2, 2), 0.9, 0.2);
        let q = solve_fomdp(&m, 1e-9);
        let init = seed_model(&q, ModelKind::LinearQ, &mut rng).unwrap();
        let cfg = FitConfig {
            kind: ModelKind::LinearQ,
            scheme: FitScheme::GaussSeidel,
            epochs: 0,
            rate: RateSchedule::default(),
        };
        let out = fit_scheme(&m, init.clone(), &[Belief::uniform(3)], &cfg, &[], None, &mut rng).unwrap();
        assert_eq!(out.model, init);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn divergence_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_pomdp(&mut rng, (3, 2, 2), 0.99, 0.2);
        let q = solve_fomdp(&m, 1e-9);
        let samples: Vec<Belief> = (0..10).map(|_| sample_belief_uniform(&mut rng, 3)).collect();
        let cfg = FitConfig {
            kind: ModelKind::LinearQ,
            scheme: FitScheme::GaussSeidel,
            epochs: 200,
            rate: RateSchedule { start: 1e6, end: 1e6 },
        };
        let init = seed_model(&q, ModelKind::LinearQ, &mut rng).unwrap();
        let out = fit_scheme(&m, init, &samples, &cfg, &samples, None, &mut rng).unwrap();
        assert!(out.diverged.is_some());
        assert!(out.model.max_abs() <= DIVERGENCE_LIMIT);
    }
}
