//! Method comparison: solve, score bound quality on a shared belief set,
//! then score every controller mode on the same starts with common random
//! numbers.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{fib_fixed_point, solve_fomdp, MdpMode};
use crate::error::{Error, Result};
use crate::fit::{fit_scheme, seed_model, FitConfig, FitScheme, FittedModel, ModelKind, RateSchedule};
use crate::fsm::{
    one_action_collection, policy_iteration, DirectFsmPolicy, FsmPolicy, LookaheadFsmPolicy, PolicyIterationConfig,
};
use crate::grid::grow_sawtooth;
use crate::harness::{bound_quality, control_quality, sample_beliefs, DirectPolicy, LookaheadPolicy, Policy};
use crate::maze::MazeSpec;
use crate::model::{Belief, Pomdp};
use crate::point::{incremental_cycles, IncrementalConfig, LowerBoundFn, PointSource};
use crate::pwlc::PwlcFn;
use crate::value::ValueFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mdp,
    Qmdp,
    Fib,
    SawtoothGrid,
    IncrementalPointdp,
    Linq,
    Fsm,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Mdp,
        Method::Qmdp,
        Method::Fib,
        Method::SawtoothGrid,
        Method::IncrementalPointdp,
        Method::Linq,
        Method::Fsm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mdp => "mdp",
            Method::Qmdp => "qmdp",
            Method::Fib => "fib",
            Method::SawtoothGrid => "sawtooth-grid",
            Method::IncrementalPointdp => "incremental-pointdp",
            Method::Linq => "linq",
            Method::Fsm => "fsm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_beliefs: usize,
    pub horizon: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Tolerance for MDP, FIB and grid solves.
    pub epsilon: f64,
    pub grid_points: usize,
    pub pointdp_cycles: usize,
    pub pointdp_points: usize,
    pub fit_samples: usize,
    pub fit_epochs: usize,
    pub fsm_rounds: usize,
    /// Extra `key: value` lines for the report header.
    pub notes: Vec<(String, String)>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_beliefs: 2000,
            horizon: 60,
            seed: 0,
            methods: vec![
                Method::Mdp,
                Method::Qmdp,
                Method::Fib,
                Method::SawtoothGrid,
                Method::IncrementalPointdp,
                Method::Linq,
            ],
            epsilon: 1e-6,
            grid_points: 400,
            pointdp_cycles: 10,
            pointdp_points: 40,
            fit_samples: 100,
            fit_epochs: 20,
            fsm_rounds: 2,
            notes: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_beliefs == 0 || self.horizon == 0 {
            return Err(Error::InvalidConfig("belief count and horizon must be positive".into()));
        }
        Ok(())
    }
}

/// Header notes describing a maze configuration.
pub fn maze_notes(spec: &MazeSpec) -> Vec<(String, String)> {
    vec![
        ("model".into(), "maze20".into()),
        ("discount".into(), spec.discount.to_string()),
        ("reward_move".into(), spec.rewards.move_step.to_string()),
        ("reward_sense".into(), spec.rewards.sense.to_string()),
        ("reward_target".into(), spec.rewards.target.to_string()),
    ]
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    /// `direct`, `lookahead`, `fsm`, or `error`.
    pub mode: String,
    pub bound_mean: f64,
    pub control_mean: f64,
    pub control_se: f64,
    pub solve_ms: f64,
    /// Counted primitive work per decision.
    pub decision_ops: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub header: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
}

pub const CSV_COLUMNS: &str = "method,mode,bound_mean,control_mean,control_se,solve_ms,decision_ops";

impl Report {
    /// CSV with `#` header lines. Without `timing` the wall-clock column is
    /// blank, which makes reruns byte-identical.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            writeln!(out, "# {k}: {v}").expect("string write");
        }
        writeln!(out, "{CSV_COLUMNS}").expect("string write");
        for r in &self.rows {
            let solve = if timing { format!("{:.1}", r.solve_ms) } else { String::new() };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.method, r.mode, r.bound_mean, r.control_mean, r.control_se, solve, r.decision_ops
            )
            .expect("string write");
        }
        out
    }
}

/// What a solved method offers to the scorer.
struct Solved {
    bound: Box<dyn ValueFunction>,
    /// Dot products per evaluation of `bound`, for the counters.
    eval_cost: usize,
    /// Action-tagged vectors for direct control, if any.
    direct: Option<PwlcFn>,
    fsm: Option<crate::fsm::FsmController>,
}

fn solve_method(m: &Pomdp, method: Method, cfg: &ExperimentConfig) -> Result<Solved> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    Ok(match method {
        Method::Mdp => {
            let q = solve_fomdp(m, cfg.epsilon);
            let f = q.to_pwlc(MdpMode::Mdp);
            Solved {
                eval_cost: f.len(),
                bound: Box::new(f),
                direct: None,
                fsm: None,
            }
        }
        Method::Qmdp => {
            let f = solve_fomdp(m, cfg.epsilon).to_pwlc(MdpMode::Qmdp);
            Solved {
                eval_cost: f.len(),
                bound: Box::new(f.clone()),
                direct: Some(f),
                fsm: None,
            }
        }
        Method::Fib => {
            let f = fib_fixed_point(m, cfg.epsilon).to_pwlc();
            Solved {
                eval_cost: f.len(),
                bound: Box::new(f.clone()),
                direct: Some(f),
                fsm: None,
            }
        }
        Method::SawtoothGrid => {
            let init = solve_fomdp(m, cfg.epsilon).v();
            let g = grow_sawtooth(m, &init, cfg.grid_points, cfg.epsilon.max(1e-6), &mut rng)?.value;
            Solved {
                eval_cost: g.grid.len(),
                bound: Box::new(g),
                direct: None,
                fsm: None,
            }
        }
        Method::IncrementalPointdp => {
            let c = one_action_collection(m.num_actions(), m.num_obs()).evaluated(m)?;
            let lb = LowerBoundFn::from_fsm(&c)?;
            let source = PointSource::HeurTwoTier {
                total: cfg.pointdp_points,
            };
            let (lb, _) = incremental_cycles(
                m,
                lb,
                &source,
                cfg.pointdp_cycles,
                &IncrementalConfig::default(),
                &[],
                &mut rng,
            )?;
            Solved {
                eval_cost: lb.f.len(),
                bound: Box::new(lb.f.clone()),
                direct: Some(lb.f),
                fsm: None,
            }
        }
        Method::Linq => {
            let q = solve_fomdp(m, cfg.epsilon);
            let samples = sample_beliefs(m.num_states(), cfg.fit_samples, cfg.seed ^ 0xf17);
            let fit = FitConfig {
                kind: ModelKind::LinearQ,
                scheme: FitScheme::Synchronous,
                epochs: cfg.fit_epochs,
                rate: RateSchedule::default(),
            };
            let out = fit_scheme(m, seed_model(&q, ModelKind::LinearQ, &mut rng)?, &samples, &fit, &[], None, &mut rng)?;
            if let Some(reason) = out.diverged {
                log::warn!("linear Q fit stopped early: {reason}");
            }
            let FittedModel::LinearQ(model) = out.model else {
                unreachable!("linear kind yields a linear model")
            };
            let f = model.to_pwlc()?;
            Solved {
                eval_cost: f.len(),
                bound: Box::new(f.clone()),
                direct: Some(f),
                fsm: None,
            }
        }
        Method::Fsm => {
            let start = one_action_collection(m.num_actions(), m.num_obs());
            let pi = PolicyIterationConfig {
                rounds: cfg.fsm_rounds,
                ..Default::default()
            };
            let (c, _) = policy_iteration(m, start, &pi)?;
            Solved {
                eval_cost: c.num_memory(),
                bound: Box::new(c.induced_pwlc()?),
                direct: None,
                fsm: Some(c),
            }
        }
    })
}

fn score<P: Policy + ?Sized>(
    m: &Pomdp,
    p: &mut P,
    mode: &str,
    method: Method,
    bound_mean: f64,
    solve_ms: f64,
    starts: &[Belief],
    cfg: &ExperimentConfig,
) -> ReportRow {
    let q = control_quality(m, p, starts, cfg.horizon, cfg.seed);
    ReportRow {
        method,
        mode: mode.into(),
        bound_mean,
        control_mean: q.mean,
        control_se: q.std_error,
        solve_ms,
        decision_ops: q.counters.cost_per_decision(m.num_states()),
        error: None,
    }
}

/// Runs every configured method. A method that fails yields one `error`
/// row and the run continues.
pub fn run_comparison(m: &Pomdp, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let beliefs = sample_beliefs(m.num_states(), cfg.n_beliefs, cfg.seed);
    let mut header = vec![
        ("n_beliefs".to_string(), cfg.n_beliefs.to_string()),
        ("trajectories".to_string(), cfg.n_beliefs.to_string()),
        ("horizon".to_string(), cfg.horizon.to_string()),
        ("discount".to_string(), m.discount().to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
    ];
    for (k, v) in &cfg.notes {
        if !header.iter().any(|(hk, _)| hk == k) {
            header.push((k.clone(), v.clone()));
        }
    }
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        log::info!("solving {method}");
        let t0 = Instant::now();
        let solved = match solve_method(m, method, cfg) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("{method} failed: {e}");
                rows.push(ReportRow {
                    method,
                    mode: "error".into(),
                    bound_mean: f64::NAN,
                    control_mean: f64::NAN,
                    control_se: f64::NAN,
                    solve_ms: t0.elapsed().as_secs_f64() * 1e3,
                    decision_ops: f64::NAN,
                    error: Some(e.to_string()),
                });
                continue;
            }
        };
        let solve_ms = t0.elapsed().as_secs_f64() * 1e3;
        let bound_mean = bound_quality(&*solved.bound, &beliefs);
        if let Some(c) = &solved.fsm {
            rows.push(score(m, &mut FsmPolicy::new(c)?, "fsm", method, bound_mean, solve_ms, &beliefs, cfg));
            rows.push(score(m, &mut DirectFsmPolicy::new(c)?, "direct", method, bound_mean, solve_ms, &beliefs, cfg));
            rows.push(score(m, &mut LookaheadFsmPolicy::new(m, c)?, "lookahead", method, bound_mean, solve_ms, &beliefs, cfg));
            continue;
        }
        if let Some(f) = &solved.direct {
            rows.push(score(m, &mut DirectPolicy::new(f)?, "direct", method, bound_mean, solve_ms, &beliefs, cfg));
        }
        let mut la = LookaheadPolicy::new(m, &*solved.bound, solved.eval_cost);
        rows.push(score(m, &mut la, "lookahead", method, bound_mean, solve_ms, &beliefs, cfg));
    }
    Ok(Report { header, rows })
}
