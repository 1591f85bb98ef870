use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use pomdp_vfa::bounds::{
    fib_backup, fib_fixed_point, iterate, partitioned_fib_backup_with, solve_fomdp, umdp_backup, MdpMode, Partition,
};
use pomdp_vfa::compare::{maze_notes, run_comparison, ExperimentConfig, Method};
use pomdp_vfa::exact::{
    default_initial, extract_policy_graph, value_iteration_with, BackupConfig, ViConfig,
};
use pomdp_vfa::fit::{fit_scheme, seed_model, FitConfig, FitScheme, ModelKind, RateSchedule, DEFAULT_SOFTMAX_K};
use pomdp_vfa::fsm::{
    make_one_action_fsm, one_action_collection, policy_iteration, DirectFsmPolicy, FsmController, FsmPolicy,
    LookaheadFsmPolicy, PolicyIterationConfig,
};
use pomdp_vfa::grid::{grow_sawtooth, iterate_grid_backup, solve_sawtooth, Grid, GridValueFn, InterpRule};
use pomdp_vfa::harness::{
    bound_quality, control_quality, sample_beliefs, ControlQuality, DirectPolicy, LookaheadPolicy, Policy,
};
use pomdp_vfa::io::{load_maze_spec, load_model, model_to_json, read_json};
use pomdp_vfa::maze::{build_maze20, MazeSpec};
use pomdp_vfa::model::{Belief, Pomdp};
use pomdp_vfa::point::{gl_iterate, incremental_cycles, IncrementalConfig, LowerBoundFn, PointSource};
use pomdp_vfa::pwlc::PwlcFn;
use pomdp_vfa::{Error, Result};

/// Value-function approximations for partially observable MDPs.
#[derive(Debug, Parser)]
#[command(name = "pomdp", version)]
struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Model JSON file. Defaults to the built-in 20-state maze.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Overrides the model's discount factor.
    #[arg(long, global = true)]
    discount: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,
    /// Write the result here instead of standard output.
    #[arg(long, short = 'o', global = true)]
    output: Option<PathBuf>,
    /// Largest cross-sum an exact backup may build.
    #[arg(long, global = true, default_value_t = BackupConfig::default().max_candidates)]
    max_candidates: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact value iteration with incremental pruning.
    Solve(SolveArgs),
    /// MDP-style upper bounds and the unobservable lower bound.
    Bound(BoundArgs),
    /// Grid-based interpolation upper bounds.
    Grid(GridArgs),
    /// Point-based lower bounds.
    Pointdp(PointArgs),
    /// Least-squares value-function fitting.
    Lsfit(FitArgs),
    /// Finite-state controller policy iteration.
    PolicyIter(PolicyIterArgs),
    /// Control quality of a stored value function or controller.
    Simulate(SimulateArgs),
    /// Bound and control quality of several methods on shared beliefs.
    Compare(CompareArgs),
    /// The built-in maze.
    Maze20 {
        #[command(subcommand)]
        action: MazeAction,
    },
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Resume from a saved alpha-vector set.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Emit the policy graph of the iterates instead of the final vectors.
    #[arg(long)]
    policy_graph: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundMethod {
    Mdp,
    Qmdp,
    Fib,
    Umdp,
    FibPartitioned,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long, value_enum, default_value_t = BoundMethod::Fib)]
    method: BoundMethod,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Backups for the methods solved by iteration (umdp, fib-partitioned).
    #[arg(long, default_value_t = 50)]
    iters: usize,
    /// JSON list of state blocks for fib-partitioned. Defaults to singletons.
    #[arg(long)]
    partition: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RuleArg {
    Nn,
    Kernel,
    Sawtooth,
    Lp,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long, value_enum, default_value_t = RuleArg::Sawtooth)]
    rule: RuleArg,
    /// Random interior points added to the extremes.
    #[arg(long, default_value_t = 0)]
    points: usize,
    /// Grow the grid from simulated successors (sawtooth only).
    #[arg(long)]
    adaptive: bool,
    /// Points added per adaptive round.
    #[arg(long, default_value_t = 40)]
    increment: usize,
    /// Adaptive rounds.
    #[arg(long, default_value_t = 10)]
    rounds: usize,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_KERNEL_SIGMA_ARG)]
    sigma: f64,
}

const DEFAULT_KERNEL_SIGMA_ARG: f64 = pomdp_vfa::grid::DEFAULT_KERNEL_SIGMA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PointMode {
    Standard,
    Incremental,
}

#[derive(Debug, Args)]
struct PointArgs {
    #[arg(long, value_enum, default_value_t = PointMode::Incremental)]
    mode: PointMode,
    /// fixed:FILE, random:N, heur-extremes or heur-twotier[:N].
    #[arg(long, default_value = "heur-twotier")]
    points: String,
    #[arg(long, default_value_t = 10)]
    cycles: usize,
    /// Run the full LP prune after each cycle.
    #[arg(long)]
    lp_prune: bool,
    /// Probe beliefs for the per-cycle trace.
    #[arg(long, default_value_t = 500)]
    probes: usize,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Approximator: linq or softmax:N[,K].
    #[arg(long, default_value = "linq")]
    approx: String,
    #[arg(long, value_enum, default_value_t = SchemeArg::Sync)]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Learning rate as START:END, falling linearly.
    #[arg(long, default_value = "0.2:0.001")]
    rate: String,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 200)]
    probes: usize,
    /// Added to every reward before fitting. Softmax fits default to the
    /// smallest shift that makes every expected reward at least 1.
    #[arg(long)]
    reward_shift: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Sync,
    Gs,
}

#[derive(Debug, Args)]
struct PolicyIterArgs {
    /// one-action:A, one-action (all actions) or a controller JSON file.
    #[arg(long, default_value = "one-action")]
    start: String,
    #[arg(long, default_value_t = 10)]
    rounds: usize,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, default_value_t = 500)]
    max_states: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ControlMode {
    Direct,
    Lookahead,
    Fsm,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Alpha-vector set JSON (direct and lookahead modes).
    #[arg(long, conflicts_with = "controller")]
    vectors: Option<PathBuf>,
    /// Controller JSON (all modes).
    #[arg(long)]
    controller: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ControlMode::Lookahead)]
    mode: ControlMode,
    #[arg(long, default_value_t = 2000)]
    starts: usize,
    #[arg(long, default_value_t = 60)]
    horizon: usize,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Number of shared start beliefs [default: 2000].
    #[arg(long)]
    n_beliefs: Option<usize>,
    /// Steps per simulated trajectory [default: 60].
    #[arg(long)]
    horizon: Option<usize>,
    /// Points in the adaptive sawtooth grid [default: 400].
    #[arg(long)]
    grid_points: Option<usize>,
    /// Improvement cycles of the point-based lower bound [default: 10].
    #[arg(long)]
    pointdp_cycles: Option<usize>,
    /// Leave the wall-clock column blank so reruns compare byte for byte.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Subcommand)]
enum MazeAction {
    /// Writes the maze model as JSON.
    Emit {
        /// Maze configuration JSON. Defaults to the built-in layout.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

/// A command's result in both output formats.
struct Output {
    json: Value,
    csv: String,
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialize")
}

fn vectors_csv(f: &PwlcFn) -> String {
    let mut out = String::from("action,coeffs\n");
    for v in f.vectors() {
        let action = v.action.map_or(String::new(), |a| a.to_string());
        let coeffs: Vec<String> = v.coeffs.iter().map(f64::to_string).collect();
        writeln!(out, "{action},{}", coeffs.join(" ")).expect("string write");
    }
    out
}

fn pwlc_output(f: &PwlcFn) -> Output {
    Output {
        json: to_value(f),
        csv: vectors_csv(f),
    }
}

fn load(cli: &Cli) -> Result<(Pomdp, Option<MazeSpec>)> {
    let (m, spec) = match &cli.model {
        Some(path) => (load_model(path)?, None),
        None => {
            let spec = MazeSpec::default();
            (build_maze20(&spec)?, Some(spec))
        }
    };
    match cli.discount {
        Some(g) => Ok((m.with_discount(g)?, spec.map(|s| MazeSpec { discount: g, ..s }))),
        None => Ok((m, spec)),
    }
}

fn backup_config(cli: &Cli) -> BackupConfig {
    BackupConfig {
        max_candidates: cli.max_candidates,
        ..Default::default()
    }
}

fn solve(cli: &Cli, m: &Pomdp, args: &SolveArgs) -> Result<Output> {
    let mut cfg = ViConfig::new(args.eps, args.max_iters);
    cfg.backup = backup_config(cli);
    cfg.keep_history = args.policy_graph;
    let init = args.init.as_ref().map(read_json::<PwlcFn>).transpose()?;
    let out = value_iteration_with(m, init, &cfg)?;
    log::info!(
        "{} iterations, status {:?}, Bellman error {:.3e}",
        out.iters,
        out.status,
        out.bellman_error
    );
    if args.policy_graph {
        let graph = extract_policy_graph(&out.history, true)?;
        let mut csv = String::from("node,action,edges\n");
        for n in &graph.nodes {
            let edges: Vec<String> = n.edges.iter().map(usize::to_string).collect();
            writeln!(csv, "{},{},{}", n.id, n.action, edges.join(" ")).expect("string write");
        }
        return Ok(Output {
            json: to_value(&graph),
            csv,
        });
    }
    Ok(pwlc_output(&out.f))
}

fn bound(cli: &Cli, m: &Pomdp, args: &BoundArgs) -> Result<Output> {
    match args.method {
        BoundMethod::Mdp | BoundMethod::Qmdp => {
            let q = solve_fomdp(m, args.eps);
            let mode = if args.method == BoundMethod::Mdp { MdpMode::Mdp } else { MdpMode::Qmdp };
            let f = q.to_pwlc(mode);
            Ok(Output {
                json: to_value(&q),
                csv: vectors_csv(&f),
            })
        }
        BoundMethod::Fib => {
            let t = fib_fixed_point(m, args.eps);
            Ok(Output {
                json: to_value(&t),
                csv: vectors_csv(&t.to_pwlc()),
            })
        }
        BoundMethod::Umdp => {
            // Iterating from the zero-reward floor keeps every iterate a lower bound.
            let f = iterate(&default_initial(m), args.iters, |f| umdp_backup(m, f))?;
            Ok(pwlc_output(&f))
        }
        BoundMethod::FibPartitioned => {
            let partition = match &args.partition {
                Some(path) => Partition::new(m.num_states(), read_json(path)?)?,
                None => Partition::singletons(m.num_states()),
            };
            let cfg = backup_config(cli);
            let start = fib_backup(m, &default_initial(m));
            let f = iterate(&start, args.iters, |f| partitioned_fib_backup_with(m, f, &partition, &cfg))?;
            Ok(pwlc_output(&f))
        }
    }
}

fn grid(cli: &Cli, m: &Pomdp, args: &GridArgs) -> Result<Output> {
    let rule = match args.rule {
        RuleArg::Nn => InterpRule::NearestNeighbor,
        RuleArg::Kernel => InterpRule::Kernel { sigma: args.sigma },
        RuleArg::Sawtooth => InterpRule::Sawtooth,
        RuleArg::Lp => InterpRule::BestLp,
    };
    let mdp_values = solve_fomdp(m, args.eps).v();
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let value = if args.adaptive {
        if rule != InterpRule::Sawtooth {
            return Err(Error::InvalidConfig("adaptive growth needs the sawtooth rule".into()));
        }
        let target = m.num_states() + args.points + args.increment * args.rounds;
        grow_sawtooth(m, &mdp_values, target, args.eps, &mut rng)?.value
    } else {
        let extra = sample_beliefs(m.num_states(), args.points, cli.seed);
        let grid = Grid::extremes_plus(m.num_states(), extra);
        // Extremes start at the MDP values, interior points at the MDP bound.
        let q = solve_fomdp(m, args.eps).to_pwlc(MdpMode::Mdp);
        let g = GridValueFn::from_fn(grid, &q, rule)?;
        match rule {
            InterpRule::Sawtooth => solve_sawtooth(m, g, args.eps, 100)?.value,
            _ => iterate_grid_backup(m, g, args.eps, 100_000),
        }
    };
    let mut csv = String::from("point,value\n");
    for (b, v) in value.grid.points().iter().zip(&value.values) {
        let p: Vec<String> = b.iter().map(f64::to_string).collect();
        writeln!(csv, "{},{v}", p.join(" ")).expect("string write");
    }
    Ok(Output {
        json: to_value(&value),
        csv,
    })
}

fn parse_points(spec: &str) -> Result<PointSource> {
    let bad = || Error::InvalidConfig(format!("unknown point source {spec:?}"));
    let (kind, arg) = spec.split_once(':').map_or((spec, None), |(k, a)| (k, Some(a)));
    match (kind, arg) {
        ("fixed", Some(path)) => Ok(PointSource::Fixed(read_json::<Vec<Belief>>(path)?)),
        ("random", Some(n)) => Ok(PointSource::Random(n.parse().map_err(|_| bad())?)),
        ("heur-extremes", None) => Ok(PointSource::HeurExtremes),
        ("heur-twotier", None) => Ok(PointSource::HeurTwoTier { total: 40 }),
        ("heur-twotier", Some(n)) => Ok(PointSource::HeurTwoTier {
            total: n.parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

fn pointdp(cli: &Cli, m: &Pomdp, args: &PointArgs) -> Result<Output> {
    let source = parse_points(&args.points)?;
    let c = one_action_collection(m.num_actions(), m.num_obs()).evaluated(m)?;
    let lb = LowerBoundFn::from_fsm(&c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    match args.mode {
        PointMode::Incremental => {
            let cfg = IncrementalConfig {
                lp_prune: args.lp_prune,
                ..Default::default()
            };
            let probes = sample_beliefs(m.num_states(), args.probes, cli.seed);
            let (lb, trace) = incremental_cycles(m, lb, &source, args.cycles, &cfg, &probes, &mut rng)?;
            let mut csv = String::from("cycle,mean_bound\n");
            for (i, t) in trace.iter().enumerate() {
                writeln!(csv, "{i},{t}").expect("string write");
            }
            Ok(Output {
                json: json!({ "vectors": to_value(&lb.f), "certified": lb.certified, "trace": trace }),
                csv,
            })
        }
        PointMode::Standard => {
            // A fixed grid backed up repeatedly; convergence is not guaranteed.
            let points = source.select(m, &lb.f, &mut rng);
            let grid = Grid::new(points)?;
            let f = gl_iterate(m, &lb.f, &grid, args.cycles)?;
            Ok(pwlc_output(&f))
        }
    }
}

fn parse_model_kind(spec: &str) -> Result<ModelKind> {
    let bad = || Error::InvalidConfig(format!("unknown fit model {spec:?}"));
    if spec == "linq" {
        return Ok(ModelKind::LinearQ);
    }
    let rest = spec.strip_prefix("softmax:").ok_or_else(bad)?;
    let (n, k) = rest.split_once(',').map_or((rest, None), |(n, k)| (n, Some(k)));
    Ok(ModelKind::Softmax {
        vectors: n.parse().map_err(|_| bad())?,
        k: k.map_or(Ok(DEFAULT_SOFTMAX_K), f64::from_str).map_err(|_| bad())?,
    })
}

fn parse_rate(spec: &str) -> Result<RateSchedule> {
    let bad = || Error::InvalidConfig(format!("rate must be START:END, got {spec:?}"));
    let (a, b) = spec.split_once(':').ok_or_else(bad)?;
    Ok(RateSchedule {
        start: a.parse().map_err(|_| bad())?,
        end: b.parse().map_err(|_| bad())?,
    })
}

fn lsfit(cli: &Cli, m: &Pomdp, args: &FitArgs) -> Result<Output> {
    let cfg = FitConfig {
        kind: parse_model_kind(&args.approx)?,
        scheme: match args.scheme {
            SchemeArg::Sync => FitScheme::Synchronous,
            SchemeArg::Gs => FitScheme::GaussSeidel,
        },
        epochs: args.epochs,
        rate: parse_rate(&args.rate)?,
    };
    // The softmax model needs positive inner products; a constant reward
    // shift raises every value by shift / (1 - gamma) and changes nothing
    // else.
    let shift = args.reward_shift.unwrap_or(match cfg.kind {
        ModelKind::Softmax { .. } => (1.0 - m.rho().min()).max(0.0),
        ModelKind::LinearQ => 0.0,
    });
    let shifted = m.with_reward_shift(shift);
    let offset = shift / (1.0 - m.discount());
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let q = solve_fomdp(&shifted, 1e-6);
    let init = seed_model(&q, cfg.kind, &mut rng)?;
    let samples = sample_beliefs(m.num_states(), args.samples, cli.seed);
    let probes = sample_beliefs(m.num_states(), args.probes, cli.seed.wrapping_add(1));
    let out = fit_scheme(&shifted, init, &samples, &cfg, &probes, None, &mut rng)?;
    if let Some(why) = &out.diverged {
        log::warn!("fit diverged: {why}; returning the last finite model");
    }
    let mut csv = String::from("epoch,probe_error\n");
    for (i, t) in out.trace.iter().enumerate() {
        writeln!(csv, "{},{t}", i + 1).expect("string write");
    }
    Ok(Output {
        json: json!({
            "model": to_value(&out.model),
            "reward_shift": shift,
            // Subtract from the model's values to get values of the original rewards.
            "value_offset": offset,
            "trace": out.trace,
            "diverged": out.diverged,
        }),
        csv,
    })
}

fn parse_start(spec: &str, m: &Pomdp) -> Result<FsmController> {
    if spec == "one-action" {
        return Ok(one_action_collection(m.num_actions(), m.num_obs()));
    }
    if let Some(a) = spec.strip_prefix("one-action:") {
        let a: usize = a
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad action in {spec:?}")))?;
        if a >= m.num_actions() {
            return Err(Error::MissingAction { index: a });
        }
        return Ok(make_one_action_fsm(a, m.num_obs()));
    }
    let c: FsmController = read_json(spec)?;
    c.validate(m.num_actions(), m.num_obs())?;
    Ok(c)
}

fn policy_iter(cli: &Cli, m: &Pomdp, args: &PolicyIterArgs) -> Result<Output> {
    let start = parse_start(&args.start, m)?.evaluated(m)?;
    let cfg = PolicyIterationConfig {
        rounds: args.rounds,
        epsilon: args.eps,
        max_states: args.max_states,
        backup: backup_config(cli),
    };
    let (c, rounds) = policy_iteration(m, start, &cfg)?;
    log::info!("{rounds} rounds, {} memory states", c.num_memory());
    let mut csv = String::from("state,action,next\n");
    for (x, st) in c.states.iter().enumerate() {
        let next: Vec<String> = st.next.iter().map(usize::to_string).collect();
        writeln!(csv, "{x},{},{}", st.action, next.join(" ")).expect("string write");
    }
    Ok(Output { json: to_value(&c), csv })
}

fn simulate(cli: &Cli, m: &Pomdp, args: &SimulateArgs) -> Result<Output> {
    let starts = sample_beliefs(m.num_states(), args.starts, cli.seed);
    let run = |p: &mut dyn Policy| control_quality(m, p, &starts, args.horizon, cli.seed);
    let (quality, bound): (ControlQuality, f64) = match (&args.vectors, &args.controller) {
        (Some(path), None) => {
            let f: PwlcFn = read_json(path)?;
            let q = match args.mode {
                ControlMode::Direct => run(&mut DirectPolicy::new(&f)?),
                ControlMode::Lookahead => run(&mut LookaheadPolicy::new(m, &f, f.len())),
                ControlMode::Fsm => {
                    return Err(Error::InvalidConfig("fsm mode needs --controller".into()));
                }
            };
            (q, bound_quality(&f, &starts))
        }
        (None, Some(path)) => {
            let c = read_json::<FsmController>(path)?;
            c.validate(m.num_actions(), m.num_obs())?;
            let c = c.evaluated(m)?;
            let q = match args.mode {
                ControlMode::Direct => run(&mut DirectFsmPolicy::new(&c)?),
                ControlMode::Lookahead => run(&mut LookaheadFsmPolicy::new(m, &c)?),
                ControlMode::Fsm => run(&mut FsmPolicy::new(&c)?),
            };
            (q, bound_quality(&c, &starts))
        }
        _ => return Err(Error::InvalidConfig("give exactly one of --vectors and --controller".into())),
    };
    let ops = quality.counters.cost_per_decision(m.num_states());
    Ok(Output {
        json: json!({
            "bound_mean": bound,
            "control_mean": quality.mean,
            "control_se": quality.std_error,
            "decision_ops": ops,
            "counters": to_value(&quality.counters),
        }),
        csv: format!(
            "bound_mean,control_mean,control_se,decision_ops\n{bound},{},{},{ops}\n",
            quality.mean, quality.std_error
        ),
    })
}

fn compare(cli: &Cli, m: &Pomdp, spec: Option<&MazeSpec>, args: &CompareArgs) -> Result<Output> {
    let defaults = ExperimentConfig::default();
    let methods = match &args.methods {
        Some(names) => names.iter().map(|n| n.parse()).collect::<Result<Vec<Method>>>()?,
        None => defaults.methods.clone(),
    };
    let mut notes = spec.map(maze_notes).unwrap_or_default();
    if let Some(path) = &cli.model {
        notes.push(("model".into(), path.display().to_string()));
        notes.push(("discount".into(), m.discount().to_string()));
    }
    let cfg = ExperimentConfig {
        seed: cli.seed,
        methods,
        n_beliefs: args.n_beliefs.unwrap_or(defaults.n_beliefs),
        horizon: args.horizon.unwrap_or(defaults.horizon),
        grid_points: args.grid_points.unwrap_or(defaults.grid_points),
        pointdp_cycles: args.pointdp_cycles.unwrap_or(defaults.pointdp_cycles),
        notes,
        ..defaults
    };
    let report = run_comparison(m, &cfg)?;
    Ok(Output {
        json: to_value(&report),
        csv: report.to_csv(!args.no_timing),
    })
}

fn run(cli: &Cli) -> Result<Output> {
    if let Command::Maze20 {
        action: MazeAction::Emit { spec },
    } = &cli.command
    {
        let mut spec = spec.as_ref().map(load_maze_spec).transpose()?.unwrap_or_default();
        if let Some(g) = cli.discount {
            spec.discount = g;
        }
        let m = build_maze20(&spec)?;
        let text = model_to_json(&m);
        return Ok(Output {
            json: serde_json::from_str(&text).expect("model JSON parses"),
            csv: text,
        });
    }
    let (m, spec) = load(cli)?;
    match &cli.command {
        Command::Solve(a) => solve(cli, &m, a),
        Command::Bound(a) => bound(cli, &m, a),
        Command::Grid(a) => grid(cli, &m, a),
        Command::Pointdp(a) => pointdp(cli, &m, a),
        Command::Lsfit(a) => lsfit(cli, &m, a),
        Command::PolicyIter(a) => policy_iter(cli, &m, a),
        Command::Simulate(a) => simulate(cli, &m, a),
        Command::Compare(a) => compare(cli, &m, spec.as_ref(), a),
        Command::Maze20 { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let out = match run(&cli) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let text = match cli.out {
        OutFormat::Json => serde_json::to_string_pretty(&out.json).expect("JSON values serialize") + "\n",
        OutFormat::Csv => out.csv,
    };
    let written = match &cli.output {
        Some(path) => fs::write(path, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    };
    // A closed pipe (`pomdp ... | head`) is not an error.
    if let Err(e) = written.or_else(|e| if e.kind() == io::ErrorKind::BrokenPipe { Ok(()) } else { Err(e) }) {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
