//! Command-line front end for the ikforge toolkit.
//!
//! Exit codes: 0 on success, 1 on a usage error (bad flags, unknown
//! subcommand), 2 on a runtime failure (missing file, solver error, chain
//! mismatch). All randomness derives from `--seed`, so reruns with the same
//! flags and inputs reproduce the same artifacts, timing fields excepted.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ikforge_core::analytical::{self, AnalyticalOptions};
use ikforge_core::bench::{
    evaluate, evaluate_dt_batched, AnalyticalSolver, DtSolver, NumericalSolver, Report,
    ReportFormat, Thresholds, WarmStartNumericalSolver,
};
use ikforge_core::builtin_chain;
use ikforge_core::datasets::{
    default_unreachable_range, filter_nonsingular, make_line_trajectory, make_singular_set,
    make_unreachable_set, read_csv, sample_uniform, to_csv_string, DatasetKind,
    NONSINGULAR_SIGMA,
};
use ikforge_core::distal::{preset_hidden, read_model, save_model, train, MlpSpec, TrainOpts};
use ikforge_core::metrics::{orientation_error, position_error, LossWeights};
use ikforge_core::numerical::{self, NumericalOptions, Strategy};
use ikforge_core::{parse_chain_spec, ChainSpec, Error, Pose};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "ikforge",
    version,
    about = "Inverse kinematics for serial chains: closed-form, numerical, and learned solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a chain summary: joints, limits, reach
    Info(InfoArgs),
    /// Generate a dataset and write it as CSV
    Gen(GenArgs),
    /// Train a distal-teaching model on a dataset
    Train(TrainArgs),
    /// Solve one pose query with any method
    Solve(SolveArgs),
    /// Evaluate a solver over a dataset and emit a report
    Eval(EvalArgs),
    /// Run a trajectory consistency check
    Traj(TrajArgs),
}

#[derive(Args)]
struct ChainArg {
    /// Builtin chain name (planar3, arm6, chain15) or path to a chain file
    #[arg(long, default_value = "planar3")]
    chain: String,
}

impl ChainArg {
    fn resolve(&self) -> Result<ChainSpec, Error> {
        if let Ok(chain) = builtin_chain(&self.chain) {
            return Ok(chain);
        }
        let path = Path::new(&self.chain);
        if path.exists() {
            return parse_chain_spec(&fs::read_to_string(path)?);
        }
        Err(Error::UnknownChain(self.chain.clone()))
    }
}

#[derive(Args)]
struct InfoArgs {
    #[command(flatten)]
    chain: ChainArg,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    chain: ChainArg,
    /// Dataset kind: uniform, singular, nonsingular, unreachable, trajectory
    #[arg(long)]
    kind: String,
    /// Number of samples (waypoints for trajectories)
    #[arg(long)]
    count: usize,
    /// Seed deriving all randomness of the run
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Unreachable sets: lower radius bound in multiples of total length
    #[arg(long)]
    radius_lo: Option<f64>,
    /// Unreachable sets: upper radius bound in multiples of total length
    #[arg(long)]
    radius_hi: Option<f64>,
    /// Trajectories: start pose (defaults to a seeded random reachable pose)
    #[arg(long, num_args = 7, value_names = ["PX", "PY", "PZ", "QW", "QX", "QY", "QZ"], allow_negative_numbers = true)]
    start: Option<Vec<f64>>,
    /// Trajectories: end pose (defaults to a seeded random reachable pose)
    #[arg(long, num_args = 7, value_names = ["PX", "PY", "PZ", "QW", "QX", "QY", "QZ"], allow_negative_numbers = true)]
    end: Option<Vec<f64>>,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    chain: ChainArg,
    /// Training dataset CSV
    #[arg(long)]
    data: PathBuf,
    /// Hidden layer widths, comma separated (default: the chain's preset)
    #[arg(long)]
    hidden: Option<String>,
    /// Adam learning rate (cosine-annealed to zero across the epochs)
    #[arg(long, default_value_t = TrainOpts::default().learning_rate)]
    lr: f64,
    /// Minibatch size
    #[arg(long, default_value_t = TrainOpts::default().batch_size)]
    batch: usize,
    /// Epoch budget
    #[arg(long, default_value_t = TrainOpts::default().max_epochs)]
    epochs: usize,
    /// Fraction of the dataset carved off for validation
    #[arg(long, default_value_t = TrainOpts::default().validation_fraction)]
    val_fraction: f64,
    /// Early-stop patience in epochs without validation improvement
    #[arg(long, default_value_t = TrainOpts::default().patience)]
    patience: usize,
    /// Position weight w of the loss (orientation gets 1-w)
    #[arg(long, default_value_t = 0.75)]
    pos_weight: f64,
    /// Joint-limit penalty weight lambda
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Seed deriving all randomness of the run (init and shuffles)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Analytical,
    Numerical,
    Dt,
}

impl MethodArg {
    fn name(self) -> &'static str {
        match self {
            MethodArg::Analytical => "analytical",
            MethodArg::Numerical => "numerical",
            MethodArg::Dt => "dt",
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum StrategyArg {
    Pinv,
    Sqp,
    Combined,
}

impl From<StrategyArg> for Strategy {
    fn from(value: StrategyArg) -> Self {
        match value {
            StrategyArg::Pinv => Strategy::Pinv,
            StrategyArg::Sqp => Strategy::Sqp,
            StrategyArg::Combined => Strategy::Combined,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum FormatArg {
    Csv,
    Md,
}

#[derive(Args)]
struct SolverOpts {
    /// Numerical strategy
    #[arg(long, value_enum, default_value_t = StrategyArg::Combined)]
    strategy: StrategyArg,
    /// Per-query wall-clock budget in milliseconds
    #[arg(long, default_value_t = 5.0)]
    max_time_ms: f64,
    /// Iteration cap per restart
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    /// Position tolerance in metres
    #[arg(long, default_value_t = 1e-4)]
    pos_tol: f64,
    /// Orientation tolerance in radians
    #[arg(long, default_value_t = 1e-4)]
    ori_tol: f64,
    /// Seed deriving the restart sequence
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverOpts {
    fn numerical(&self) -> NumericalOptions {
        NumericalOptions {
            max_time: self.max_time_ms / 1e3,
            max_iterations: self.max_iterations,
            pos_tolerance: self.pos_tol,
            ori_tolerance: self.ori_tol,
            restart_seed: self.seed,
            strategy: self.strategy.into(),
            ..NumericalOptions::default()
        }
    }

    fn describe(&self) -> String {
        format!(
            "strategy={} max_time_ms={} max_iterations={} pos_tol={} ori_tol={} seed={}",
            Strategy::from(self.strategy),
            self.max_time_ms,
            self.max_iterations,
            self.pos_tol,
            self.ori_tol,
            self.seed
        )
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    chain: ChainArg,
    /// Solver family
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Target pose
    #[arg(long, num_args = 7, value_names = ["PX", "PY", "PZ", "QW", "QX", "QY", "QZ"], allow_negative_numbers = true)]
    pose: Vec<f64>,
    /// Trained model file (dt method)
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOpts,
    /// Also write the answer to this path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    chain: ChainArg,
    /// Dataset CSV to evaluate on
    #[arg(long)]
    data: PathBuf,
    /// Solver family
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Trained model file (dt method)
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOpts,
    /// Solved-query position threshold in metres
    #[arg(long, default_value_t = 0.01)]
    pos_threshold: f64,
    /// Solved-query orientation threshold in radians
    #[arg(long, default_value_t = 0.03)]
    ori_threshold: f64,
    /// Answer queries in batches of this size (dt method)
    #[arg(long)]
    batch: Option<usize>,
    /// Warm-start each query from the previous solution (numerical method)
    #[arg(long)]
    warm_start: bool,
    /// Force sequential execution for trustworthy timings
    #[arg(long)]
    timed: bool,
    /// Report format
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Report path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrajArgs {
    #[command(flatten)]
    chain: ChainArg,
    /// Trajectory dataset CSV (generated from --seed when omitted)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Waypoint count for a generated trajectory
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Solver family (numerical runs warm-started)
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Trained model file (dt method)
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOpts,
    /// Solved-query position threshold in metres
    #[arg(long, default_value_t = 0.01)]
    pos_threshold: f64,
    /// Solved-query orientation threshold in radians
    #[arg(long, default_value_t = 0.03)]
    ori_threshold: f64,
    /// Report format
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Report path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful runs; everything
            // else clap rejects is a usage error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Info(args) => cmd_info(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Traj(args) => cmd_traj(args),
    }
}

fn cmd_info(args: InfoArgs) -> Result<(), Error> {
    let chain = args.chain.resolve()?;
    println!("chain: {}", chain.name());
    println!("dof: {}", chain.dof());
    // Nanometre rounding hides float-sum noise in the link lengths.
    println!("reach: {} m", (chain.total_length() * 1e9).round() / 1e9);
    println!("planar: {}", chain.is_planar_z());
    println!("joints:");
    for (i, j) in chain.joints().iter().enumerate() {
        let t = j.pre_transform.translation;
        println!(
            "  {} {}: axis [{} {} {}]  offset [{} {} {}]  limits [{}, {}] rad",
            i + 1,
            j.name,
            j.axis.x,
            j.axis.y,
            j.axis.z,
            t.x,
            t.y,
            t.z,
            j.limit_lo,
            j.limit_hi
        );
    }
    Ok(())
}

fn parse_pose(values: &[f64]) -> Result<Pose, Error> {
    Pose::from_components(
        [values[0], values[1], values[2]],
        [values[3], values[4], values[5], values[6]],
    )
}

/// Deterministic pair of reachable poses for generated trajectories: the
/// forward kinematics of two seeded uniform configurations.
fn seeded_endpoints(chain: &ChainSpec, seed: u64) -> Result<(Pose, Pose), Error> {
    let ds = sample_uniform(chain, 2, seed)?;
    Ok((ds.samples[0].pose, ds.samples[1].pose))
}

fn cmd_gen(args: GenArgs) -> Result<(), Error> {
    let chain = args.chain.resolve()?;
    let kind: DatasetKind = args.kind.parse()?;
    let mut dataset = match kind {
        DatasetKind::Uniform => sample_uniform(&chain, args.count, args.seed)?,
        DatasetKind::Singular => make_singular_set(&chain, args.count, args.seed)?,
        DatasetKind::Nonsingular => {
            // Oversample and filter; per-index sample streams make the
            // uniform pool prefix-stable, so growing it never changes the
            // samples already kept.
            let mut pool = args.count;
            loop {
                let uniform = sample_uniform(&chain, pool, args.seed)?;
                let mut kept = filter_nonsingular(&chain, &uniform, NONSINGULAR_SIGMA)?;
                if kept.samples.len() >= args.count {
                    kept.samples.truncate(args.count);
                    break kept;
                }
                pool *= 2;
            }
        }
        DatasetKind::Unreachable => {
            let range = match (args.radius_lo, args.radius_hi) {
                (Some(lo), Some(hi)) => (lo, hi),
                (None, None) => default_unreachable_range(chain.name()).ok_or_else(|| {
                    Error::InvalidOptions(format!(
                        "no default unreachable radius band for chain `{}`; pass --radius-lo and --radius-hi",
                        chain.name()
                    ))
                })?,
                _ => {
                    return Err(Error::InvalidOptions(
                        "--radius-lo and --radius-hi must be given together".into(),
                    ))
                }
            };
            make_unreachable_set(&chain, args.count, range, args.seed)?
        }
        DatasetKind::Trajectory => {
            let (start, end) = match (&args.start, &args.end) {
                (Some(s), Some(e)) => (parse_pose(s)?, parse_pose(e)?),
                (None, None) => seeded_endpoints(&chain, args.seed)?,
                _ => {
                    return Err(Error::InvalidOptions(
                        "--start and --end must be given together".into(),
                    ))
                }
            };
            let mut t = make_line_trajectory(&chain, &start, &end, args.count)?;
            t.seed = args.seed;
            t
        }
    };
    dataset.seed = args.seed;

    let config = format!(
        "config command=gen kind={} count={} seed={} chain={}",
        kind,
        args.count,
        args.seed,
        chain.name()
    );
    let comments = vec![format!("tool ikforge {TOOL_VERSION}"), config];
    fs::write(&args.out, to_csv_string(&dataset, chain.dof(), &comments))?;
    println!("wrote {} samples to {}", dataset.len(), args.out.display());
    Ok(())
}

fn parse_hidden(text: &str) -> Result<Vec<usize>, Error> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidOptions(format!("bad hidden layer width `{t}`")))
        })
        .collect()
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    let chain = args.chain.resolve()?;
    let dataset = read_csv(&args.data, &chain)?;
    let hidden = match &args.hidden {
        Some(text) => parse_hidden(text)?,
        None => preset_hidden(chain.name()).unwrap_or_else(|| vec![256, 256]),
    };
    let spec = MlpSpec::for_chain(&chain, hidden.clone(), args.seed);
    let opts = TrainOpts {
        weights: LossWeights::new(args.pos_weight, args.lambda)?,
        learning_rate: args.lr,
        batch_size: args.batch,
        max_epochs: args.epochs,
        validation_fraction: args.val_fraction,
        patience: args.patience,
        seed: args.seed,
    };
    let model = train(&chain, &dataset, &spec, &opts)?;

    let hidden_text =
        hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(",");
    let mut text = save_model(&model);
    let _ = writeln!(text, "# tool ikforge {TOOL_VERSION}");
    let _ = writeln!(
        text,
        "# config command=train chain={} data={} hidden={} lr={} batch={} epochs={} \
         val_fraction={} patience={} pos_weight={} lambda={} seed={}",
        chain.name(),
        args.data.display(),
        hidden_text,
        args.lr,
        args.batch,
        args.epochs,
        args.val_fraction,
        args.patience,
        args.pos_weight,
        args.lambda,
        args.seed
    );
    fs::write(&args.out, text)?;

    let (train_loss, val_loss) = *model.history.last().expect("training ran at least one epoch");
    println!(
        "trained {} epochs on {} samples; final loss train {:.6} val {:.6}",
        model.history.len(),
        dataset.len(),
        train_loss,
        val_loss
    );
    println!("wrote model to {}", args.out.display());
    Ok(())
}

fn load_model_arg(path: &Option<PathBuf>, chain: &ChainSpec) -> Result<ikforge_core::distal::TrainedModel, Error> {
    let path = path
        .as_ref()
        .ok_or_else(|| Error::InvalidOptions("the dt method needs --model".into()))?;
    let model = read_model(path)?;
    model.check_chain(chain)?;
    Ok(model)
}

fn format_config(config: &ikforge_core::JointConfig) -> String {
    config.angles.iter().map(|a| format!("{a:?}")).collect::<Vec<_>>().join(" ")
}

fn cmd_solve(args: SolveArgs) -> Result<(), Error> {
    let chain = args.chain.resolve()?;
    let target = parse_pose(&args.pose)?;

    let mut out = String::new();
    let _ = writeln!(out, "# tool ikforge {TOOL_VERSION}");
    let _ = writeln!(out, "# chain {}", chain.name());
    let _ = writeln!(
        out,
        "# config command=solve method={} {}",
        args.method.name(),
        args.solver.describe()
    );

    match args.method {
        MethodArg::Analytical => {
            let set = analytical::solve(&chain, &target, &AnalyticalOptions::default())?;
            let _ = writeln!(out, "branches {}", set.configs.len());
            for (i, config) in set.configs.iter().enumerate() {
                let within = chain.within_limits(config)?;
                let _ = writeln!(out, "branch {i} within_limits={within} q {}", format_config(config));
            }
        }
        MethodArg::Numerical => {
            let result = numerical::solve(&chain, &target, &args.solver.numerical())?;
            let _ = writeln!(out, "status {}", result.status);
            let _ = writeln!(out, "q {}", format_config(&result.config));
            let _ = writeln!(out, "eps_pos {:?}", result.eps_pos);
            let _ = writeln!(out, "eps_ori {:?}", result.eps_ori);
            let _ = writeln!(
                out,
                "iterations {} restarts {} wall_ms {:.4}",
                result.iterations,
                result.restarts,
                result.wall_time * 1e3
            );
        }
        MethodArg::Dt => {
            let model = load_model_arg(&args.model, &chain)?;
            let config = model.predict(&target);
            let reached = chain.forward_kinematics(&config)?;
            let _ = writeln!(out, "q {}", format_config(&config));
            let _ = writeln!(out, "eps_pos {:?}", position_error(&reached, &target));
            let _ = writeln!(out, "eps_ori {:?}", orientation_error(&reached, &target));
        }
    }

    print!("{out}");
    if let Some(path) = &args.out {
        fs::write(path, out)?;
    }
    Ok(())
}

/// Renders a report with the run metadata embedded: `#` comments ahead of
/// CSV, HTML comments ahead of markdown.
fn render_report(report: &Report, format: FormatArg, metadata: &[String]) -> String {
    let mut out = String::new();
    match format {
        FormatArg::Csv => {
            for line in metadata {
                let _ = writeln!(out, "# {line}");
            }
            out.push_str(&ikforge_core::bench::emit_report(report, ReportFormat::Csv));
        }
        FormatArg::Md => {
            for line in metadata {
                let _ = writeln!(out, "<!-- {line} -->");
            }
            out.push_str(&ikforge_core::bench::emit_report(report, ReportFormat::Markdown));
        }
    }
    out
}

fn write_or_print(text: &str, out: &Option<PathBuf>) -> Result<(), Error> {
    match out {
        Some(path) => {
            fs::write(path, text)?;
            println!("wrote report to {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    if args.timed {
        // Cap the library's internal parallelism before its thread pool
        // first spins up, so timings measure one core.
        std::env::set_var("IKFORGE_THREADS", "1");
    }
    let chain = args.chain.resolve()?;
    let dataset = read_csv(&args.data, &chain)?;
    let thresholds = Thresholds { pos: args.pos_threshold, ori: args.ori_threshold };

    let report = match args.method {
        MethodArg::Analytical => evaluate(&chain, &AnalyticalSolver::new(&chain), &dataset, &thresholds)?,
        MethodArg::Numerical => {
            let opts = args.solver.numerical();
            if args.warm_start {
                let solver = WarmStartNumericalSolver::new(&chain, opts);
                evaluate(&chain, &solver, &dataset, &thresholds)?
            } else {
                let solver = NumericalSolver::new(&chain, opts);
                evaluate(&chain, &solver, &dataset, &thresholds)?
            }
        }
        MethodArg::Dt => {
            let model = load_model_arg(&args.model, &chain)?;
            match args.batch {
                Some(batch) => evaluate_dt_batched(&chain, &model, &dataset, &thresholds, batch)?,
                None => {
                    let solver = DtSolver::new(&model, &chain)?;
                    evaluate(&chain, &solver, &dataset, &thresholds)?
                }
            }
        }
    };

    let metadata = vec![
        format!("tool ikforge {TOOL_VERSION}"),
        format!("chain {}", chain.name()),
        format!("seed {}", args.solver.seed),
        format!(
            "config command=eval method={} data={} pos_threshold={} ori_threshold={} timed={} {}",
            args.method.name(),
            args.data.display(),
            args.pos_threshold,
            args.ori_threshold,
            args.timed,
            args.solver.describe()
        ),
    ];
    write_or_print(&render_report(&report, args.format, &metadata), &args.out)
}

fn cmd_traj(args: TrajArgs) -> Result<(), Error> {
    let chain = args.chain.resolve()?;
    let dataset = match &args.data {
        Some(path) => {
            let ds = read_csv(path, &chain)?;
            if ds.kind != DatasetKind::Trajectory {
                return Err(Error::InvalidOptions(format!(
                    "traj needs a trajectory dataset, got kind `{}`",
                    ds.kind
                )));
            }
            ds
        }
        None => {
            let (start, end) = seeded_endpoints(&chain, args.solver.seed)?;
            let mut t = make_line_trajectory(&chain, &start, &end, args.count)?;
            t.seed = args.solver.seed;
            t
        }
    };
    let thresholds = Thresholds { pos: args.pos_threshold, ori: args.ori_threshold };

    let report = match args.method {
        MethodArg::Analytical => {
            return Err(Error::InvalidOptions(
                "traj compares dt and warm-started numerical; use --method dt or numerical".into(),
            ))
        }
        MethodArg::Numerical => {
            let solver = WarmStartNumericalSolver::new(&chain, args.solver.numerical());
            evaluate(&chain, &solver, &dataset, &thresholds)?
        }
        MethodArg::Dt => {
            let model = load_model_arg(&args.model, &chain)?;
            let solver = DtSolver::new(&model, &chain)?;
            evaluate(&chain, &solver, &dataset, &thresholds)?
        }
    };

    println!("discontinuities {}", report.discontinuities);
    let metadata = vec![
        format!("tool ikforge {TOOL_VERSION}"),
        format!("chain {}", chain.name()),
        format!("seed {}", args.solver.seed),
        format!(
            "config command=traj method={} waypoints={} pos_threshold={} ori_threshold={} {}",
            args.method.name(),
            dataset.len(),
            args.pos_threshold,
            args.ori_threshold,
            args.solver.describe()
        ),
    ];
    write_or_print(&render_report(&report, args.format, &metadata), &args.out)
}
