//! `mbpcn`: command-line driver for the doubly stabilized Crank-Nicolson
//! Allen-Cahn solver.

use std::cell::RefCell;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mbpcn_core::config::{parse_config, RunConfig, StepMode};
use mbpcn_core::experiments::{
    bubble_benchmark_with, coarsening_benchmark_with, convergence_study, init_trig, BubbleConfig,
    CoarseningConfig, ConvergenceConfig, MeshKind, S2Choice, Stepping,
};
use mbpcn_core::mobility::{check_stabilized_bound, s1_lower_bound, s2_lower_bound, tau_max_conditional};
use mbpcn_core::stepping::{run_adaptive_with, run_with, Observer};
use mbpcn_core::{io, oracle};
use mbpcn_core::{AdaptiveParams, CellField, Domain2D, Error, Mobility, MobilityModel, RunOutcome, RunRecord, SchemeParams, StepRow};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;
const EXIT_MBP: u8 = 4;
const EXIT_BLOW_UP: u8 = 5;

#[derive(Parser)]
#[command(name = "mbpcn", version, about = "Bound-preserving Crank-Nicolson solver for the Allen-Cahn equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a config file and/or `--set` overrides.
    Run(RunArgs),
    /// Temporal convergence ladder against step-doubled references.
    Converge(ConvergeArgs),
    /// Grain coarsening from random data with degenerate mobility.
    Coarsen(CoarsenArgs),
    /// Shrinking bubble with adaptive stepping and radius-law comparison.
    Bubble(BubbleArgs),
    /// Cross-check the matrix-free kernels against dense assembly.
    Verify(VerifyArgs),
    /// Print the stabilizer and step-size bounds for given parameters.
    Bounds(BoundsArgs),
}

#[derive(Args, Default)]
struct OutputArgs {
    /// Timeseries CSV path.
    #[arg(long)]
    timeseries: Option<PathBuf>,
    /// Directory for field snapshots.
    #[arg(long)]
    snapshot_dir: Option<PathBuf>,
    /// Snapshot every this many steps (0: initial and final only).
    #[arg(long, default_value_t = 0)]
    snapshot_every: usize,
    /// Also write raw little-endian f64 snapshots.
    #[arg(long)]
    binary: bool,
    /// Stop at the first step whose sup-norm exceeds 1 + 1e-8 (exit code 4).
    #[arg(long)]
    strict_mbp: bool,
    /// Print every step row to stderr.
    #[arg(long)]
    progress: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Config file (`key = value` lines, `#` comments).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    strict_mbp: bool,
    #[arg(long)]
    binary: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    echo: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MobilityArg {
    Constant,
    Degenerate,
}

impl MobilityArg {
    fn model(self) -> Mobility {
        match self {
            MobilityArg::Constant => Mobility::Constant(1.0),
            MobilityArg::Degenerate => Mobility::Degenerate,
        }
    }
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long, value_enum, default_value = "constant")]
    mobility: MobilityArg,
    /// Use seeded perturbed meshes instead of uniform ones.
    #[arg(long)]
    perturbed: bool,
    #[arg(long, default_value_t = 0.4)]
    amplitude: f64,
    #[arg(long, default_value_t = 20230917)]
    seed: u64,
    #[arg(long, default_value_t = 256)]
    cells: usize,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, default_value_t = 2.0)]
    s1: f64,
    #[arg(long, default_value_t = 2.0)]
    s2: f64,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, value_delimiter = ',', default_value = "10,20,40,80,160")]
    ladder: Vec<usize>,
    /// Use 1024 cells per side.
    #[arg(long)]
    full_scale: bool,
    /// Convergence table CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CoarsenArgs {
    /// Use S2 = 0 and tau = 2 to reproduce the blow-up.
    #[arg(long)]
    unstable: bool,
    /// Energy-variation adaptive stepping.
    #[arg(long)]
    adaptive: bool,
    /// Long horizons: 3000 (uniform) or 150000 (adaptive).
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    s2: Option<f64>,
    #[arg(long, default_value_t = 256)]
    cells: usize,
    #[arg(long, default_value_t = 20240601)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    tau_min: f64,
    #[arg(long, default_value_t = 0.1)]
    tau_max: f64,
    #[arg(long, default_value_t = 1e5)]
    alpha: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct BubbleArgs {
    #[arg(long, default_value_t = 256)]
    cells: usize,
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, default_value_t = 0.2)]
    radius: f64,
    #[arg(long, default_value_t = 300.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1.0)]
    sample_every: f64,
    /// Use 512 cells per side.
    #[arg(long)]
    full_scale: bool,
    /// Radius series CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 97)]
    seed: u64,
    #[arg(long, default_value_t = 70)]
    trials: usize,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, value_enum, default_value = "degenerate")]
    mobility: MobilityArg,
    /// Interface width; defaults to the grid spacing.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 256)]
    cells: usize,
    #[arg(long, default_value_t = 1.0)]
    side_length: f64,
    /// First stabilizer; defaults to its computed lower bound.
    #[arg(long)]
    s1: Option<f64>,
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Mbp { step: usize, t: f64, sup_norm: f64 },
    BlowUp(String),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(
                Error::Config { .. } | Error::Parse { .. } | Error::InvalidParameter { .. } | Error::InvalidDomain(_),
            ) => EXIT_CONFIG,
            Failure::Core(Error::NonConvergence { .. }) => EXIT_NONCONVERGENCE,
            Failure::Core(_) | Failure::Checks => EXIT_FAILURE,
            Failure::Mbp { .. } => EXIT_MBP,
            Failure::BlowUp(_) => EXIT_BLOW_UP,
        }
    }
}

type CliResult = Result<(), Failure>;

/// Writes the timeseries and snapshots requested by `out` while a run progresses.
struct Outputs<'a> {
    out: &'a OutputArgs,
    error: RefCell<Option<Error>>,
}

impl<'a> Outputs<'a> {
    fn new(out: &'a OutputArgs) -> Result<Self, Error> {
        if let Some(dir) = &out.snapshot_dir {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self {
            out,
            error: RefCell::new(None),
        })
    }

    fn snapshot(&self, step: usize, t: f64, state: &CellField) -> Result<(), Error> {
        let Some(dir) = &self.out.snapshot_dir else {
            return Ok(());
        };
        io::write_snapshot(state, t, &dir.join(format!("snapshot_{step:08}.csv")))?;
        if self.out.binary {
            io::write_snapshot_binary(state, &dir.join(format!("snapshot_{step:08}.bin")))?;
        }
        Ok(())
    }

    fn observe(&self, row: &StepRow, state: &CellField) -> ControlFlow<()> {
        if self.out.progress {
            eprintln!(
                "step={} t={:?} tau={:?} sup={:?} energy={:?} iters={}/{}",
                row.step, row.t, row.tau, row.sup_norm, row.energy, row.pred_iters, row.corr_iters
            );
        }
        let every = self.out.snapshot_every;
        if row.step == 0 || (every > 0 && row.step.is_multiple_of(every)) {
            if let Err(e) = self.snapshot(row.step, row.t, state) {
                *self.error.borrow_mut() = Some(e);
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    }

    fn finish(self, record: &RunRecord) -> CliResult {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        if let Some(last) = record.rows.last() {
            let every = self.out.snapshot_every;
            if last.step != 0 && (every == 0 || last.step % every != 0) {
                self.snapshot(last.step, last.t, &record.terminal)?;
            }
        }
        if let Some(p) = &self.out.timeseries {
            io::write_timeseries(&record.rows, p)?;
        }
        summarize(record)
    }
}

fn summarize(record: &RunRecord) -> CliResult {
    let last = record.rows.last().expect("initial row is always present");
    println!(
        "steps={} t={:?} max_sup_norm={:?} energy0={:?} energy={:?}",
        last.step,
        last.t,
        record.max_sup_norm(),
        record.rows[0].energy,
        last.energy
    );
    match record.outcome {
        RunOutcome::Completed | RunOutcome::Stopped { .. } => Ok(()),
        RunOutcome::MbpViolation { step, t, sup_norm } => Err(Failure::Mbp { step, t, sup_norm }),
        RunOutcome::BlowUp { step, t, cause } => Err(Failure::BlowUp(format!("step {step} at t={t:?} ({cause:?})"))),
    }
}

fn run_config(args: &RunArgs) -> CliResult {
    let mut sets = args.sets.clone();
    if args.strict_mbp {
        sets.push("strict_mbp=true".into());
    }
    if args.binary {
        sets.push("snapshot_binary=true".into());
    }
    let cfg: RunConfig = parse_config(args.config.as_deref(), &sets).map_err(|e| match e {
        Error::Io(io) => Error::Config {
            key: "config".into(),
            reason: io.to_string(),
        },
        other => other,
    })?;
    print!("{}", cfg.echo());
    if args.echo {
        return Ok(());
    }
    let out = OutputArgs {
        timeseries: cfg.outputs.timeseries.clone(),
        snapshot_dir: cfg.outputs.snapshot_dir.clone(),
        snapshot_every: cfg.outputs.snapshot_every,
        binary: cfg.outputs.snapshot_binary,
        strict_mbp: cfg.strict_mbp,
        progress: false,
    };
    let outputs = Outputs::new(&out)?;
    let initial = cfg.initial_state()?;
    let opts = cfg.run_options();
    let observer: &mut Observer<'_> = &mut |row, state| outputs.observe(row, state);
    let record = match (cfg.stepping, cfg.time_grid()?) {
        (StepMode::Adaptive(ap), _) => {
            run_adaptive_with(&initial, cfg.horizon, &ap, &cfg.params, &cfg.mobility, &opts, observer)?
        }
        (_, Some(grid)) => run_with(&initial, &grid, &cfg.params, &cfg.mobility, &opts, observer)?,
        (_, None) => unreachable!("prescribed stepping always has a grid"),
    };
    outputs.finish(&record)
}

fn converge(args: &ConvergeArgs) -> CliResult {
    let cells = if args.full_scale { 1024 } else { args.cells };
    let domain = Domain2D::new(1.0, cells)?;
    let cfg = ConvergenceConfig {
        initial: init_trig(domain),
        mobility: args.mobility.model(),
        params: SchemeParams::new(args.eps, args.s1, args.s2)?,
        horizon: args.horizon,
        ladder: args.ladder.clone(),
        mesh: if args.perturbed {
            MeshKind::Perturbed {
                amplitude: args.amplitude,
                seed: args.seed,
            }
        } else {
            MeshKind::Uniform
        },
    };
    let study = convergence_study(&cfg)?;
    println!("{}", io::CONVERGENCE_HEADER);
    for r in &study.rows {
        let fmt = |o: Option<f64>| o.map(|v| format!("{v:.4}")).unwrap_or_default();
        println!(
            "{},{:.4},{:.6e},{:.6e},{},{}",
            r.n_steps,
            r.max_ratio,
            r.err_h1,
            r.err_sup,
            fmt(r.order_h1),
            fmt(r.order_sup)
        );
    }
    if let Some(p) = &args.out {
        io::write_convergence(&study.rows, p)?;
    }
    Ok(())
}

fn coarsen(args: &CoarsenArgs) -> CliResult {
    let mut cfg = if args.unstable {
        CoarseningConfig::unstable()
    } else {
        CoarseningConfig::default()
    };
    cfg.cells = args.cells;
    cfg.seed = args.seed;
    cfg.options.strict_mbp = args.output.strict_mbp;
    if let Some(s2) = args.s2 {
        cfg.s2 = S2Choice::Value(s2);
    }
    if args.adaptive {
        cfg.stepping = Stepping::Adaptive(AdaptiveParams::new(args.tau_min, args.tau_max, args.alpha)?);
        cfg.horizon = if args.full_scale { 150_000.0 } else { 100.0 };
    } else {
        if let Some(tau) = args.tau {
            cfg.stepping = Stepping::Uniform { tau };
        }
        if args.full_scale {
            cfg.horizon = 3000.0;
        }
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    let p = cfg.params()?;
    println!("eps={:?} s1={:?} s2={:?} stepping={:?} horizon={:?}", p.eps, p.s1, p.s2, cfg.stepping, cfg.horizon);
    let outputs = Outputs::new(&args.output)?;
    let record = coarsening_benchmark_with(&cfg, &mut |row, state| outputs.observe(row, state))?;
    outputs.finish(&record)
}

fn bubble(args: &BubbleArgs) -> CliResult {
    let cfg = BubbleConfig {
        cells: if args.full_scale { 512 } else { args.cells },
        eps: args.eps,
        radius: args.radius,
        horizon: args.horizon,
        sample_every: args.sample_every,
        ..BubbleConfig::default()
    };
    let outputs = Outputs::new(&args.output)?;
    let report = bubble_benchmark_with(&cfg, &mut |row, state| outputs.observe(row, state))?;
    println!("vanish_time={:?}", report.vanish_time);
    if let Some(p) = &args.out {
        io::write_bubble(&report, p)?;
    }
    let max_dev = report
        .samples
        .iter()
        .filter_map(|s| s.predicted.map(|p| (s.measured - p).abs()))
        .fold(0.0, f64::max);
    println!("max_radius_deviation={max_dev:?}");
    outputs.finish(&report.record)
}

fn verify(args: &VerifyArgs) -> CliResult {
    let report = oracle::verify_all(args.seed, args.trials)?;
    for c in &report.checks {
        println!(
            "{} {}: observed {:.3e}, tolerance {:.1e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.observed,
            c.tolerance
        );
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn bounds(args: &BoundsArgs) -> CliResult {
    let model = args.mobility.model();
    let d = Domain2D::new(args.side_length, args.cells)?;
    let h = d.spacing();
    let eps = args.eps.unwrap_or(h);
    let s1_bound = s1_lower_bound(&model)?;
    let s1 = args.s1.unwrap_or(s1_bound);
    let l = model.max_on_unit_interval();
    let check = check_stabilized_bound(&model, s1);
    println!("mobility={} L={l:?} eps={eps:?} h={h:?}", model.name());
    println!("s1_lower_bound={s1_bound:?}");
    println!("s1={s1:?} stabilizer_check={} margin={:?}", if check.passed { "pass" } else { "fail" }, check.margin());
    println!("s2_lower_bound={:?}", s2_lower_bound(s1, l, eps, h));
    println!("tau_max_conditional={:?}", tau_max_conditional(s1, l, eps, h));
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("MBPCN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        Failure::Core(Error::Config {
            key: "MBPCN_THREADS".into(),
            reason: format!("expected a nonnegative integer, got `{raw}`"),
        })
    })?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Core(Error::Config {
                key: "MBPCN_THREADS".into(),
                reason: e.to_string(),
            }))?;
    }
    Ok(())
}

fn describe(f: &Failure) -> String {
    match f {
        Failure::Core(e) => e.to_string(),
        Failure::Mbp { step, t, sup_norm } => {
            format!("bound violated at step {step}, t={t:?}: sup-norm {sup_norm:?}")
        }
        Failure::BlowUp(s) => format!("blow-up detected at {s}"),
        Failure::Checks => "verification checks failed".into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Run(a) => run_config(a),
        Command::Converge(a) => converge(a),
        Command::Coarsen(a) => coarsen(a),
        Command::Bubble(a) => bubble(a),
        Command::Verify(a) => verify(a),
        Command::Bounds(a) => bounds(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mbpcn: {}", describe(&f));
            ExitCode::from(f.exit_code())
        }
    }
}
