//! `targetrate` command-line front end.
//!
//! Exit status is 0 on success, 1 on invalid input (one-line diagnostic on
//! stderr naming the offending field) and 2 on numerical failure.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use targetrate::experiments::{self, Strategy};
use targetrate::fading::{db_to_linear, FadingConfig};
use targetrate::model::{default_channels, ChannelSet, Problem, DEFAULT_EPSILON};
use targetrate::{oracle, solver, Error, Result};

use report::{Format, SolutionDocument};

#[derive(Debug, Parser)]
#[command(name = "targetrate", version, about = "Target-rate power allocation over parallel Gaussian channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance and print the allocation.
    Solve(SolveArgs),
    /// Sweep the power budget for every strategy; writes sweep.csv.
    Sweep(SweepArgs),
    /// Deviation statistics over Rayleigh realizations; writes cdf_<strategy>.csv.
    Montecarlo(MonteCarloArgs),
    /// Mean objective versus mean SNR; writes snr.csv.
    Snr(SnrArgs),
    /// Solve timings and warm-start iteration counts; writes timing.csv and warmstart.csv.
    Bench(BenchArgs),
    /// Sample the total-power curve S(lambda); writes dual_curve.csv.
    Dualcurve(DualCurveArgs),
    /// Heterogeneous-target scenario at budgets 5 and 15; writes hetero.csv.
    Hetero(HeteroArgs),
    /// Check the optimality conditions of a solve output.
    Certify(CertifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    TargetRate,
    Waterfilling,
    Uniform,
    ProportionalFairness,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::TargetRate => Strategy::TargetRate,
            StrategyArg::Waterfilling => Strategy::Waterfilling,
            StrategyArg::Uniform => Strategy::Uniform,
            StrategyArg::ProportionalFairness => Strategy::ProportionalFairness,
        }
    }
}

/// Channel description shared by the instance-based subcommands. Without
/// `--input`, `--gains` or `--gains-db` the default eight-channel instance is used.
#[derive(Debug, Args)]
struct ChannelArgs {
    /// Problem-instance JSON file.
    #[arg(long, conflicts_with_all = ["gains", "gains_db"])]
    input: Option<PathBuf>,
    /// Gain-to-noise ratios, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, conflicts_with = "gains_db")]
    gains: Option<Vec<f64>>,
    /// Gain-to-noise ratios in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    gains_db: Option<Vec<f64>>,
    /// Target spectral efficiency for every channel (bits/s/Hz).
    #[arg(long, allow_negative_numbers = true, conflicts_with = "targets")]
    target: Option<f64>,
    /// Per-channel targets, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    targets: Option<Vec<f64>>,
    /// Per-channel weights, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct BudgetArgs {
    /// Total power budget.
    #[arg(long = "ptot", allow_negative_numbers = true)]
    p_tot: Option<f64>,
    /// Bisection tolerance on the total power.
    #[arg(long, allow_negative_numbers = true)]
    epsilon: Option<f64>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Directory for CSV output (created if missing).
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    channels: ChannelArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, value_enum, default_value = "target-rate")]
    strategy: StrategyArg,
    #[arg(long, value_enum, default_value = "human")]
    format: Format,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    channels: ChannelArgs,
    /// Ascending budgets.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "5,10,15,20,25")]
    grid: Vec<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct FadingArgs {
    /// Channels per realization.
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 3.0)]
    target: f64,
    #[arg(long = "ptot", allow_negative_numbers = true, default_value_t = 10.0)]
    p_tot: f64,
}

#[derive(Debug, Args)]
struct MonteCarloArgs {
    #[command(flatten)]
    fading: FadingArgs,
    /// Mean SNR in dB.
    #[arg(long, allow_negative_numbers = true, default_value_t = 10.0)]
    snr_db: f64,
    #[arg(long, default_value_t = 1000)]
    realizations: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SnrArgs {
    #[command(flatten)]
    fading: FadingArgs,
    /// Mean SNR grid in dB.
    #[arg(
        long,
        value_delimiter = ',',
        allow_negative_numbers = true,
        default_value = "0,2,4,6,8,10,12,14,16,18,20"
    )]
    snr_grid: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    realizations: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Channel counts to time.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64,128,256,512,1024")]
    ns: Vec<usize>,
    /// Timed runs per channel count.
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Channel count for the warm-start comparison.
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Perturbation steps for the warm-start comparison.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Log-normal gain perturbation per step.
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct DualCurveArgs {
    #[command(flatten)]
    channels: ChannelArgs,
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct HeteroArgs {
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, value_enum, default_value = "human")]
    format: Format,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    /// JSON document written by `solve --format json`. Without it the
    /// instance given by the other flags is solved and then certified.
    #[arg(long, conflicts_with_all = ["input", "gains", "gains_db"])]
    solution: Option<PathBuf>,
    #[command(flatten)]
    channels: ChannelArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    /// Residual below which the point counts as optimal.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, value_enum, default_value = "human")]
    format: Format,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            let text = e.render().to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

/// Writes to stdout. A closed pipe (`targetrate ... | head`) ends the process
/// quietly instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        if let Err(e) = write!(std::io::stdout(), $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
            return Err(e.into());
        }
    }};
}

macro_rules! outln {
    ($($arg:tt)*) => {{
        out!($($arg)*);
        out!("\n");
    }};
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Solve(args) => cmd_solve(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Montecarlo(args) => cmd_montecarlo(args),
        Command::Snr(args) => cmd_snr(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Dualcurve(args) => cmd_dualcurve(args),
        Command::Hetero(args) => cmd_hetero(args),
        Command::Certify(args) => cmd_certify(args),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::domain("input", format!("cannot read {}: {e}", path.display())))
}

impl ChannelArgs {
    fn has_inline(&self) -> bool {
        self.gains.is_some() || self.gains_db.is_some()
    }

    /// Channel set from inline flags, or `None` when no gains were given.
    fn inline_channels(&self) -> Result<Option<ChannelSet>> {
        let gains = match (&self.gains, &self.gains_db) {
            (Some(g), _) => g.clone(),
            (None, Some(db)) => {
                if db.iter().any(|x| !x.is_finite()) {
                    return Err(Error::domain("gains_db", "values must be finite"));
                }
                db.iter().map(|&x| db_to_linear(x)).collect()
            }
            (None, None) => {
                if self.target.is_some() || self.targets.is_some() || self.weights.is_some() {
                    return Err(Error::domain("gains", "targets or weights given without --gains"));
                }
                return Ok(None);
            }
        };
        let targets = match (&self.targets, self.target) {
            (Some(t), _) => t.clone(),
            (None, Some(t)) => vec![t; gains.len()],
            (None, None) => return Err(Error::domain("target", "--target or --targets is required with --gains")),
        };
        let mut channels = ChannelSet::new(gains, targets)?;
        if let Some(w) = &self.weights {
            channels = channels.with_weights(w.clone())?;
        }
        Ok(Some(channels))
    }

    fn channel_set(&self) -> Result<ChannelSet> {
        if let Some(path) = &self.input {
            return Ok(Problem::from_json_str(&read_text(path)?)?.channels);
        }
        Ok(self.inline_channels()?.unwrap_or_else(default_channels))
    }

    fn problem(&self, budget: &BudgetArgs) -> Result<Problem> {
        if let Some(path) = &self.input {
            let mut problem = Problem::from_json_str(&read_text(path)?)?;
            if budget.p_tot.is_some() || budget.epsilon.is_some() {
                problem = Problem::with_epsilon(
                    problem.channels,
                    budget.p_tot.unwrap_or(problem.p_tot),
                    budget.epsilon.unwrap_or(problem.epsilon),
                )?;
            }
            return Ok(problem);
        }
        if !self.has_inline() {
            return Err(Error::domain("gains", "give --input, --gains or --gains-db"));
        }
        let channels = self.inline_channels()?.expect("inline gains present");
        let p_tot = budget.p_tot.ok_or_else(|| Error::domain("p_tot", "--ptot is required"))?;
        Problem::with_epsilon(channels, p_tot, budget.epsilon.unwrap_or(DEFAULT_EPSILON))
    }
}

fn allocate(strategy: Strategy, problem: &Problem) -> Result<targetrate::Allocation> {
    if strategy == Strategy::TargetRate && problem.channels.weights().is_some() {
        solver::allocate_weighted(problem)
    } else {
        strategy.allocate(problem)
    }
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let problem = args.channels.problem(&args.budget)?;
    let strategy = Strategy::from(args.strategy);
    let allocation = allocate(strategy, &problem)?;
    let doc = SolutionDocument::new(strategy, &problem, allocation);
    out!("{}", report::solution(&doc, args.format));
    Ok(())
}

fn output_dir(args: &OutputArgs) -> Result<&Path> {
    fs::create_dir_all(&args.output_dir)
        .map_err(|e| Error::domain("output_dir", format!("cannot create {}: {e}", args.output_dir.display())))?;
    Ok(&args.output_dir)
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let channels = args.channels.channel_set()?;
    let sweep = experiments::budget_sweep(&channels.without_weights(), &args.grid)?;
    let path = output_dir(&args.output)?.join("sweep.csv");
    experiments::write_sweep_csv(&path, &sweep)?;
    out!("{}", report::sweep(&sweep));
    outln!("wrote {}", path.display());
    Ok(())
}

fn fading_config(args: &FadingArgs, snr_db: f64, realizations: usize) -> Result<FadingConfig> {
    FadingConfig::new(args.n, snr_db, args.seed, realizations)
}

fn cmd_montecarlo(args: MonteCarloArgs) -> Result<()> {
    let config = fading_config(&args.fading, args.snr_db, args.realizations)?;
    let summaries = experiments::monte_carlo(&config, args.fading.target, args.fading.p_tot)?;
    let dir = output_dir(&args.output)?;
    experiments::write_cdf_csvs(dir, &summaries)?;
    out!("{}", report::monte_carlo(&summaries));
    outln!("wrote cdf_<strategy>.csv to {}", dir.display());
    Ok(())
}

fn cmd_snr(args: SnrArgs) -> Result<()> {
    let config = fading_config(&args.fading, 0.0, args.realizations)?;
    let result = experiments::snr_sensitivity(&args.snr_grid, &config, args.fading.target, args.fading.p_tot)?;
    let path = output_dir(&args.output)?.join("snr.csv");
    experiments::write_snr_csv(&path, &result)?;
    out!("{}", report::snr(&result));
    outln!("wrote {}", path.display());
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let rows = experiments::timing_bench(&args.ns, args.runs, args.seed)?;
    let warm = experiments::warm_start_experiment(args.n, args.steps, args.sigma, args.seed)?;
    let dir = output_dir(&args.output)?;
    experiments::write_timing_csv(dir.join("timing.csv"), &rows)?;
    experiments::write_warmstart_csv(dir.join("warmstart.csv"), &warm)?;
    out!("{}", report::timing(&rows, &warm));
    outln!("wrote timing.csv and warmstart.csv to {}", dir.display());
    Ok(())
}

fn cmd_dualcurve(args: DualCurveArgs) -> Result<()> {
    let channels = args.channels.channel_set()?.without_weights();
    let points = experiments::dual_curve_samples(&channels, args.points)?;
    let path = output_dir(&args.output)?.join("dual_curve.csv");
    experiments::write_dual_curve_csv(&path, &points)?;
    outln!("sum of caps {:.6}, {} samples", channels.caps_sum(), points.len());
    outln!("wrote {}", path.display());
    Ok(())
}

fn cmd_hetero(args: HeteroArgs) -> Result<()> {
    let demo = experiments::heterogeneous_demo()?;
    let path = output_dir(&args.output)?.join("hetero.csv");
    experiments::write_hetero_csv(&path, &demo)?;
    out!("{}", report::hetero(&demo, args.format));
    if args.format == Format::Human {
        outln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_certify(args: CertifyArgs) -> Result<()> {
    let doc = match &args.solution {
        Some(path) => {
            let doc: SolutionDocument = serde_json::from_str(&read_text(path)?)
                .map_err(|e| Error::domain("solution", format!("malformed solution document: {e}")))?;
            doc
        }
        None => {
            let problem = args.channels.problem(&args.budget)?;
            let allocation = allocate(Strategy::TargetRate, &problem)?;
            SolutionDocument::new(Strategy::TargetRate, &problem, allocation)
        }
    };
    let problem = doc.problem.clone().into_problem()?;
    let report = if problem.channels.weights().is_some() {
        oracle::certify_weighted(&problem, &doc.allocation)?
    } else {
        oracle::certify(&problem, &doc.allocation)?
    };
    out!("{}", report::kkt(&report, args.tolerance, args.format));
    Ok(())
}
