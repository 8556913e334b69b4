//! The `qsw` command-line interface.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::ffi::OsString;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use qsw_core::backtest::{rebalance_schedule, BacktestConfig, RebalanceRule, TurnoverConvention};
use qsw_core::engine::{build_kraus, evolve_to_stationary, write_trace_csv, DensityMatrix};
use qsw_core::experiment::{
    run_grid, run_robustness, run_scenarios, run_single, ExperimentConfig, GridSpec, RobustnessSpec, SweepOutput,
    DEFAULT_GRID_VALUES, DEFAULT_OMEGAS,
};
use qsw_core::graph::{build_graph, QswParams, UpdateMode};
use qsw_core::market_data::{compute_returns, compute_stats, load_prices, ReturnMode, ReturnsPanel};
use qsw_core::report::{emit_report, read_results, summarize_records, write_boxplot, write_summary, ReportOptions};
use qsw_core::synth::{synthesize_universe, SynthSpec};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_SWEEP_ERRORS: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "qsw", version, about = "Quantum stochastic walk portfolio experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic price panel with sector structure.
    Synth(SynthArgs),
    /// Per-asset statistics over the training window ending at --end.
    Stats(CommonArgs),
    /// One QSW solve on the latest training window; prints the weights.
    Optimize(OptimizeArgs),
    /// Backtest one QSW configuration against the MPT and index benchmarks.
    Backtest(SweepArgs),
    /// The six preset scenarios for every omega, plus both benchmarks.
    Scenarios(ScenarioArgs),
    /// Full hyper-parameter grid.
    Grid(GridArgs),
    /// Grid plus benchmarks on random asset subsets.
    Robustness(RobustnessArgs),
    /// Rebuild summary files from an existing results.csv.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Prices CSV (date column followed by one column per ticker).
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Training window length in trading days.
    #[arg(long, default_value_t = 252)]
    train_days: usize,
    /// First allocation date (YYYY-MM-DD); defaults to the first rebalance boundary with enough history.
    #[arg(long)]
    start: Option<NaiveDate>,
    /// Last date of the panel to use.
    #[arg(long)]
    end: Option<NaiveDate>,
    /// Preference for high-Sharpe destinations.
    #[arg(long, default_value_t = 10.0)]
    alpha: f64,
    /// Penalty on moves between covarying assets.
    #[arg(long, default_value_t = 10.0)]
    beta: f64,
    /// Holding (self-loop) preference.
    #[arg(long = "lambda", default_value_t = 10.0)]
    lambda_hold: f64,
    /// Classical share of the walk, in [0, 1].
    #[arg(long, default_value_t = 0.2)]
    omega: f64,
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.9)]
    damping: f64,
    #[arg(long, default_value_t = 100.0)]
    gamma1: f64,
    #[arg(long, default_value_t = 100.0)]
    gamma2: f64,
    /// Update rule: alg, eq or alg-literal.
    #[arg(long, default_value = "alg")]
    mode: UpdateMode,
    /// Turnover convention: paper or drift.
    #[arg(long, default_value = "paper")]
    turnover: TurnoverConvention,
    /// Rebalance calendar: quarterly or monthly.
    #[arg(long, default_value = "quarterly")]
    rebalance: RebalanceRule,
    /// Return definition used for statistics: log or simple.
    #[arg(long, default_value = "log")]
    returns: ReturnMode,
    /// Round-trip cost in basis points per 100% turnover.
    #[arg(long, default_value_t = 20.0)]
    cost_bp: f64,
    /// Seed for robustness subsets.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Minimum valid prices per ticker (default: train_days + 1).
    #[arg(long)]
    min_history: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    assets: usize,
    #[arg(long, default_value_t = 5)]
    sectors: usize,
    /// Price rows to generate.
    #[arg(long, default_value_t = 252 * 7)]
    days: usize,
    #[arg(long, default_value_t = 0.6)]
    intra: f64,
    #[arg(long, default_value_t = 0.15)]
    inter: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "2016-01-04")]
    start: NaiveDate,
    /// Output directory; the panel is written to prices.csv inside it.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Also write the per-iteration convergence trace.
    #[arg(long)]
    trace: bool,
    /// Also write the graph matrices (W, P, G, H, normalized covariance).
    #[arg(long)]
    dump_graph: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Record wall time per run (output is then not reproducible).
    #[arg(long)]
    timing: bool,
    /// Write box-plot and equity-curve data files.
    #[arg(long)]
    plots: bool,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_OMEGAS)]
    omegas: Vec<f64>,
}

#[derive(Args, Debug)]
struct GridValues {
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GRID_VALUES)]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GRID_VALUES)]
    betas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GRID_VALUES)]
    lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_OMEGAS)]
    omegas: Vec<f64>,
}

impl GridValues {
    fn spec(&self) -> GridSpec {
        GridSpec {
            alpha_values: self.alphas.clone(),
            beta_values: self.betas.clone(),
            lambda_values: self.lambdas.clone(),
            omega_values: self.omegas.clone(),
        }
    }
}

#[derive(Args, Debug)]
struct GridArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    #[command(flatten)]
    grid: GridValues,
}

#[derive(Args, Debug)]
struct RobustnessArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    #[command(flatten)]
    grid: GridValues,
    #[arg(long, default_value_t = 50)]
    draws: usize,
    #[arg(long, default_value_t = 100)]
    subset: usize,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// An existing results.csv.
    #[arg(long)]
    results: PathBuf,
    /// Output directory (defaults to the directory of --results).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plots: bool,
}

/// A failure carrying its process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<qsw_core::Error> for Failure {
    fn from(e: qsw_core::Error) -> Self {
        let code = match e {
            qsw_core::Error::Io(_) => EXIT_DATA,
            ref e if e.is_data_error() => EXIT_DATA,
            _ => EXIT_USAGE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: EXIT_DATA,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<u8, Failure>;

impl CommonArgs {
    fn params(&self) -> QswParams {
        QswParams {
            alpha: self.alpha,
            beta: self.beta,
            lambda_hold: self.lambda_hold,
            omega: self.omega,
            damping: self.damping,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            dt: self.dt,
            tol: self.tol,
            max_iters: self.max_iters,
            update_mode: self.mode,
        }
    }

    fn backtest(&self) -> BacktestConfig {
        BacktestConfig {
            train_days: self.train_days,
            rebalance: self.rebalance,
            start: self.start,
            end: self.end,
            cost_bp_per_100_turnover: self.cost_bp,
            turnover_convention: self.turnover,
        }
    }

    fn experiment(&self, timing: bool, curves: bool) -> ExperimentConfig {
        ExperimentConfig {
            backtest: self.backtest(),
            qsw: self.params(),
            rf: 0.0,
            workers: self.workers,
            timing,
            keep_curves: curves,
        }
    }

    fn load(&self) -> Result<ReturnsPanel, Failure> {
        let path = self.prices.as_ref().ok_or_else(|| Failure::usage("--prices is required"))?;
        let min_history = self.min_history.unwrap_or(self.train_days + 1);
        let prices = load_prices(path, min_history).map_err(|e| {
            let mut f = Failure::from(e);
            f.message = format!("{}: {}", path.display(), f.message);
            f
        })?;
        Ok(compute_returns(&prices, self.returns)?)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("qsw-out"))
    }

    /// Training rows ending at the last row on or before --end.
    fn latest_window(&self, returns: &ReturnsPanel) -> Result<std::ops::Range<usize>, Failure> {
        let end = match self.end {
            Some(d) => returns.dates.iter().rposition(|x| *x <= d).map(|r| r + 1).unwrap_or(0),
            None => returns.n_rows(),
        };
        if self.train_days < 2 {
            return Err(Failure::usage("--train-days must be at least 2"));
        }
        if end < self.train_days {
            return Err(Failure {
                code: EXIT_DATA,
                message: format!("{end} return rows available, {} needed", self.train_days),
            });
        }
        Ok(end - self.train_days..end)
    }
}

fn create(dir: &Path, name: &str) -> Result<File, Failure> {
    fs::create_dir_all(dir)?;
    Ok(File::create(dir.join(name))?)
}

fn synth(args: &SynthArgs) -> Outcome {
    let spec = SynthSpec {
        n_assets: args.assets,
        n_sectors: args.sectors,
        days: args.days,
        intra_sector_corr: args.intra,
        inter_sector_corr: args.inter,
        seed: args.seed,
        start: args.start,
        ..SynthSpec::default()
    };
    let panel = synthesize_universe(&spec)?;
    fs::create_dir_all(&args.out)?;
    let path = args.out.join("prices.csv");
    panel.save(&path)?;
    eprintln!("wrote {} ({} rows x {} assets)", path.display(), panel.n_rows(), panel.n_assets());
    Ok(0)
}

fn stats(args: &CommonArgs) -> Outcome {
    let returns = args.load()?;
    let window = args.latest_window(&returns)?;
    let stats = compute_stats(&returns, window)?;
    match &args.out {
        Some(dir) => stats.write_csv(&returns.tickers, create(dir, "stats.csv")?)?,
        None => stats.write_csv(&returns.tickers, io::stdout().lock())?,
    }
    Ok(0)
}

fn optimize(args: &OptimizeArgs) -> Outcome {
    let common = &args.common;
    let returns = common.load()?;
    let window = common.latest_window(&returns)?;
    let stats = compute_stats(&returns, window)?;
    let params = common.params();
    let graph = build_graph(&stats, &params)?;
    let kraus = build_kraus(&graph, &params)?;
    let mut trace = Vec::new();
    let log = args.trace.then_some(&mut trace);
    let sol = evolve_to_stationary(&kraus, &params, DensityMatrix::maximally_mixed(graph.n()), log)?;

    let mut text = String::from("ticker,weight\n");
    for (t, w) in returns.tickers.iter().zip(sol.weights.iter()) {
        text.push_str(&format!("{t},{w}\n"));
    }
    io::stdout().write_all(text.as_bytes())?;
    eprintln!(
        "converged={} iterations={} final_delta={:e}",
        sol.converged, sol.iterations, sol.final_delta
    );
    if let Some(dir) = &common.out {
        create(dir, "weights.csv")?.write_all(text.as_bytes())?;
        if args.trace {
            write_trace_csv(&trace, create(dir, "trace.csv")?)?;
        }
        if args.dump_graph {
            graph.dump(create(dir, "graph.csv")?)?;
        }
    }
    Ok(0)
}

fn finish_sweep(out: &SweepOutput, dir: &Path, plots: bool, draws: Option<&[qsw_core::experiment::DrawSummary]>) -> Outcome {
    let options = ReportOptions {
        plots,
        curves: &out.curves,
        draws,
    };
    let written = emit_report(&out.records, dir, options)?;
    let errors = out.records.iter().filter(|r| r.is_error()).count();
    eprintln!("{} records ({} with errors)", out.records.len(), errors);
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(if errors > 0 { EXIT_SWEEP_ERRORS } else { 0 })
}

fn backtest(args: &SweepArgs) -> Outcome {
    let returns = args.common.load()?;
    let config = args.common.experiment(args.timing, args.plots);
    let out = run_single(&returns, &config)?;
    finish_sweep(&out, &args.common.out_dir(), args.plots, None)
}

fn scenarios(args: &ScenarioArgs) -> Outcome {
    let common = &args.sweep.common;
    let returns = common.load()?;
    let config = common.experiment(args.sweep.timing, args.sweep.plots);
    let out = run_scenarios(&returns, &config, &args.omegas)?;
    finish_sweep(&out, &common.out_dir(), args.sweep.plots, None)
}

fn grid(args: &GridArgs) -> Outcome {
    let common = &args.sweep.common;
    let returns = common.load()?;
    let config = common.experiment(args.sweep.timing, false);
    let spec = args.grid.spec();
    if spec.is_empty() {
        return Err(Failure::usage("grid has no points"));
    }
    let out = run_grid(&returns, &config, &spec)?;
    finish_sweep(&out, &common.out_dir(), args.sweep.plots, None)
}

fn robustness(args: &RobustnessArgs) -> Outcome {
    let common = &args.sweep.common;
    let returns = common.load()?;
    let config = common.experiment(args.sweep.timing, false);
    let spec = RobustnessSpec {
        n_draws: args.draws,
        subset_size: args.subset,
        seed: common.seed,
    };
    if args.draws == 0 || args.grid.spec().is_empty() {
        return Err(Failure::usage("robustness needs at least one draw and one grid point"));
    }
    // fail fast on a panel too short for any rebalance
    rebalance_schedule(&returns.dates, &config.backtest)?;
    let out = run_robustness(&returns, &config, &args.grid.spec(), &spec)?;
    eprintln!(
        "win rate vs MPT: sharpe {:.3}, efficiency {:.3}",
        out.sharpe_win_rate, out.efficiency_win_rate
    );
    finish_sweep(&out.sweep, &common.out_dir(), args.sweep.plots, Some(&out.draws))
}

fn report(args: &ReportArgs) -> Outcome {
    let records = read_results(File::open(&args.results)?)?;
    if records.is_empty() {
        return Err(Failure {
            code: EXIT_DATA,
            message: format!("{} has no records", args.results.display()),
        });
    }
    let dir = match &args.out {
        Some(d) => d.clone(),
        None => args.results.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let rows = summarize_records(&records);
    write_summary(&rows, create(&dir, "summary.csv")?)?;
    if args.plots {
        write_boxplot(&records, &rows, create(&dir, "boxplot.csv")?)?;
    }
    eprintln!("summarized {} records into {}", records.len(), dir.display());
    Ok(if records.iter().any(|r| r.is_error()) { EXIT_SWEEP_ERRORS } else { 0 })
}

/// Parses `args` (program name first) and runs the subcommand; returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Stats(a) => stats(a),
        Command::Optimize(a) => optimize(a),
        Command::Backtest(a) => backtest(a),
        Command::Scenarios(a) => scenarios(a),
        Command::Grid(a) => grid(a),
        Command::Robustness(a) => robustness(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
