//! Scenario, grid and robustness sweeps over the backtester.

use std::cell::Cell;
use std::ops::Range;
use std::time::Instant;

use chrono::NaiveDate;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::backtest::{
    rebalance_schedule, run_backtest, summarize, BacktestConfig, BacktestResult, MetricsReport, RebalanceContext,
};
use crate::bench::{mpt_max_sharpe, INDEX_TURNOVER_ANN};
use crate::engine::{build_kraus_with_spectrum, evolve_to_stationary, DensityMatrix, HamiltonianSpectrum, StationaryResult};
use crate::graph::{build_graph, build_hamiltonian, QswParams};
use crate::market_data::{compute_stats, AssetStats, ReturnsPanel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioPreset {
    pub name: &'static str,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_hold: f64,
}

const fn preset(name: &'static str, alpha: f64, beta: f64, lambda_hold: f64) -> ScenarioPreset {
    ScenarioPreset {
        name,
        alpha,
        beta,
        lambda_hold,
    }
}

pub const SCENARIOS: [ScenarioPreset; 6] = [
    preset("Ultra-Diversified", 1.0, 100.0, 10.0),
    preset("Moderate-Balanced", 10.0, 10.0, 10.0),
    preset("Stability-Focused", 1.0, 10.0, 100.0),
    preset("Balanced-Active", 10.0, 1.0, 100.0),
    preset("Sharpe-Maximizer", 100.0, 1.0, 10.0),
    preset("High-Activity", 100.0, 10.0, 1.0),
];

pub const DEFAULT_OMEGAS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
pub const DEFAULT_GRID_VALUES: [f64; 5] = [0.1, 5.0, 50.0, 100.0, 500.0];

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub alpha_values: Vec<f64>,
    pub beta_values: Vec<f64>,
    pub lambda_values: Vec<f64>,
    pub omega_values: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            alpha_values: DEFAULT_GRID_VALUES.to_vec(),
            beta_values: DEFAULT_GRID_VALUES.to_vec(),
            lambda_values: DEFAULT_GRID_VALUES.to_vec(),
            omega_values: DEFAULT_OMEGAS.to_vec(),
        }
    }
}

impl GridSpec {
    pub fn single(alpha: f64, beta: f64, lambda_hold: f64, omega: f64) -> Self {
        GridSpec {
            alpha_values: vec![alpha],
            beta_values: vec![beta],
            lambda_values: vec![lambda_hold],
            omega_values: vec![omega],
        }
    }

    pub fn len(&self) -> usize {
        self.alpha_values.len() * self.beta_values.len() * self.lambda_values.len() * self.omega_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(alpha, beta, lambda, omega)` with omega varying fastest.
    pub fn points(&self) -> Vec<[f64; 4]> {
        let mut out = Vec::with_capacity(self.len());
        for &a in &self.alpha_values {
            for &b in &self.beta_values {
                for &l in &self.lambda_values {
                    for &w in &self.omega_values {
                        out.push([a, b, l, w]);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RobustnessSpec {
    pub n_draws: usize,
    pub subset_size: usize,
    pub seed: u64,
}

impl Default for RobustnessSpec {
    fn default() -> Self {
        RobustnessSpec {
            n_draws: 50,
            subset_size: 100,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub backtest: BacktestConfig,
    /// Base solver settings; the preference weights and omega are overridden per run.
    pub qsw: QswParams,
    /// Risk-free rate per period for the max-Sharpe benchmark.
    pub rf: f64,
    /// Thread count for sweeps; 0 lets rayon decide.
    pub workers: usize,
    /// Record wall-clock time per run (makes output non-reproducible).
    pub timing: bool,
    /// Keep equity curves for plotting.
    pub keep_curves: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            backtest: BacktestConfig::default(),
            qsw: QswParams::default(),
            rf: 0.0,
            workers: 0,
            timing: false,
            keep_curves: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub run_id: usize,
    pub draw_id: Option<usize>,
    pub strategy: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub lambda_hold: Option<f64>,
    pub omega: Option<f64>,
    pub metrics: Option<MetricsReport>,
    pub converged: Option<bool>,
    /// Largest iteration count over the run's solves.
    pub iterations: Option<usize>,
    pub wall_ms: Option<f64>,
    pub error: Option<String>,
}

impl SweepRecord {
    fn blank(run_id: usize, draw_id: Option<usize>, strategy: String) -> Self {
        SweepRecord {
            run_id,
            draw_id,
            strategy,
            alpha: None,
            beta: None,
            lambda_hold: None,
            omega: None,
            metrics: None,
            converged: None,
            iterations: None,
            wall_ms: None,
            error: None,
        }
    }

    fn with_point(mut self, p: [f64; 4]) -> Self {
        self.alpha = Some(p[0]);
        self.beta = Some(p[1]);
        self.lambda_hold = Some(p[2]);
        self.omega = Some(p[3]);
        self
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquityCurve {
    pub run_id: usize,
    pub strategy: String,
    pub dates: Vec<NaiveDate>,
    pub equity: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub curves: Vec<EquityCurve>,
}

impl SweepOutput {
    pub fn has_errors(&self) -> bool {
        self.records.iter().any(SweepRecord::is_error)
    }
}

/// Training statistics and the Hamiltonian spectrum of one rebalance window.
#[derive(Debug, Clone)]
pub struct PreparedWindow {
    pub window: Range<usize>,
    pub stats: AssetStats,
    spectrum: std::result::Result<HamiltonianSpectrum, String>,
}

/// Everything about a panel that does not depend on the preference weights.
#[derive(Debug, Clone)]
pub struct PreparedPanel {
    pub returns: ReturnsPanel,
    pub windows: Vec<PreparedWindow>,
}

impl PreparedPanel {
    pub fn new(returns: ReturnsPanel, config: &ExperimentConfig) -> Result<Self> {
        config.qsw.validate()?;
        let schedule = rebalance_schedule(&returns.dates, &config.backtest)?;
        let train = config.backtest.train_days;
        let windows = schedule
            .rebalances
            .iter()
            .map(|&t| {
                let window = t - train..t;
                let stats = compute_stats(&returns, window.clone())?;
                let h = build_hamiltonian(&stats, &config.qsw);
                let spectrum = HamiltonianSpectrum::decompose(&h).map_err(|e| e.to_string());
                Ok(PreparedWindow { window, stats, spectrum })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedPanel { returns, windows })
    }

    fn window(&self, ctx: &RebalanceContext<'_>) -> Result<&PreparedWindow> {
        match self.windows.get(ctx.ordinal) {
            Some(w) if w.window == ctx.window => Ok(w),
            _ => Err(Error::InvalidParameter("prepared windows do not match the backtest schedule".into())),
        }
    }
}

/// One QSW solve from the maximally mixed state.
pub fn solve_qsw(stats: &AssetStats, spectrum: &HamiltonianSpectrum, params: &QswParams) -> Result<StationaryResult> {
    let graph = build_graph(stats, params)?;
    let kraus = build_kraus_with_spectrum(&graph, spectrum, params)?;
    evolve_to_stationary(&kraus, params, DensityMatrix::maximally_mixed(graph.n()), None)
}

struct SolveLog {
    max_iterations: Cell<usize>,
    all_converged: Cell<bool>,
}

fn qsw_backtest(prepared: &PreparedPanel, params: &QswParams, config: &BacktestConfig) -> Result<(BacktestResult, SolveLog)> {
    let log = SolveLog {
        max_iterations: Cell::new(0),
        all_converged: Cell::new(true),
    };
    let strategy = |ctx: &RebalanceContext<'_>| -> Result<DVector<f64>> {
        let w = prepared.window(ctx)?;
        let spectrum = w.spectrum.as_ref().map_err(|e| Error::Numerical(e.clone()))?;
        let sol = solve_qsw(&w.stats, spectrum, params)?;
        log.max_iterations.set(log.max_iterations.get().max(sol.iterations));
        log.all_converged.set(log.all_converged.get() && sol.converged);
        Ok(sol.weights)
    };
    let result = run_backtest(&prepared.returns, &strategy, config)?;
    Ok((result, log))
}

fn mpt_backtest(prepared: &PreparedPanel, config: &ExperimentConfig) -> Result<BacktestResult> {
    let strategy = |ctx: &RebalanceContext<'_>| -> Result<DVector<f64>> {
        let w = prepared.window(ctx)?;
        Ok(mpt_max_sharpe(&w.stats.mu, &w.stats.cov, config.rf)?.benchmark.weights)
    };
    run_backtest(&prepared.returns, &strategy, &config.backtest)
}

/// Equal weights at the first rebalance, then the drifted holdings are kept.
fn index_backtest(prepared: &PreparedPanel, config: &BacktestConfig) -> Result<BacktestResult> {
    let strategy = |ctx: &RebalanceContext<'_>| -> Result<DVector<f64>> {
        Ok(match ctx.drifted {
            Some(d) => DVector::from_column_slice(d),
            None => {
                let n = ctx.returns.n_assets();
                DVector::from_element(n, 1.0 / n as f64)
            }
        })
    };
    run_backtest(&prepared.returns, &strategy, config)
}

struct RunContext<'a> {
    prepared: &'a PreparedPanel,
    config: &'a ExperimentConfig,
    draw_id: Option<usize>,
}

impl RunContext<'_> {
    fn finish(
        &self,
        mut record: SweepRecord,
        started: Instant,
        outcome: Result<BacktestResult>,
        tweak: impl FnOnce(&mut SweepRecord, MetricsReport) -> MetricsReport,
    ) -> (SweepRecord, Option<EquityCurve>) {
        if self.config.timing {
            record.wall_ms = Some(started.elapsed().as_secs_f64() * 1e3);
        }
        match outcome {
            Ok(result) => {
                let metrics = summarize(&result, &self.config.backtest);
                record.metrics = Some(tweak(&mut record, metrics));
                let curve = self.config.keep_curves.then(|| EquityCurve {
                    run_id: record.run_id,
                    strategy: record.strategy.clone(),
                    dates: result.dates,
                    equity: result.equity,
                });
                (record, curve)
            }
            Err(e) => {
                record.error = Some(e.to_string());
                (record, None)
            }
        }
    }

    fn qsw(&self, run_id: usize, strategy: String, point: [f64; 4]) -> (SweepRecord, Option<EquityCurve>) {
        let started = Instant::now();
        let params = QswParams {
            alpha: point[0],
            beta: point[1],
            lambda_hold: point[2],
            omega: point[3],
            ..self.config.qsw
        };
        let record = SweepRecord::blank(run_id, self.draw_id, strategy).with_point(point);
        let outcome = params
            .validate()
            .and_then(|_| qsw_backtest(self.prepared, &params, &self.config.backtest));
        match outcome {
            Ok((result, log)) => self.finish(record, started, Ok(result), |rec, m| {
                rec.converged = Some(log.all_converged.get());
                rec.iterations = Some(log.max_iterations.get());
                m
            }),
            Err(e) => self.finish(record, started, Err(e), |_, m| m),
        }
    }

    fn mpt(&self, run_id: usize) -> (SweepRecord, Option<EquityCurve>) {
        let started = Instant::now();
        let record = SweepRecord::blank(run_id, self.draw_id, "mpt".into());
        self.finish(record, started, mpt_backtest(self.prepared, self.config), |_, m| m)
    }

    fn index(&self, run_id: usize) -> (SweepRecord, Option<EquityCurve>) {
        let started = Instant::now();
        let record = SweepRecord::blank(run_id, self.draw_id, "index".into());
        let bp = self.config.backtest.cost_bp_per_100_turnover;
        self.finish(record, started, index_backtest(self.prepared, &self.config.backtest), |_, m| {
            m.with_turnover(INDEX_TURNOVER_ANN, bp)
        })
    }
}

#[derive(Clone, Copy)]
enum Job {
    Qsw(usize, [f64; 4], Option<&'static str>),
    Mpt(usize),
    Index(usize),
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))
}

fn execute(ctx: &RunContext<'_>, jobs: &[Job]) -> SweepOutput {
    let results: Vec<(SweepRecord, Option<EquityCurve>)> = jobs
        .par_iter()
        .map(|job| match *job {
            Job::Qsw(id, p, name) => ctx.qsw(id, name.map_or_else(|| "qsw".to_string(), |n| format!("qsw:{n}")), p),
            Job::Mpt(id) => ctx.mpt(id),
            Job::Index(id) => ctx.index(id),
        })
        .collect();
    let mut out = SweepOutput::default();
    for (record, curve) in results {
        out.records.push(record);
        out.curves.extend(curve);
    }
    out.records.sort_by_key(|r| (r.draw_id, r.run_id));
    out
}

/// Records tagged with a shared failure, one per job.
fn failed(jobs: &[Job], draw_id: Option<usize>, err: &Error) -> SweepOutput {
    let records = jobs
        .iter()
        .map(|job| {
            let mut r = match *job {
                Job::Qsw(id, p, name) => {
                    SweepRecord::blank(id, draw_id, name.map_or_else(|| "qsw".into(), |n| format!("qsw:{n}"))).with_point(p)
                }
                Job::Mpt(id) => SweepRecord::blank(id, draw_id, "mpt".into()),
                Job::Index(id) => SweepRecord::blank(id, draw_id, "index".into()),
            };
            r.error = Some(err.to_string());
            r
        })
        .collect();
    SweepOutput {
        records,
        curves: Vec::new(),
    }
}

fn sweep(returns: &ReturnsPanel, config: &ExperimentConfig, jobs: &[Job], draw_id: Option<usize>) -> Result<SweepOutput> {
    let prepared = match PreparedPanel::new(returns.clone(), config) {
        Ok(p) => p,
        Err(e) if e.is_data_error() && draw_id.is_none() => return Err(e),
        Err(e) => return Ok(failed(jobs, draw_id, &e)),
    };
    let ctx = RunContext {
        prepared: &prepared,
        config,
        draw_id,
    };
    Ok(pool(config.workers)?.install(|| execute(&ctx, jobs)))
}

/// One QSW configuration plus the max-Sharpe and index benchmarks.
pub fn run_single(returns: &ReturnsPanel, config: &ExperimentConfig) -> Result<SweepOutput> {
    let q = &config.qsw;
    let jobs = [
        Job::Qsw(0, [q.alpha, q.beta, q.lambda_hold, q.omega], None),
        Job::Mpt(1),
        Job::Index(2),
    ];
    sweep(returns, config, &jobs, None)
}

/// Six presets times each omega, then the max-Sharpe and index benchmarks.
pub fn run_scenarios(returns: &ReturnsPanel, config: &ExperimentConfig, omega_values: &[f64]) -> Result<SweepOutput> {
    let mut jobs = Vec::with_capacity(SCENARIOS.len() * omega_values.len() + 2);
    for s in &SCENARIOS {
        for &w in omega_values {
            jobs.push(Job::Qsw(jobs.len(), [s.alpha, s.beta, s.lambda_hold, w], Some(s.name)));
        }
    }
    let n = jobs.len();
    jobs.push(Job::Mpt(n));
    jobs.push(Job::Index(n + 1));
    sweep(returns, config, &jobs, None)
}

fn grid_jobs(grid: &GridSpec) -> Vec<Job> {
    grid.points()
        .into_iter()
        .enumerate()
        .map(|(i, p)| Job::Qsw(i, p, None))
        .collect()
}

pub fn run_grid(returns: &ReturnsPanel, config: &ExperimentConfig, grid: &GridSpec) -> Result<SweepOutput> {
    sweep(returns, config, &grid_jobs(grid), None)
}

/// Sorted column indices of each robustness draw.
pub fn robustness_draws(universe: usize, spec: &RobustnessSpec) -> Result<Vec<Vec<usize>>> {
    if spec.subset_size == 0 || spec.subset_size > universe {
        return Err(Error::InvalidParameter(format!(
            "subset size {} must lie in 1..={universe}",
            spec.subset_size
        )));
    }
    Ok((0..spec.n_draws)
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(d as u64);
            let mut cols = rand::seq::index::sample(&mut rng, universe, spec.subset_size).into_vec();
            cols.sort_unstable();
            cols
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawSummary {
    pub draw_id: usize,
    /// Highest-Sharpe QSW record of the draw, if any succeeded.
    pub best_run_id: Option<usize>,
    pub best_sharpe: Option<f64>,
    pub best_efficiency: Option<f64>,
    pub mpt_sharpe: Option<f64>,
    pub mpt_efficiency: Option<f64>,
}

impl DrawSummary {
    pub fn wins_sharpe(&self) -> bool {
        matches!((self.best_sharpe, self.mpt_sharpe), (Some(q), Some(m)) if q > m)
    }

    pub fn wins_efficiency(&self) -> bool {
        matches!((self.best_efficiency, self.mpt_efficiency), (Some(q), Some(m)) if q > m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessOutput {
    pub sweep: SweepOutput,
    pub draws: Vec<DrawSummary>,
    pub sharpe_win_rate: f64,
    pub efficiency_win_rate: f64,
}

pub fn summarize_draws(records: &[SweepRecord], n_draws: usize) -> Vec<DrawSummary> {
    (0..n_draws)
        .map(|d| {
            let of_draw = records.iter().filter(|r| r.draw_id == Some(d));
            let mut best: Option<(&SweepRecord, MetricsReport)> = None;
            let mut mpt = None;
            for r in of_draw {
                let Some(m) = r.metrics else { continue };
                if r.strategy == "mpt" {
                    mpt = Some(m);
                } else if r.strategy.starts_with("qsw") && best.is_none_or(|(_, b)| m.sharpe_ann > b.sharpe_ann) {
                    best = Some((r, m));
                }
            }
            DrawSummary {
                draw_id: d,
                best_run_id: best.map(|(r, _)| r.run_id),
                best_sharpe: best.map(|(_, m)| m.sharpe_ann),
                best_efficiency: best.map(|(_, m)| m.efficiency),
                mpt_sharpe: mpt.map(|m| m.sharpe_ann),
                mpt_efficiency: mpt.map(|m| m.efficiency),
            }
        })
        .collect()
}

/// Per draw: the full grid on a random asset subset plus both benchmarks.
pub fn run_robustness(
    returns: &ReturnsPanel,
    config: &ExperimentConfig,
    grid: &GridSpec,
    spec: &RobustnessSpec,
) -> Result<RobustnessOutput> {
    let draws = robustness_draws(returns.n_assets(), spec)?;
    let mut jobs = grid_jobs(grid);
    let g = jobs.len();
    jobs.push(Job::Mpt(g));
    jobs.push(Job::Index(g + 1));
    let mut sweep_out = SweepOutput::default();
    for (d, cols) in draws.iter().enumerate() {
        let subset = returns.select_assets(cols);
        let out = sweep(&subset, config, &jobs, Some(d))?;
        sweep_out.records.extend(out.records);
        sweep_out.curves.extend(out.curves);
    }
    let summaries = summarize_draws(&sweep_out.records, spec.n_draws);
    let rate = |f: fn(&DrawSummary) -> bool| {
        if summaries.is_empty() {
            0.0
        } else {
            summaries.iter().filter(|s| f(s)).count() as f64 / summaries.len() as f64
        }
    };
    Ok(RobustnessOutput {
        sharpe_win_rate: rate(DrawSummary::wins_sharpe),
        efficiency_win_rate: rate(DrawSummary::wins_efficiency),
        draws: summaries,
        sweep: sweep_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::index_proxy_over;
    use crate::market_data::{compute_returns, ReturnMode};
    use crate::synth::{synthesize_universe, SynthSpec};
    use approx::assert_relative_eq;

    fn small_panel(n: usize, years: usize, seed: u64) -> ReturnsPanel {
        let spec = SynthSpec {
            n_assets: n,
            n_sectors: 2.min(n),
            days: 252 * years,
            seed,
            ..SynthSpec::default()
        };
        compute_returns(&synthesize_universe(&spec).unwrap(), ReturnMode::Log).unwrap()
    }

    fn fast_config() -> ExperimentConfig {
        ExperimentConfig {
            backtest: BacktestConfig {
                train_days: 60,
                ..Default::default()
            },
            qsw: QswParams {
                max_iters: 400,
                ..Default::default()
            },
            workers: 1,
            ..Default::default()
        }
    }

    #[test]
    fn presets_and_grid_shape() {
        assert_eq!(SCENARIOS.len(), 6);
        assert_eq!(GridSpec::default().len(), 625);
        let pts = GridSpec::default().points();
        assert_eq!(pts[0], [0.1, 0.1, 0.1, 0.2]);
        assert_eq!(pts[1], [0.1, 0.1, 0.1, 0.4]);
        assert_eq!(pts[624], [500.0, 500.0, 500.0, 1.0]);
    }

    #[test]
    fn scenario_counts() {
        let returns = small_panel(4, 1, 3);
        let out = run_scenarios(&returns, &fast_config(), &[0.5]).unwrap();
        assert_eq!(out.records.len(), 8);
        assert_eq!(out.records.iter().filter(|r| r.strategy.starts_with("qsw:")).count(), 6);
        assert_eq!(out.records[6].strategy, "mpt");
        assert_eq!(out.records[7].strategy, "index");
        assert!(!out.has_errors(), "{:?}", out.records);
    }

    #[test]
    fn index_record_matches_proxy() {
        let returns = small_panel(5, 2, 11);
        let cfg = fast_config();
        let prepared = PreparedPanel::new(returns.clone(), &cfg).unwrap();
        let res = index_backtest(&prepared, &cfg.backtest).unwrap();
        let first = res.weight_history[0].row;
        let proxy = index_proxy_over(&returns, first..returns.n_rows()).unwrap();
        assert_eq!(res.equity.len(), proxy.equity.len());
        for (a, b) in res.equity.iter().zip(&proxy.equity) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn poisoned_config_is_isolated() {
        let returns = small_panel(4, 1, 5);
        let grid = GridSpec {
            alpha_values: vec![1.0, 1e6],
            beta_values: vec![1.0],
            lambda_values: vec![1.0],
            omega_values: vec![0.5],
        };
        let out = run_grid(&returns, &fast_config(), &grid).unwrap();
        assert_eq!(out.records.len(), 2);
        assert!(out.records[0].error.is_none());
        let err = out.records[1].error.as_deref().unwrap();
        assert!(err.contains("rescale"), "{err}");
        assert!(out.records[1].metrics.is_none());
    }

    #[test]
    fn single_point_grid_equals_direct_backtest() {
        let returns = small_panel(4, 1, 9);
        let cfg = fast_config();
        let out = run_grid(&returns, &cfg, &GridSpec::single(10.0, 10.0, 10.0, 0.6)).unwrap();
        let prepared = PreparedPanel::new(returns.clone(), &cfg).unwrap();
        let params = QswParams::with_preferences(10.0, 10.0, 10.0, 0.6);
        let params = QswParams { max_iters: 400, ..params };
        let direct = run_backtest(
            &returns,
            &|ctx: &RebalanceContext<'_>| {
                let stats = compute_stats(ctx.returns, ctx.window.clone())?;
                let graph = build_graph(&stats, &params)?;
                Ok(crate::engine::run_to_stationary(&graph, &params)?.weights)
            },
            &cfg.backtest,
        )
        .unwrap();
        assert_eq!(prepared.windows.len(), direct.weight_history.len());
        let m = out.records[0].metrics.unwrap();
        let d = summarize(&direct, &cfg.backtest);
        assert_relative_eq!(m.final_value, d.final_value, epsilon = 1e-12);
        assert_relative_eq!(m.turnover_ann, d.turnover_ann, epsilon = 1e-9);
    }

    #[test]
    fn draws_are_seeded_and_distinct() {
        let spec = RobustnessSpec {
            n_draws: 3,
            subset_size: 5,
            seed: 1,
        };
        let a = robustness_draws(20, &spec).unwrap();
        assert_eq!(a, robustness_draws(20, &spec).unwrap());
        assert_ne!(a[0], a[1]);
        for d in &a {
            assert_eq!(d.len(), 5);
            assert!(d.windows(2).all(|p| p[0] < p[1]));
        }
        assert!(robustness_draws(4, &spec).is_err());
    }

    #[test]
    fn robustness_counts_and_summary() {
        let returns = small_panel(6, 1, 2);
        let spec = RobustnessSpec {
            n_draws: 2,
            subset_size: 3,
            seed: 4,
        };
        let grid = GridSpec {
            omega_values: vec![0.4, 0.8],
            ..GridSpec::single(10.0, 10.0, 10.0, 0.4)
        };
        let out = run_robustness(&returns, &fast_config(), &grid, &spec).unwrap();
        assert_eq!(out.sweep.records.len(), 2 * (2 + 2));
        assert_eq!(out.draws.len(), 2);
        assert!(out.draws.iter().all(|d| d.best_run_id.is_some() && d.mpt_sharpe.is_some()));
        assert!((0.0..=1.0).contains(&out.sharpe_win_rate));
    }
}
