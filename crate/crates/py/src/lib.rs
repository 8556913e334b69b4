//! Python bindings: `import qsw_portfolio`.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qsw_core::backtest::BacktestConfig;
use qsw_core::engine::run_to_stationary;
use qsw_core::experiment::{self, ExperimentConfig, GridSpec, SweepRecord, DEFAULT_OMEGAS};
use qsw_core::graph::{self, FinancialGraph, QswParams, UpdateMode};
use qsw_core::market_data::{compute_returns, compute_stats, load_prices, AssetStats, ReturnMode, ReturnsPanel};
use qsw_core::synth::{synthesize_universe, SynthSpec};
use qsw_core::{bench, metrics};

fn err(e: qsw_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

#[pyclass(name = "QswParams", from_py_object)]
#[derive(Clone)]
struct PyQswParams {
    inner: QswParams,
}

#[pymethods]
impl PyQswParams {
    #[new]
    #[pyo3(signature = (alpha=10.0, beta=10.0, lambda_hold=10.0, omega=0.2, damping=0.9, dt=0.1, tol=1e-8, max_iters=5000, mode="alg"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        alpha: f64,
        beta: f64,
        lambda_hold: f64,
        omega: f64,
        damping: f64,
        dt: f64,
        tol: f64,
        max_iters: usize,
        mode: &str,
    ) -> PyResult<Self> {
        let update_mode: UpdateMode = mode.parse().map_err(err)?;
        let inner = QswParams {
            alpha,
            beta,
            lambda_hold,
            omega,
            damping,
            dt,
            tol,
            max_iters,
            update_mode,
            ..QswParams::default()
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }
    #[getter]
    fn lambda_hold(&self) -> f64 {
        self.inner.lambda_hold
    }
    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega
    }
    #[getter]
    fn mode(&self) -> String {
        self.inner.update_mode.to_string()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "QswParams(alpha={}, beta={}, lambda_hold={}, omega={}, dt={}, mode='{}')",
            p.alpha, p.beta, p.lambda_hold, p.omega, p.dt, p.update_mode
        )
    }
}

/// Mean, volatility, Sharpe and covariance of one training window.
#[pyclass(name = "AssetStats", from_py_object)]
#[derive(Clone)]
struct PyAssetStats {
    inner: AssetStats,
}

#[pymethods]
impl PyAssetStats {
    #[staticmethod]
    fn from_moments(mu: Vec<f64>, cov: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = AssetStats::from_moments(DVector::from_vec(mu), matrix(&cov)?).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_assets(&self) -> usize {
        self.inner.n_assets()
    }
    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu.iter().copied().collect()
    }
    #[getter]
    fn sigma(&self) -> Vec<f64> {
        self.inner.sigma.iter().copied().collect()
    }
    #[getter]
    fn sr(&self) -> Vec<f64> {
        self.inner.sr.iter().copied().collect()
    }
    #[getter]
    fn cov(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.cov)
    }
}

/// Aligned daily returns for a set of tickers.
#[pyclass(name = "Returns")]
struct PyReturns {
    inner: ReturnsPanel,
}

#[pymethods]
impl PyReturns {
    /// Reads a wide `date,<ticker>...` price CSV.
    #[staticmethod]
    #[pyo3(signature = (path, mode="log", min_history=0))]
    fn load(path: &str, mode: &str, min_history: usize) -> PyResult<Self> {
        let mode: ReturnMode = mode.parse().map_err(err)?;
        let prices = load_prices(path.as_ref(), min_history).map_err(err)?;
        Ok(Self {
            inner: compute_returns(&prices, mode).map_err(err)?,
        })
    }

    /// Sector-clustered synthetic universe; optionally saves the prices.
    #[staticmethod]
    #[pyo3(signature = (n_assets=50, n_sectors=5, days=1764, seed=7, save_to=None))]
    fn synthetic(n_assets: usize, n_sectors: usize, days: usize, seed: u64, save_to: Option<&str>) -> PyResult<Self> {
        let spec = SynthSpec {
            n_assets,
            n_sectors,
            days,
            seed,
            ..SynthSpec::default()
        };
        let prices = synthesize_universe(&spec).map_err(err)?;
        if let Some(path) = save_to {
            prices.save(path.as_ref()).map_err(err)?;
        }
        Ok(Self {
            inner: compute_returns(&prices, ReturnMode::Log).map_err(err)?,
        })
    }

    #[getter]
    fn tickers(&self) -> Vec<String> {
        self.inner.tickers.clone()
    }
    #[getter]
    fn dates(&self) -> Vec<String> {
        self.inner.dates.iter().map(|d| d.to_string()).collect()
    }
    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }
    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.returns)
    }

    /// Statistics over rows `start..end` (default: all rows).
    #[pyo3(signature = (start=0, end=None))]
    fn stats(&self, start: usize, end: Option<usize>) -> PyResult<PyAssetStats> {
        let end = end.unwrap_or(self.inner.n_rows());
        Ok(PyAssetStats {
            inner: compute_stats(&self.inner, start..end).map_err(err)?,
        })
    }

    fn select(&self, columns: Vec<usize>) -> PyResult<Self> {
        if columns.iter().any(|&c| c >= self.inner.n_assets()) {
            return Err(PyValueError::new_err("column index out of range"));
        }
        Ok(Self {
            inner: self.inner.select_assets(&columns),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }
}

#[pyclass(name = "Graph")]
struct PyGraph {
    inner: FinancialGraph,
}

#[pymethods]
impl PyGraph {
    #[getter]
    fn w(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.w)
    }
    #[getter]
    fn p(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.p)
    }
    #[getter]
    fn g(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.g)
    }
    #[getter]
    fn h(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.h)
    }
}

#[pyclass(name = "Stationary", get_all)]
struct PyStationary {
    weights: Vec<f64>,
    iterations: usize,
    converged: bool,
    final_delta: f64,
}

#[pyfunction]
#[pyo3(signature = (stats, params=None))]
fn build_graph(stats: &PyAssetStats, params: Option<PyQswParams>) -> PyResult<PyGraph> {
    let params = params.map_or_else(QswParams::default, |p| p.inner);
    Ok(PyGraph {
        inner: graph::build_graph(&stats.inner, &params).map_err(err)?,
    })
}

/// QSW portfolio weights for one window.
#[pyfunction]
#[pyo3(signature = (stats, params=None))]
fn optimize(py: Python<'_>, stats: &PyAssetStats, params: Option<PyQswParams>) -> PyResult<PyStationary> {
    let params = params.map_or_else(QswParams::default, |p| p.inner);
    let stats = stats.inner.clone();
    let run = py
        .detach(|| {
            params.validate()?;
            let g = graph::build_graph(&stats, &params)?;
            run_to_stationary(&g, &params)
        })
        .map_err(err)?;
    Ok(PyStationary {
        weights: run.weights.iter().copied().collect(),
        iterations: run.iterations,
        converged: run.converged,
        final_delta: run.final_delta,
    })
}

/// Long-only maximum-Sharpe weights.
#[pyfunction]
#[pyo3(signature = (mu, cov, rf=0.0))]
fn mpt_max_sharpe(mu: Vec<f64>, cov: Vec<Vec<f64>>, rf: f64) -> PyResult<Vec<f64>> {
    let sol = bench::mpt_max_sharpe(&DVector::from_vec(mu), &matrix(&cov)?, rf).map_err(err)?;
    Ok(sol.benchmark.weights.iter().copied().collect())
}

/// Stationary law of the chain with rate `rates[i][j]` from `j` to `i`.
#[pyfunction]
fn classical_stationary(rates: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let pi = bench::classical_stationary(&matrix(&rates)?).map_err(err)?;
    Ok(pi.iter().copied().collect())
}

#[pyfunction]
fn annualized_sharpe(daily_returns: Vec<f64>) -> f64 {
    metrics::annualized_sharpe(&daily_returns).value
}

#[pyfunction]
fn max_drawdown(equity: Vec<f64>) -> f64 {
    metrics::max_drawdown(&equity)
}

/// `(hhi, n_eff, c5)`.
#[pyfunction]
fn concentration(weights: Vec<f64>) -> (f64, f64, f64) {
    let c = metrics::concentration(&weights);
    (c.hhi, c.n_eff, c.c5)
}

fn record_dict<'py>(py: Python<'py>, r: &SweepRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("run_id", r.run_id)?;
    d.set_item("draw_id", r.draw_id)?;
    d.set_item("strategy", &r.strategy)?;
    d.set_item("alpha", r.alpha)?;
    d.set_item("beta", r.beta)?;
    d.set_item("lambda", r.lambda_hold)?;
    d.set_item("omega", r.omega)?;
    let m = r.metrics;
    for (key, value) in [
        ("sharpe", m.map(|m| m.sharpe_ann)),
        ("cagr", m.map(|m| m.cagr)),
        ("vol", m.map(|m| m.vol_ann)),
        ("mdd", m.map(|m| m.mdd)),
        ("turnover_ann", m.map(|m| m.turnover_ann)),
        ("efficiency", m.map(|m| m.efficiency)),
        ("hhi", m.map(|m| m.hhi_mean)),
        ("n_eff", m.map(|m| m.n_eff_mean)),
        ("c5", m.map(|m| m.c5_mean)),
        ("cost_drag_bp", m.map(|m| m.cost_drag_bp)),
        ("final_value", m.map(|m| m.final_value)),
    ] {
        d.set_item(key, value)?;
    }
    d.set_item("converged", r.converged)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("error", r.error.as_deref())?;
    Ok(d)
}

fn config(train_days: usize, workers: usize, max_iters: usize) -> ExperimentConfig {
    ExperimentConfig {
        backtest: BacktestConfig {
            train_days,
            ..BacktestConfig::default()
        },
        qsw: QswParams {
            max_iters,
            ..QswParams::default()
        },
        workers,
        ..ExperimentConfig::default()
    }
}

fn records<'py>(py: Python<'py>, out: &[SweepRecord]) -> PyResult<Vec<Bound<'py, PyDict>>> {
    out.iter().map(|r| record_dict(py, r)).collect()
}

/// Six preference presets per omega plus the MPT and index benchmarks.
#[pyfunction]
#[pyo3(signature = (returns, omegas=None, train_days=252, workers=0, max_iters=5000))]
fn run_scenarios<'py>(
    py: Python<'py>,
    returns: &PyReturns,
    omegas: Option<Vec<f64>>,
    train_days: usize,
    workers: usize,
    max_iters: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let omegas = omegas.unwrap_or_else(|| DEFAULT_OMEGAS.to_vec());
    let cfg = config(train_days, workers, max_iters);
    let out = py
        .detach(|| experiment::run_scenarios(&returns.inner, &cfg, &omegas))
        .map_err(err)?;
    records(py, &out.records)
}

/// Full factorial sweep; omitted axes use the default five values.
#[pyfunction]
#[pyo3(signature = (returns, alphas=None, betas=None, lambdas=None, omegas=None, train_days=252, workers=0, max_iters=5000))]
#[allow(clippy::too_many_arguments)]
fn run_grid<'py>(
    py: Python<'py>,
    returns: &PyReturns,
    alphas: Option<Vec<f64>>,
    betas: Option<Vec<f64>>,
    lambdas: Option<Vec<f64>>,
    omegas: Option<Vec<f64>>,
    train_days: usize,
    workers: usize,
    max_iters: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let d = GridSpec::default();
    let grid = GridSpec {
        alpha_values: alphas.unwrap_or(d.alpha_values),
        beta_values: betas.unwrap_or(d.beta_values),
        lambda_values: lambdas.unwrap_or(d.lambda_values),
        omega_values: omegas.unwrap_or(d.omega_values),
    };
    let cfg = config(train_days, workers, max_iters);
    let out = py
        .detach(|| experiment::run_grid(&returns.inner, &cfg, &grid))
        .map_err(err)?;
    records(py, &out.records)
}

#[pymodule]
fn qsw_portfolio(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQswParams>()?;
    m.add_class::<PyAssetStats>()?;
    m.add_class::<PyReturns>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyStationary>()?;
    m.add_function(wrap_pyfunction!(build_graph, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(mpt_max_sharpe, m)?)?;
    m.add_function(wrap_pyfunction!(classical_stationary, m)?)?;
    m.add_function(wrap_pyfunction!(annualized_sharpe, m)?)?;
    m.add_function(wrap_pyfunction!(max_drawdown, m)?)?;
    m.add_function(wrap_pyfunction!(concentration, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_grid, m)?)?;
    Ok(())
}
