//! Rolling-window backtesting with calendar rebalancing and drifting holdings.

use std::ops::Range;

use chrono::{Datelike, NaiveDate};
use nalgebra::DVector;

use crate::market_data::ReturnsPanel;
use crate::metrics::{
    annualized_sharpe, annualized_turnover, annualized_volatility, cagr, concentration, cost_drag,
    efficiency, max_drawdown, traded_fraction,
};
use crate::{Error, Result};

/// Tolerance on the simplex check applied to strategy output.
const WEIGHT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RebalanceRule {
    /// First trading day of January, April, July and October.
    #[default]
    Quarterly,
    /// First trading day of every month.
    Monthly,
}

impl RebalanceRule {
    pub fn periods_per_year(self) -> f64 {
        match self {
            RebalanceRule::Quarterly => 4.0,
            RebalanceRule::Monthly => 12.0,
        }
    }

    fn is_boundary_month(self, month: u32) -> bool {
        match self {
            RebalanceRule::Quarterly => matches!(month, 1 | 4 | 7 | 10),
            RebalanceRule::Monthly => true,
        }
    }
}

impl std::str::FromStr for RebalanceRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "quarterly" | "q" => Ok(RebalanceRule::Quarterly),
            "monthly" | "m" => Ok(RebalanceRule::Monthly),
            other => Err(Error::InvalidParameter(format!("unknown rebalance rule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TurnoverConvention {
    /// Consecutive target weights.
    #[default]
    PaperLiteral,
    /// Drifted pre-rebalance holdings against the new target.
    DriftAware,
}

impl std::str::FromStr for TurnoverConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" | "paper_literal" | "paper-literal" => Ok(TurnoverConvention::PaperLiteral),
            "drift" | "drift_aware" | "drift-aware" => Ok(TurnoverConvention::DriftAware),
            other => Err(Error::InvalidParameter(format!("unknown turnover convention '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub train_days: usize,
    pub rebalance: RebalanceRule,
    /// First allocation happens on the first trading day on or after this date.
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub cost_bp_per_100_turnover: f64,
    pub turnover_convention: TurnoverConvention,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            train_days: 252,
            rebalance: RebalanceRule::Quarterly,
            start: None,
            end: None,
            cost_bp_per_100_turnover: 20.0,
            turnover_convention: TurnoverConvention::PaperLiteral,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_days < 2 {
            return Err(Error::InvalidParameter("train_days must be at least 2".into()));
        }
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if s >= e {
                return Err(Error::InvalidParameter(format!("start {s} must precede end {e}")));
            }
        }
        if !(self.cost_bp_per_100_turnover >= 0.0) {
            return Err(Error::InvalidParameter("cost_bp must be non-negative".into()));
        }
        Ok(())
    }
}

/// Row indices of the rebalance dates and the last traded row (inclusive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub rebalances: Vec<usize>,
    pub last_row: usize,
}

/// Rebalances happen at the open of the listed rows, before that row's return.
pub fn rebalance_schedule(dates: &[NaiveDate], config: &BacktestConfig) -> Result<Schedule> {
    config.validate()?;
    let rows = dates.len();
    let last_row = match config.end {
        Some(end) => match dates.iter().rposition(|d| *d <= end) {
            Some(r) => r,
            None => return Err(Error::InsufficientHistory(format!("no trading days on or before {end}"))),
        },
        None if rows > 0 => rows - 1,
        None => return Err(Error::InsufficientHistory("empty returns panel".into())),
    };
    let first = match config.start {
        Some(start) => {
            let Some(first) = dates.iter().position(|d| *d >= start) else {
                return Err(Error::InsufficientHistory(format!("no trading days on or after {start}")));
            };
            if first < config.train_days {
                return Err(Error::InsufficientHistory(format!(
                    "{start} leaves {first} rows of history, {} required",
                    config.train_days
                )));
            }
            first
        }
        None => {
            let found = (config.train_days.max(1)..=last_row).find(|&t| is_boundary(dates, t, config.rebalance));
            match found {
                Some(t) => t,
                None => {
                    return Err(Error::InsufficientHistory(format!(
                        "no rebalance date after {} training rows",
                        config.train_days
                    )))
                }
            }
        }
    };
    if first > last_row {
        return Err(Error::InsufficientHistory("backtest window is empty".into()));
    }
    let mut rebalances = vec![first];
    rebalances.extend((first + 1..=last_row).filter(|&t| is_boundary(dates, t, config.rebalance)));
    Ok(Schedule { rebalances, last_row })
}

fn is_boundary(dates: &[NaiveDate], t: usize, rule: RebalanceRule) -> bool {
    t > 0 && dates[t].month() != dates[t - 1].month() && rule.is_boundary_month(dates[t].month())
}

/// What a strategy may look at when asked for weights.
pub struct RebalanceContext<'a> {
    pub returns: &'a ReturnsPanel,
    /// Training rows; always ends strictly before the rebalance row.
    pub window: Range<usize>,
    pub date: NaiveDate,
    /// Position of this rebalance in the schedule.
    pub ordinal: usize,
    /// Holdings drifted since the previous rebalance, if any.
    pub drifted: Option<&'a [f64]>,
}

pub trait Strategy {
    fn weights(&self, ctx: &RebalanceContext<'_>) -> Result<DVector<f64>>;
}

impl<F> Strategy for F
where
    F: Fn(&RebalanceContext<'_>) -> Result<DVector<f64>>,
{
    fn weights(&self, ctx: &RebalanceContext<'_>) -> Result<DVector<f64>> {
        self(ctx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RebalanceRecord {
    pub date: NaiveDate,
    pub row: usize,
    pub target: Vec<f64>,
    /// Holdings just before trading; `None` for the initial allocation.
    pub drifted: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    /// `equity[0] = 1` sits on the day before the first rebalance.
    pub dates: Vec<NaiveDate>,
    pub equity: Vec<f64>,
    pub daily_returns: Vec<f64>,
    pub weight_history: Vec<RebalanceRecord>,
    pub rebalance: RebalanceRule,
}

impl BacktestResult {
    /// Per-period traded fractions under the given convention.
    pub fn turnover_changes(&self, convention: TurnoverConvention) -> Vec<f64> {
        self.weight_history
            .windows(2)
            .map(|pair| {
                let prev = match convention {
                    TurnoverConvention::PaperLiteral => &pair[0].target,
                    TurnoverConvention::DriftAware => pair[1].drifted.as_ref().unwrap_or(&pair[0].target),
                };
                traded_fraction(prev, &pair[1].target)
            })
            .collect()
    }

    pub fn turnover_ann(&self, convention: TurnoverConvention) -> f64 {
        annualized_turnover(&self.turnover_changes(convention), self.rebalance.periods_per_year())
    }
}

fn check_weights(w: DVector<f64>, n: usize) -> Result<Vec<f64>> {
    if w.len() != n {
        return Err(Error::InvalidWeights(format!("expected {n} weights, got {}", w.len())));
    }
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidWeights("non-finite weight".into()));
    }
    let min = w.min();
    let sum = w.sum();
    if min < -WEIGHT_TOL || (sum - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::InvalidWeights(format!("off simplex (min {min:e}, sum {sum})")));
    }
    let clamped: Vec<f64> = w.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    Ok(clamped.into_iter().map(|x| x / total).collect())
}

pub fn run_backtest<S: Strategy + ?Sized>(
    panel: &ReturnsPanel,
    strategy: &S,
    config: &BacktestConfig,
) -> Result<BacktestResult> {
    let n = panel.n_assets();
    if n == 0 {
        return Err(Error::InsufficientData("no assets".into()));
    }
    let schedule = rebalance_schedule(&panel.dates, config)?;
    let simple = panel.simple_returns();
    let first = schedule.rebalances[0];

    let mut dates = Vec::with_capacity(schedule.last_row - first + 2);
    let mut equity = Vec::with_capacity(dates.capacity());
    let mut daily_returns = Vec::with_capacity(dates.capacity());
    let mut history = Vec::with_capacity(schedule.rebalances.len());
    dates.push(panel.dates[first - 1]);
    equity.push(1.0);

    let mut value = 1.0;
    let mut holdings = vec![0.0; n];
    let mut next = schedule.rebalances.iter().copied().enumerate().peekable();
    for t in first..=schedule.last_row {
        if let Some(&(ordinal, row)) = next.peek() {
            if row == t {
                next.next();
                let drifted: Option<Vec<f64>> = (ordinal > 0).then(|| holdings.iter().map(|h| h / value).collect());
                let ctx = RebalanceContext {
                    returns: panel,
                    window: t - config.train_days..t,
                    date: panel.dates[t],
                    ordinal,
                    drifted: drifted.as_deref(),
                };
                let target = check_weights(strategy.weights(&ctx)?, n)?;
                for (h, w) in holdings.iter_mut().zip(&target) {
                    *h = value * w;
                }
                history.push(RebalanceRecord {
                    date: panel.dates[t],
                    row: t,
                    target,
                    drifted,
                });
            }
        }
        for (i, h) in holdings.iter_mut().enumerate() {
            *h *= 1.0 + simple[(t, i)];
        }
        let new_value: f64 = holdings.iter().sum();
        if !(new_value > 0.0) || !new_value.is_finite() {
            return Err(Error::Numerical(format!("portfolio value {new_value} on {}", panel.dates[t])));
        }
        daily_returns.push(new_value / value - 1.0);
        value = new_value;
        dates.push(panel.dates[t]);
        equity.push(value);
    }

    Ok(BacktestResult {
        dates,
        equity,
        daily_returns,
        weight_history: history,
        rebalance: config.rebalance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub sharpe_ann: f64,
    pub sharpe_degenerate: bool,
    pub vol_ann: f64,
    pub cagr: f64,
    pub mdd: f64,
    pub hhi_mean: f64,
    pub n_eff_mean: f64,
    pub c5_mean: f64,
    pub turnover_ann: f64,
    pub efficiency: f64,
    pub cost_drag_bp: f64,
    pub final_value: f64,
}

impl MetricsReport {
    /// Replaces the turnover and every figure derived from it.
    pub fn with_turnover(mut self, turnover_ann: f64, bp_per_100: f64) -> Self {
        self.turnover_ann = turnover_ann;
        self.efficiency = efficiency(self.sharpe_ann, turnover_ann);
        self.cost_drag_bp = cost_drag(turnover_ann, bp_per_100);
        self
    }
}

pub fn summarize(result: &BacktestResult, config: &BacktestConfig) -> MetricsReport {
    let sharpe = annualized_sharpe(&result.daily_returns);
    let k = result.weight_history.len().max(1) as f64;
    let (hhi, c5) = result.weight_history.iter().fold((0.0, 0.0), |(h, c), rec| {
        let conc = concentration(&rec.target);
        (h + conc.hhi, c + conc.c5)
    });
    let hhi_mean = hhi / k;
    let first = result.equity[0];
    let last = *result.equity.last().unwrap_or(&first);
    MetricsReport {
        sharpe_ann: sharpe.value,
        sharpe_degenerate: sharpe.degenerate,
        vol_ann: annualized_volatility(&result.daily_returns),
        cagr: cagr(first, last, result.daily_returns.len()),
        mdd: max_drawdown(&result.equity),
        hhi_mean,
        n_eff_mean: if hhi_mean > 0.0 { 1.0 / hhi_mean } else { 0.0 },
        c5_mean: c5 / k,
        final_value: last,
        ..MetricsReport::default()
    }
    .with_turnover(
        result.turnover_ann(config.turnover_convention),
        config.cost_bp_per_100_turnover,
    )
}
