//! Performance, concentration, trading and cost metrics.

use crate::market_data::is_degenerate_vol;

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// Offset in the efficiency denominator keeping zero-turnover portfolios finite.
pub const EFFICIENCY_OFFSET: f64 = 0.01;

fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpeEstimate {
    pub value: f64,
    /// Set when the series has no usable dispersion (or fewer than two points).
    pub degenerate: bool,
}

/// `(mean * 252) / (sd * sqrt(252))` with the sample standard deviation.
pub fn annualized_sharpe(daily_returns: &[f64]) -> SharpeEstimate {
    if daily_returns.len() < 2 {
        return SharpeEstimate {
            value: 0.0,
            degenerate: true,
        };
    }
    let (mean, sd) = mean_and_sd(daily_returns);
    if is_degenerate_vol(mean, sd) {
        return SharpeEstimate {
            value: 0.0,
            degenerate: true,
        };
    }
    SharpeEstimate {
        value: mean * TRADING_DAYS_PER_YEAR / (sd * TRADING_DAYS_PER_YEAR.sqrt()),
        degenerate: false,
    }
}

pub fn annualized_volatility(daily_returns: &[f64]) -> f64 {
    if daily_returns.len() < 2 {
        return 0.0;
    }
    mean_and_sd(daily_returns).1 * TRADING_DAYS_PER_YEAR.sqrt()
}

/// Compound annual growth with 252 trading days per year.
pub fn cagr(start_value: f64, end_value: f64, trading_days: usize) -> f64 {
    if trading_days == 0 || !(start_value > 0.0) {
        return 0.0;
    }
    let years = trading_days as f64 / TRADING_DAYS_PER_YEAR;
    (end_value / start_value).powf(1.0 / years) - 1.0
}

/// Largest peak-to-trough decline relative to the running peak.
pub fn max_drawdown(equity: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for &v in equity {
        peak = peak.max(v);
        if peak > 0.0 {
            worst = worst.max((peak - v) / peak);
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Concentration {
    pub hhi: f64,
    pub n_eff: f64,
    /// Combined weight of the five largest holdings.
    pub c5: f64,
}

pub fn concentration(weights: &[f64]) -> Concentration {
    let hhi: f64 = weights.iter().map(|w| w * w).sum();
    let mut sorted = weights.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Concentration {
        hhi,
        n_eff: if hhi > 0.0 { 1.0 / hhi } else { 0.0 },
        c5: sorted.iter().take(5).sum(),
    }
}

/// Sum of absolute weight changes between two allocations.
pub fn traded_fraction(from: &[f64], to: &[f64]) -> f64 {
    from.iter().zip(to).map(|(a, b)| (a - b).abs()).sum()
}

/// `periods_per_year` times the mean per-period traded fraction; zero with
/// fewer than one rebalance-to-rebalance change.
pub fn annualized_turnover(period_changes: &[f64], periods_per_year: f64) -> f64 {
    if period_changes.is_empty() {
        return 0.0;
    }
    periods_per_year * period_changes.iter().sum::<f64>() / period_changes.len() as f64
}

pub fn efficiency(sharpe: f64, turnover_ann: f64) -> f64 {
    sharpe / (turnover_ann + EFFICIENCY_OFFSET)
}

/// Annual cost in basis points; turnover is a fraction (1.0 = 100%).
pub fn cost_drag(turnover_ann: f64, bp_per_100: f64) -> f64 {
    turnover_ann * bp_per_100
}
