//! Seeded synthetic universes with block-constant sector correlation.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::market_data::PricePanel;
use crate::metrics::TRADING_DAYS_PER_YEAR as TRADING_DAYS;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_assets: usize,
    pub n_sectors: usize,
    /// Number of price rows to generate.
    pub days: usize,
    pub intra_sector_corr: f64,
    pub inter_sector_corr: f64,
    /// Annualized drift range, sampled uniformly per asset.
    pub mu_range: (f64, f64),
    /// Annualized volatility range, sampled uniformly per asset.
    pub vol_range: (f64, f64),
    pub seed: u64,
    pub start: NaiveDate,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_assets: 50,
            n_sectors: 5,
            days: 252 * 7,
            intra_sector_corr: 0.6,
            inter_sector_corr: 0.15,
            mu_range: (0.0, 0.15),
            vol_range: (0.15, 0.35),
            seed: 7,
            start: NaiveDate::from_ymd_opt(2016, 1, 4).expect("valid date"),
        }
    }
}

impl SynthSpec {
    pub fn sector_of(&self, asset: usize) -> usize {
        asset * self.n_sectors / self.n_assets
    }

    /// Target correlation matrix: 1 on the diagonal, `intra` within a sector,
    /// `inter` across sectors.
    pub fn correlation(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_assets, self.n_assets, |i, j| {
            if i == j {
                1.0
            } else if self.sector_of(i) == self.sector_of(j) {
                self.intra_sector_corr
            } else {
                self.inter_sector_corr
            }
        })
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.n_assets == 0 {
            return bad("n_assets must be at least 1");
        }
        if self.n_sectors == 0 || self.n_sectors > self.n_assets {
            return bad("n_sectors must be in 1..=n_assets");
        }
        if self.days < 2 {
            return bad("days must be at least 2");
        }
        for c in [self.intra_sector_corr, self.inter_sector_corr] {
            if !(0.0..1.0).contains(&c) {
                return bad("correlations must lie in [0, 1)");
            }
        }
        let (mu_lo, mu_hi) = self.mu_range;
        let (vol_lo, vol_hi) = self.vol_range;
        if !(mu_lo <= mu_hi) || !mu_lo.is_finite() || !mu_hi.is_finite() {
            return bad("mu_range must be an ordered finite pair");
        }
        if !(0.0 <= vol_lo && vol_lo <= vol_hi) || !vol_hi.is_finite() {
            return bad("vol_range must be an ordered non-negative pair");
        }
        Ok(())
    }
}

fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut day = start;
    while out.len() < count {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day);
        }
        day = day + Days::new(1);
    }
    out
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Generates a correlated geometric-Brownian universe starting at 100.
pub fn synthesize_universe(spec: &SynthSpec) -> Result<PricePanel> {
    spec.validate()?;
    let n = spec.n_assets;
    let chol = Cholesky::new(spec.correlation()).ok_or(Error::NotPositiveDefinite)?;
    let lower = chol.l();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let drift: Vec<f64> = (0..n).map(|_| uniform(&mut rng, spec.mu_range)).collect();
    let vol: Vec<f64> = (0..n).map(|_| uniform(&mut rng, spec.vol_range)).collect();
    let daily_vol: Vec<f64> = vol.iter().map(|v| v / TRADING_DAYS.sqrt()).collect();
    let daily_drift: Vec<f64> = drift
        .iter()
        .zip(&daily_vol)
        .map(|(m, s)| m / TRADING_DAYS - 0.5 * s * s)
        .collect();

    let mut prices = DMatrix::zeros(spec.days, n);
    prices.row_mut(0).fill(100.0);
    let mut shock = DVector::zeros(n);
    for t in 1..spec.days {
        for z in shock.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        let correlated = &lower * &shock;
        for i in 0..n {
            let log_ret = daily_drift[i] + daily_vol[i] * correlated[i];
            prices[(t, i)] = prices[(t - 1, i)] * log_ret.exp();
        }
    }

    let width = n.to_string().len();
    let tickers = (0..n)
        .map(|i| format!("S{}A{:0width$}", spec.sector_of(i), i))
        .collect();
    PricePanel::new(business_days(spec.start, spec.days), tickers, prices)
}
