//! Seeded fixtures for the acceptance suite.

use std::fs;
use std::io;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qsw_core::engine::{CMatrix, DensityMatrix};
use qsw_core::graph::{build_graph, FinancialGraph, QswParams};
use qsw_core::market_data::{compute_returns, compute_stats, AssetStats, ReturnMode, ReturnsPanel};
use qsw_core::synth::{synthesize_universe, SynthSpec};
use qsw_core::Result;

/// Sector-clustered log returns from the synthetic generator.
pub fn clustered_returns(n_assets: usize, n_sectors: usize, days: usize, seed: u64) -> Result<ReturnsPanel> {
    let spec = SynthSpec {
        n_assets,
        n_sectors,
        days,
        seed,
        ..SynthSpec::default()
    };
    compute_returns(&synthesize_universe(&spec)?, ReturnMode::Log)
}

/// Statistics of one year of synthetic returns; the sector count varies with the seed.
pub fn random_stats(n: usize, seed: u64) -> Result<AssetStats> {
    let sectors = (1 + seed as usize % 4).min(n);
    let returns = clustered_returns(n, sectors, 253, seed)?;
    compute_stats(&returns, 0..returns.n_rows())
}

pub fn random_graph(n: usize, seed: u64, params: &QswParams) -> Result<FinancialGraph> {
    build_graph(&random_stats(n, seed)?, params)
}

/// `A A^dag / tr(A A^dag)` for a complex matrix with uniform entries; full rank almost surely.
pub fn random_state(n: usize, seed: u64) -> Result<DensityMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = CMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let m = &a * a.adjoint();
    let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
    DensityMatrix::new(m.unscale(tr))
}

/// `|k><k|`.
pub fn basis_state(n: usize, k: usize) -> Result<DensityMatrix> {
    let mut m = CMatrix::zeros(n, n);
    m[(k, k)] = Complex64::new(1.0, 0.0);
    DensityMatrix::new(m)
}

pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut d = start;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if d.weekday().num_days_from_monday() < 5 {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Writes a price CSV with one row per business day from 2019-01-01.
pub fn write_price_csv(path: &Path, tickers: &[&str], prices: &DMatrix<f64>) -> io::Result<()> {
    let start = NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date");
    let mut text = format!("date,{}\n", tickers.join(","));
    for (t, d) in business_days(start, prices.nrows()).iter().enumerate() {
        let cells: Vec<String> = prices.row(t).iter().map(|p| p.to_string()).collect();
        text.push_str(&format!("{d},{}\n", cells.join(",")));
    }
    fs::write(path, text)
}
