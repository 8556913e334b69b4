//! Daily price ingestion, return computation and per-window asset statistics.
//!
//! The prices CSV layout is `date,<ticker1>,<ticker2>,...` with ISO-8601 dates
//! and decimal adjusted closes. An empty cell (or `NaN`/`NA`) marks a missing
//! observation. Tickers with too little history are discarded first, then any
//! date row that still has a gap is dropped as a whole.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ratio below which a volatility is treated as zero relative to its mean.
///
/// A column of identical returns yields a sample deviation of a few ulps
/// rather than an exact zero; such columns get a Sharpe ratio of 0.
pub const DEGENERATE_VOL_RATIO: f64 = 1e-10;

pub(crate) fn is_degenerate_vol(mean: f64, sd: f64) -> bool {
    !(sd > 0.0) || sd <= DEGENERATE_VOL_RATIO * mean.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReturnMode {
    #[default]
    Log,
    Simple,
}

impl std::str::FromStr for ReturnMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "log" => Ok(ReturnMode::Log),
            "simple" => Ok(ReturnMode::Simple),
            other => Err(Error::InvalidParameter(format!("unknown return mode `{other}`"))),
        }
    }
}

/// Date-indexed adjusted close prices, `prices[(t, i)]` for date `t` and asset `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub prices: DMatrix<f64>,
}

impl PricePanel {
    /// Builds a panel after checking ordering, shape and positivity.
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, prices: DMatrix<f64>) -> Result<Self> {
        if prices.nrows() != dates.len() || prices.ncols() != tickers.len() {
            return Err(Error::InvalidParameter(format!(
                "price matrix is {}x{} but panel has {} dates and {} tickers",
                prices.nrows(),
                prices.ncols(),
                dates.len(),
                tickers.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(if w[0] == w[1] {
                Error::DuplicateDate(w[0])
            } else {
                Error::InvalidParameter("dates must be strictly increasing".into())
            });
        }
        for t in 0..prices.nrows() {
            for i in 0..prices.ncols() {
                let value = prices[(t, i)];
                if !(value > 0.0) || !value.is_finite() {
                    return Err(Error::NonPositivePrice {
                        date: dates[t],
                        ticker: tickers[i].clone(),
                        value,
                    });
                }
            }
        }
        Ok(Self {
            dates,
            tickers,
            prices,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    /// Panel restricted to the given asset columns, in the given order.
    pub fn select_assets(&self, columns: &[usize]) -> PricePanel {
        PricePanel {
            dates: self.dates.clone(),
            tickers: columns.iter().map(|&c| self.tickers[c].clone()).collect(),
            prices: self.prices.select_columns(columns),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.tickers.iter().cloned());
        out.write_record(&header)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut row = vec![date.format("%Y-%m-%d").to_string()];
            row.extend((0..self.n_assets()).map(|i| self.prices[(t, i)].to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

/// Reads a prices CSV from disk. See [`read_prices`].
pub fn load_prices(path: &Path, min_history: usize) -> Result<PricePanel> {
    read_prices(File::open(path)?, min_history)
}

/// Parses a prices CSV, keeping tickers with at least `min_history` valid
/// observations and dropping every date row that still has a missing cell.
pub fn read_prices<R: Read>(reader: R, min_history: usize) -> Result<PricePanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec?,
        None => {
            return Err(Error::MalformedCsv {
                line: 1,
                reason: "empty file".into(),
            })
        }
    };
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err(Error::MalformedCsv {
            line: 1,
            reason: "header must be `date,<ticker>,...`".into(),
        });
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for t in &tickers {
        if t.is_empty() || !seen.insert(t.as_str()) {
            return Err(Error::MalformedCsv {
                line: 1,
                reason: format!("empty or duplicate ticker `{t}`"),
            });
        }
    }
    let n = tickers.len();

    let mut rows: Vec<(NaiveDate, Vec<Option<f64>>)> = Vec::new();
    for (idx, rec) in records.enumerate() {
        let line = idx + 2;
        let rec = rec?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != n + 1 {
            return Err(Error::MalformedCsv {
                line,
                reason: format!("expected {} fields, found {}", n + 1, rec.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| {
            Error::MalformedCsv {
                line,
                reason: format!("bad date `{}`: {e}", &rec[0]),
            }
        })?;
        let mut cells = Vec::with_capacity(n);
        for (i, cell) in rec.iter().skip(1).enumerate() {
            cells.push(parse_cell(cell, line, date, &tickers[i])?);
        }
        rows.push((date, cells));
    }

    rows.sort_by_key(|(d, _)| *d);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateDate(w[0].0));
    }

    let keep: Vec<usize> = (0..n)
        .filter(|&i| rows.iter().filter(|(_, c)| c[i].is_some()).count() >= min_history)
        .collect();
    if keep.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no ticker has at least {min_history} valid observations"
        )));
    }

    let complete: Vec<(NaiveDate, Vec<f64>)> = rows
        .into_iter()
        .filter_map(|(d, cells)| {
            keep.iter()
                .map(|&i| cells[i])
                .collect::<Option<Vec<f64>>>()
                .map(|v| (d, v))
        })
        .collect();
    if complete.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} complete date rows survive; need at least 2",
            complete.len()
        )));
    }

    let prices = DMatrix::from_fn(complete.len(), keep.len(), |t, i| complete[t].1[i]);
    PricePanel::new(
        complete.iter().map(|(d, _)| *d).collect(),
        keep.iter().map(|&i| tickers[i].clone()).collect(),
        prices,
    )
}

fn parse_cell(cell: &str, line: usize, date: NaiveDate, ticker: &str) -> Result<Option<f64>> {
    if cell.is_empty()
        || cell.eq_ignore_ascii_case("nan")
        || cell.eq_ignore_ascii_case("na")
        || cell.eq_ignore_ascii_case("null")
    {
        return Ok(None);
    }
    let value: f64 = cell.parse().map_err(|_| Error::MalformedCsv {
        line,
        reason: format!("cannot parse price `{cell}` for {ticker}"),
    })?;
    if !value.is_finite() {
        return Err(Error::MalformedCsv {
            line,
            reason: format!("non-finite price `{cell}` for {ticker}"),
        });
    }
    if value <= 0.0 {
        return Err(Error::NonPositivePrice {
            date,
            ticker: ticker.to_string(),
            value,
        });
    }
    Ok(Some(value))
}

/// Daily returns; row `t` is the return realized on `dates[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub returns: DMatrix<f64>,
    pub mode: ReturnMode,
}

impl ReturnsPanel {
    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    /// Simple returns regardless of the panel's mode (exact conversion).
    pub fn simple_returns(&self) -> DMatrix<f64> {
        match self.mode {
            ReturnMode::Simple => self.returns.clone(),
            ReturnMode::Log => self.returns.map(f64::exp_m1),
        }
    }

    pub fn select_assets(&self, columns: &[usize]) -> ReturnsPanel {
        ReturnsPanel {
            dates: self.dates.clone(),
            tickers: columns.iter().map(|&c| self.tickers[c].clone()).collect(),
            returns: self.returns.select_columns(columns),
            mode: self.mode,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.tickers.iter().cloned());
        out.write_record(&header)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut row = vec![date.format("%Y-%m-%d").to_string()];
            row.extend((0..self.n_assets()).map(|i| self.returns[(t, i)].to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn compute_returns(panel: &PricePanel, mode: ReturnMode) -> Result<ReturnsPanel> {
    let rows = panel.n_rows();
    if rows < 2 {
        return Err(Error::InsufficientData(
            "need at least 2 price rows to form returns".into(),
        ));
    }
    let p = &panel.prices;
    let returns = DMatrix::from_fn(rows - 1, panel.n_assets(), |t, i| {
        let ratio = p[(t + 1, i)] / p[(t, i)];
        match mode {
            ReturnMode::Log => ratio.ln(),
            ReturnMode::Simple => ratio - 1.0,
        }
    });
    Ok(ReturnsPanel {
        dates: panel.dates[1..].to_vec(),
        tickers: panel.tickers.clone(),
        returns,
        mode,
    })
}

/// Per-asset statistics over one training window.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetStats {
    pub mu: DVector<f64>,
    pub sigma: DVector<f64>,
    /// Daily Sharpe ratio `mu / sigma`, zero where the volatility is degenerate.
    pub sr: DVector<f64>,
    /// Unbiased sample covariance.
    pub cov: DMatrix<f64>,
}

impl AssetStats {
    pub fn n_assets(&self) -> usize {
        self.mu.len()
    }

    /// Assembles statistics from a mean vector and covariance, deriving
    /// `sigma` and `sr` the same way [`compute_stats`] does.
    pub fn from_moments(mu: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mu.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::InvalidParameter(format!(
                "covariance is {}x{} for {n} assets",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let sigma = DVector::from_fn(n, |i, _| cov[(i, i)].max(0.0).sqrt());
        let sr = DVector::from_fn(n, |i, _| {
            if is_degenerate_vol(mu[i], sigma[i]) {
                0.0
            } else {
                mu[i] / sigma[i]
            }
        });
        Ok(Self { mu, sigma, sr, cov })
    }

    pub fn write_csv<W: Write>(&self, tickers: &[String], writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["ticker", "mu", "sigma", "sr"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(tickers.iter().map(|t| format!("cov_{t}")));
        out.write_record(&header)?;
        for (i, ticker) in tickers.iter().enumerate() {
            let mut row = vec![
                ticker.clone(),
                self.mu[i].to_string(),
                self.sigma[i].to_string(),
                self.sr[i].to_string(),
            ];
            row.extend((0..self.n_assets()).map(|j| self.cov[(i, j)].to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Mean, volatility, Sharpe ratio and covariance over the rows in `window`.
pub fn compute_stats(returns: &ReturnsPanel, window: Range<usize>) -> Result<AssetStats> {
    if window.start > window.end || window.end > returns.n_rows() {
        return Err(Error::WindowOutOfRange {
            start: window.start,
            end: window.end,
            rows: returns.n_rows(),
        });
    }
    let m = window.len();
    if m < 2 {
        return Err(Error::InsufficientData(format!(
            "statistics window has {m} rows; need at least 2"
        )));
    }
    let block = returns.returns.rows(window.start, m);
    let n = block.ncols();
    let mu = DVector::from_fn(n, |i, _| block.column(i).sum() / m as f64);
    let centered = DMatrix::from_fn(m, n, |t, i| block[(t, i)] - mu[i]);
    let mut cov = centered.transpose() * &centered / (m as f64 - 1.0);
    // exact symmetry; the product can differ in the last bit across the diagonal
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    AssetStats::from_moments(mu, cov)
}
