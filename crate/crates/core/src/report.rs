//! CSV output for sweeps: per-run results, per-strategy summaries, plot data.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::backtest::MetricsReport;
use crate::experiment::{DrawSummary, EquityCurve, SweepRecord};
use crate::{Error, Result};

pub const RESULTS_HEADER: [&str; 22] = [
    "run_id",
    "draw_id",
    "strategy",
    "alpha",
    "beta",
    "lambda",
    "omega",
    "sharpe",
    "cagr",
    "vol",
    "mdd",
    "turnover_ann",
    "efficiency",
    "hhi",
    "n_eff",
    "c5",
    "cost_drag_bp",
    "final_value",
    "converged",
    "iterations",
    "wall_ms",
    "error",
];

/// Metric columns summarized per strategy.
pub const SUMMARY_METRICS: [&str; 11] = [
    "sharpe",
    "cagr",
    "vol",
    "mdd",
    "turnover_ann",
    "efficiency",
    "hhi",
    "n_eff",
    "c5",
    "cost_drag_bp",
    "final_value",
];

fn metric_values(m: &MetricsReport) -> [f64; 11] {
    [
        m.sharpe_ann,
        m.cagr,
        m.vol_ann,
        m.mdd,
        m.turnover_ann,
        m.efficiency,
        m.hhi_mean,
        m.n_eff_mean,
        m.c5_mean,
        m.cost_drag_bp,
        m.final_value,
    ]
}

/// Non-finite values are written as empty cells.
fn num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => v.to_string(),
        _ => String::new(),
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_results<W: Write>(records: &[SweepRecord], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(RESULTS_HEADER)?;
    for r in records {
        let mut row = vec![
            r.run_id.to_string(),
            opt(r.draw_id),
            r.strategy.clone(),
            num(r.alpha),
            num(r.beta),
            num(r.lambda_hold),
            num(r.omega),
        ];
        match &r.metrics {
            Some(m) => row.extend(metric_values(m).iter().map(|&v| num(Some(v)))),
            None => row.extend(std::iter::repeat_n(String::new(), SUMMARY_METRICS.len())),
        }
        row.push(opt(r.converged));
        row.push(opt(r.iterations));
        row.push(num(r.wall_ms));
        row.push(r.error.clone().unwrap_or_default());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_cell<T: std::str::FromStr>(cell: &str, line: usize, column: &str) -> Result<Option<T>> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse().map(Some).map_err(|_| Error::MalformedCsv {
        line,
        reason: format!("bad {column} value '{cell}'"),
    })
}

/// Reads a file written by [`write_results`]; metrics are restored only for rows without an error.
pub fn read_results<R: Read>(reader: R) -> Result<Vec<SweepRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(Error::MalformedCsv {
            line: 1,
            reason: "unexpected results header".into(),
        });
    }
    let mut records = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row?;
        let line = k + 2;
        let f = |i: usize| -> Result<Option<f64>> { parse_cell(&row[i], line, RESULTS_HEADER[i]) };
        let metric_cells: Vec<Option<f64>> = (7..18).map(f).collect::<Result<_>>()?;
        let error = (!row[21].is_empty()).then(|| row[21].to_string());
        let metrics = if error.is_none() && metric_cells.iter().all(Option::is_some) {
            let v: Vec<f64> = metric_cells.into_iter().flatten().collect();
            Some(MetricsReport {
                sharpe_ann: v[0],
                sharpe_degenerate: false,
                cagr: v[1],
                vol_ann: v[2],
                mdd: v[3],
                turnover_ann: v[4],
                efficiency: v[5],
                hhi_mean: v[6],
                n_eff_mean: v[7],
                c5_mean: v[8],
                cost_drag_bp: v[9],
                final_value: v[10],
            })
        } else {
            None
        };
        records.push(SweepRecord {
            run_id: parse_cell(&row[0], line, "run_id")?.ok_or(Error::MalformedCsv {
                line,
                reason: "missing run_id".into(),
            })?,
            draw_id: parse_cell(&row[1], line, "draw_id")?,
            strategy: row[2].to_string(),
            alpha: f(3)?,
            beta: f(4)?,
            lambda_hold: f(5)?,
            omega: f(6)?,
            metrics,
            converged: parse_cell(&row[18], line, "converged")?,
            iterations: parse_cell(&row[19], line, "iterations")?,
            wall_ms: f(20)?,
            error,
        });
    }
    Ok(records)
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub metric: &'static str,
    pub count: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub mean: f64,
}

/// Groups successful records by strategy label; labelled variants (`qsw:...`)
/// are also pooled under their family name.
pub fn summarize_records(records: &[SweepRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<String, Vec<[f64; 11]>> = BTreeMap::new();
    for r in records {
        let Some(m) = &r.metrics else { continue };
        let values = metric_values(m);
        groups.entry(r.strategy.clone()).or_default().push(values);
        if let Some((family, _)) = r.strategy.split_once(':') {
            groups.entry(family.to_string()).or_default().push(values);
        }
    }
    let mut rows = Vec::new();
    for (strategy, values) in groups {
        for (k, metric) in SUMMARY_METRICS.iter().enumerate() {
            let mut col: Vec<f64> = values.iter().map(|v| v[k]).filter(|x| x.is_finite()).collect();
            if col.is_empty() {
                continue;
            }
            col.sort_by(f64::total_cmp);
            rows.push(SummaryRow {
                strategy: strategy.clone(),
                metric,
                count: col.len(),
                min: col[0],
                q25: quantile_sorted(&col, 0.25),
                median: quantile_sorted(&col, 0.5),
                q75: quantile_sorted(&col, 0.75),
                max: col[col.len() - 1],
                mean: col.iter().sum::<f64>() / col.len() as f64,
            });
        }
    }
    rows
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["strategy", "metric", "count", "min", "q25", "median", "q75", "max", "mean"])?;
    for r in rows {
        out.write_record([
            r.strategy.clone(),
            r.metric.to_string(),
            r.count.to_string(),
            num(Some(r.min)),
            num(Some(r.q25)),
            num(Some(r.median)),
            num(Some(r.q75)),
            num(Some(r.max)),
            num(Some(r.mean)),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Tukey box-plot data: whiskers at the extreme points within 1.5 IQR.
pub fn write_boxplot<W: Write>(records: &[SweepRecord], rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["strategy", "metric", "whisker_low", "q25", "median", "q75", "whisker_high", "outliers"])?;
    for r in rows {
        let k = SUMMARY_METRICS.iter().position(|m| *m == r.metric).unwrap_or(0);
        let family_match = |s: &str| s == r.strategy || s.split_once(':').is_some_and(|(f, _)| f == r.strategy);
        let col: Vec<f64> = records
            .iter()
            .filter(|rec| family_match(&rec.strategy))
            .filter_map(|rec| rec.metrics.as_ref().map(|m| metric_values(m)[k]))
            .filter(|x| x.is_finite())
            .collect();
        let iqr = r.q75 - r.q25;
        let (lo_fence, hi_fence) = (r.q25 - 1.5 * iqr, r.q75 + 1.5 * iqr);
        let inside = col.iter().copied().filter(|x| (lo_fence..=hi_fence).contains(x));
        let low = inside.clone().fold(f64::INFINITY, f64::min);
        let high = inside.fold(f64::NEG_INFINITY, f64::max);
        let outliers = col.iter().filter(|x| !(lo_fence..=hi_fence).contains(*x)).count();
        out.write_record([
            r.strategy.clone(),
            r.metric.to_string(),
            num(Some(low)),
            num(Some(r.q25)),
            num(Some(r.median)),
            num(Some(r.q75)),
            num(Some(high)),
            outliers.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_curves<W: Write>(curves: &[EquityCurve], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["run_id", "strategy", "date", "equity"])?;
    for c in curves {
        for (d, v) in c.dates.iter().zip(&c.equity) {
            out.write_record([c.run_id.to_string(), c.strategy.clone(), d.to_string(), num(Some(*v))])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_draws<W: Write>(draws: &[DrawSummary], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "draw_id",
        "best_run_id",
        "best_sharpe",
        "best_efficiency",
        "mpt_sharpe",
        "mpt_efficiency",
        "wins_sharpe",
        "wins_efficiency",
    ])?;
    for d in draws {
        out.write_record([
            d.draw_id.to_string(),
            opt(d.best_run_id),
            num(d.best_sharpe),
            num(d.best_efficiency),
            num(d.mpt_sharpe),
            num(d.mpt_efficiency),
            d.wins_sharpe().to_string(),
            d.wins_efficiency().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReportOptions<'a> {
    /// Also write box-plot and equity-curve data files.
    pub plots: bool,
    pub curves: &'a [EquityCurve],
    pub draws: Option<&'a [DrawSummary]>,
}

/// Writes `results.csv`, `summary.csv` and the optional extras into `dir`;
/// returns the paths written.
pub fn emit_report(records: &[SweepRecord], dir: &Path, options: ReportOptions<'_>) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no records to report".into()));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut create = |name: &str| -> Result<fs::File> {
        let path = dir.join(name);
        let f = fs::File::create(&path)?;
        written.push(path);
        Ok(f)
    };
    write_results(records, create("results.csv")?)?;
    let summary = summarize_records(records);
    write_summary(&summary, create("summary.csv")?)?;
    if let Some(draws) = options.draws {
        write_draws(draws, create("draws.csv")?)?;
    }
    if options.plots {
        write_boxplot(records, &summary, create("boxplot.csv")?)?;
        if !options.curves.is_empty() {
            write_curves(options.curves, create("equity_curves.csv")?)?;
        }
    }
    Ok(written)
}
