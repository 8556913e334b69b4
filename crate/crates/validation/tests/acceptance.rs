//! Acceptance criteria 1-10, one PASS/FAIL line each.
//!
//! `cargo test -p qsw-validation --test acceptance -- 3 8` runs a subset.

use std::env;
use std::ffi::OsStr;
use std::fs;
use std::panic;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use qsw_core::backtest::{run_backtest, summarize, BacktestConfig, RebalanceContext};
use qsw_core::bench::{classical_stationary, mpt_max_sharpe};
use qsw_core::engine::{build_kraus, evolve_step, evolve_to_stationary, run_to_stationary, DensityMatrix};
use qsw_core::experiment::{
    run_grid, run_robustness, run_scenarios, ExperimentConfig, GridSpec, RobustnessSpec, SweepRecord,
    DEFAULT_OMEGAS,
};
use qsw_core::graph::{QswParams, UpdateMode};
use qsw_core::metrics::{concentration, cost_drag, efficiency};
use qsw_validation::{basis_state, clustered_returns, random_graph, random_state, random_stats, write_price_csv};

const AS_CLI: &str = "QSW_ACCEPTANCE_AS_CLI";

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn params(omega: f64, mode: UpdateMode) -> QswParams {
    QswParams {
        omega,
        update_mode: mode,
        ..QswParams::default()
    }
}

fn kraus_completeness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for k in 0..50u64 {
        let n = 5 + (k as usize % 16);
        let p = params((k % 11) as f64 / 10.0, UpdateMode::Alg);
        let graph = random_graph(n, 100 + k, &p).map_err(|e| e.to_string())?;
        let kraus = build_kraus(&graph, &p).map_err(|e| e.to_string())?;
        worst = worst.max(kraus.completeness_error());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-10 && secs < 5.0,
        format!("max |K0'K0 + diag(d) - I| = {worst:.2e} over 50 graphs (n=5..20) in {secs:.2}s"),
    )
}

fn physical_evolution() -> Outcome {
    let start = Instant::now();
    let (mut trace_err, mut herm_err, mut min_eig): (f64, f64, f64) = (0.0, 0.0, f64::INFINITY);
    for k in 0..20u64 {
        let n = 3 + (k as usize % 13);
        let omega = 0.05 + 0.95 * k as f64 / 19.0;
        for mode in [UpdateMode::Eq, UpdateMode::Alg] {
            let p = params(omega, mode);
            let graph = random_graph(n, 200 + k, &p).map_err(|e| e.to_string())?;
            let kraus = build_kraus(&graph, &p).map_err(|e| e.to_string())?;
            let mut rho = random_state(n, 300 + k).map_err(|e| e.to_string())?;
            for _ in 0..200 {
                rho = evolve_step(&rho, &kraus, mode).map_err(|e| e.to_string())?;
                if mode == UpdateMode::Eq {
                    trace_err = trace_err.max((rho.trace() - 1.0).abs());
                }
                herm_err = herm_err.max(rho.hermiticity_error());
                min_eig = min_eig.min(rho.min_eigenvalue());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        trace_err <= 1e-10 && herm_err <= 1e-10 && min_eig >= -1e-8 && secs < 30.0,
        format!(
            "eq trace error {trace_err:.2e}, hermiticity {herm_err:.2e}, min eigenvalue {min_eig:.2e} \
             over 20 instances x 200 steps x 2 modes in {secs:.1}s"
        ),
    )
}

fn classical_limit() -> Outcome {
    let start = Instant::now();
    let mut report = Vec::new();
    let mut all_ok = true;
    for mode in [UpdateMode::Alg, UpdateMode::Eq] {
        let (mut vs_g, mut vs_rates) = (0.0f64, 0.0f64);
        let mut unconverged = 0;
        for k in 0..20u64 {
            let n = 3 + (k as usize % 13);
            let p = params(1.0, mode);
            let graph = random_graph(n, 400 + k, &p).map_err(|e| e.to_string())?;
            let run = run_to_stationary(&graph, &p).map_err(|e| e.to_string())?;
            unconverged += usize::from(!run.converged);
            let pi = classical_stationary(&graph.g).map_err(|e| e.to_string())?;
            vs_g = vs_g.max((&run.weights - &pi).amax());
            let kraus = build_kraus(&graph, &p).map_err(|e| e.to_string())?;
            let pi_rates = classical_stationary(&kraus.gamma).map_err(|e| e.to_string())?;
            vs_rates = vs_rates.max((&run.weights - &pi_rates).amax());
        }
        all_ok &= vs_g <= 1e-6 && unconverged == 0;
        report.push(format!(
            "{mode}: max |w - pi(G)| = {vs_g:.2e}, unconverged {unconverged} (diagnostic: max |w - pi(Gamma)| = {vs_rates:.2e})"
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    check(all_ok && secs < 60.0, format!("{}; {secs:.1}s", report.join("; ")))
}

fn convergence_probe() -> Outcome {
    let mut runs = 0;
    let mut converged = 0;
    let mut max_iters = 0;
    let mut gap: f64 = 0.0;
    for mode in [UpdateMode::Alg, UpdateMode::Eq] {
        for &omega in &DEFAULT_OMEGAS {
            for k in 0..20u64 {
                let n = 3 + (k as usize % 13);
                let p = params(omega, mode);
                let graph = random_graph(n, 500 + k, &p).map_err(|e| e.to_string())?;
                let kraus = build_kraus(&graph, &p).map_err(|e| e.to_string())?;
                let starts = [
                    DensityMatrix::maximally_mixed(n),
                    basis_state(n, k as usize % n).map_err(|e| e.to_string())?,
                ];
                let mut diagonals = Vec::new();
                for init in starts {
                    let run = evolve_to_stationary(&kraus, &p, init, None).map_err(|e| e.to_string())?;
                    runs += 1;
                    converged += usize::from(run.converged);
                    max_iters = max_iters.max(run.iterations);
                    diagonals.push(run.rho.populations());
                }
                gap = gap.max((&diagonals[0] - &diagonals[1]).amax());
            }
        }
    }
    check(
        converged == runs && gap <= 1e-6,
        format!(
            "{converged}/{runs} runs converged (max {max_iters} iterations); \
             initial-state gap on the diagonal {gap:.2e}"
        ),
    )
}

fn sharpe(w: &DVector<f64>, mu: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    w.dot(mu) / w.dot(&(cov * w)).sqrt()
}

fn mpt_oracle() -> Outcome {
    let mu = DVector::from_row_slice(&[0.1, 0.1]);
    let cov = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.01, 0.04]));
    let two = mpt_max_sharpe(&mu, &cov, 0.0).map_err(|e| e.to_string())?;
    let tangency_err = (&two.benchmark.weights - DVector::from_row_slice(&[0.8, 0.2])).amax();

    let mut shortfall = f64::NEG_INFINITY;
    let mut instances = 0;
    let mut skipped = 0;
    let mut interior = 0;
    let mut seed = 600u64;
    while instances < 20 {
        let stats = random_stats(4, seed).map_err(|e| e.to_string())?;
        seed += 1;
        if stats.mu.max() <= 0.0 {
            skipped += 1;
            continue;
        }
        instances += 1;
        let sol = mpt_max_sharpe(&stats.mu, &stats.cov, 0.0).map_err(|e| e.to_string())?;
        let solver = sharpe(&sol.benchmark.weights, &stats.mu, &stats.cov);
        interior += usize::from(sol.benchmark.weights.iter().filter(|&&w| w > 1e-9).count() > 1);
        let mut best = f64::NEG_INFINITY;
        for a in 0..=100 {
            for b in 0..=100 - a {
                for c in 0..=100 - a - b {
                    let w = DVector::from_row_slice(&[a, b, c, 100 - a - b - c].map(|x| x as f64 / 100.0));
                    best = best.max(sharpe(&w, &stats.mu, &stats.cov));
                }
            }
        }
        shortfall = shortfall.max(best - solver);
    }
    check(
        tangency_err <= 1e-6 && shortfall <= 1e-4,
        format!(
            "two-asset tangency error {tangency_err:.2e}; worst grid-minus-solver Sharpe {shortfall:.2e} \
             on 20 instances ({interior} with more than one holding; {skipped} seeds without a positive mean skipped)"
        ),
    )
}

fn metric_oracles() -> Outcome {
    let returns = clustered_returns(6, 2, 700, 61).map_err(|e| e.to_string())?;
    let config = BacktestConfig {
        train_days: 60,
        ..Default::default()
    };
    let target = |k: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..6).map(|i| 1.0 + ((i + 2 * k) % 5) as f64).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|x| x / total).collect()
    };
    let strategy = |ctx: &RebalanceContext<'_>| Ok(DVector::from_vec(target(ctx.ordinal)));
    let res = run_backtest(&returns, &strategy, &config).map_err(|e| e.to_string())?;
    let m = summarize(&res, &config);

    let simple = returns.simple_returns();
    let rows: Vec<usize> = res.weight_history.iter().map(|r| r.row).collect();
    let mut equity = vec![1.0];
    for (q, &row) in rows.iter().enumerate() {
        let stop = rows.get(q + 1).copied().unwrap_or(simple.nrows());
        let v0 = *equity.last().unwrap();
        let w = target(q);
        let mut growth = [1.0; 6];
        for t in row..stop {
            for i in 0..6 {
                growth[i] *= 1.0 + simple[(t, i)];
            }
            equity.push(v0 * (0..6).map(|i| w[i] * growth[i]).sum::<f64>());
        }
    }
    let daily: Vec<f64> = equity.windows(2).map(|p| p[1] / p[0] - 1.0).collect();
    let k = daily.len() as f64;
    let mean = daily.iter().sum::<f64>() / k;
    let sd = (daily.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    let sr = mean / sd * 252f64.sqrt();
    let mut mdd: f64 = 0.0;
    for s in 0..equity.len() {
        for t in s..equity.len() {
            mdd = mdd.max(1.0 - equity[t] / equity[s]);
        }
    }
    let q = rows.len();
    let hhi = (0..q).map(|j| target(j).iter().map(|w| w * w).sum::<f64>()).sum::<f64>() / q as f64;
    let c5 = (0..q)
        .map(|j| {
            let mut w = target(j);
            w.sort_by(|a, b| b.partial_cmp(a).unwrap());
            w[..5].iter().sum::<f64>()
        })
        .sum::<f64>()
        / q as f64;
    let to = 4.0
        * (1..q)
            .map(|j| target(j).iter().zip(target(j - 1)).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .sum::<f64>()
        / (q - 1) as f64;

    let pairs = [
        ("equity", (res.equity.last().unwrap() - equity.last().unwrap()).abs()),
        ("sharpe", (m.sharpe_ann - sr).abs()),
        ("mdd", (m.mdd - mdd).abs()),
        ("hhi", (m.hhi_mean - hhi).abs()),
        ("n_eff", (m.n_eff_mean - 1.0 / hhi).abs()),
        ("c5", (m.c5_mean - c5).abs()),
        ("turnover", (m.turnover_ann - to).abs()),
        ("efficiency", (m.efficiency - sr / (to + 0.01)).abs()),
        ("cost drag", (m.cost_drag_bp - to * 20.0).abs()),
    ];

    // weights (x, (1-x)/3, (1-x)/3, (1-x)/3) with HHI 0.268
    let x = (2.0 + (4.0f64 - 16.0 * 0.196).sqrt()) / 8.0;
    let anchor = concentration(&[x, (1.0 - x) / 3.0, (1.0 - x) / 3.0, (1.0 - x) / 3.0]);
    let anchors = [
        ("hhi 0.268", (anchor.hhi - 0.268).abs()),
        ("n_eff 3.73", ((anchor.n_eff * 100.0).round() / 100.0 - 3.73).abs()),
        ("482% -> 96.4bp", (cost_drag(4.82, 20.0) - 96.4).abs()),
        ("32% -> 6.4bp", (cost_drag(0.32, 20.0) - 6.4).abs()),
        ("efficiency", (efficiency(1.5, 0.49) - 3.0).abs()),
    ];
    let bad: Vec<String> = pairs
        .iter()
        .chain(&anchors)
        .filter(|(_, e)| e.is_nan() || *e > 1e-10)
        .map(|(name, e)| format!("{name} off by {e:.2e}"))
        .collect();
    let worst = pairs.iter().chain(&anchors).map(|p| p.1).fold(0.0, f64::max);
    check(
        bad.is_empty(),
        if bad.is_empty() {
            format!(
                "{} backtest metrics and {} anchors within {worst:.2e} (N_eff at HHI 0.268 = {:.4})",
                pairs.len(),
                anchors.len(),
                anchor.n_eff
            )
        } else {
            bad.join(", ")
        },
    )
}

fn qsw_rows(records: &[SweepRecord]) -> usize {
    records.iter().filter(|r| r.strategy.starts_with("qsw")).count()
}

fn protocol_counts() -> Outcome {
    // single-rebalance panel, one solver step per config
    let big = clustered_returns(500, 10, 300, 70).map_err(|e| e.to_string())?;
    let light = ExperimentConfig {
        qsw: QswParams {
            max_iters: 1,
            ..QswParams::default()
        },
        ..ExperimentConfig::default()
    };
    let t = Instant::now();
    let scenarios = run_scenarios(&big, &light, &DEFAULT_OMEGAS).map_err(|e| e.to_string())?;
    let scenario_secs = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let robust = run_robustness(&big, &light, &GridSpec::default(), &RobustnessSpec::default())
        .map_err(|e| e.to_string())?;
    let robust_secs = t.elapsed().as_secs_f64();

    let universe = clustered_returns(20, 5, 252 * 7, 71).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let grid = run_grid(&universe, &ExperimentConfig::default(), &GridSpec::default()).map_err(|e| e.to_string())?;
    let grid_secs = t.elapsed().as_secs_f64();
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    let budget = 900.0 * 8.0 / cores.min(8) as f64;

    let counts = (qsw_rows(&scenarios.records), qsw_rows(&grid.records), robust.sweep.records.len());
    check(
        counts == (30, 625, 31_350) && grid_secs <= budget,
        format!(
            "scenarios {} QSW rows ({scenario_secs:.0}s, 500 assets), robustness {} rows ({robust_secs:.0}s, \
             500 assets), grid {} QSW rows in {grid_secs:.0}s on 20 assets x 6 years with {cores} core(s) \
             (budget {budget:.0}s = 15 min scaled to 8 cores; {} error rows)",
            counts.0,
            counts.2,
            counts.1,
            grid.records.iter().filter(|r| r.error.is_some()).count()
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn directional() -> Outcome {
    let returns = clustered_returns(50, 5, 252 * 7, 8).map_err(|e| e.to_string())?;
    let out = run_scenarios(&returns, &ExperimentConfig::default(), &[0.2]).map_err(|e| e.to_string())?;
    let qsw: Vec<_> = out
        .records
        .iter()
        .filter(|r| r.strategy.starts_with("qsw"))
        .filter_map(|r| r.metrics)
        .collect();
    let mpt = out
        .records
        .iter()
        .find(|r| r.strategy == "mpt")
        .and_then(|r| r.metrics)
        .ok_or("mpt row failed")?;
    let to = median(qsw.iter().map(|m| m.turnover_ann).collect());
    let hhi = median(qsw.iter().map(|m| m.hhi_mean).collect());
    check(
        qsw.len() == 6 && to < 0.5 * mpt.turnover_ann && hhi < 0.25 * mpt.hhi_mean,
        format!(
            "{} of 6 presets ran; median QSW turnover {to:.3} vs MPT {:.3} (ratio {:.3}); \
             median QSW HHI {hhi:.4} vs MPT {:.4} (ratio {:.3})",
            qsw.len(),
            mpt.turnover_ann,
            to / mpt.turnover_ann,
            mpt.hhi_mean,
            hhi / mpt.hhi_mean
        ),
    )
}

fn cli<S: AsRef<OsStr>>(args: &[S]) -> Result<(i32, String), String> {
    let exe = env::current_exe().map_err(|e| e.to_string())?;
    let out = Command::new(exe)
        .env(AS_CLI, "1")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    Ok((out.status.code().unwrap_or(-1), stdout))
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let (code, _) = cli(&["synth", "--assets", "12", "--sectors", "3", "--days", "340", "--seed", "9", "--out", path(d)])?;
    if code != 0 {
        return Err(format!("synth exited {code}"));
    }
    let prices = d.join("prices.csv");
    let mut outputs = Vec::new();
    let mut codes = Vec::new();
    for workers in ["1", "8"] {
        let out = d.join(format!("w{workers}"));
        let (code, _) = cli(&["grid", "--prices", path(&prices), "--workers", workers, "--out", path(&out)])?;
        codes.push(code);
        outputs.push(fs::read(out.join("results.csv")).map_err(|e| e.to_string())?);
    }
    let rows = outputs[0].iter().filter(|&&b| b == b'\n').count().saturating_sub(1);
    check(
        outputs[0] == outputs[1] && codes.iter().all(|c| *c == 0 || *c == 3),
        format!(
            "default grid on 12 assets: {rows} rows, exit codes {codes:?}, results.csv identical: {}",
            outputs[0] == outputs[1]
        ),
    )
}

fn degenerate_suite() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let rows = 330;
    let wiggle = |t: usize, i: usize| 100.0 * (0.01 * (t as f64 * (0.7 + 0.3 * i as f64)).sin()).exp();
    let inputs: [(&str, Vec<&str>, DMatrix<f64>); 4] = [
        ("single", vec!["A"], DMatrix::from_fn(rows, 1, wiggle)),
        ("zero", vec!["A", "B", "C"], DMatrix::from_fn(rows, 3, |_, i| 10.0 * (i + 1) as f64)),
        ("same", vec!["A", "B", "C"], DMatrix::from_fn(rows, 3, |t, _| wiggle(t, 0))),
        (
            "flat",
            vec!["A", "B", "C"],
            DMatrix::from_fn(rows, 3, |t, i| if i == 1 { 42.0 } else { wiggle(t, i) }),
        ),
    ];
    let mut failures = Vec::new();
    let mut runs = 0;
    for (name, tickers, prices) in &inputs {
        let file = d.join(format!("{name}.csv"));
        write_price_csv(&file, tickers, prices).map_err(|e| e.to_string())?;
        let subset = tickers.len().to_string();
        let commands: [(&str, Vec<&str>); 6] = [
            ("stats", vec![]),
            ("optimize", vec![]),
            ("backtest", vec![]),
            ("scenarios", vec![]),
            ("grid", vec![]),
            ("robustness", vec!["--draws", "3", "--subset", &subset, "--alphas", "1,100", "--omegas", "0.2,1"]),
        ];
        for (cmd, extra) in commands {
            let out = d.join(format!("{name}-{cmd}"));
            let mut args = vec![cmd, "--prices", path(&file), "--train-days", "120", "--out", path(&out)];
            args.extend(extra);
            let (code, stdout) = cli(&args)?;
            runs += 1;
            let mut texts = vec![stdout];
            if let Ok(entries) = fs::read_dir(&out) {
                for e in entries.flatten() {
                    texts.push(fs::read_to_string(e.path()).unwrap_or_default());
                }
            }
            let results = out.join("results.csv");
            if results.exists() {
                let (code, _) = cli(&["report", "--results", path(&results), "--plots"])?;
                runs += 1;
                if code != 0 {
                    failures.push(format!("{name}/report exit {code}"));
                }
                texts.push(fs::read_to_string(out.join("summary.csv")).unwrap_or_default());
            } else if !matches!(cmd, "stats" | "optimize") {
                failures.push(format!("{name}/{cmd} wrote no results.csv"));
            }
            let poisoned = texts.iter().any(|t| {
                let t = t.to_lowercase();
                t.contains("nan") || t.contains("inf")
            });
            if code != 0 || poisoned {
                failures.push(format!("{name}/{cmd} exit {code}{}", if poisoned { " with NaN/inf" } else { "" }));
            }
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{runs} CLI runs over n=1, zero-return, identical-asset and sigma=0 panels, all clean")
        } else {
            failures.join("; ")
        },
    )
}

fn main() -> ExitCode {
    if env::var_os(AS_CLI).is_some() {
        return ExitCode::from(qsw_cli::run(env::args_os()));
    }
    let criteria: [Criterion; 10] = [
        (1, "Kraus completeness", kraus_completeness),
        (2, "trace/Hermiticity/PSD", physical_evolution),
        (3, "classical-limit oracle", classical_limit),
        (4, "convergence probe", convergence_probe),
        (5, "MPT oracle", mpt_oracle),
        (6, "metric oracles", metric_oracles),
        (7, "protocol counts", protocol_counts),
        (8, "directional reproduction", directional),
        (9, "determinism", determinism),
        (10, "degenerate inputs", degenerate_suite),
    ];
    let selected: Vec<u32> = env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let (verdict, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += usize::from(outcome.is_err());
        println!("criterion {id:>2} {verdict} {name} [{secs:.1}s]: {detail}");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
