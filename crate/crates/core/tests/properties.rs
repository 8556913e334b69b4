use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use qsw_core::bench::{classical_stationary, generator, mpt_max_sharpe};
use qsw_core::engine::{build_kraus, evolve_step, DensityMatrix};
use qsw_core::graph::{build_graph, build_weight_matrix, QswParams, UpdateMode};
use qsw_core::market_data::{compute_returns, compute_stats, read_prices, AssetStats, PricePanel, ReturnMode};

fn dates(n: usize) -> Vec<chrono::NaiveDate> {
    let start = chrono::NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
    (0..n).map(|k| start + chrono::Duration::days(k as i64)).collect()
}

fn price_panel(rows: usize, cols: usize, moves: &[f64]) -> PricePanel {
    let mut prices = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        let mut p = 50.0 + 10.0 * j as f64;
        for t in 0..rows {
            p *= 1.0 + moves[(t * cols + j) % moves.len()];
            prices[(t, j)] = p;
        }
    }
    let tickers = (0..cols).map(|j| format!("T{j}")).collect();
    PricePanel::new(dates(rows), tickers, prices).unwrap()
}

/// Well-conditioned random statistics.
fn stats_strategy(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = AssetStats> {
    n.prop_flat_map(|n| {
        (
            prop::collection::vec(-0.002f64..0.003, n),
            prop::collection::vec(-0.02f64..0.02, n * n),
            prop::collection::vec(0.005f64..0.02, n),
        )
    })
    .prop_map(|(mu, a, vol)| {
        let n = mu.len();
        let a = DMatrix::from_vec(n, n, a);
        let mut cov = &a * a.transpose() / n as f64;
        for i in 0..n {
            cov[(i, i)] += vol[i] * vol[i];
        }
        AssetStats::from_moments(DVector::from_vec(mu), cov).unwrap()
    })
}

fn permute_stats(stats: &AssetStats, perm: &[usize]) -> AssetStats {
    let n = perm.len();
    let mu = DVector::from_fn(n, |i, _| stats.mu[perm[i]]);
    let cov = DMatrix::from_fn(n, n, |i, j| stats.cov[(perm[i], perm[j])]);
    AssetStats::from_moments(mu, cov).unwrap()
}

fn perm_strategy(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simple_returns_rebuild_price_ratios(moves in prop::collection::vec(-0.2f64..0.2, 1..40), cols in 1usize..4) {
        let panel = price_panel(12, cols, &moves);
        for mode in [ReturnMode::Simple, ReturnMode::Log] {
            let r = compute_returns(&panel, mode).unwrap().simple_returns();
            for j in 0..cols {
                let mut growth = 1.0;
                for t in 0..r.nrows() {
                    growth *= 1.0 + r[(t, j)];
                    let ratio = panel.prices[(t + 1, j)] / panel.prices[(0, j)];
                    prop_assert!((growth - ratio).abs() <= 1e-12 * ratio.max(1.0));
                }
            }
        }
    }

    #[test]
    fn covariance_matches_two_loop_oracle(moves in prop::collection::vec(-0.1f64..0.1, 24..48)) {
        let panel = price_panel(9, 4, &moves);
        let returns = compute_returns(&panel, ReturnMode::Simple).unwrap();
        let stats = compute_stats(&returns, 2..7).unwrap();
        let r = &returns.returns;
        for a in 0..4 {
            for b in 0..4 {
                let (mut ma, mut mb) = (0.0, 0.0);
                for t in 2..7 {
                    ma += r[(t, a)];
                    mb += r[(t, b)];
                }
                ma /= 5.0;
                mb /= 5.0;
                let mut c = 0.0;
                for t in 2..7 {
                    c += (r[(t, a)] - ma) * (r[(t, b)] - mb);
                }
                prop_assert!((stats.cov[(a, b)] - c / 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loading_ignores_row_order(moves in prop::collection::vec(-0.1f64..0.1, 10..30), perm in perm_strategy(8)) {
        let panel = price_panel(8, 3, &moves);
        let mut buf = Vec::new();
        panel.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let mut shuffled = vec![lines[0].to_string()];
        shuffled.extend(perm.iter().map(|&k| lines[k + 1].to_string()));
        let reread = read_prices(shuffled.join("\n").as_bytes(), 0).unwrap();
        let original = read_prices(text.as_bytes(), 0).unwrap();
        prop_assert_eq!(reread, original);
    }

    #[test]
    fn graph_is_permutation_equivariant(stats in stats_strategy(2..=6), seed in any::<u64>()) {
        let n = stats.n_assets();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left((seed % n as u64) as usize);
        perm.swap(0, n - 1);
        let params = QswParams::default();
        let g = build_graph(&stats, &params).unwrap();
        let gp = build_graph(&permute_stats(&stats, &perm), &params).unwrap();
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (perm[i], perm[j]);
                prop_assert!((gp.w[(i, j)] - g.w[(a, b)]).abs() <= 1e-12 * g.w[(a, b)].abs().max(1.0));
                prop_assert!((gp.p[(i, j)] - g.p[(a, b)]).abs() < 1e-12);
                prop_assert!((gp.g[(i, j)] - g.g[(a, b)]).abs() < 1e-12);
                prop_assert!((gp.h[(i, j)] - g.h[(a, b)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn google_matrix_floor_and_symmetric_hamiltonian(stats in stats_strategy(1..=8), damping in 0.05f64..0.95) {
        let params = QswParams { damping, ..QswParams::default() };
        let g = build_graph(&stats, &params).unwrap();
        let n = stats.n_assets();
        let floor = (1.0 - damping) / n as f64;
        prop_assert!(g.g.iter().all(|&x| x >= floor - 1e-15));
        for i in 0..n {
            prop_assert!((g.g.row(i).sum() - 1.0).abs() < 1e-12);
        }
        prop_assert!((&g.h - g.h.transpose()).amax() <= 1e-10);
        prop_assert!(g.cov_hat.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn higher_destination_sharpe_never_lowers_weights(stats in stats_strategy(2..=6), bump in 0.0f64..0.5, j in 0usize..6) {
        let n = stats.n_assets();
        let j = j % n;
        let params = QswParams::default();
        let w = build_weight_matrix(&stats, &params).unwrap();
        let mut bumped = stats.clone();
        bumped.sr[j] += bump;
        let wb = build_weight_matrix(&bumped, &params).unwrap();
        for i in (0..n).filter(|&i| i != j) {
            prop_assert!(wb[(i, j)] >= w[(i, j)]);
        }
    }

    #[test]
    fn kraus_step_keeps_state_physical(stats in stats_strategy(2..=7), omega in 0.0f64..=1.0, eq in any::<bool>()) {
        let mode = if eq { UpdateMode::Eq } else { UpdateMode::Alg };
        let params = QswParams { omega, update_mode: mode, ..QswParams::default() };
        let graph = build_graph(&stats, &params).unwrap();
        let kraus = build_kraus(&graph, &params).unwrap();
        prop_assert!(kraus.completeness_error() < 1e-10);
        let mut rho = DensityMatrix::maximally_mixed(graph.n());
        for _ in 0..20 {
            rho = evolve_step(&rho, &kraus, mode).unwrap();
            prop_assert!((rho.trace() - 1.0).abs() < 1e-10);
            prop_assert!(rho.hermiticity_error() < 1e-10);
            prop_assert!(rho.min_eigenvalue() >= -1e-8);
        }
    }

    #[test]
    fn classical_stationary_solves_the_balance(stats in stats_strategy(1..=8)) {
        let g = build_graph(&stats, &QswParams::default()).unwrap();
        let pi = classical_stationary(&g.g).unwrap();
        let residual = generator(&g.g) * &pi;
        prop_assert!(residual.amax() < 1e-10);
        prop_assert!(pi.iter().all(|&x| x > 0.0));
        prop_assert!((pi.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn max_sharpe_dominates_vertices_and_equal_weight(stats in stats_strategy(2..=6)) {
        let sol = mpt_max_sharpe(&stats.mu, &stats.cov, 0.0).unwrap();
        let w = &sol.benchmark.weights;
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.sum() - 1.0).abs() < 1e-12);
        prop_assert!(sol.kkt_residual < 1e-8);
        if !sol.fallback_min_variance {
            let sharpe = |v: &DVector<f64>| v.dot(&stats.mu) / v.dot(&(&stats.cov * v)).sqrt();
            let best = sharpe(w);
            let n = stats.n_assets();
            for i in 0..n {
                let mut e = DVector::zeros(n);
                e[i] = 1.0;
                prop_assert!(best >= sharpe(&e) - 1e-9);
            }
            prop_assert!(best >= sharpe(&DVector::from_element(n, 1.0 / n as f64)) - 1e-9);
        }
    }

    #[test]
    fn max_sharpe_ignores_excess_return_scale(stats in stats_strategy(2..=6), k in 0.1f64..20.0) {
        let base = mpt_max_sharpe(&stats.mu, &stats.cov, 0.0).unwrap();
        let scaled = mpt_max_sharpe(&(&stats.mu * k), &stats.cov, 0.0).unwrap();
        let diff = (&base.benchmark.weights - &scaled.benchmark.weights).amax();
        prop_assert!(diff < 1e-8, "diff {}", diff);
    }
}
