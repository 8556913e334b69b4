//! Classical reference portfolios and the classical stationary law.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};
use crate::market_data::ReturnsPanel;

/// Annual turnover attributed to the index proxy (a passive index rebalances little).
pub const INDEX_TURNOVER_ANN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkMethod {
    MptMaxSharpe,
    ClassicalStationary,
    IndexProxy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkWeights {
    pub weights: DVector<f64>,
    pub method: BenchmarkMethod,
}

/// Stationary law of the continuous-time chain with rate `c[(i, j)]` from `j` to `i`.
///
/// Solves `Q pi = 0`, `sum(pi) = 1` with `Q = C - diag(1^T C)` by a dense
/// solve (one balance equation replaced by normalization) and cross-checks
/// the answer with power iteration on the uniformized chain.
pub fn classical_stationary(c: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = c.nrows();
    if n == 0 || !c.is_square() {
        return Err(Error::Reducible("rate matrix must be square and non-empty".into()));
    }
    if c.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::Reducible("rates must be finite and non-negative".into()));
    }
    if n == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let q = generator(c);
    let mut system = q.clone();
    system.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Reducible("balance equations are singular".into()))?;
    if pi.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Reducible("stationary vector is not strictly positive".into()));
    }
    let scale = q.amax().max(f64::MIN_POSITIVE);
    let residual = (&q * &pi).amax() / scale;
    if residual > 1e-10 {
        return Err(Error::Numerical(format!("balance residual {residual:e}")));
    }
    let (power, converged) = stationary_power_iteration(c, 1e-15, 200_000);
    if converged {
        let gap = (&power - &pi).amax();
        if gap > 1e-8 {
            return Err(Error::Numerical(format!(
                "power iteration disagrees with dense solve by {gap:e}"
            )));
        }
    }
    Ok(pi)
}

/// `Q = C - diag(1^T C)`.
pub fn generator(c: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = c.clone();
    for j in 0..c.ncols() {
        q[(j, j)] -= c.column(j).sum();
    }
    q
}

/// Power iteration on `I + Q / q_max` from the uniform vector. Returns the
/// final iterate and whether successive iterates met `tol` in the 1-norm.
pub fn stationary_power_iteration(c: &DMatrix<f64>, tol: f64, max_iters: usize) -> (DVector<f64>, bool) {
    let n = c.nrows();
    let q = generator(c);
    let rate = (0..n).map(|j| -q[(j, j)]).fold(0.0, f64::max) * 1.05;
    let mut p = DVector::from_element(n, 1.0 / n as f64);
    if !(rate > 0.0) {
        return (p, false);
    }
    let step = DMatrix::identity(n, n) + q / rate;
    let mut next = DVector::zeros(n);
    for _ in 0..max_iters {
        next.gemv(1.0, &step, &p, 0.0);
        let s = next.sum();
        next /= s;
        let delta: f64 = (&next - &p).abs().sum();
        std::mem::swap(&mut p, &mut next);
        if delta <= tol {
            return (p, true);
        }
    }
    (p, false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MptSolution {
    pub benchmark: BenchmarkWeights,
    /// True when no asset beats the risk-free rate and the long-only
    /// minimum-variance portfolio was returned instead.
    pub fallback_min_variance: bool,
    /// KKT residual of the scaled quadratic program.
    pub kkt_residual: f64,
}

/// Long-only maximum-Sharpe portfolio.
///
/// Uses the convex reformulation `min y' S y  s.t.  y'(mu - rf) = 1, y >= 0`
/// and returns `w = y / sum(y)`. When every excess return is non-positive the
/// long-only minimum-variance portfolio is returned with
/// `fallback_min_variance` set.
pub fn mpt_max_sharpe(mu: &DVector<f64>, cov: &DMatrix<f64>, rf: f64) -> Result<MptSolution> {
    let n = mu.len();
    if n == 0 || cov.nrows() != n || cov.ncols() != n {
        return Err(Error::InvalidParameter("mean/covariance dimensions disagree".into()));
    }
    if mu.iter().chain(cov.iter()).any(|x| !x.is_finite()) || !rf.is_finite() {
        return Err(Error::NonFinite("mean-variance inputs"));
    }
    let excess = mu.map(|m| m - rf);
    let fallback = excess.iter().all(|&e| e <= 0.0);
    let direction = if fallback {
        DVector::from_element(n, 1.0)
    } else {
        excess
    };
    let (y, kkt_residual) = solve_simplex_qp(cov, &direction);
    let total = y.sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numerical("max-Sharpe program produced an empty portfolio".into()));
    }
    Ok(MptSolution {
        benchmark: BenchmarkWeights {
            weights: y / total,
            method: BenchmarkMethod::MptMaxSharpe,
        },
        fallback_min_variance: fallback,
        kkt_residual,
    })
}

/// Minimizes `y' S y` over `{y >= 0, e'y = 1}` where `e` has a positive entry.
/// Inputs are rescaled to unit magnitude first; returns the scaled solution
/// and its KKT residual.
fn solve_simplex_qp(cov: &DMatrix<f64>, e: &DVector<f64>) -> (DVector<f64>, f64) {
    let n = e.len();
    let e_scale = e.amax();
    let e = e / e_scale;
    let s_scale = cov.amax();
    let sigma = if s_scale > 0.0 {
        let mut s = cov / s_scale;
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    } else {
        DMatrix::zeros(n, n)
    };

    let seed = DVector::from_fn(n, |i, _| if e[i] > 0.0 { 1.0 } else { 0.0 });
    let mut y = &seed / e.dot(&seed);

    let lipschitz = 2.0 * SymmetricEigen::new(sigma.clone()).eigenvalues.max().max(0.0);
    if lipschitz > 0.0 {
        y = accelerated_projected_gradient(&sigma, &e, y, lipschitz);
    }
    let polished = polish_active_set(&sigma, &e, &y);
    let best = match polished {
        Some(p) if kkt_residual(&sigma, &e, &p) <= kkt_residual(&sigma, &e, &y) => p,
        _ => y,
    };
    let res = kkt_residual(&sigma, &e, &best);
    (best, res)
}

fn accelerated_projected_gradient(
    sigma: &DMatrix<f64>,
    e: &DVector<f64>,
    start: DVector<f64>,
    lipschitz: f64,
) -> DVector<f64> {
    let step = 1.0 / lipschitz;
    let mut y = start.clone();
    let mut z = start;
    let mut t = 1.0f64;
    let mut prev_obj = f64::INFINITY;
    for _ in 0..20_000 {
        let grad = sigma * &z * 2.0;
        let y_next = project(&(&z - grad * step), e);
        let obj = y_next.dot(&(sigma * &y_next));
        // restart momentum when the objective goes up
        if obj > prev_obj {
            t = 1.0;
            z = y.clone();
            prev_obj = f64::INFINITY;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &y_next + (&y_next - &y) * ((t - 1.0) / t_next);
        let moved = (&y_next - &y).amax();
        let size = y_next.amax().max(1.0);
        y = y_next;
        t = t_next;
        prev_obj = obj;
        if moved <= 1e-13 * size {
            break;
        }
    }
    y
}

/// Euclidean projection onto `{y >= 0, e'y = 1}`: `y_i = max(0, v_i + tau e_i)`
/// with `tau` chosen so the constraint holds (the left side is monotone in `tau`).
fn project(v: &DVector<f64>, e: &DVector<f64>) -> DVector<f64> {
    let g = |tau: f64| -> f64 {
        v.iter()
            .zip(e.iter())
            .map(|(&vi, &ei)| ei * (vi + tau * ei).max(0.0))
            .sum()
    };
    let mut lo = -1.0;
    let mut hi = 1.0;
    while g(lo) > 1.0 {
        lo *= 2.0;
    }
    while g(hi) < 1.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
    }
    // exact tau on the final linear piece
    let mid = 0.5 * (lo + hi);
    let mut num = 1.0;
    let mut den = 0.0;
    for (&vi, &ei) in v.iter().zip(e.iter()) {
        if vi + mid * ei > 0.0 {
            num -= ei * vi;
            den += ei * ei;
        }
    }
    let tau = if den > 0.0 { num / den } else { mid };
    let tau = if tau >= lo && tau <= hi { tau } else { mid };
    DVector::from_fn(v.len(), |i, _| (v[i] + tau * e[i]).max(0.0))
}

/// Solves the equality-constrained problem on a support set and adjusts the
/// set until primal and dual feasibility hold.
fn polish_active_set(sigma: &DMatrix<f64>, e: &DVector<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let n = e.len();
    let top = y.amax();
    let mut support: Vec<bool> = y.iter().map(|&v| v > 1e-9 * top).collect();
    for _ in 0..(2 * n + 2) {
        let idx: Vec<usize> = (0..n).filter(|&i| support[i]).collect();
        let m = idx.len();
        if m == 0 {
            return None;
        }
        let mut kkt = DMatrix::zeros(m + 1, m + 1);
        let mut rhs = DVector::zeros(m + 1);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                kkt[(a, b)] = 2.0 * sigma[(i, j)];
            }
            kkt[(a, m)] = -e[i];
            kkt[(m, a)] = e[i];
        }
        rhs[m] = 1.0;
        let sol = SVD::new(kkt, true, true).solve(&rhs, 1e-14).ok()?;
        let mut cand = DVector::zeros(n);
        for (a, &i) in idx.iter().enumerate() {
            cand[i] = sol[a];
        }
        if let Some((a, _)) = idx
            .iter()
            .enumerate()
            .filter(|(a, _)| sol[*a] < 0.0)
            .min_by(|x, y| sol[x.0].total_cmp(&sol[y.0]))
        {
            support[idx[a]] = false;
            continue;
        }
        let nu = sol[m];
        let grad = sigma * &cand * 2.0;
        let violator = (0..n)
            .filter(|&i| !support[i])
            .map(|i| (i, grad[i] - nu * e[i]))
            .filter(|&(_, s)| s < -1e-12)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match violator {
            Some((i, _)) => support[i] = true,
            None => return Some(cand),
        }
    }
    None
}

/// Natural KKT residual `max(|e'y - 1|, max_i |min(y_i, s_i)|)` with
/// slack `s = 2 S y - nu e` and multiplier `nu = 2 y' S y`.
fn kkt_residual(sigma: &DMatrix<f64>, e: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let grad = sigma * y * 2.0;
    let nu = y.dot(&grad);
    (0..y.len())
        .map(|i| y[i].min(grad[i] - nu * e[i]).abs())
        .fold((e.dot(y) - 1.0).abs(), f64::max)
}

/// Equal-weight buy-and-hold proxy for a broad index.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexProxy {
    pub dates: Vec<NaiveDate>,
    /// Daily simple returns of the proxy.
    pub returns: Vec<f64>,
    /// Value path starting at 1 before the first return.
    pub equity: Vec<f64>,
    pub turnover_ann: f64,
}

pub fn index_proxy(returns: &ReturnsPanel) -> Result<IndexProxy> {
    index_proxy_over(returns, 0..returns.n_rows())
}

/// Buys equal weights before `rows.start` and holds through `rows.end`.
pub fn index_proxy_over(returns: &ReturnsPanel, rows: std::ops::Range<usize>) -> Result<IndexProxy> {
    let n = returns.n_assets();
    if n == 0 || rows.is_empty() || rows.end > returns.n_rows() {
        return Err(Error::InsufficientData("index proxy needs a non-empty window".into()));
    }
    let simple = returns.simple_returns();
    let mut holdings = vec![1.0 / n as f64; n];
    let mut equity = Vec::with_capacity(rows.len() + 1);
    let mut daily = Vec::with_capacity(rows.len());
    let mut value = 1.0;
    equity.push(value);
    for t in rows.clone() {
        for (i, h) in holdings.iter_mut().enumerate() {
            *h *= 1.0 + simple[(t, i)];
        }
        let next: f64 = holdings.iter().sum();
        daily.push(next / value - 1.0);
        value = next;
        equity.push(value);
    }
    Ok(IndexProxy {
        dates: returns.dates[rows].to_vec(),
        returns: daily,
        equity,
        turnover_ann: INDEX_TURNOVER_ANN,
    })
}
