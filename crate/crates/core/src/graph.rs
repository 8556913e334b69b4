//! Dual-channel financial graph.
//!
//! The classical channel turns per-asset Sharpe ratios and pairwise
//! covariances into an exponential preference matrix `W`, its row-stochastic
//! normalization `P`, and the teleportation-damped Google matrix `G`. The
//! coherent channel is a real symmetric Hamiltonian whose diagonal rewards
//! high Sharpe ratios and whose couplings are the min-max normalized
//! covariances.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::market_data::AssetStats;

/// Largest exponent accepted when forming `W`.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateMode {
    /// Coherent step first, jumps fed by the post-coherent populations:
    /// `rho~ = K0 rho K0^dag`, `rho' = rho~ + diag(Gamma diag(rho~))`, then renormalized.
    #[default]
    Alg,
    /// Operator-sum form `K0 rho K0^dag + diag(Gamma diag(rho))`, exactly trace preserving.
    Eq,
    /// `rho~ - diag(p) + diag(Gamma p)` with `p = diag(rho~)`, renormalized.
    /// Loses positivity for `omega < 1`; kept for comparison only.
    AlgLiteral,
}

impl std::str::FromStr for UpdateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alg" => Ok(UpdateMode::Alg),
            "eq" => Ok(UpdateMode::Eq),
            "alg-literal" | "alg_literal" => Ok(UpdateMode::AlgLiteral),
            other => Err(Error::InvalidParameter(format!("unknown update mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for UpdateMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UpdateMode::Alg => "alg",
            UpdateMode::Eq => "eq",
            UpdateMode::AlgLiteral => "alg-literal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QswParams {
    /// Preference for high-Sharpe destinations.
    pub alpha: f64,
    /// Penalty on transitions between covarying assets.
    pub beta: f64,
    /// Holding (self-loop) coefficient.
    pub lambda_hold: f64,
    /// Quantum-classical mix: 0 is purely coherent, 1 purely classical.
    pub omega: f64,
    pub damping: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub dt: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub update_mode: UpdateMode,
}

impl Default for QswParams {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            beta: 10.0,
            lambda_hold: 10.0,
            omega: 0.2,
            damping: 0.9,
            gamma1: 100.0,
            gamma2: 100.0,
            dt: 0.1,
            tol: 1e-8,
            max_iters: 5000,
            update_mode: UpdateMode::Alg,
        }
    }
}

impl QswParams {
    pub fn with_preferences(alpha: f64, beta: f64, lambda_hold: f64, omega: f64) -> Self {
        Self {
            alpha,
            beta,
            lambda_hold,
            omega,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda_hold),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return bad(format!("omega must lie in [0, 1], got {}", self.omega));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return bad(format!("damping must lie in (0, 1), got {}", self.damping));
        }
        if !self.gamma1.is_finite() || !self.gamma2.is_finite() {
            return bad("gamma1 and gamma2 must be finite".into());
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinancialGraph {
    pub w: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub cov_hat: DMatrix<f64>,
}

impl FinancialGraph {
    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    /// Header-free row-major CSV dumps of `W`, `P`, `G` and `H`, in that order.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        for (name, m) in [("W", &self.w), ("P", &self.p), ("G", &self.g), ("H", &self.h)] {
            writeln!(out, "# {name}")?;
            write_matrix_csv(m, &mut out)?;
        }
        Ok(())
    }
}

pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, out: &mut W) -> Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// `W_ij = exp(alpha SR_j - beta Sigma_ij)` off the diagonal, `W_ii = exp(lambda SR_i)`.
pub fn build_weight_matrix(stats: &AssetStats, params: &QswParams) -> Result<DMatrix<f64>> {
    let n = stats.n_assets();
    if n == 0 {
        return Err(Error::InvalidParameter("empty asset universe".into()));
    }
    let mut exponents = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            exponents[(i, j)] = if i == j {
                params.lambda_hold * stats.sr[i]
            } else {
                params.alpha * stats.sr[j] - params.beta * stats.cov[(i, j)]
            };
        }
    }
    if exponents.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("weight exponents"));
    }
    if let Some(&worst) = exponents.iter().find(|&&x| x > MAX_EXPONENT) {
        return Err(Error::Overflow { exponent: worst });
    }
    Ok(exponents.map(f64::exp))
}

pub fn row_normalize(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut p = w.clone();
    for (i, mut row) in p.row_iter_mut().enumerate() {
        let total: f64 = row.sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "row {i} of the weight matrix sums to {total}"
            )));
        }
        row /= total;
    }
    Ok(p)
}

/// `G = damping P + (1 - damping) 11^T / n`.
pub fn google_matrix(p: &DMatrix<f64>, damping: f64) -> Result<DMatrix<f64>> {
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "damping must lie in (0, 1), got {damping}"
        )));
    }
    let n = p.nrows();
    let teleport = (1.0 - damping) / n as f64;
    Ok(p.map(|x| damping * x + teleport))
}

/// Min-max normalization over every entry (diagonal included); a constant
/// matrix maps to all zeros.
pub fn normalize_covariance(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let lo = cov.min();
    let hi = cov.max();
    let span = hi - lo;
    if !(span > 0.0) {
        return DMatrix::zeros(cov.nrows(), cov.ncols());
    }
    cov.map(|x| ((x - lo) / span).clamp(0.0, 1.0))
}

/// `H_ii = -gamma1 SR_i`, `H_ij = gamma2 Sigma_hat_ij`.
pub fn build_hamiltonian(stats: &AssetStats, params: &QswParams) -> DMatrix<f64> {
    let cov_hat = normalize_covariance(&stats.cov);
    hamiltonian_from(stats, &cov_hat, params)
}

fn hamiltonian_from(stats: &AssetStats, cov_hat: &DMatrix<f64>, params: &QswParams) -> DMatrix<f64> {
    let n = stats.n_assets();
    let mut h = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -params.gamma1 * stats.sr[i]
        } else {
            params.gamma2 * cov_hat[(i, j)]
        }
    });
    // cov is symmetric up to rounding; pin exact symmetry for the eigensolver
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

pub fn build_graph(stats: &AssetStats, params: &QswParams) -> Result<FinancialGraph> {
    params.validate()?;
    let w = build_weight_matrix(stats, params)?;
    let p = row_normalize(&w)?;
    let g = google_matrix(&p, params.damping)?;
    let cov_hat = normalize_covariance(&stats.cov);
    let h = hamiltonian_from(stats, &cov_hat, params);
    Ok(FinancialGraph { w, p, g, h, cov_hat })
}
