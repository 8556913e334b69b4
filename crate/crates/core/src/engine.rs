//! Density-matrix evolution of the quantum stochastic walk.
//!
//! One time step is the operator-sum channel
//!
//! ```text
//! rho' = K0 rho K0^dag + sum_ij K_ij rho K_ij^dag,   K_ij = gamma_ij |i><j|
//! ```
//!
//! The jump part only touches populations, `sum_ij K_ij rho K_ij^dag =
//! diag(Gamma p)` with `Gamma_ij = 1 - exp(-omega G_ij dt)` and `p = diag(rho)`,
//! so each step costs two dense complex products plus one real matrix-vector
//! product. `K0 = exp(-i (1 - omega) H dt) diag(sqrt(1 - d))` with column
//! decays `d_j = sum_i Gamma_ij`, which makes `K0^dag K0 = I - diag(d)` hold
//! exactly and the channel trace preserving.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::graph::{FinancialGraph, QswParams, UpdateMode};

pub type CMatrix = DMatrix<Complex64>;

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-8;
const WEIGHT_DUST: f64 = 1e-12;

/// Real symmetric eigendecomposition `H = V diag(lambda) V^T`.
#[derive(Debug, Clone)]
pub struct HamiltonianSpectrum {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl HamiltonianSpectrum {
    pub fn decompose(h: &DMatrix<f64>) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::InvalidParameter("Hamiltonian must be square".into()));
        }
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Hamiltonian"));
        }
        let scale = h.amax().max(1.0);
        if (h - h.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidParameter("Hamiltonian is not symmetric".into()));
        }
        let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 0)
            .ok_or_else(|| Error::Numerical("symmetric eigendecomposition did not converge".into()))?;
        Ok(Self {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }

    /// `exp(-i s H)`.
    pub fn unitary(&self, s: f64) -> CMatrix {
        let v = &self.vectors;
        let mut vc = v.clone();
        let mut vs = v.clone();
        for (k, &l) in self.values.iter().enumerate() {
            let (sin, cos) = (-s * l).sin_cos();
            vc.column_mut(k).scale_mut(cos);
            vs.column_mut(k).scale_mut(sin);
        }
        let re = vc * v.transpose();
        let im = vs * v.transpose();
        re.zip_map(&im, Complex64::new)
    }
}

/// `U = exp(-i s H)` for real symmetric `H`, via eigendecomposition.
pub fn hermitian_unitary(h: &DMatrix<f64>, s: f64) -> Result<CMatrix> {
    if !s.is_finite() {
        return Err(Error::NonFinite("evolution time"));
    }
    Ok(HamiltonianSpectrum::decompose(h)?.unitary(s))
}

/// Unit-trace Hermitian positive semidefinite state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// `I / n`.
    pub fn maximally_mixed(n: usize) -> Self {
        Self(CMatrix::from_diagonal_element(n, n, Complex64::new(1.0 / n as f64, 0.0)))
    }

    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::InvalidParameter("density matrix must be square and non-empty".into()));
        }
        let rho = Self(m);
        if !rho.is_finite() {
            return Err(Error::NonFinite("density matrix"));
        }
        let herm = rho.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidParameter(format!("matrix is not Hermitian ({herm:e})")));
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidParameter(format!("trace is {tr}, expected 1")));
        }
        let min = rho.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::InvalidParameter(format!("smallest eigenvalue {min:e} is negative")));
        }
        Ok(rho)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// Real part of the trace.
    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn populations(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.0.diagonal().iter().map(|z| z.re))
    }

    /// `max |rho - rho^dag|` over entries.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.0 + self.0.adjoint()).scale(0.5);
        SymmetricEigen::new(sym).eigenvalues.min()
    }

    fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Discretized channel for one time step.
#[derive(Debug, Clone)]
pub struct KrausSet {
    pub k0: CMatrix,
    k0_adj: CMatrix,
    /// `Gamma_ij = gamma_ij^2 = 1 - exp(-omega c_ij dt)` with rates `c = G`.
    pub gamma: DMatrix<f64>,
    /// Column sums of `Gamma`.
    pub decay: DVector<f64>,
}

impl KrausSet {
    pub fn n(&self) -> usize {
        self.gamma.nrows()
    }

    /// `max |K0^dag K0 + diag(d) - I|`.
    pub fn completeness_error(&self) -> f64 {
        let n = self.n();
        let mut total = &self.k0_adj * &self.k0;
        for j in 0..n {
            total[(j, j)] += Complex64::new(self.decay[j] - 1.0, 0.0);
        }
        max_modulus(&total)
    }
}

pub fn build_kraus(graph: &FinancialGraph, params: &QswParams) -> Result<KrausSet> {
    let spectrum = HamiltonianSpectrum::decompose(&graph.h)?;
    build_kraus_with_spectrum(graph, &spectrum, params)
}

/// Same as [`build_kraus`] with a precomputed eigendecomposition of `graph.h`.
pub fn build_kraus_with_spectrum(
    graph: &FinancialGraph,
    spectrum: &HamiltonianSpectrum,
    params: &QswParams,
) -> Result<KrausSet> {
    let n = graph.n();
    if spectrum.values.len() != n {
        return Err(Error::InvalidParameter("spectrum does not match graph size".into()));
    }
    let omega = params.omega;
    let gamma = graph.g.map(|c| -(-omega * c * params.dt).exp_m1());
    if gamma.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::NonFinite("jump probabilities"));
    }
    let decay = DVector::from_fn(n, |j, _| gamma.column(j).sum());
    if let Some(column) = decay.iter().position(|&d| d >= 1.0) {
        return Err(Error::TimeStepTooLarge {
            column,
            decay: decay[column],
        });
    }
    let mut k0 = spectrum.unitary((1.0 - omega) * params.dt);
    for j in 0..n {
        let keep = (1.0 - decay[j]).sqrt();
        k0.column_mut(j).scale_mut(keep);
    }
    let k0_adj = k0.adjoint();
    Ok(KrausSet {
        k0,
        k0_adj,
        gamma,
        decay,
    })
}

/// Reusable buffers for repeated steps with the same channel.
///
/// The conjugation `K0 rho K0^dag` runs on real and imaginary parts separately
/// so that it goes through the real (SIMD) matrix kernels.
struct Stepper<'a> {
    kraus: &'a KrausSet,
    mode: UpdateMode,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    a_t: DMatrix<f64>,
    b_t: DMatrix<f64>,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    re: DMatrix<f64>,
    im: DMatrix<f64>,
    pops: DVector<f64>,
    jumps: DVector<f64>,
}

impl<'a> Stepper<'a> {
    fn new(kraus: &'a KrausSet, mode: UpdateMode) -> Self {
        let n = kraus.n();
        let a = kraus.k0.map(|z| z.re);
        let b = kraus.k0.map(|z| z.im);
        let zeros = || DMatrix::zeros(n, n);
        Self {
            kraus,
            mode,
            a_t: a.transpose(),
            b_t: b.transpose(),
            a,
            b,
            x: zeros(),
            y: zeros(),
            p: zeros(),
            q: zeros(),
            re: zeros(),
            im: zeros(),
            pops: DVector::zeros(n),
            jumps: DVector::zeros(n),
        }
    }

    fn conjugate(&mut self, rho: &CMatrix, out: &mut CMatrix) {
        for (k, z) in rho.iter().enumerate() {
            self.x[k] = z.re;
            self.y[k] = z.im;
        }
        // (A + iB)(X + iY) = P + iQ
        self.p.gemm(1.0, &self.a, &self.x, 0.0);
        self.p.gemm(-1.0, &self.b, &self.y, 1.0);
        self.q.gemm(1.0, &self.a, &self.y, 0.0);
        self.q.gemm(1.0, &self.b, &self.x, 1.0);
        // (P + iQ)(A^T - iB^T)
        self.re.gemm(1.0, &self.p, &self.a_t, 0.0);
        self.re.gemm(1.0, &self.q, &self.b_t, 1.0);
        self.im.gemm(1.0, &self.q, &self.a_t, 0.0);
        self.im.gemm(-1.0, &self.p, &self.b_t, 1.0);
        for (k, z) in out.iter_mut().enumerate() {
            *z = Complex64::new(self.re[k], self.im[k]);
        }
    }

    fn step(&mut self, rho: &CMatrix, out: &mut CMatrix) -> Result<()> {
        let n = rho.nrows();
        match self.mode {
            UpdateMode::Eq => {
                for i in 0..n {
                    self.pops[i] = rho[(i, i)].re;
                }
            }
            UpdateMode::Alg | UpdateMode::AlgLiteral => {}
        }
        self.conjugate(rho, out);
        if self.mode != UpdateMode::Eq {
            for i in 0..n {
                self.pops[i] = out[(i, i)].re;
            }
        }
        self.jumps.gemv(1.0, &self.kraus.gamma, &self.pops, 0.0);
        match self.mode {
            UpdateMode::Eq => {
                for i in 0..n {
                    out[(i, i)].re += self.jumps[i];
                }
            }
            UpdateMode::Alg | UpdateMode::AlgLiteral => {
                let replace = self.mode == UpdateMode::AlgLiteral;
                for i in 0..n {
                    out[(i, i)].re += self.jumps[i];
                    if replace {
                        out[(i, i)].re -= self.pops[i];
                    }
                }
                let tr: f64 = (0..n).map(|i| out[(i, i)].re).sum();
                if !(tr > 0.0) || !tr.is_finite() {
                    return Err(Error::Numerical(format!("trace {tr} cannot be normalized")));
                }
                out.unscale_mut(tr);
            }
        }
        if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("evolved density matrix"));
        }
        Ok(())
    }
}

/// One step of the discretized walk.
pub fn evolve_step(rho: &DensityMatrix, kraus: &KrausSet, mode: UpdateMode) -> Result<DensityMatrix> {
    if rho.n() != kraus.n() {
        return Err(Error::InvalidParameter("state and channel sizes differ".into()));
    }
    let mut out = CMatrix::zeros(rho.n(), rho.n());
    Stepper::new(kraus, mode).step(rho.matrix(), &mut out)?;
    Ok(DensityMatrix(out))
}

/// Largest entry modulus.
pub fn max_modulus(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Entrywise 1-norm `sum_ij |a_ij - b_ij|`.
pub fn entrywise_l1(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let d = x - y;
            (d.re * d.re + d.im * d.im).sqrt()
        })
        .sum()
}

#[derive(Debug, Clone)]
pub struct StationaryResult {
    pub rho: DensityMatrix,
    pub weights: DVector<f64>,
    pub iterations: usize,
    /// Always false for `omega = 0`, where no stationary state exists.
    pub converged: bool,
    pub final_delta: f64,
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub delta: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> Result<()> {
    writeln!(out, "iteration,delta,trace,min_eigenvalue")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.iteration, r.delta, r.trace, r.min_eigenvalue)?;
    }
    Ok(())
}

/// Evolves `I/n` until consecutive states differ by at most `params.tol`.
pub fn run_to_stationary(graph: &FinancialGraph, params: &QswParams) -> Result<StationaryResult> {
    params.validate()?;
    let kraus = build_kraus(graph, params)?;
    evolve_to_stationary(&kraus, params, DensityMatrix::maximally_mixed(graph.n()), None)
}

/// Iterates the channel from `initial`; optionally records a [`TraceRow`] per step.
///
/// A step that produces non-finite entries ends the run early with
/// `converged = false`, keeping the last finite state.
pub fn evolve_to_stationary(
    kraus: &KrausSet,
    params: &QswParams,
    initial: DensityMatrix,
    mut log: Option<&mut Vec<TraceRow>>,
) -> Result<StationaryResult> {
    let n = kraus.n();
    if initial.n() != n {
        return Err(Error::InvalidParameter("initial state size differs from channel".into()));
    }
    let mut stepper = Stepper::new(kraus, params.update_mode);
    let mut current = initial.into_matrix();
    let mut next = CMatrix::zeros(n, n);
    let mut iterations = 0;
    let mut delta = f64::INFINITY;
    let mut converged = false;
    while iterations < params.max_iters {
        if stepper.step(&current, &mut next).is_err() {
            break;
        }
        iterations += 1;
        delta = entrywise_l1(&next, &current);
        std::mem::swap(&mut current, &mut next);
        if let Some(rows) = log.as_deref_mut() {
            let state = DensityMatrix(current.clone());
            rows.push(TraceRow {
                iteration: iterations,
                delta,
                trace: state.trace(),
                min_eigenvalue: state.min_eigenvalue(),
            });
        }
        if delta <= params.tol {
            converged = true;
            break;
        }
    }
    let rho = DensityMatrix(current);
    let weights = extract_weights(&rho)?;
    Ok(StationaryResult {
        rho,
        weights,
        iterations,
        converged: converged && params.omega > 0.0,
        final_delta: delta,
    })
}

/// Normalized populations `rho_ii / sum_j rho_jj`.
pub fn extract_weights(rho: &DensityMatrix) -> Result<DVector<f64>> {
    let pops = rho.populations();
    let total: f64 = pops.sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidWeights(format!("populations sum to {total}")));
    }
    let mut w = pops / total;
    for x in w.iter_mut() {
        if *x < 0.0 {
            if *x < -WEIGHT_DUST {
                return Err(Error::InvalidWeights(format!("negative population {x:e}")));
            }
            *x = 0.0;
        }
    }
    let s = w.sum();
    Ok(w / s)
}
