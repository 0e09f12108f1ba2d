//! Lindblad master equations: Liouvillian assembly, time evolution and
//! steady states.
//!
//! Density matrices are vectorized by stacking columns, so element `ρ_ij`
//! of a `D × D` matrix sits at index `i + D·j` and
//! `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`. This is also nalgebra's native storage
//! order, so [`vectorize`] and [`unvectorize`] are plain copies.

mod evolve;
pub mod ode;
mod steady;

use std::ops::AddAssign;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::calibration::CalibrationResult;
use crate::fock::{
    annihilation, creation, displacement_block, DensityMatrix, FockError, FockSpace, Operator,
    Space,
};
use crate::metrics::MetricsError;
use crate::model::{b_ladder_operator, chi_operator, hamiltonian_rotating, mode_operators, ModelError, SystemParams};
use crate::sparse::CsrMatrix;

pub use evolve::{
    evolve, evolve_with, uniform_times, EvolutionRecord, EvolveOptions, Method, PROPAGATOR_MAX_DIM,
    RESIDUAL_TOL, STATE_POSITIVITY_TOL, TRACE_DRIFT_TOL,
};
pub use ode::{OdeOptions, OdeStats};
pub use steady::{cross_check_time, steady_state, steady_state_cross_checked, CrossCheck, SteadyStateReport, CROSS_FIDELITY_MIN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("step size collapsed to {h:.3e} at t = {t}")]
    StepSizeCollapse { t: f64, h: f64 },
    #[error("integrator exceeded {steps} steps at t = {t}")]
    StepLimit { t: f64, steps: usize },
    #[error("trace drifted by {drift:.3e} at t = {t}")]
    TraceDrift { t: f64, drift: f64 },
    #[error("state lost positivity at t = {t}: minimum eigenvalue {min_eigenvalue:.3e}")]
    PositivityViolation { t: f64, min_eigenvalue: f64 },
    #[error("steady state is not unique (null-space dimension {})", dimension.map_or("unknown".to_string(), |d| d.to_string()))]
    DegenerateSteadyState { dimension: Option<usize> },
    #[error("steady state is not a valid density matrix: {0}")]
    NonPositiveSteadyState(String),
    #[error("sparse LU failed: {0}")]
    Factorization(String),
    #[error("invalid time grid: {0}")]
    InvalidTimes(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("effective pumping rate needs kappa > 0")]
    ZeroKappa,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

const C1: Complex64 = Complex64::new(1.0, 0.0);

/// Column-stacked copy of `ρ`.
pub fn vectorize(rho: &DMatrix<Complex64>) -> Vec<Complex64> {
    rho.as_slice().to_vec()
}

/// Inverse of [`vectorize`] for a `dim × dim` matrix.
pub fn unvectorize(v: &[Complex64], dim: usize) -> DMatrix<Complex64> {
    assert_eq!(v.len(), dim * dim, "vector length {} is not {dim}²", v.len());
    DMatrix::from_column_slice(dim, dim, v)
}

/// Sparse superoperator generating `dρ/dt = L ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Liouvillian {
    space: Space,
    matrix: CsrMatrix,
}

impl Liouvillian {
    /// `−i[H, ·] + Σ_k (r_k/2) D[O_k]` with the dissipator
    /// `D[O]ρ = 2OρO† − ρO†O − O†Oρ`. Channels with zero rate are skipped.
    pub fn new(hamiltonian: &Operator, channels: &[(f64, Operator)]) -> Result<Self, DynamicsError> {
        let space = hamiltonian.space();
        let d = space.dim();
        let id = CsrMatrix::identity(d);
        let h = hamiltonian.to_sparse();
        let minus_i = Complex64::new(0.0, -1.0);
        let mut l = id.kron(&h).add(&h.transpose().kron(&id).scale(-C1)).scale(minus_i);
        for (rate, op) in channels {
            if op.space() != space {
                return Err(FockError::SpaceMismatch(space, op.space()).into());
            }
            if *rate == 0.0 {
                continue;
            }
            let o = op.to_sparse();
            let odo = o.adjoint().matmul(&o);
            let jump = o.conj().kron(&o).scale(Complex64::new(2.0, 0.0));
            let anti = id.kron(&odo).add(&odo.transpose().kron(&id));
            l = l.add(&jump.add(&anti.scale(-C1)).scale(Complex64::new(0.5 * rate, 0.0)));
        }
        Ok(Self { space, matrix: l })
    }

    /// Wraps an already assembled superoperator.
    pub fn from_matrix(space: Space, matrix: CsrMatrix) -> Self {
        let d2 = space.dim() * space.dim();
        assert_eq!((matrix.nrows(), matrix.ncols()), (d2, d2), "superoperator must be D² × D²");
        Self { space, matrix }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    /// Hilbert-space dimension `D`.
    pub fn hilbert_dim(&self) -> usize {
        self.space.dim()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn apply(&self, vec_rho: &[Complex64]) -> Vec<Complex64> {
        self.matrix.mul_vec(vec_rho)
    }

    /// `L ρ` as a matrix.
    pub fn apply_state(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        unvectorize(&self.apply(&vectorize(rho)), self.hilbert_dim())
    }

    /// `max_j |Σ_i L_{(i,i), j}|`: how far `vec(𝟙)ᵀ` is from a left null vector.
    pub fn trace_preservation_error(&self) -> f64 {
        let d = self.hilbert_dim();
        let mut sums = vec![Complex64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for (c, v) in self.matrix.row(i + d * i) {
                sums[c] += v;
            }
        }
        sums.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `‖L vec(ρ)‖₁ / ‖vec(ρ)‖₁`, the frame-independent stationarity residual.
    pub fn residual(&self, rho: &DMatrix<Complex64>) -> f64 {
        let v = vectorize(rho);
        let norm: f64 = v.iter().map(|x| x.norm()).sum();
        let lv: f64 = self.apply(&v).iter().map(|x| x.norm()).sum();
        lv / norm
    }
}

/// `D[O]ρ = 2OρO† − ρO†O − O†Oρ`.
pub fn dissipator(op: &Operator, rho: &DensityMatrix) -> Result<DMatrix<Complex64>, DynamicsError> {
    if op.space() != rho.space() {
        return Err(FockError::SpaceMismatch(op.space(), rho.space()).into());
    }
    let o = op.to_dense();
    let od = o.adjoint();
    let odo = &od * &o;
    let r = rho.matrix();
    Ok((&o * r * &od) * Complex64::new(2.0, 0.0) - r * &odo - &odo * r)
}

/// Mechanical thermal channels `γ(1+n̄) D[b]/2 + γ n̄ D[b†]/2`.
fn thermal_channels(gamma: f64, nbar: f64, lower: Operator, raise: Operator) -> Vec<(f64, Operator)> {
    vec![(gamma * (1.0 + nbar), lower), (gamma * nbar, raise)]
}

/// Two-mode master equation in the frame rotating at the laser frequency:
/// `−i[H, ρ] + (κ/2)D[a]ρ + (γ/2)(1+n̄_m)D[b]ρ + (γ/2)n̄_m D[b†]ρ`.
/// A thermal optical bath adds `(κ/2)n̄_c D[a†]` and raises the decay
/// channel to `(κ/2)(1+n̄_c)D[a]`.
pub fn full_liouvillian(params: &SystemParams) -> Result<Liouvillian, DynamicsError> {
    let h = hamiltonian_rotating(params)?;
    let (a, b) = mode_operators(params)?;
    let mut channels = vec![(params.kappa * (1.0 + params.nbar_c), a.clone())];
    if params.nbar_c > 0.0 {
        channels.push((params.kappa * params.nbar_c, a.adjoint()));
    }
    channels.extend(thermal_channels(params.gamma, params.nbar_m, b.clone(), b.adjoint()));
    Liouvillian::new(&h, &channels)
}

/// Scalar coupling `χ_ref = max_{0≤n<M} |χ(n)|` that classifies the cavity
/// regime and normalizes the pumping jump operator.
pub fn chi_ref(params: &SystemParams, cal: &CalibrationResult) -> Result<f64, DynamicsError> {
    let needed = SystemParams { n_mech: params.n_mech.max(cal.target + 1), ..*params };
    Ok(chi_operator(&needed, cal.eta)?.reference_rate(cal.target))
}

/// Effective pumping rate `κ_eff = 4 χ_ref² / κ` after adiabatic elimination
/// of the cavity.
pub fn kappa_eff(params: &SystemParams, cal: &CalibrationResult) -> Result<f64, DynamicsError> {
    if !(params.kappa > 0.0) {
        return Err(DynamicsError::ZeroKappa);
    }
    let chi = chi_ref(params, cal)?;
    Ok(4.0 * chi * chi / params.kappa)
}

/// Ratio `κ / χ_ref` above which the cavity counts as bad (adiabatic
/// elimination valid).
pub const BAD_CAVITY_RATIO: f64 = 10.0;

pub fn is_bad_cavity(params: &SystemParams, cal: &CalibrationResult) -> Result<bool, DynamicsError> {
    Ok(params.kappa >= BAD_CAVITY_RATIO * chi_ref(params, cal)?)
}

/// Effective phonon master equation
/// `(κ_eff/2)D[B†/χ_ref]ρ + (γ/2)(1+n̄_m)D[b]ρ + (γ/2)n̄_m D[b†]ρ`
/// on the mechanical space of `params`.
///
/// The ladder is normalized by `χ_ref`, so the transition `|m⟩ → |m+1⟩`
/// proceeds at `4 χ(m)² (m+1) / κ`. The protocol works on the levels
/// `0..=M` (`params.n_mech = M + 1`); larger spaces are allowed but the
/// pump does nothing above `|M⟩`.
pub fn effective_liouvillian(params: &SystemParams, cal: &CalibrationResult) -> Result<Liouvillian, DynamicsError> {
    params.validate()?;
    let sm = params.mechanical_space()?;
    let k_eff = kappa_eff(params, cal)?;
    let chi = chi_ref(params, cal)?;
    let mut channels = Vec::new();
    // without a drive there is no pump, only the thermal bath
    if chi > 0.0 {
        channels.push((k_eff, b_ladder_operator(params, cal)?.adjoint().scale_re(1.0 / chi)));
    }
    channels.extend(thermal_channels(params.gamma, params.nbar_m, annihilation(sm), creation(sm)));
    Liouvillian::new(&Operator::zeros(sm), &channels)
}

/// Largest acceptable loss `1 − Σ_k |⟨i|D(β)|k⟩|²` from truncating the
/// output of [`displaced_frame_reduce`].
const REDUCE_TRUNCATION_TOL: f64 = 1e-12;

/// Output dimension of [`displaced_frame_reduce`]: the mechanical
/// truncation plus enough levels to hold every displaced block.
pub fn reduced_dim(params: &SystemParams) -> usize {
    let n = params.n_mech;
    let beta = Complex64::new(params.eta() * (params.n_optical - 1) as f64, 0.0);
    let mut p = n;
    loop {
        let block = displacement_block(beta, n, p);
        let worst = (0..n)
            .map(|i| 1.0 - block.row(i).iter().map(|v| v.norm_sqr()).sum::<f64>())
            .fold(0.0, f64::max);
        if worst <= REDUCE_TRUNCATION_TOL {
            return p;
        }
        p += 4;
    }
}

/// Mechanical state in the displaced interaction frame: applies
/// `D†(ξ̂)·D(ξ̂)` with `ξ̂ = η a†a` (a phonon displacement by `η n_c` on
/// the `n_c`-photon block) and traces out the optical mode. The result
/// lives on [`reduced_dim`] levels so the trace survives the displacement.
pub fn displaced_frame_reduce(rho: &DensityMatrix, params: &SystemParams) -> Result<DensityMatrix, DynamicsError> {
    let Space::Product(opt, mech) = rho.space() else {
        return Err(FockError::NotTwoMode(rho.space()).into());
    };
    if (opt.dim(), mech.dim()) != (params.n_optical, params.n_mech) {
        return Err(DynamicsError::Unsupported(format!(
            "state dimensions {}x{} do not match params {}x{}",
            opt.dim(),
            mech.dim(),
            params.n_optical,
            params.n_mech
        )));
    }
    let n = mech.dim();
    let p = reduced_dim(params);
    let r = rho.matrix();
    let mut out = DMatrix::<Complex64>::zeros(p, p);
    for nc in 0..opt.dim() {
        let block = r.view((nc * n, nc * n), (n, n));
        if nc == 0 {
            out.view_mut((0, 0), (n, n)).add_assign(&block);
            continue;
        }
        let d = displacement_block(Complex64::new(params.eta() * nc as f64, 0.0), n, p);
        out += d.adjoint() * block * &d;
    }
    Ok(DensityMatrix::new(FockSpace::new(p)?, out)?)
}
