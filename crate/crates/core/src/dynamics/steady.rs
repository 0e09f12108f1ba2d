//! Steady states from the null space of the Liouvillian.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DMatrix;
use num_complex::Complex64;

use super::evolve::{evolve, EvolveOptions};
use super::{unvectorize, DynamicsError, Liouvillian};
use crate::fock::{DensityMatrix, FockError};
use crate::metrics::state_fidelity;

/// Smallest acceptable fidelity between the null-space solution and the
/// long-time evolved state.
pub const CROSS_FIDELITY_MIN: f64 = 0.999;
/// Two trace-constrained solves that differ by more than this signal a
/// degenerate null space.
const DEGENERACY_TOL: f64 = 1e-6;
/// Largest `D²` for which the null-space dimension is counted by SVD.
const SVD_MAX_DIM: usize = 1600;

/// Solves `L x = 0` with `Tr x = 1` replacing equation `replaced`.
fn constrained_solve(l: &Liouvillian, replaced: usize) -> Result<Vec<Complex64>, DynamicsError> {
    let d = l.hilbert_dim();
    let n = d * d;
    let mut triplets: Vec<Triplet<usize, usize, Complex64>> = l
        .matrix()
        .iter()
        .filter(|&(r, _, _)| r != replaced)
        .map(|(r, c, v)| Triplet::new(r, c, v))
        .collect();
    triplets.extend((0..d).map(|i| Triplet::new(replaced, i + d * i, Complex64::new(1.0, 0.0))));
    let a = SparseColMat::<usize, Complex64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| DynamicsError::Factorization(format!("{e:?}")))?;
    // a singular constrained system means the null space is not one-dimensional
    let lu = a
        .sp_lu()
        .map_err(|_| DynamicsError::DegenerateSteadyState { dimension: null_space_dimension(l) })?;
    let mut rhs = faer::Mat::<Complex64>::zeros(n, 1);
    rhs[(replaced, 0)] = Complex64::new(1.0, 0.0);
    let x = lu.solve(&rhs);
    let out: Vec<Complex64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(DynamicsError::DegenerateSteadyState { dimension: null_space_dimension(l) });
    }
    Ok(out)
}

/// Number of singular values below `1e-10 ‖L‖`, for small systems.
fn null_space_dimension(l: &Liouvillian) -> Option<usize> {
    let n = l.matrix().nrows();
    if n > SVD_MAX_DIM {
        return None;
    }
    let sv = l.matrix().to_dense().singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    Some(sv.iter().filter(|&&s| s <= 1e-10 * top).count())
}

/// Unique steady state of `l`.
///
/// The trace condition replaces one row of `L vec(ρ) = 0` and the system
/// is solved by sparse LU. A second solve with a different row replaced
/// must agree, otherwise the null space is degenerate. The solution is
/// Hermitized, normalized and checked for positivity.
pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix, DynamicsError> {
    let d = l.hilbert_dim();
    let n = d * d;
    let first = constrained_solve(l, 0)?;
    let second = constrained_solve(l, n - 1)?;
    let scale = first.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let diff = first.iter().zip(&second).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    if !(diff <= DEGENERACY_TOL * scale.max(1.0)) {
        return Err(DynamicsError::DegenerateSteadyState { dimension: null_space_dimension(l) });
    }
    let raw = unvectorize(&first, d);
    let herm: DMatrix<Complex64> = (&raw + raw.adjoint()) * Complex64::new(0.5, 0.0);
    let trace = herm.trace().re;
    let herm = herm / Complex64::new(trace, 0.0);
    DensityMatrix::with_tolerances(l.space(), herm, 1e-8, 1e-6).map_err(|e| match e {
        FockError::InvalidState(msg) => DynamicsError::NonPositiveSteadyState(msg),
        other => other.into(),
    })
}

/// Time-domain confirmation of a null-space steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCheck {
    pub time: f64,
    /// Fidelity between the null-space state and the evolved state.
    pub fidelity: f64,
    /// Stationarity residual of the evolved state.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateReport {
    pub state: DensityMatrix,
    /// `‖L vec ρ‖₁ / ‖vec ρ‖₁` of the null-space solution.
    pub residual: f64,
    pub cross_check: CrossCheck,
}

impl SteadyStateReport {
    /// Whether the evolved state agrees with the null-space solution.
    pub fn verified(&self) -> bool {
        self.cross_check.fidelity >= CROSS_FIDELITY_MIN
    }
}

/// Horizon `20 / min(γ, κ_eff)` for the time-domain cross-check, ignoring
/// rates that are zero.
pub fn cross_check_time(gamma: f64, kappa_eff: f64) -> f64 {
    let slowest = [gamma, kappa_eff].into_iter().filter(|r| *r > 0.0).fold(f64::INFINITY, f64::min);
    20.0 / slowest
}

/// [`steady_state`] plus an evolution of `rho0` to `t_check` whose final
/// state is compared with the null-space solution.
pub fn steady_state_cross_checked(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    t_check: f64,
    opts: &EvolveOptions,
) -> Result<SteadyStateReport, DynamicsError> {
    let state = steady_state(l)?;
    let residual = l.residual(state.matrix());
    let opts = EvolveOptions { keep_states: false, ..*opts };
    let run = evolve(l, rho0, &[0.0, t_check], &opts)?;
    let fidelity = state_fidelity(&state, &run.final_state)?;
    Ok(SteadyStateReport {
        state,
        residual,
        cross_check: CrossCheck { time: t_check, fidelity, residual: run.residual },
    })
}
