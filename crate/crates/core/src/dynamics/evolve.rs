//! Time evolution of a density matrix under a fixed Liouvillian.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::ode::{integrate, OdeOptions, OdeStats};
use super::{unvectorize, vectorize, DynamicsError, Liouvillian};
use crate::fock::{DensityMatrix, FockError};

/// Largest tolerated `|Tr ρ − 1|` before a stored state is rejected.
pub const TRACE_DRIFT_TOL: f64 = 1e-6;
/// Most negative tolerated eigenvalue of a stored state.
pub const STATE_POSITIVITY_TOL: f64 = 1e-6;
/// Stationarity threshold on `‖L vec ρ‖₁ / ‖vec ρ‖₁`.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Largest superoperator size `D²` handled by [`Method::Propagator`].
pub const PROPAGATOR_MAX_DIM: usize = 1600;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Adaptive Dormand–Prince 5(4) on the vectorized equation.
    RungeKutta,
    /// Dense propagator `exp(L Δt)` between consecutive sample times, for
    /// small systems and long horizons.
    Propagator,
    /// Backward Euler `(I − hL)⁻¹` with `steps` equal steps per sample
    /// interval and one sparse LU per step size. First order in time, but
    /// each step is a convex mixture of the exact maps `e^{shL}` and hence
    /// completely positive and trace preserving; meant for reaching long
    /// horizons on systems too large for the dense propagator.
    BackwardEuler { steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub ode: OdeOptions,
    pub method: Method,
    /// Keep every sampled state in the record (otherwise only the last).
    pub keep_states: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { ode: OdeOptions::default(), method: Method::RungeKutta, keep_states: true }
    }
}

/// Sampled trajectory of one evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionRecord {
    pub times: Vec<f64>,
    /// `|Tr ρ(t) − 1|` before renormalization.
    pub trace_drift: Vec<f64>,
    pub min_eigenvalue: Vec<f64>,
    /// Sampled states (empty unless requested), trace-renormalized.
    pub states: Vec<DensityMatrix>,
    pub final_state: DensityMatrix,
    /// `‖L vec ρ‖₁ / ‖vec ρ‖₁` at the final time.
    pub residual: f64,
    pub converged: bool,
    pub stats: OdeStats,
}

/// `n + 1` equally spaced times from 0 to `t_final`.
pub fn uniform_times(t_final: f64, n: usize) -> Vec<f64> {
    assert!(n >= 1);
    (0..=n).map(|k| t_final * k as f64 / n as f64).collect()
}

/// Evolves `rho0` and samples it at `times` (sorted, nonnegative).
pub fn evolve(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<EvolutionRecord, DynamicsError> {
    evolve_with(l, rho0, times, opts, |_, _| {})
}

/// [`evolve`] that also hands every validated sample to `observer`.
pub fn evolve_with<O>(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    times: &[f64],
    opts: &EvolveOptions,
    mut observer: O,
) -> Result<EvolutionRecord, DynamicsError>
where
    O: FnMut(f64, &DensityMatrix),
{
    if rho0.space() != l.space() {
        return Err(FockError::SpaceMismatch(rho0.space(), l.space()).into());
    }
    if times.is_empty() || times[0] < 0.0 || times.iter().any(|t| !t.is_finite()) {
        return Err(DynamicsError::InvalidTimes("need at least one finite, nonnegative time".into()));
    }
    let d = l.hilbert_dim();
    let mut trace_drift = Vec::with_capacity(times.len());
    let mut min_eigenvalue = Vec::with_capacity(times.len());
    let mut states = Vec::new();
    let mut last: Option<DensityMatrix> = None;

    let mut record = |t: f64, v: &[Complex64]| -> Result<(), DynamicsError> {
        let state = validate_sample(l, t, unvectorize(v, d))?;
        trace_drift.push((state.1 - 1.0).abs());
        min_eigenvalue.push(state.0.min_eigenvalue());
        observer(t, &state.0);
        if opts.keep_states {
            states.push(state.0.clone());
        }
        last = Some(state.0);
        Ok(())
    };

    let y0 = vectorize(rho0.matrix());
    let stats = match opts.method {
        Method::RungeKutta => integrate(
            |_, y, dy| l.matrix().mul_vec_into(y, dy),
            0.0,
            &y0,
            times,
            &opts.ode,
            |_, t, y| record(t, y),
        )?,
        Method::Propagator => propagate(l, &y0, times, &mut record)?,
        Method::BackwardEuler { steps } => backward_euler(l, &y0, times, steps, &mut record)?,
    };

    let final_state = last.expect("at least one sample");
    let residual = l.residual(final_state.matrix());
    Ok(EvolutionRecord {
        times: times.to_vec(),
        trace_drift,
        min_eigenvalue,
        states,
        final_state,
        residual,
        converged: residual < RESIDUAL_TOL,
        stats,
    })
}

/// Checks trace drift and positivity, then Hermitizes and renormalizes.
/// Returns the state and the raw trace.
fn validate_sample(l: &Liouvillian, t: f64, raw: DMatrix<Complex64>) -> Result<(DensityMatrix, f64), DynamicsError> {
    let trace = raw.trace().re;
    let drift = (trace - 1.0).abs();
    if !(drift <= TRACE_DRIFT_TOL) {
        return Err(DynamicsError::TraceDrift { t, drift });
    }
    let herm = (&raw + raw.adjoint()) * Complex64::new(0.5 / trace, 0.0);
    match DensityMatrix::with_tolerances(l.space(), herm, TRACE_DRIFT_TOL, STATE_POSITIVITY_TOL) {
        Ok(state) => Ok((state, trace)),
        Err(FockError::InvalidState(_)) => {
            let herm = (&raw + raw.adjoint()) * Complex64::new(0.5 / trace, 0.0);
            Err(DynamicsError::PositivityViolation { t, min_eigenvalue: crate::fock::min_eigenvalue(&herm) })
        }
        Err(e) => Err(e.into()),
    }
}

fn propagate<R>(l: &Liouvillian, y0: &[Complex64], times: &[f64], record: &mut R) -> Result<OdeStats, DynamicsError>
where
    R: FnMut(f64, &[Complex64]) -> Result<(), DynamicsError>,
{
    let n = y0.len();
    if n > PROPAGATOR_MAX_DIM {
        return Err(DynamicsError::Unsupported(format!(
            "dense propagator limited to D² <= {PROPAGATOR_MAX_DIM}, got {n}"
        )));
    }
    let dense = l.matrix().to_dense();
    let mut y = nalgebra::DVector::from_column_slice(y0);
    let mut t = 0.0;
    let mut cached: Option<(f64, DMatrix<Complex64>)> = None;
    let mut stats = OdeStats::default();
    for &target in times {
        let dt = target - t;
        if dt < 0.0 {
            return Err(DynamicsError::InvalidTimes("sample times must be sorted".into()));
        }
        if dt > 0.0 {
            let reuse = cached.as_ref().is_some_and(|(c, _)| ((c - dt) / dt).abs() < 1e-12);
            if !reuse {
                cached = Some((dt, (&dense * Complex64::new(dt, 0.0)).exp()));
                stats.evaluations += 1;
            }
            y = &cached.as_ref().expect("just filled").1 * y;
            stats.accepted += 1;
            t = target;
        }
        record(target, y.as_slice())?;
    }
    Ok(stats)
}

fn backward_euler<R>(
    l: &Liouvillian,
    y0: &[Complex64],
    times: &[f64],
    steps: usize,
    record: &mut R,
) -> Result<OdeStats, DynamicsError>
where
    R: FnMut(f64, &[Complex64]) -> Result<(), DynamicsError>,
{
    use faer::prelude::Solve;
    use faer::sparse::{SparseColMat, Triplet};

    if steps == 0 {
        return Err(DynamicsError::InvalidTimes("backward Euler needs at least one step per interval".into()));
    }
    let n = y0.len();
    let one = Complex64::new(1.0, 0.0);
    let factor = |h: f64| {
        let mut triplets: Vec<Triplet<usize, usize, Complex64>> =
            l.matrix().iter().map(|(r, c, v)| Triplet::new(r, c, -v * h)).collect();
        triplets.extend((0..n).map(|i| Triplet::new(i, i, one)));
        let a = SparseColMat::<usize, Complex64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| DynamicsError::Factorization(format!("{e:?}")))?;
        a.sp_lu().map_err(|e| DynamicsError::Factorization(format!("{e:?}")))
    };
    let mut y = faer::Mat::<Complex64>::from_fn(n, 1, |i, _| y0[i]);
    let mut t = 0.0;
    let mut cached: Option<(f64, _)> = None;
    let mut stats = OdeStats::default();
    for &target in times {
        let dt = target - t;
        if dt < 0.0 {
            return Err(DynamicsError::InvalidTimes("sample times must be sorted".into()));
        }
        if dt > 0.0 {
            let h = dt / steps as f64;
            let reuse = matches!(&cached, Some((c, _)) if ((*c - h) / h).abs() < 1e-12);
            if !reuse {
                cached = Some((h, factor(h)?));
                stats.evaluations += 1;
            }
            let lu = &cached.as_ref().expect("just filled").1;
            for _ in 0..steps {
                y = lu.solve(&y);
            }
            stats.accepted += steps;
            t = target;
        }
        let v: Vec<Complex64> = (0..n).map(|i| y[(i, 0)]).collect();
        record(target, &v)?;
    }
    Ok(stats)
}
