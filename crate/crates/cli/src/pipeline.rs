//! From a config to graded steady states, trajectories and phase-space
//! data. Each parameter point is solved independently.

use std::time::Instant;

use optofock::calibration::{calibrate, CalibrationError, CalibrationResult};
use optofock::dynamics::{
    chi_ref, cross_check_time, displaced_frame_reduce, effective_liouvillian, evolve_with, full_liouvillian, steady_state,
    steady_state_cross_checked, uniform_times, DynamicsError, EvolveOptions, Liouvillian, Method, OdeOptions,
    BAD_CAVITY_RATIO, RESIDUAL_TOL,
};
use optofock::fock::{partial_trace, tensor_state, DensityMatrix, FockError, Mode};
use optofock::metrics::{
    fidelity_to_fock, mean_occupation, nonclassicality, purity, wigner, GridSpec, MetricsError, PhaseSpaceGrid,
};
use optofock::model::{SystemParams, DEFAULT_N_OPTICAL};
use optofock::Complex64;
use thiserror::Error;

use crate::config::{Axis, CrossCheckMode, ExperimentConfig, InitialState, Regime};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("{0}")]
    Setup(String),
}

/// Backward-Euler steps over the cross-check horizon `20/γ_min`: each step
/// damps the slowest mode by `1/(1 + 0.1)`, about `5e-9` in total.
pub const BACKWARD_EULER_STEPS: usize = 200;

/// Largest `D²` cross-checked with the dense propagator; the matrix
/// exponential costs `O(D⁶)` and is slower than sparse backward Euler
/// well before the library limit [`PROPAGATOR_MAX_DIM`].
pub const DENSE_CROSS_CHECK_MAX_DIM: usize = 400;

/// Which master equation a configuration is solved with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// Phonon-only equation after eliminating the cavity.
    Effective,
    /// Two-mode equation, graded after the displaced-frame reduction.
    Full,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Self::Effective => "effective",
            Self::Full => "full",
        }
    }
}

/// Everything about a configuration that does not depend on the swept
/// damping rate.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub calibration: CalibrationResult,
    /// Parameters with `γ = 0`.
    pub params: SystemParams,
    pub model: Model,
    pub chi_ref: f64,
    pub kappa: f64,
    pub kappa_eff: f64,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self, RunError> {
        let cal = calibrate(config.target, config.sideband)?;
        let base = SystemParams {
            drive: config.drive,
            nbar_m: config.nbar_m,
            nbar_c: config.nbar_c,
            ..SystemParams::from_calibration(&cal)
        };
        let chi = chi_ref(&base, &cal)?;
        let (kappa, model) = match config.regime {
            Regime::BadCavity { kappa_over_chi } => (kappa_over_chi * chi, Model::Effective),
            Regime::GoodCavity { kappa_over_chi } => (kappa_over_chi * chi, Model::Full),
            Regime::Explicit { kappa } => {
                (kappa, if kappa >= BAD_CAVITY_RATIO * chi { Model::Effective } else { Model::Full })
            }
        };
        let t = config.truncation;
        let params = match model {
            Model::Effective => SystemParams {
                kappa,
                n_mech: t.n_mech.unwrap_or(config.target + 1),
                ..base
            },
            Model::Full => SystemParams {
                kappa,
                n_mech: t.n_mech.unwrap_or(base.n_mech),
                n_optical: t.n_optical.unwrap_or(DEFAULT_N_OPTICAL),
                ..base
            },
        };
        params.validate().map_err(DynamicsError::from)?;
        Ok(Self {
            config: config.clone(),
            calibration: cal,
            params,
            model,
            chi_ref: chi,
            kappa,
            kappa_eff: 4.0 * chi * chi / kappa,
        })
    }

    /// Mechanical damping for a value on the sweep axis.
    pub fn gamma(&self, ratio: f64) -> f64 {
        match self.config.sweep.axis {
            Axis::GammaOverKappaEff => ratio * self.kappa_eff,
            Axis::GammaOverKappa => ratio * self.kappa,
        }
    }

    pub fn params_at(&self, ratio: f64) -> SystemParams {
        SystemParams { gamma: self.gamma(ratio), ..self.params }
    }

    pub fn liouvillian(&self, params: &SystemParams) -> Result<Liouvillian, RunError> {
        Ok(match self.model {
            Model::Effective => effective_liouvillian(params, &self.calibration)?,
            Model::Full => full_liouvillian(params)?,
        })
    }

    /// Initial state on the simulated space: the configured mechanical
    /// state, times optical vacuum for the full model.
    pub fn initial_state(&self, params: &SystemParams) -> Result<DensityMatrix, RunError> {
        let mech_space = params.mechanical_space().map_err(DynamicsError::from)?;
        let mech = match self.config.initial {
            InitialState::Vacuum => DensityMatrix::fock(mech_space, 0)?,
            InitialState::Thermal => DensityMatrix::thermal(mech_space, params.nbar_m)?,
            InitialState::Fock(k) => DensityMatrix::fock(mech_space, k)?,
            InitialState::Coherent(a) => {
                // project onto the simulated levels and renormalize
                let c = DensityMatrix::coherent(mech_space, Complex64::new(a, 0.0))?;
                DensityMatrix::normalized(mech_space, c.into_matrix())?
            }
        };
        Ok(match self.model {
            Model::Effective => mech,
            Model::Full => {
                let opt = params.optical_space().map_err(DynamicsError::from)?;
                tensor_state(&DensityMatrix::fock(opt, 0)?, &mech)?
            }
        })
    }

    /// The state the metrics are evaluated on.
    pub fn graded_state(&self, state: &DensityMatrix, params: &SystemParams) -> Result<DensityMatrix, RunError> {
        Ok(match self.model {
            Model::Effective => state.clone(),
            Model::Full => displaced_frame_reduce(state, params)?,
        })
    }

    pub fn ode_options(&self) -> OdeOptions {
        OdeOptions { rtol: self.config.tolerances.rtol, atol: self.config.tolerances.atol, ..OdeOptions::default() }
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec { half_extent: self.config.grid.half_extent, points: self.config.grid.points }
    }

    /// `(name, value)` pairs describing the resolved setup, for file headers.
    pub fn describe(&self) -> Vec<(String, String)> {
        let p = &self.params;
        let mut out = vec![
            ("target".into(), self.config.target.to_string()),
            ("eta".into(), self.calibration.eta.to_string()),
            ("detuning".into(), self.calibration.detuning.to_string()),
            ("model".into(), self.model.name().into()),
            ("chi_ref".into(), self.chi_ref.to_string()),
            ("kappa".into(), self.kappa.to_string()),
            ("kappa_eff".into(), self.kappa_eff.to_string()),
            ("axis".into(), self.config.sweep.axis.to_string()),
            ("n_mech".into(), p.n_mech.to_string()),
        ];
        if self.model == Model::Full {
            out.push(("n_optical".into(), p.n_optical.to_string()));
        }
        out
    }
}

/// Outcome of a single point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    /// Stationary and confirmed by time evolution.
    Ok,
    /// Stationary; the time-domain confirmation was not run.
    Unchecked,
    Failed(String),
}

impl Status {
    pub fn converged(&self) -> bool {
        !matches!(self, Self::Failed(_))
    }

    pub fn label(&self) -> String {
        match self {
            Self::Ok => "ok".into(),
            Self::Unchecked => "unchecked".into(),
            Self::Failed(msg) => format!("failed: {msg}"),
        }
    }
}

/// Metrics of one steady state.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub ratio: f64,
    pub gamma: f64,
    pub fidelity: f64,
    pub purity: f64,
    pub nonclassicality: f64,
    pub n_mean: f64,
    /// `‖L vec ρ‖₁ / ‖vec ρ‖₁` of the null-space solution.
    pub residual: f64,
    pub cross_fidelity: Option<f64>,
    /// Population of the highest simulated phonon level before reduction.
    pub boundary_population: f64,
    pub status: Status,
    pub wall_ms: f64,
    /// Graded (mechanical) steady state.
    pub state: Option<DensityMatrix>,
}

impl PointResult {
    fn failed(ratio: f64, gamma: f64, msg: String, wall_ms: f64) -> Self {
        Self {
            ratio,
            gamma,
            fidelity: f64::NAN,
            purity: f64::NAN,
            nonclassicality: f64::NAN,
            n_mean: f64::NAN,
            residual: f64::NAN,
            cross_fidelity: None,
            boundary_population: f64::NAN,
            status: Status::Failed(msg),
            wall_ms,
            state: None,
        }
    }
}

/// Options that vary between the sweep and audit variants of a point.
#[derive(Debug, Clone, Copy)]
pub struct PointOptions {
    pub nonclassicality: bool,
}

impl Default for PointOptions {
    fn default() -> Self {
        Self { nonclassicality: true }
    }
}

/// Steady state and metrics at one value of the sweep axis. Solver failures
/// are captured in the result rather than returned.
pub fn solve_point(setup: &Setup, ratio: f64, opts: PointOptions) -> PointResult {
    let start = Instant::now();
    let gamma = setup.gamma(ratio);
    match solve_point_inner(setup, ratio, opts) {
        Ok(mut r) => {
            r.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            r
        }
        Err(e) => PointResult::failed(ratio, gamma, e.to_string(), start.elapsed().as_secs_f64() * 1e3),
    }
}

fn solve_point_inner(setup: &Setup, ratio: f64, opts: PointOptions) -> Result<PointResult, RunError> {
    let params = setup.params_at(ratio);
    let l = setup.liouvillian(&params)?;
    let d = l.hilbert_dim();
    let method = match setup.config.cross_check {
        CrossCheckMode::Never => None,
        CrossCheckMode::RungeKutta => Some(Method::RungeKutta),
        CrossCheckMode::Auto if d * d <= DENSE_CROSS_CHECK_MAX_DIM => Some(Method::Propagator),
        CrossCheckMode::Auto => Some(Method::BackwardEuler { steps: BACKWARD_EULER_STEPS }),
    };
    let (state, residual, cross_fidelity) = match method {
        Some(method) => {
            let rho0 = setup.initial_state(&params)?;
            let t = cross_check_time(params.gamma, setup.kappa_eff);
            let opts = EvolveOptions { ode: setup.ode_options(), method, keep_states: false };
            let report = steady_state_cross_checked(&l, &rho0, t, &opts)?;
            let f = report.cross_check.fidelity;
            (report.state, report.residual, Some(f))
        }
        None => {
            let s = steady_state(&l)?;
            let r = l.residual(s.matrix());
            (s, r, None)
        }
    };
    let boundary_population = match setup.model {
        Model::Effective => 0.0,
        Model::Full => *partial_trace(&state, Mode::Mechanical)?.populations().last().expect("nonempty"),
    };
    let graded = setup.graded_state(&state, &params)?;
    let target = setup.config.target;
    let mut status = match cross_fidelity {
        Some(f) if f >= optofock::dynamics::CROSS_FIDELITY_MIN => Status::Ok,
        Some(f) => Status::Failed(format!("time-domain cross-check fidelity {f:.6}")),
        None => Status::Unchecked,
    };
    if !(residual < RESIDUAL_TOL) {
        status = Status::Failed(format!("stationarity residual {residual:.3e}"));
    }
    let nonclassicality = if opts.nonclassicality {
        match nonclassicality(&graded, &setup.grid_spec()) {
            Ok(v) => v.value,
            Err(e) => {
                if status.converged() {
                    status = Status::Failed(e.to_string());
                }
                f64::NAN
            }
        }
    } else {
        f64::NAN
    };
    Ok(PointResult {
        ratio,
        gamma: params.gamma,
        fidelity: fidelity_to_fock(&graded, target)?,
        purity: purity(&graded),
        nonclassicality,
        n_mean: mean_occupation(&graded)?,
        residual,
        cross_fidelity,
        boundary_population,
        status,
        wall_ms: 0.0,
        state: Some(graded),
    })
}

/// Solves every sweep point on the current rayon pool; results come back
/// in sweep order whatever order they finish in.
pub fn sweep(setup: &Setup) -> Result<Vec<PointResult>, RunError> {
    use rayon::prelude::*;
    let values = setup.config.sweep.resolve().map_err(|e| RunError::Setup(e.to_string()))?;
    Ok(values.par_iter().map(|&r| solve_point(setup, r, PointOptions::default())).collect())
}

/// One sample of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveRow {
    pub t: f64,
    pub fidelity: f64,
    pub purity: f64,
    pub n_mean: f64,
    pub trace_drift: f64,
}

/// Trajectory from the configured initial state up to
/// `evolve.t_final / κ_eff` at the configured single point.
pub fn trajectory(setup: &Setup) -> Result<Vec<EvolveRow>, RunError> {
    let params = setup.params_at(setup.config.single_point());
    let l = setup.liouvillian(&params)?;
    let rho0 = setup.initial_state(&params)?;
    let times = uniform_times(setup.config.evolve.t_final / setup.kappa_eff, setup.config.evolve.samples);
    let opts = EvolveOptions { ode: setup.ode_options(), method: Method::RungeKutta, keep_states: false };
    let mut rows = Vec::with_capacity(times.len());
    let mut failure: Option<RunError> = None;
    let record = evolve_with(&l, &rho0, &times, &opts, |t, rho| {
        let graded = match setup.graded_state(rho, &params) {
            Ok(g) => g,
            Err(e) => {
                failure.get_or_insert(e);
                return;
            }
        };
        rows.push(EvolveRow {
            t,
            fidelity: fidelity_to_fock(&graded, setup.config.target).unwrap_or(f64::NAN),
            purity: purity(&graded),
            n_mean: mean_occupation(&graded).unwrap_or(f64::NAN),
            trace_drift: 0.0,
        });
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    for (row, drift) in rows.iter_mut().zip(&record.trace_drift) {
        row.trace_drift = *drift;
    }
    Ok(rows)
}

/// Steady state at the configured single point with its Wigner grid.
pub fn phase_space(setup: &Setup) -> Result<(PointResult, PhaseSpaceGrid), RunError> {
    let point = solve_point(setup, setup.config.single_point(), PointOptions::default());
    if let Status::Failed(msg) = &point.status {
        if point.state.is_none() {
            return Err(RunError::Setup(msg.clone()));
        }
    }
    let state = point.state.as_ref().expect("state present");
    let grid = wigner(state, &setup.grid_spec())?;
    Ok((point, grid))
}

/// Largest tolerated metric change between the audit variants.
pub const AUDIT_TOL: f64 = 1e-3;

/// One rerun of the audit.
#[derive(Debug, Clone)]
pub struct AuditVariant {
    pub name: String,
    pub n_optical: usize,
    pub n_mech: usize,
    pub rtol: f64,
    pub fidelity: f64,
    pub purity: f64,
    pub n_mean: f64,
    pub boundary_population: f64,
    pub status: Status,
    /// Largest change of fidelity, purity or `⟨n⟩` against the baseline.
    pub drift: f64,
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub ratio: f64,
    pub variants: Vec<AuditVariant>,
    pub max_drift: f64,
    pub notes: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.max_drift < AUDIT_TOL && self.variants.iter().all(|v| v.status.converged())
    }
}

/// Reruns the single point with a larger mechanical truncation, a larger
/// optical truncation (full model only) and tighter integrator
/// tolerances, and reports the largest metric drift.
///
/// The effective model is defined on the levels `0..=M`, so its mechanical
/// truncation is part of the model rather than a numerical parameter and
/// is not varied.
pub fn audit(setup: &Setup) -> Result<AuditReport, RunError> {
    let ratio = setup.config.single_point();
    let base_cfg = setup.config.clone();
    let mut variants: Vec<(String, ExperimentConfig)> = vec![("baseline".into(), base_cfg.clone())];
    let mut notes = Vec::new();
    let p = setup.params;
    match setup.model {
        Model::Full => {
            let mut c = base_cfg.clone();
            c.truncation.n_mech = Some(p.n_mech + 5);
            c.truncation.n_optical = Some(p.n_optical);
            variants.push(("n_mech+5".into(), c));
            let mut c = base_cfg.clone();
            c.truncation.n_mech = Some(p.n_mech);
            c.truncation.n_optical = Some(p.n_optical + 1);
            variants.push(("n_optical+1".into(), c));
        }
        Model::Effective => notes.push("effective model lives on 0..=M; truncation not varied".into()),
    }
    let mut c = base_cfg.clone();
    c.tolerances.rtol /= 10.0;
    c.tolerances.atol /= 10.0;
    variants.push(("tolerance/10".into(), c));

    let no_i = PointOptions { nonclassicality: false };
    let mut out: Vec<AuditVariant> = Vec::new();
    for (name, cfg) in variants {
        let s = Setup::new(&cfg)?;
        let r = solve_point(&s, ratio, no_i);
        out.push(AuditVariant {
            name,
            n_optical: s.params.n_optical,
            n_mech: s.params.n_mech,
            rtol: cfg.tolerances.rtol,
            fidelity: r.fidelity,
            purity: r.purity,
            n_mean: r.n_mean,
            boundary_population: r.boundary_population,
            status: r.status,
            drift: 0.0,
        });
    }
    let (f0, p0, n0) = (out[0].fidelity, out[0].purity, out[0].n_mean);
    for v in &mut out {
        let d = [(v.fidelity - f0).abs(), (v.purity - p0).abs(), (v.n_mean - n0).abs()];
        // a NaN drift (failed rerun) must not read as agreement
        v.drift = d.iter().copied().fold(0.0, |acc: f64, x| if x.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(x) });
    }
    let max_drift = out.iter().map(|v| v.drift).fold(0.0, |acc: f64, x| if x.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(x) });
    if setup.model == Model::Full {
        let edge = out[0].boundary_population;
        if edge > 1e-6 {
            notes.push(format!("population {edge:.3e} on the highest phonon level n = {}: mechanical truncation too small", p.n_mech - 1));
        }
    }
    Ok(AuditReport { ratio, variants: out, max_drift, notes })
}
