//! System parameters and the Hamiltonians of the driven optomechanical cavity.
//!
//! Frequencies are measured in units of the mechanical frequency, so
//! `omega_m` is 1 unless a caller deliberately changes it.

use num_complex::Complex64;
use thiserror::Error;

use crate::calibration::{laguerre, CalibrationResult};
use crate::fock::{
    annihilation, creation, displacement, identity, number, tensor, FockError, FockSpace, Operator, Space, C1,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("rotating-wave objects need {0}")]
    RwaViolated(String),
    #[error("only the first blue sideband (s = 1) is supported, got s = {0}")]
    UnsupportedSideband(u32),
    #[error("coupling eta must be positive, got {0}")]
    NonPositiveEta(f64),
    #[error("mechanical dimension {n_mech} cannot hold target |{target}>")]
    TargetOutsideSpace { target: usize, n_mech: usize },
    #[error(transparent)]
    Fock(#[from] FockError),
}

/// Physical rates, frequencies and truncations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Mechanical frequency, the frequency unit.
    pub omega_m: f64,
    /// Single-photon coupling `g`.
    pub g: f64,
    /// Real drive amplitude `Ω`.
    pub drive: f64,
    /// Pump detuning `Δ = ω_L − ω_c`.
    pub detuning: f64,
    /// Cavity decay rate.
    pub kappa: f64,
    /// Mechanical damping rate.
    pub gamma: f64,
    /// Mechanical bath occupancy.
    pub nbar_m: f64,
    /// Optical bath occupancy.
    pub nbar_c: f64,
    /// Sideband order `s`.
    pub sideband: u32,
    /// Optical truncation `N_c`.
    pub n_optical: usize,
    /// Mechanical truncation `N_m`.
    pub n_mech: usize,
}

/// Default drive amplitude in units of `ω_m`.
pub const DEFAULT_DRIVE: f64 = 0.02;
/// Default optical truncation.
pub const DEFAULT_N_OPTICAL: usize = 4;
/// Extra mechanical levels above the target in the default truncation.
pub const DEFAULT_MECH_MARGIN: usize = 15;

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            omega_m: 1.0,
            g: 0.0,
            drive: DEFAULT_DRIVE,
            detuning: 0.0,
            kappa: 0.0,
            gamma: 0.0,
            nbar_m: 0.0,
            nbar_c: 0.0,
            sideband: 1,
            n_optical: DEFAULT_N_OPTICAL,
            n_mech: 2,
        }
    }
}

impl SystemParams {
    /// Parameters tuned to a calibration: `g = η ω_m`, `Δ = (s − η²) ω_m`,
    /// mechanical truncation `M + 15`. Rates are left at zero.
    pub fn from_calibration(cal: &CalibrationResult) -> Self {
        Self {
            g: cal.eta,
            detuning: cal.detuning,
            sideband: cal.sideband,
            n_mech: cal.target + DEFAULT_MECH_MARGIN,
            ..Self::default()
        }
    }

    /// Scaled coupling `η = g/ω_m`.
    pub fn eta(&self) -> f64 {
        self.g / self.omega_m
    }

    pub fn optical_space(&self) -> Result<FockSpace, ModelError> {
        Ok(FockSpace::new(self.n_optical)?)
    }

    pub fn mechanical_space(&self) -> Result<FockSpace, ModelError> {
        Ok(FockSpace::new(self.n_mech)?)
    }

    pub fn space(&self) -> Result<Space, ModelError> {
        Ok(Space::Product(self.optical_space()?, self.mechanical_space()?))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("omega_m", self.omega_m),
            ("g", self.g),
            ("drive", self.drive),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("nbar_m", self.nbar_m),
            ("nbar_c", self.nbar_c),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::InvalidParams(format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        if !self.detuning.is_finite() {
            return Err(ModelError::InvalidParams(format!("detuning = {}", self.detuning)));
        }
        if self.omega_m == 0.0 {
            return Err(ModelError::InvalidParams("omega_m must be positive".into()));
        }
        self.optical_space()?;
        self.mechanical_space()?;
        Ok(())
    }

    /// Resolved-sideband (`κ < ω_m`) and weak-drive (`Ω < ω_m`) conditions.
    pub fn require_rwa(&self) -> Result<(), ModelError> {
        self.validate()?;
        if self.kappa >= self.omega_m {
            return Err(ModelError::RwaViolated(format!(
                "resolved sidebands, kappa = {} < omega_m = {}",
                self.kappa, self.omega_m
            )));
        }
        if self.drive >= self.omega_m {
            return Err(ModelError::RwaViolated(format!(
                "a weak drive, Omega = {} < omega_m = {}",
                self.drive, self.omega_m
            )));
        }
        Ok(())
    }
}

/// Two-mode `(a, b)` with the optical factor outermost.
pub(crate) fn mode_operators(params: &SystemParams) -> Result<(Operator, Operator), ModelError> {
    let (sc, sm) = (params.optical_space()?, params.mechanical_space()?);
    let a = tensor(&annihilation(sc), &identity(sm));
    let b = tensor(&identity(sc), &annihilation(sm));
    Ok((a, b))
}

/// Time-independent Hamiltonian in the frame rotating at the laser frequency:
/// `−Δ a†a + ω_m b†b − g a†a(b + b†) + Ω(a + a†)`.
pub fn hamiltonian_rotating(params: &SystemParams) -> Result<Operator, ModelError> {
    params.validate()?;
    let (sc, sm) = (params.optical_space()?, params.mechanical_space()?);
    let n_c = tensor(&number(sc), &identity(sm));
    let n_m = tensor(&identity(sc), &number(sm));
    let x_m = tensor(&identity(sc), &annihilation(sm).add(&creation(sm)));
    let drive = tensor(&annihilation(sc).add(&creation(sc)), &identity(sm));
    Ok(n_c
        .scale_re(-params.detuning)
        .add(&n_m.scale_re(params.omega_m))
        .add(&n_c.mul(&x_m).scale_re(-params.g))
        .add(&drive.scale_re(params.drive)))
}

/// Exact interaction-picture Hamiltonian in the polaron-displaced frame,
///
/// `H_D(t) = Ω e^{−iΔt} a† e^{−igηt(2n̂+1)} D†(η e^{iω_m t}) + h.c.`,
///
/// where `n̂` is the photon number before the photon is created. Rebuilt at
/// every call; it serves as a cross-check of the rotating-frame model.
pub fn hamiltonian_displaced(params: &SystemParams, t: f64) -> Result<Operator, ModelError> {
    params.validate()?;
    let (sc, sm) = (params.optical_space()?, params.mechanical_space()?);
    let eta = params.eta();
    let phases: Vec<Complex64> = (0..sc.dim())
        .map(|n| Complex64::from_polar(1.0, -params.g * eta * t * (2.0 * n as f64 + 1.0)))
        .collect();
    let kerr_phase = Operator::from_triplets(sc, phases.iter().enumerate().map(|(n, &p)| (n, n, p)));
    let raise = creation(sc).mul(&kerr_phase);
    let disp_dag = displacement(Complex64::from_polar(eta, params.omega_m * t), sm)?.adjoint();
    let half = tensor(&raise, &disp_dag).scale(Complex64::from_polar(params.drive, -params.detuning * t));
    Ok(half.add(&half.adjoint()))
}

/// Diagonal mechanical operator
/// `χ⁽¹⁾(n) = η Ω e^{−η²/2} L_n^{(1)}(η²)/(n + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiOperator {
    eta: f64,
    values: Vec<f64>,
}

impl ChiOperator {
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, n: usize) -> f64 {
        self.values[n]
    }

    pub fn as_operator(&self) -> Operator {
        let space = FockSpace::new(self.values.len()).expect("chi built on a valid space");
        Operator::diagonal(space, &self.values)
    }

    /// Characteristic coupling `⟨χ⟩ = max_{0≤n<M} |χ(n)|`, the norm of χ̂ on
    /// the levels the pump climbs through on its way to `|M⟩`.
    pub fn reference_rate(&self, target: usize) -> f64 {
        assert!(target >= 1 && target <= self.values.len());
        self.values[..target].iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Slowest ladder amplitude `min_{0≤n<M} |χ(n)| √(n+1)`.
    pub fn bottleneck_rate(&self, target: usize) -> f64 {
        assert!(target >= 1 && target <= self.values.len());
        self.values[..target]
            .iter()
            .enumerate()
            .map(|(n, v)| v.abs() * ((n + 1) as f64).sqrt())
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn chi_operator(params: &SystemParams, eta: f64) -> Result<ChiOperator, ModelError> {
    if !(eta > 0.0) {
        return Err(ModelError::NonPositiveEta(eta));
    }
    params.mechanical_space()?;
    let x = eta * eta;
    let pref = eta * params.drive * (-0.5 * x).exp();
    let values = (0..params.n_mech)
        .map(|n| pref * laguerre(n, 1, x) / (n + 1) as f64)
        .collect();
    Ok(ChiOperator { eta, values })
}

/// First-sideband effective Hamiltonian
/// `|0⟩⟨1| χ̂ b + |1⟩⟨0| b† χ̂` on `{|0⟩,|1⟩} ⊗ N_m`.
pub fn effective_hamiltonian(params: &SystemParams, eta: f64) -> Result<Operator, ModelError> {
    if params.sideband != 1 {
        return Err(ModelError::UnsupportedSideband(params.sideband));
    }
    let chi = chi_operator(params, eta)?;
    let sm = params.mechanical_space()?;
    let photons = FockSpace::new(2)?;
    let lower_photon = Operator::from_triplets(photons, [(0, 1, C1)]);
    let chi_b = chi.as_operator().mul(&annihilation(sm));
    let half = tensor(&lower_photon, &chi_b);
    Ok(half.add(&half.adjoint()))
}

/// Ladder `B = Σ_{m<M} χ(m) √(m+1) |m⟩⟨m+1|` on the mechanical space. Its
/// adjoint pumps population up to `|M⟩` and no further.
pub fn b_ladder_operator(params: &SystemParams, cal: &CalibrationResult) -> Result<Operator, ModelError> {
    let m_target = cal.target;
    if params.n_mech < m_target + 1 {
        return Err(ModelError::TargetOutsideSpace { target: m_target, n_mech: params.n_mech });
    }
    let chi = chi_operator(params, cal.eta)?;
    let sm = params.mechanical_space()?;
    Ok(Operator::from_triplets(
        sm,
        (0..m_target).map(|m| (m, m + 1, Complex64::new(chi.value(m) * ((m + 1) as f64).sqrt(), 0.0))),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::first_zero;
    use crate::fock::{displacement_element, C0};
    use nalgebra::DVector;

    fn params_for(m: usize) -> (SystemParams, CalibrationResult) {
        let cal = first_zero(m).unwrap();
        (SystemParams::from_calibration(&cal), cal)
    }

    fn basis(dim: usize, i: usize) -> DVector<Complex64> {
        let mut v = DVector::zeros(dim);
        v[i] = C1;
        v
    }

    #[test]
    fn decoupled_spectrum() {
        let p = SystemParams { detuning: 0.37, n_optical: 3, n_mech: 4, drive: 0.0, ..Default::default() };
        let h = hamiltonian_rotating(&p).unwrap().to_dense();
        let mut eig: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let mut expect: Vec<f64> = (0..3)
            .flat_map(|nc| (0..4).map(move |nm| -0.37 * nc as f64 + nm as f64))
            .collect();
        expect.sort_by(f64::total_cmp);
        for (a, b) in eig.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rotating_hamiltonian_is_hermitian_and_normal_ordered() {
        let p = SystemParams { g: 0.7, drive: 0.05, detuning: -0.2, n_optical: 4, n_mech: 9, ..Default::default() };
        let h = hamiltonian_rotating(&p).unwrap();
        assert!(h.hermiticity_error() <= 1e-12);
        assert_eq!(h.get(0, 0), C0);
    }

    #[test]
    fn displaced_hamiltonian_structure() {
        let (mut p, cal) = params_for(3);
        p.n_optical = 2;
        p.n_mech = 12;
        p.drive = 0.0;
        assert_eq!(hamiltonian_displaced(&p, 0.0).unwrap().to_dense().norm(), 0.0);
        p.drive = 0.03;
        for t in [0.0, 0.7, 13.1] {
            assert!(hamiltonian_displaced(&p, t).unwrap().hermiticity_error() <= 1e-14);
        }
        let h0 = hamiltonian_displaced(&p, 0.0).unwrap();
        let nm = p.n_mech;
        for m in 0..nm {
            for mp in 0..nm {
                // <m|D†(η)|m'> = conj(<m'|D(η)|m>)
                let expect = displacement_element(Complex64::new(cal.eta, 0.0), mp, m).conj() * p.drive;
                assert!((h0.get(nm + m, mp) - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn chi_values() {
        let (p, cal) = params_for(1);
        let chi = chi_operator(&p, cal.eta).unwrap();
        let x = cal.eta * cal.eta;
        assert!((chi.value(0) - cal.eta * p.drive * (-0.5 * x).exp()).abs() < 1e-16);
        assert!(chi.value(1).abs() < 1e-12 * p.drive);
        for m in [5, 10] {
            let (p, cal) = params_for(m);
            let chi = chi_operator(&p, cal.eta).unwrap();
            assert!(chi.value(m).abs() <= 1e-12 * p.drive);
            assert!(chi.values()[..m].iter().all(|v| v.abs() > 0.0));
        }
        assert!(matches!(chi_operator(&p, 0.0), Err(ModelError::NonPositiveEta(_))));
    }

    #[test]
    fn effective_hamiltonian_elements() {
        let (p, cal) = params_for(5);
        let h = effective_hamiltonian(&p, cal.eta).unwrap();
        assert!(h.hermiticity_error() == 0.0);
        let chi = chi_operator(&p, cal.eta).unwrap();
        let nm = p.n_mech;
        for m in 0..nm - 1 {
            let expect = chi.value(m) * ((m + 1) as f64).sqrt();
            assert!((h.get(m, nm + m + 1).re - expect).abs() < 1e-15);
        }
        // |0, M> is dark and nothing couples level M up to M + 1
        let out = h.apply(&basis(2 * nm, 5));
        assert!(out.norm() <= 1e-12 * p.drive);
        assert!(h.get(nm + 6, 5).norm() <= 1e-12 * p.drive);

        let p2 = SystemParams { sideband: 2, ..p };
        assert_eq!(effective_hamiltonian(&p2, cal.eta), Err(ModelError::UnsupportedSideband(2)));
    }

    #[test]
    fn ladder_operator() {
        let (p, cal) = params_for(4);
        let b = b_ladder_operator(&p, &cal).unwrap();
        let nm = p.n_mech;
        assert!(b.apply(&basis(nm, 0)).norm() == 0.0);
        assert!(b.adjoint().apply(&basis(nm, 4)).norm() == 0.0);
        assert_eq!(b.to_sparse().nnz(), 4);

        let (p1, cal1) = params_for(1);
        let b1 = b_ladder_operator(&p1, &cal1).unwrap();
        let chi = chi_operator(&p1, cal1.eta).unwrap();
        assert_eq!(b1.to_sparse().nnz(), 1);
        assert!((b1.get(0, 1).re - chi.value(0)).abs() < 1e-16);

        let small = SystemParams { n_mech: 4, ..p };
        assert!(matches!(b_ladder_operator(&small, &cal), Err(ModelError::TargetOutsideSpace { .. })));
    }

    #[test]
    fn rwa_guards() {
        let (mut p, _) = params_for(2);
        p.kappa = 0.1;
        assert!(p.require_rwa().is_ok());
        p.kappa = 1.5;
        assert!(matches!(p.require_rwa(), Err(ModelError::RwaViolated(_))));
        p.kappa = 0.1;
        p.drive = 2.0;
        assert!(matches!(p.require_rwa(), Err(ModelError::RwaViolated(_))));
        p.drive = 0.02;
        p.gamma = -1.0;
        assert!(matches!(p.validate(), Err(ModelError::InvalidParams(_))));
    }
}
