//! State-quality functionals: fidelity, purity, phonon statistics, the
//! Wigner function and the nonclassicality indicator.

mod wigner;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{DensityMatrix, FockError, Space};

pub use wigner::{nonclassicality, wigner, wigner_at, GridSpec, Nonclassicality, PhaseSpaceGrid, BOUNDARY_MASS_TOL, DEFAULT_GRID_POINTS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("expected a single-mode state, got {0:?}")]
    NotSingleMode(Space),
    #[error("level {level} outside a space of dimension {dim}")]
    LevelOutOfRange { level: usize, dim: usize },
    #[error("phase-space grid too small: {boundary_mass:.3e} of |W| lies near the edge")]
    GridTooSmall { boundary_mass: f64 },
    #[error("nonclassicality did not converge under grid refinement: {values:?}")]
    NotConverged { values: Vec<f64> },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Fock(#[from] FockError),
}

fn single_mode(rho: &DensityMatrix) -> Result<usize, MetricsError> {
    match rho.space() {
        Space::Single(s) => Ok(s.dim()),
        other => Err(MetricsError::NotSingleMode(other)),
    }
}

/// `F = √⟨M|ρ|M⟩`.
pub fn fidelity_to_fock(rho: &DensityMatrix, m: usize) -> Result<f64, MetricsError> {
    let dim = single_mode(rho)?;
    if m >= dim {
        return Err(MetricsError::LevelOutOfRange { level: m, dim });
    }
    Ok(rho.matrix()[(m, m)].re.clamp(0.0, 1.0).sqrt())
}

/// `Tr ρ²`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.matrix().iter().map(|v| v.norm_sqr()).sum()
}

/// Diagonal of a single-mode state, `p_n = ⟨n|ρ|n⟩`.
pub fn phonon_distribution(rho: &DensityMatrix) -> Result<Vec<f64>, MetricsError> {
    single_mode(rho)?;
    Ok(rho.populations())
}

/// `⟨n⟩ = Σ n p_n`.
pub fn mean_occupation(rho: &DensityMatrix) -> Result<f64, MetricsError> {
    Ok(phonon_distribution(rho)?.iter().enumerate().map(|(n, p)| n as f64 * p).sum())
}

/// `√A` for a Hermitian positive-semidefinite `A`, negative eigenvalues
/// clipped to zero.
fn psd_sqrt(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = a.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| Complex64::new(v.max(0.0).sqrt(), 0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.adjoint()
}

/// Uhlmann fidelity `Tr √(√ρ σ √ρ)`, in the same square-root convention as
/// [`fidelity_to_fock`]: for `σ = |M⟩⟨M|` the two agree.
pub fn state_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64, MetricsError> {
    if rho.space() != sigma.space() {
        return Err(FockError::SpaceMismatch(rho.space(), sigma.space()).into());
    }
    let s = psd_sqrt(rho.matrix());
    let inner = &s * sigma.matrix() * &s;
    let inner = (&inner + inner.adjoint()) * Complex64::new(0.5, 0.0);
    let f: f64 = inner.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok(f.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockSpace;

    fn fs(d: usize) -> FockSpace {
        FockSpace::new(d).unwrap()
    }

    #[test]
    fn fock_fidelity_examples() {
        let rho = DensityMatrix::fock(fs(8), 3).unwrap();
        assert_eq!(fidelity_to_fock(&rho, 3).unwrap(), 1.0);
        assert_eq!(fidelity_to_fock(&rho, 4).unwrap(), 0.0);
        assert!(matches!(fidelity_to_fock(&rho, 8), Err(MetricsError::LevelOutOfRange { .. })));
    }

    #[test]
    fn thermal_closed_forms() {
        // a wide truncation makes the renormalization negligible
        let rho = DensityMatrix::thermal(fs(80), 0.3).unwrap();
        assert!((purity(&rho) - 1.0 / 1.6).abs() < 1e-10);
        assert!((fidelity_to_fock(&rho, 0).unwrap() - (1.0f64 / 1.3).sqrt()).abs() < 1e-10);
        let p = phonon_distribution(&rho).unwrap();
        for (n, pn) in p.iter().enumerate().take(20) {
            let exact = 0.3f64.powi(n as i32) / 1.3f64.powi(n as i32 + 1);
            assert!((pn - exact).abs() < 1e-12);
        }
        assert!((mean_occupation(&rho).unwrap() - 0.3).abs() < 1e-10);
        // bookkeeping identity F² + Σ_{n≠M} p_n = 1
        let f = fidelity_to_fock(&rho, 2).unwrap();
        let rest: f64 = p.iter().enumerate().filter(|(n, _)| *n != 2).map(|(_, v)| v).sum();
        assert!((f * f + rest - 1.0).abs() < 1e-12);
    }

    #[test]
    fn purity_bounds() {
        assert!((purity(&DensityMatrix::maximally_mixed(fs(7)).unwrap()) - 1.0 / 7.0).abs() < 1e-14);
        let coh = DensityMatrix::coherent(fs(20), Complex64::new(0.7, -0.4)).unwrap();
        assert!((purity(&coh) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn uhlmann_fidelity() {
        let a = DensityMatrix::thermal(fs(12), 0.5).unwrap();
        assert!((state_fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-10);
        let m = DensityMatrix::fock(fs(12), 2).unwrap();
        let f = state_fidelity(&a, &m).unwrap();
        assert!((f - a.matrix()[(2, 2)].re.sqrt()).abs() < 1e-7);
        assert!((state_fidelity(&m, &a).unwrap() - f).abs() < 1e-7);
        let orth = DensityMatrix::fock(fs(12), 5).unwrap();
        assert!(state_fidelity(&m, &orth).unwrap() < 1e-7);
    }
}
