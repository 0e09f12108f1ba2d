//! Wigner function by the displaced-parity formula and the phase-space
//! nonclassicality functional.
//!
//! Phase-space coordinates are `α = (q + ip)/√2`, in which the vacuum is
//! `W = e^{−(q²+p²)}/π` and `∫∫ W dq dp = 1`.

use std::f64::consts::{FRAC_1_PI, PI, SQRT_2};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{mean_occupation, single_mode, MetricsError};
use crate::fock::{displacement_block, DensityMatrix};

/// Default number of grid points per axis.
pub const DEFAULT_GRID_POINTS: usize = 121;
/// Largest tolerated share of `∫|W|` within half a vacuum width of the edge.
pub const BOUNDARY_MASS_TOL: f64 = 1e-3;
/// Width of the edge band used for the boundary-mass check.
const BOUNDARY_BAND: f64 = 0.5;
/// Largest tolerated imaginary residue of a Wigner value.
const IMAGINARY_TOL: f64 = 1e-10;
/// Relative change between grid refinements accepted as converged; the
/// change is measured against `max(|I|, 1)`.
const REFINEMENT_TOL: f64 = 0.01;
/// Grid refinements attempted after the first evaluation.
const MAX_REFINEMENTS: usize = 2;

/// Square, origin-centred grid `[−h, h]²` with `points` samples per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Half-width `h`; `None` picks `√(2⟨n⟩) + 3`.
    pub half_extent: Option<f64>,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { half_extent: None, points: DEFAULT_GRID_POINTS }
    }
}

impl GridSpec {
    fn resolve(&self, rho: &DensityMatrix) -> Result<(f64, usize), MetricsError> {
        if self.points < 5 {
            return Err(MetricsError::InvalidGrid(format!("need at least 5 points per axis, got {}", self.points)));
        }
        let half = match self.half_extent {
            Some(h) => h,
            None => (2.0 * mean_occupation(rho)?.max(0.0)).sqrt() + 3.0,
        };
        if !(half.is_finite() && half > 0.0) {
            return Err(MetricsError::InvalidGrid(format!("half extent {half}")));
        }
        Ok((half, self.points))
    }
}

/// Wigner function sampled on a rectangular grid; `values[(i, j)]` is
/// `W(q_i, p_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceGrid {
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub n_q: usize,
    pub n_p: usize,
    pub values: DMatrix<f64>,
}

impl PhaseSpaceGrid {
    pub fn dq(&self) -> f64 {
        (self.q_max - self.q_min) / (self.n_q - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.n_p - 1) as f64
    }

    pub fn q(&self, i: usize) -> f64 {
        self.q_min + i as f64 * self.dq()
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.dp()
    }

    fn weight(&self, i: usize, j: usize) -> f64 {
        let wq = if i == 0 || i == self.n_q - 1 { 0.5 } else { 1.0 };
        let wp = if j == 0 || j == self.n_p - 1 { 0.5 } else { 1.0 };
        wq * wp * self.dq() * self.dp()
    }

    /// Trapezoidal `∫∫ f(i, j) dq dp`.
    fn integrate(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n_q {
            for j in 0..self.n_p {
                total += self.weight(i, j) * f(i, j);
            }
        }
        total
    }

    /// `∫∫ W dq dp`.
    pub fn integral(&self) -> f64 {
        self.integrate(|i, j| self.values[(i, j)])
    }

    /// Position marginal `∫ W(q_i, p) dp` for every grid row.
    pub fn marginal_q(&self) -> Vec<f64> {
        (0..self.n_q)
            .map(|i| {
                (0..self.n_p)
                    .map(|j| {
                        let w = if j == 0 || j == self.n_p - 1 { 0.5 } else { 1.0 };
                        w * self.dp() * self.values[(i, j)]
                    })
                    .sum()
            })
            .collect()
    }

    /// Share of `∫|W|` lying within half a vacuum width of the grid edge.
    pub fn boundary_mass(&self) -> f64 {
        let total = self.integrate(|i, j| self.values[(i, j)].abs());
        let near_edge = |i: usize, j: usize| {
            let (q, p) = (self.q(i), self.p(j));
            q - self.q_min < BOUNDARY_BAND
                || self.q_max - q < BOUNDARY_BAND
                || p - self.p_min < BOUNDARY_BAND
                || self.p_max - p < BOUNDARY_BAND
        };
        let edge = self.integrate(|i, j| if near_edge(i, j) { self.values[(i, j)].abs() } else { 0.0 });
        edge / total
    }

    /// `(q, p, W)` triples in row-major order.
    pub fn triples(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.n_q).flat_map(move |i| (0..self.n_p).map(move |j| (self.q(i), self.p(j), self.values[(i, j)])))
    }

    /// `∫∫ W (∂²_q + ∂²_p + 2) W dq dp` with second-order central
    /// differences inside and one-sided second differences on the edge.
    fn quadratic_form(&self) -> f64 {
        let (h_q, h_p) = (self.dq(), self.dp());
        let w = &self.values;
        let second = |n: usize, k: usize, get: &dyn Fn(usize) -> f64, h: f64| -> f64 {
            let c = k.clamp(1, n - 2);
            (get(c - 1) - 2.0 * get(c) + get(c + 1)) / (h * h)
        };
        self.integrate(|i, j| {
            let d2q = second(self.n_q, i, &|k| w[(k, j)], h_q);
            let d2p = second(self.n_p, j, &|k| w[(i, k)], h_p);
            w[(i, j)] * (d2q + d2p + 2.0 * w[(i, j)])
        })
    }
}

/// `W(q, p) = (1/π) Σ_k (−1)^k ⟨k|D†(α) ρ D(α)|k⟩` for a density matrix `r`,
/// evaluated as `(1/π) Σ_ij (−1)^i ρ_ij ⟨j|D(2α)|i⟩` with exact
/// displacement elements, so no truncation enters.
fn wigner_value(r: &DMatrix<Complex64>, q: f64, p: f64) -> f64 {
    let n = r.nrows();
    let alpha = Complex64::new(q, p) / SQRT_2;
    let d = displacement_block(alpha * 2.0, n, n);
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..n {
            row += r[(i, j)] * d[(j, i)];
        }
        acc += row * sign;
    }
    assert!(acc.im.abs() <= IMAGINARY_TOL, "Wigner value has imaginary residue {:e}", acc.im);
    acc.re * FRAC_1_PI
}

/// Wigner function at a single phase-space point.
pub fn wigner_at(rho: &DensityMatrix, q: f64, p: f64) -> Result<f64, MetricsError> {
    single_mode(rho)?;
    Ok(wigner_value(rho.matrix(), q, p))
}

/// Wigner function on a grid; rows are evaluated in parallel and
/// reassembled in order.
pub fn wigner(rho: &DensityMatrix, spec: &GridSpec) -> Result<PhaseSpaceGrid, MetricsError> {
    single_mode(rho)?;
    let (half, n) = spec.resolve(rho)?;
    let step = 2.0 * half / (n - 1) as f64;
    let coord = |k: usize| -half + k as f64 * step;
    let r = rho.matrix();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| wigner_value(r, coord(i), coord(j))).collect())
        .collect();
    let values = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let grid = PhaseSpaceGrid { q_min: -half, q_max: half, p_min: -half, p_max: half, n_q: n, n_p: n, values };
    let boundary_mass = grid.boundary_mass();
    if boundary_mass > BOUNDARY_MASS_TOL {
        return Err(MetricsError::GridTooSmall { boundary_mass });
    }
    Ok(grid)
}

/// Converged nonclassicality indicator with its refinement history.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonclassicality {
    pub value: f64,
    /// Points per axis of the finest grid used.
    pub points: usize,
    /// Raw indicator value on each successively refined grid.
    pub history: Vec<f64>,
}

/// `I = −(π/2) ∫∫ W (∂²_q + ∂²_p + 2) W dq dp`.
///
/// The grid of `spec` is refined (`n → 2n − 1`, halving the spacing) at
/// most twice. The estimate on the first grid is the raw value; on every
/// refined grid it is the Richardson combination `(4 I_fine − I_coarse)/3`,
/// which cancels the `O(h²)` error of the central differences. The result
/// is accepted once two successive estimates differ by less than 1% of
/// `max(|I|, 1)`. In these coordinates `I` vanishes for coherent states and
/// equals `n` for the Fock state `|n⟩`.
pub fn nonclassicality(rho: &DensityMatrix, spec: &GridSpec) -> Result<Nonclassicality, MetricsError> {
    let mut points = spec.points;
    let mut history: Vec<f64> = Vec::new();
    let mut estimates: Vec<f64> = Vec::new();
    for _ in 0..=MAX_REFINEMENTS {
        let grid = wigner(rho, &GridSpec { points, ..*spec })?;
        let raw = -0.5 * PI * grid.quadratic_form();
        let estimate = match history.last() {
            Some(coarse) => (4.0 * raw - coarse) / 3.0,
            None => raw,
        };
        history.push(raw);
        estimates.push(estimate);
        if let [.., prev, last] = estimates[..] {
            if (last - prev).abs() < REFINEMENT_TOL * last.abs().max(1.0) {
                return Ok(Nonclassicality { value: last, points, history });
            }
        }
        points = 2 * points - 1;
    }
    Err(MetricsError::NotConverged { values: estimates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{displacement, FockSpace};

    fn fs(d: usize) -> FockSpace {
        FockSpace::new(d).unwrap()
    }

    #[test]
    fn origin_values_of_fock_states() {
        for m in 0..12 {
            let rho = DensityMatrix::fock(fs(16), m).unwrap();
            let w = wigner_at(&rho, 0.0, 0.0).unwrap();
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            assert!((w - sign * FRAC_1_PI).abs() < 1e-12, "M={m}: {w}");
        }
    }

    #[test]
    fn fock_closed_form_away_from_origin() {
        // W_n(r) = (−1)^n e^{−r²} L_n(2r²)/π with r² = q² + p²
        let rho = DensityMatrix::fock(fs(10), 4).unwrap();
        for (q, p) in [(0.3, -0.2), (1.1, 0.9), (-2.0, 1.5)] {
            let r2: f64 = q * q + p * p;
            let exact = (-r2).exp() * crate::calibration::laguerre(4, 0, 2.0 * r2) / PI;
            assert!((wigner_at(&rho, q, p).unwrap() - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn brute_force_displaced_parity() {
        // (1/π) Σ_k (−1)^k ⟨k|D†ρD|k⟩ on a padded space
        let rho = DensityMatrix::thermal(fs(6), 0.4).unwrap();
        let pad = 60;
        let mut big = DMatrix::<Complex64>::zeros(pad, pad);
        big.view_mut((0, 0), (6, 6)).copy_from(rho.matrix());
        let (q, p) = (0.8, -0.5);
        let d = displacement(Complex64::new(q, p) / SQRT_2, fs(pad)).unwrap().to_dense();
        let rot = d.adjoint() * big * &d;
        let brute: f64 = (0..40).map(|k| if k % 2 == 0 { rot[(k, k)].re } else { -rot[(k, k)].re }).sum::<f64>() / PI;
        assert!((wigner_at(&rho, q, p).unwrap() - brute).abs() < 1e-10);
    }

    #[test]
    fn normalization_and_marginals() {
        for n in [0usize, 1] {
            let rho = DensityMatrix::fock(fs(4), n).unwrap();
            let grid = wigner(&rho, &GridSpec { half_extent: Some(5.0), points: 101 }).unwrap();
            assert!((grid.integral() - 1.0).abs() < 2e-2);
            let marginal = grid.marginal_q();
            for (i, m) in marginal.iter().enumerate() {
                let q = grid.q(i);
                // |ψ_0(q)|² = e^{−q²}/√π, |ψ_1(q)|² = 2q² e^{−q²}/√π
                let exact = if n == 0 { 1.0 } else { 2.0 * q * q } * (-q * q).exp() / PI.sqrt();
                assert!((m - exact).abs() < 1e-2, "n={n} q={q}");
            }
        }
    }

    #[test]
    fn small_grid_is_rejected() {
        let rho = DensityMatrix::fock(fs(12), 10).unwrap();
        let r = wigner(&rho, &GridSpec { half_extent: Some(3.0), points: 31 });
        assert!(matches!(r, Err(MetricsError::GridTooSmall { .. })));
    }

    #[test]
    fn indicator_for_coherent_and_fock_states() {
        let coh = DensityMatrix::coherent(fs(30), Complex64::new(1.0, 0.0)).unwrap();
        assert!(nonclassicality(&coh, &GridSpec::default()).unwrap().value.abs() < 0.02);
        for m in [1usize, 5, 10] {
            let rho = DensityMatrix::fock(fs(m + 4), m).unwrap();
            let i = nonclassicality(&rho, &GridSpec::default()).unwrap().value;
            assert!((i - m as f64).abs() <= 0.02 * m as f64, "M={m}: I={i}");
        }
    }

    #[test]
    fn indicator_is_displacement_invariant() {
        let base = DensityMatrix::fock(fs(40), 3).unwrap();
        let i0 = nonclassicality(&base, &GridSpec::default()).unwrap().value;
        let d = displacement(Complex64::new(0.6, 0.8), fs(40)).unwrap().to_dense();
        let moved = DensityMatrix::normalized(fs(40), &d * base.matrix() * d.adjoint()).unwrap();
        let i1 = nonclassicality(&moved, &GridSpec::default()).unwrap().value;
        assert!((i1 - i0).abs() < 0.02 * i0, "{i0} vs {i1}");
    }
}
