//! Truncated bosonic Fock-space algebra for one mode or an optical ⊗
//! mechanical pair.
//!
//! Basis ordering on the product space is fixed project-wide: the optical
//! index is the slow (outer) one, so `|n_c, n_m⟩` has flat index
//! `n_c · N_m + n_m`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::calibration::{laguerre, laguerre_sequence};
use crate::sparse::CsrMatrix;

/// Operators whose fill fraction is below this are stored sparse.
pub const SPARSE_DENSITY_THRESHOLD: f64 = 0.10;

pub(crate) const C0: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const C1: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("Fock space dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("|alpha|^2 = {norm_sqr:.4} exceeds dim/4 = {limit:.4}: truncation at dim {dim} is untrustworthy")]
    DisplacementTooLarge { norm_sqr: f64, limit: f64, dim: usize },
    #[error("space mismatch: {0:?} vs {1:?}")]
    SpaceMismatch(Space, Space),
    #[error("operation requires a two-mode state, got {0:?}")]
    NotTwoMode(Space),
    #[error("matrix is {rows}x{cols}, space {space:?} needs {dim}x{dim}")]
    ShapeMismatch { rows: usize, cols: usize, space: Space, dim: usize },
    #[error("not a valid density matrix: {0}")]
    InvalidState(String),
}

/// Truncated single-mode Fock space spanned by `|0⟩ … |dim−1⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockSpace {
    dim: usize,
}

impl FockSpace {
    pub fn new(dim: usize) -> Result<Self, FockError> {
        if dim < 2 {
            return Err(FockError::DimensionTooSmall(dim));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Hilbert space an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Space {
    Single(FockSpace),
    /// `optical ⊗ mechanical`
    Product(FockSpace, FockSpace),
}

impl Space {
    pub fn dim(&self) -> usize {
        match self {
            Space::Single(s) => s.dim(),
            Space::Product(c, m) => c.dim() * m.dim(),
        }
    }

    fn tensor(self, other: Space) -> Space {
        match (self, other) {
            (Space::Single(a), Space::Single(b)) => Space::Product(a, b),
            // more than two modes is out of scope; keep the flat dimension
            // consistent by treating the result as a single big space.
            (a, b) => Space::Single(FockSpace { dim: a.dim() * b.dim() }),
        }
    }
}

impl From<FockSpace> for Space {
    fn from(s: FockSpace) -> Self {
        Space::Single(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Dense(DMatrix<Complex64>),
    Sparse(CsrMatrix),
}

/// Square complex matrix on a truncated Fock space.
///
/// Storage is picked automatically: sparse when fewer than 10 % of the
/// entries are non-zero, dense otherwise. Operators are immutable values.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    space: Space,
    storage: Storage,
}

impl Operator {
    fn with_storage(space: Space, storage: Storage) -> Self {
        let storage = match storage {
            Storage::Dense(m) => {
                let nnz = m.iter().filter(|v| **v != C0).count();
                if (nnz as f64) < SPARSE_DENSITY_THRESHOLD * m.len() as f64 {
                    Storage::Sparse(CsrMatrix::from_dense(&m))
                } else {
                    Storage::Dense(m)
                }
            }
            Storage::Sparse(s) => {
                if s.density() < SPARSE_DENSITY_THRESHOLD {
                    Storage::Sparse(s)
                } else {
                    Storage::Dense(s.to_dense())
                }
            }
        };
        Self { space, storage }
    }

    pub fn from_dense(space: impl Into<Space>, m: DMatrix<Complex64>) -> Result<Self, FockError> {
        let space = space.into();
        check_shape(space, m.nrows(), m.ncols())?;
        Ok(Self::with_storage(space, Storage::Dense(m)))
    }

    pub fn from_sparse(space: impl Into<Space>, m: CsrMatrix) -> Result<Self, FockError> {
        let space = space.into();
        check_shape(space, m.nrows(), m.ncols())?;
        Ok(Self::with_storage(space, Storage::Sparse(m)))
    }

    pub(crate) fn from_triplets(
        space: impl Into<Space>,
        triplets: impl IntoIterator<Item = (usize, usize, Complex64)>,
    ) -> Self {
        let space = space.into();
        let d = space.dim();
        Self::with_storage(space, Storage::Sparse(CsrMatrix::from_triplets(d, d, triplets)))
    }

    pub fn zeros(space: impl Into<Space>) -> Self {
        let space = space.into();
        let d = space.dim();
        Self::with_storage(space, Storage::Sparse(CsrMatrix::zeros(d, d)))
    }

    /// Diagonal operator with the given real entries.
    pub fn diagonal(space: impl Into<Space>, diag: &[f64]) -> Self {
        let space = space.into();
        assert_eq!(diag.len(), space.dim());
        Self::from_triplets(
            space,
            diag.iter().enumerate().map(|(i, &v)| (i, i, Complex64::new(v, 0.0))),
        )
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse(_))
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        match &self.storage {
            Storage::Dense(m) => m[(row, col)],
            Storage::Sparse(s) => s.get(row, col),
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Sparse(s) => s.to_dense(),
        }
    }

    pub fn to_sparse(&self) -> CsrMatrix {
        match &self.storage {
            Storage::Dense(m) => CsrMatrix::from_dense(m),
            Storage::Sparse(s) => s.clone(),
        }
    }

    pub fn adjoint(&self) -> Self {
        let storage = match &self.storage {
            Storage::Dense(m) => Storage::Dense(m.adjoint()),
            Storage::Sparse(s) => Storage::Sparse(s.adjoint()),
        };
        Self { space: self.space, storage }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let storage = match &self.storage {
            Storage::Dense(m) => Storage::Dense(m * s),
            Storage::Sparse(m) => Storage::Sparse(m.scale(s)),
        };
        Self::with_storage(self.space, storage)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    fn assert_same_space(&self, other: &Self) {
        assert_eq!(self.space, other.space, "operator spaces differ");
    }

    pub fn add(&self, other: &Self) -> Self {
        self.assert_same_space(other);
        let storage = match (&self.storage, &other.storage) {
            (Storage::Sparse(a), Storage::Sparse(b)) => Storage::Sparse(a.add(b)),
            _ => Storage::Dense(self.to_dense() + other.to_dense()),
        };
        Self::with_storage(self.space, storage)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale_re(-1.0))
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &Self) -> Self {
        self.assert_same_space(other);
        let storage = match (&self.storage, &other.storage) {
            (Storage::Sparse(a), Storage::Sparse(b)) => Storage::Sparse(a.matmul(b)),
            _ => Storage::Dense(self.to_dense() * other.to_dense()),
        };
        Self::with_storage(self.space, storage)
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    pub fn apply(&self, ket: &DVector<Complex64>) -> DVector<Complex64> {
        assert_eq!(ket.len(), self.dim());
        match &self.storage {
            Storage::Dense(m) => m * ket,
            Storage::Sparse(s) => DVector::from_vec(s.mul_vec(ket.as_slice())),
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    /// `max |A_ij − B_ij|`
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.assert_same_space(other);
        (self.to_dense() - other.to_dense()).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `max |A − A†|` elementwise.
    pub fn hermiticity_error(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }
}

fn check_shape(space: Space, rows: usize, cols: usize) -> Result<(), FockError> {
    let dim = space.dim();
    if rows != dim || cols != dim {
        return Err(FockError::ShapeMismatch { rows, cols, space, dim });
    }
    Ok(())
}

/// Lowering operator with `⟨n−1|a|n⟩ = √n`.
pub fn annihilation(space: FockSpace) -> Operator {
    Operator::from_triplets(
        space,
        (1..space.dim()).map(|n| (n - 1, n, Complex64::new((n as f64).sqrt(), 0.0))),
    )
}

pub fn creation(space: FockSpace) -> Operator {
    annihilation(space).adjoint()
}

pub fn number(space: FockSpace) -> Operator {
    let diag: Vec<f64> = (0..space.dim()).map(|n| n as f64).collect();
    Operator::diagonal(space, &diag)
}

pub fn identity(space: impl Into<Space>) -> Operator {
    let space = space.into();
    Operator::from_sparse(space, CsrMatrix::identity(space.dim())).expect("identity has matching shape")
}

/// `⟨m|D(α)|n⟩` from the closed form
/// `√(n!/m!) α^{m−n} e^{−|α|²/2} L_n^{(m−n)}(|α|²)` for `m ≥ n` and the
/// mirrored expression with `−α*` for `m < n`.
///
/// The element is exact: it does not depend on any truncation.
pub fn displacement_element(alpha: Complex64, m: usize, n: usize) -> Complex64 {
    let x = alpha.norm_sqr();
    let (hi, lo, base) = if m >= n { (m, n, alpha) } else { (n, m, -alpha.conj()) };
    // α^{hi−lo} √(lo!/hi!) accumulated term by term to avoid factorial overflow
    let mut pref = Complex64::new((-0.5 * x).exp(), 0.0);
    for k in lo + 1..=hi {
        pref *= base / (k as f64).sqrt();
    }
    pref * laguerre(lo, hi - lo, x)
}

/// Block `⟨m|D(α)|n⟩` for `m < rows`, `n < cols` of the untruncated
/// displacement operator.
///
/// Filled one diagonal at a time from a single Laguerre recurrence per
/// offset, so the cost is `O(rows · cols)`.
pub fn displacement_block(alpha: Complex64, rows: usize, cols: usize) -> DMatrix<Complex64> {
    let mut out = DMatrix::zeros(rows, cols);
    let x = alpha.norm_sqr();
    let r = x.sqrt();
    let gauss = (-0.5 * x).exp();
    let (lower_phase, upper_phase) = if r > 0.0 { (alpha / r, -alpha.conj() / r) } else { (C1, C1) };
    for k in 0..rows.max(cols) {
        if k > 0 && r == 0.0 {
            break;
        }
        // entries (lo + k, lo) below the diagonal and (lo, lo + k) above it
        let below = rows.saturating_sub(k).min(cols);
        let above = if k == 0 { 0 } else { cols.saturating_sub(k).min(rows) };
        let len = below.max(above);
        if len == 0 {
            continue;
        }
        let lag = laguerre_sequence(len - 1, k, x);
        // |α|^k √(lo!/(lo+k)!) e^{−x/2}, updated as lo increases
        let mut mag = gauss;
        for j in 1..=k {
            mag *= r / (j as f64).sqrt();
        }
        let (pl, pu) = (lower_phase.powu(k as u32), upper_phase.powu(k as u32));
        for lo in 0..len {
            if lo > 0 {
                mag *= (lo as f64 / (lo + k) as f64).sqrt();
            }
            let v = mag * lag[lo];
            if lo < below {
                out[(lo + k, lo)] = pl * v;
            }
            if lo < above {
                out[(lo, lo + k)] = pu * v;
            }
        }
    }
    out
}

/// Displacement operator `D(α) = exp(α b† − α* b)` on a truncated space,
/// built from its analytic matrix elements.
pub fn displacement(alpha: Complex64, space: FockSpace) -> Result<Operator, FockError> {
    let limit = space.dim() as f64 / 4.0;
    let norm_sqr = alpha.norm_sqr();
    if norm_sqr > limit {
        return Err(FockError::DisplacementTooLarge { norm_sqr, limit, dim: space.dim() });
    }
    Operator::from_dense(space, displacement_block(alpha, space.dim(), space.dim()))
}

/// Kronecker product `a ⊗ b` with `a` on the slow (outer) index.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    let space = a.space.tensor(b.space);
    let product = a.to_sparse().kron(&b.to_sparse());
    Operator::with_storage(space, Storage::Sparse(product))
}

/// Which factor of a two-mode state survives a partial trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Optical,
    Mechanical,
}

/// Density operator: Hermitian, unit trace, positive semidefinite.
///
/// Carries the trace and minimum eigenvalue measured when it was validated.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: Space,
    matrix: DMatrix<Complex64>,
    trace: f64,
    min_eigenvalue: f64,
}

/// Tolerances checked when a [`DensityMatrix`] is constructed.
pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = 1e-8;

pub(crate) fn min_eigenvalue(m: &DMatrix<Complex64>) -> f64 {
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

impl DensityMatrix {
    /// Validates `matrix` against the density-matrix invariants with the
    /// default tolerances.
    pub fn new(space: impl Into<Space>, matrix: DMatrix<Complex64>) -> Result<Self, FockError> {
        Self::with_tolerances(space, matrix, TRACE_TOL, POSITIVITY_TOL)
    }

    /// Validation with caller-chosen trace and positivity tolerances; used
    /// for states coming out of numerical integration.
    pub fn with_tolerances(
        space: impl Into<Space>,
        matrix: DMatrix<Complex64>,
        trace_tol: f64,
        positivity_tol: f64,
    ) -> Result<Self, FockError> {
        let space = space.into();
        check_shape(space, matrix.nrows(), matrix.ncols())?;
        let herm_err = (&matrix - matrix.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        if herm_err > HERMITICITY_TOL {
            return Err(FockError::InvalidState(format!("max |rho - rho^dag| = {herm_err:.3e}")));
        }
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > trace_tol {
            return Err(FockError::InvalidState(format!("trace = {trace:.12}")));
        }
        let min_eigenvalue = min_eigenvalue(&matrix);
        if min_eigenvalue < -positivity_tol {
            return Err(FockError::InvalidState(format!("minimum eigenvalue {min_eigenvalue:.3e}")));
        }
        Ok(Self { space, matrix, trace, min_eigenvalue })
    }

    /// Hermitizes `(X + X†)/2`, divides by the trace, then validates.
    pub fn normalized(space: impl Into<Space>, matrix: DMatrix<Complex64>) -> Result<Self, FockError> {
        let herm = (&matrix + matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let tr = herm.trace().re;
        if !(tr.is_finite() && tr > 0.0) {
            return Err(FockError::InvalidState(format!("cannot normalize, trace = {tr}")));
        }
        Self::new(space, herm / Complex64::new(tr, 0.0))
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) ket.
    pub fn pure(space: impl Into<Space>, ket: &DVector<Complex64>) -> Result<Self, FockError> {
        let norm = ket.norm();
        let psi = ket / Complex64::new(norm, 0.0);
        Self::normalized(space, &psi * psi.adjoint())
    }

    pub fn fock(space: FockSpace, n: usize) -> Result<Self, FockError> {
        assert!(n < space.dim(), "Fock level {n} outside dimension {}", space.dim());
        let mut ket = DVector::zeros(space.dim());
        ket[n] = C1;
        Self::pure(space, &ket)
    }

    /// Thermal state with occupancy `nbar`, truncated and renormalized.
    pub fn thermal(space: FockSpace, nbar: f64) -> Result<Self, FockError> {
        assert!(nbar >= 0.0);
        let ratio = nbar / (1.0 + nbar);
        let diag: Vec<Complex64> = (0..space.dim())
            .map(|n| Complex64::new(ratio.powi(n as i32) / (1.0 + nbar), 0.0))
            .collect();
        Self::normalized(space, DMatrix::from_diagonal(&DVector::from_vec(diag)))
    }

    /// Coherent state `|α⟩`, truncated and renormalized.
    pub fn coherent(space: FockSpace, alpha: Complex64) -> Result<Self, FockError> {
        let ket = DVector::from_fn(space.dim(), |n, _| displacement_element(alpha, n, 0));
        Self::pure(space, &ket)
    }

    pub fn maximally_mixed(space: impl Into<Space>) -> Result<Self, FockError> {
        let space = space.into();
        let d = space.dim();
        Self::new(space, DMatrix::identity(d, d) / Complex64::new(d as f64, 0.0))
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn as_operator(&self) -> Operator {
        Operator::from_dense(self.space, self.matrix.clone()).expect("shape checked at construction")
    }

    /// Real diagonal in the number basis.
    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|v| v.re).collect()
    }
}

/// Tensor product `ρ_c ⊗ ρ_m`.
pub fn tensor_state(optical: &DensityMatrix, mechanical: &DensityMatrix) -> Result<DensityMatrix, FockError> {
    let op = tensor(&optical.as_operator(), &mechanical.as_operator());
    DensityMatrix::new(op.space(), op.to_dense())
}

/// Reduced state of one factor of a two-mode density matrix.
pub fn partial_trace(rho: &DensityMatrix, keep: Mode) -> Result<DensityMatrix, FockError> {
    let Space::Product(opt, mech) = rho.space else {
        return Err(FockError::NotTwoMode(rho.space));
    };
    let (nc, nm) = (opt.dim(), mech.dim());
    let r = &rho.matrix;
    let (space, out) = match keep {
        Mode::Mechanical => (
            mech,
            DMatrix::from_fn(nm, nm, |i, j| (0..nc).map(|c| r[(c * nm + i, c * nm + j)]).sum()),
        ),
        Mode::Optical => (
            opt,
            DMatrix::from_fn(nc, nc, |i, j| (0..nm).map(|m| r[(i * nm + m, j * nm + m)]).sum()),
        ),
    };
    DensityMatrix::new(space, out)
}

/// `Tr[ρ O]`.
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<Complex64, FockError> {
    if rho.space != op.space {
        return Err(FockError::SpaceMismatch(rho.space, op.space));
    }
    let d = rho.dim();
    let r = &rho.matrix;
    let total = match &op.storage {
        Storage::Sparse(s) => s.iter().map(|(i, j, v)| r[(j, i)] * v).sum(),
        Storage::Dense(m) => (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| r[(j, i)] * m[(i, j)]).sum(),
    };
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs(d: usize) -> FockSpace {
        FockSpace::new(d).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// exp(α b† − α* b) on a large truncated space; independent of the
    /// closed-form elements.
    fn expm_displacement(alpha: Complex64, dim: usize) -> DMatrix<Complex64> {
        let b = annihilation(fs(dim)).to_dense();
        let gen = b.adjoint() * alpha - &b * alpha.conj();
        gen.exp()
    }

    #[test]
    fn rejects_tiny_space() {
        assert_eq!(FockSpace::new(1), Err(FockError::DimensionTooSmall(1)));
        assert!(FockSpace::new(2).is_ok());
    }

    #[test]
    fn ladder_operators_on_small_spaces() {
        let a = annihilation(fs(2)).to_dense();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[C0, C1, C0, C0]));
        assert_eq!(creation(fs(2)).to_dense(), DMatrix::from_row_slice(2, 2, &[C0, C0, C1, C0]));
        let a3 = annihilation(fs(3));
        assert!((a3.get(1, 2).re - 2f64.sqrt()).abs() < 1e-15);
        let n4 = number(fs(4)).to_dense();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { i as f64 } else { 0.0 };
                assert_eq!(n4[(i, j)], c(expect, 0.0));
            }
        }
    }

    #[test]
    fn number_operator_eigenstates() {
        let space = fs(8);
        let n_op = creation(space).mul(&annihilation(space));
        for n in 0..8 {
            let mut ket = DVector::zeros(8);
            ket[n] = C1;
            let out = n_op.apply(&ket);
            assert!((out - &ket * c(n as f64, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn canonical_commutator_on_untruncated_block() {
        let space = fs(12);
        let comm = annihilation(space).commutator(&creation(space)).to_dense();
        for i in 0..11 {
            for j in 0..11 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((comm[(i, j)] - c(expect, 0.0)).norm() < 1e-14);
            }
        }
        assert!((comm[(11, 11)].re + 11.0).abs() < 1e-12);
    }

    #[test]
    fn identity_is_neutral() {
        let space = fs(5);
        let x = Operator::from_dense(space, DMatrix::from_fn(5, 5, |i, j| c(i as f64 - 0.3 * j as f64, (i * j) as f64))).unwrap();
        assert_eq!(identity(space).mul(&x).max_abs_diff(&x), 0.0);
    }

    #[test]
    fn displacement_vacuum_amplitude() {
        let d = displacement(C1, fs(30)).unwrap();
        assert!(d.max_abs_diff(&identity(fs(30))) > 0.1);
        assert!((d.get(0, 0).re - (-0.5f64).exp()).abs() < 1e-15);
        assert!((d.get(0, 0).re - 0.606_53).abs() < 1e-5);
        let oracle = expm_displacement(C1, 60);
        assert!((d.get(0, 0) - oracle[(0, 0)]).norm() < 1e-8);
        assert_eq!(displacement(C0, fs(6)).unwrap().max_abs_diff(&identity(fs(6))), 0.0);
    }

    #[test]
    fn displacement_inverse() {
        let space = fs(30);
        let alpha = c(0.5, 0.0);
        let prod = displacement(alpha, space).unwrap().mul(&displacement(-alpha, space).unwrap());
        // compare on the half of the space unaffected by truncation
        let dense = prod.to_dense();
        for i in 0..15 {
            for j in 0..15 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dense[(i, j)] - c(expect, 0.0)).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn displacement_matches_matrix_exponential() {
        for alpha in [c(2.0, 0.0), c(0.3, -1.1), c(-1.2, 1.4), c(0.0, 2.0)] {
            let analytic = displacement(alpha, fs(30)).unwrap().to_dense();
            let oracle = expm_displacement(alpha, 90);
            let err = (0..30)
                .flat_map(|i| (0..30).map(move |j| (i, j)))
                .map(|(i, j)| (analytic[(i, j)] - oracle[(i, j)]).norm())
                .fold(0.0, f64::max);
            assert!(err <= 1e-8, "alpha={alpha}: {err:e}");
        }
    }

    #[test]
    fn displacement_rejects_untrustworthy_truncation() {
        assert!(matches!(
            displacement(c(2.0, 0.0), fs(10)),
            Err(FockError::DisplacementTooLarge { .. })
        ));
    }

    #[test]
    fn tensor_conventions() {
        let id6 = tensor(&identity(fs(2)), &identity(fs(3)));
        assert_eq!(id6.to_dense(), DMatrix::identity(6, 6));
        let n_id = tensor(&number(fs(2)), &identity(fs(2))).to_dense();
        let diag: Vec<f64> = (0..4).map(|i| n_id[(i, i)].re).collect();
        assert_eq!(diag, vec![0.0, 0.0, 1.0, 1.0]);

        let a = tensor(&annihilation(fs(3)), &identity(fs(4)));
        let b = tensor(&identity(fs(3)), &annihilation(fs(4)));
        assert_eq!(a.commutator(&b).to_dense().norm(), 0.0);
        // optical index is the slow one: a|1,0> = |0,0>, flat indices 4 -> 0
        assert_eq!(a.get(0, 4), C1);
        assert_eq!(b.get(0, 1), C1);
    }

    #[test]
    fn tensor_associativity() {
        let x = displacement(c(0.2, 0.1), fs(2)).unwrap();
        let y = number(fs(3));
        let z = annihilation(fs(2));
        let left = tensor(&tensor(&x, &y), &z).to_dense();
        let right = tensor(&x, &tensor(&y, &z)).to_dense();
        assert_eq!(left, right);
    }

    #[test]
    fn partial_traces() {
        let rc = DensityMatrix::thermal(fs(3), 0.4).unwrap();
        let rm = DensityMatrix::coherent(fs(5), c(0.4, 0.2)).unwrap();
        let joint = tensor_state(&rc, &rm).unwrap();
        let back = partial_trace(&joint, Mode::Mechanical).unwrap();
        let err = (back.matrix() - rm.matrix()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(err <= 1e-12);
        let back_c = partial_trace(&joint, Mode::Optical).unwrap();
        assert!((back_c.matrix() - rc.matrix()).norm() <= 1e-12);

        let mixed = DensityMatrix::maximally_mixed(Space::Product(fs(2), fs(2))).unwrap();
        let reduced = partial_trace(&mixed, Mode::Mechanical).unwrap();
        assert!((reduced.matrix() - DMatrix::identity(2, 2) * c(0.5, 0.0)).norm() < 1e-15);

        let single = DensityMatrix::fock(fs(3), 1).unwrap();
        assert!(matches!(partial_trace(&single, Mode::Mechanical), Err(FockError::NotTwoMode(_))));
    }

    #[test]
    fn expectations() {
        let three = DensityMatrix::fock(fs(6), 3).unwrap();
        assert!((expectation(&three, &number(fs(6))).unwrap().re - 3.0).abs() < 1e-14);

        // truncation error of the geometric series at dim 40 is ~ (0.3/1.3)^40
        let thermal = DensityMatrix::thermal(fs(40), 0.3).unwrap();
        let n = expectation(&thermal, &number(fs(40))).unwrap();
        assert!((n.re - 0.3).abs() < 1e-6 && n.im.abs() < 1e-10);
        assert!((expectation(&thermal, &identity(fs(40))).unwrap().re - 1.0).abs() < 1e-12);

        assert!(matches!(
            expectation(&thermal, &number(fs(5))),
            Err(FockError::SpaceMismatch(..))
        ));
    }

    #[test]
    fn density_matrix_validation() {
        let space = fs(2);
        let bad_trace = DMatrix::from_diagonal(&DVector::from_vec(vec![C1, C1]));
        assert!(DensityMatrix::new(space, bad_trace).is_err());
        let negative = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.5, 0.0), c(-0.5, 0.0)]));
        assert!(DensityMatrix::new(space, negative).is_err());
        let non_herm = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), C0, c(0.5, 0.0)]);
        assert!(DensityMatrix::new(space, non_herm).is_err());
        let rho = DensityMatrix::coherent(fs(20), c(1.0, -0.5)).unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-12);
        assert!(rho.min_eigenvalue() > -1e-12);
    }

    #[test]
    fn storage_is_chosen_by_density() {
        assert!(annihilation(fs(20)).is_sparse());
        assert!(!displacement(c(0.5, 0.0), fs(8)).unwrap().is_sparse());
    }

    #[test]
    fn block_fill_matches_single_elements() {
        for alpha in [c(0.0, 0.0), c(0.3, -1.1), c(-2.5, 0.7), c(4.0, 3.0)] {
            let block = displacement_block(alpha, 17, 23);
            for m in 0..17 {
                for n in 0..23 {
                    let e = displacement_element(alpha, m, n);
                    assert!((block[(m, n)] - e).norm() <= 1e-12 * e.norm().max(1.0), "alpha={alpha} ({m},{n})");
                }
            }
        }
    }
}
