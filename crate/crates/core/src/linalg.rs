//! Dense linear-algebra foundation.
//!
//! Symmetric eigendecomposition, sample covariance (dense and factored),
//! PSD pseudo-inversion and a checker for the four Moore-Penrose identities.
//! Eigenvalues are always sorted in descending order and every eigenvector is
//! signed so that its largest-magnitude entry is positive.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which an eigenvalue counts as zero.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Negative eigenvalues down to `-NEGATIVE_SLACK * scale` are clipped to zero.
const NEGATIVE_SLACK: f64 = 1e-9;

/// Tolerance on the four pseudo-inverse identities, relative to the matrix norms.
pub const PINV_REL_TOL: f64 = 1e-7;

/// A dense `m x n` data matrix whose columns are samples and rows are coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(DMatrix<f64>);

impl DataMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "data matrix must be non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if let Some(pos) = matrix.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % matrix.nrows(), pos / matrix.nrows());
            return Err(Error::InvalidInput(format!("non-finite entry at row {r}, column {c}")));
        }
        Ok(Self(matrix))
    }

    /// Builds a matrix from row-major values.
    pub fn from_row_slice(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, values))
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.0.column(j).into_owned()
    }

    /// Sub-matrix made of the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.ncols()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.ncols(),
            });
        }
        Self::new(self.0.select_columns(cols))
    }

    /// Sub-matrix made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.nrows()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.nrows(),
            });
        }
        Self::new(self.0.select_rows(rows))
    }
}

impl AsRef<DMatrix<f64>> for DataMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Eigendecomposition `S = V diag(eigenvalues) V^T` of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEvd {
    /// Sorted in descending order.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal columns, in the order of `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl SymmetricEvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = scale_columns(&self.eigenvectors, self.eigenvalues.as_slice());
        &scaled * self.eigenvectors.transpose()
    }

    /// Number of eigenvalues strictly above `rel_floor * max(lambda_max, 0)`.
    pub fn numerical_rank(&self, rel_floor: f64) -> usize {
        let top = self.eigenvalues.get(0).copied().unwrap_or(0.0);
        if top <= 0.0 {
            return 0;
        }
        let floor = rel_floor * top;
        self.eigenvalues.iter().filter(|&&v| v > floor).count()
    }

    /// Keeps the leading `k` eigenpairs.
    pub fn truncate(&self, k: usize) -> SymmetricEvd {
        let k = k.min(self.eigenvalues.len());
        SymmetricEvd {
            eigenvalues: self.eigenvalues.rows(0, k).into_owned(),
            eigenvectors: self.eigenvectors.columns(0, k).into_owned(),
        }
    }
}

/// Full eigendecomposition of a symmetric matrix.
///
/// The input is symmetrized as `(S + S^T) / 2` first.
pub fn sym_evd(s: &DMatrix<f64>) -> Result<SymmetricEvd> {
    if s.nrows() != s.ncols() {
        return Err(Error::DimensionMismatch {
            expected: (s.nrows(), s.nrows()),
            found: s.shape(),
        });
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    if s.nrows() == 0 {
        return Ok(SymmetricEvd {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    Ok(sorted_evd(eig.eigenvalues, eig.eigenvectors))
}

fn sorted_evd(values: DVector<f64>, vectors: DMatrix<f64>) -> SymmetricEvd {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let eigenvalues = DVector::from_iterator(order.len(), order.iter().map(|&i| values[i]));
    let mut eigenvectors = vectors.select_columns(&order);
    fix_column_signs(&mut eigenvectors);
    SymmetricEvd {
        eigenvalues,
        eigenvectors,
    }
}

/// Flips each column so that its largest-magnitude entry is positive.
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// Multiplies column `j` of `m` by `factors[j]`.
pub fn scale_columns(m: &DMatrix<f64>, factors: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, &f) in out.column_iter_mut().zip(factors) {
        col *= f;
    }
    out
}

fn centered(d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = d.ncols() as f64;
    let mean = d.column_sum() / n;
    let mut out = d.clone();
    for mut col in out.column_iter_mut() {
        col -= &mean;
    }
    out
}

/// Sample covariance `D D^T / (n - 1)`, optionally after subtracting the mean column.
pub fn sample_covariance(d: &DataMatrix, center: bool) -> Result<DMatrix<f64>> {
    Ok(SampleCovariance::from_data(d, center)?.to_dense())
}

/// Operations the PCA routines need from a covariance matrix.
///
/// Implemented by dense matrices and by the factored [`SampleCovariance`],
/// which never materializes the `m x m` matrix.
pub trait CovarianceOp {
    fn dim(&self) -> usize;

    /// `Sigma * u`.
    fn apply(&self, u: &DMatrix<f64>) -> DMatrix<f64>;

    fn trace(&self) -> f64;

    /// The leading `k` eigenpairs, descending.
    ///
    /// Fails with [`Error::RankDeficient`] when fewer than `k` eigenvalues
    /// exceed `EIGEN_FLOOR * lambda_max`.
    fn top_eigenpairs(&self, k: usize) -> Result<SymmetricEvd>;

    /// `B^T Sigma B`.
    fn compress(&self, basis: &DMatrix<f64>) -> DMatrix<f64> {
        basis.transpose() * self.apply(basis)
    }
}

fn check_rank(evd: &SymmetricEvd, k: usize) -> Result<()> {
    let rank = evd.numerical_rank(EIGEN_FLOOR);
    if k > rank {
        return Err(Error::RankDeficient {
            requested: k,
            attainable: rank,
        });
    }
    Ok(())
}

impl CovarianceOp for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        self * u
    }

    fn trace(&self) -> f64 {
        DMatrix::trace(self)
    }

    fn top_eigenpairs(&self, k: usize) -> Result<SymmetricEvd> {
        let evd = sym_evd(self)?;
        check_rank(&evd, k)?;
        Ok(evd.truncate(k))
    }
}

/// Sample covariance kept in factored form `Sigma = F F^T`.
///
/// `F` is the (optionally centered) data scaled by `1 / sqrt(n - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    factor: DMatrix<f64>,
}

impl SampleCovariance {
    pub fn from_data(d: &DataMatrix, center: bool) -> Result<Self> {
        let n = d.ncols();
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: n });
        }
        let base = if center {
            centered(d.as_matrix())
        } else {
            d.as_matrix().clone()
        };
        Ok(Self {
            factor: base / libm::sqrt((n - 1) as f64),
        })
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }
}

impl CovarianceOp for SampleCovariance {
    fn dim(&self) -> usize {
        self.factor.nrows()
    }

    fn apply(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        &self.factor * (self.factor.transpose() * u)
    }

    fn trace(&self) -> f64 {
        self.factor.norm_squared()
    }

    fn top_eigenpairs(&self, k: usize) -> Result<SymmetricEvd> {
        let (m, r) = self.factor.shape();
        if r >= m {
            return self.to_dense().top_eigenpairs(k);
        }
        // F F^T and F^T F share their nonzero spectrum; map Gram eigenvectors back.
        let gram = self.factor.transpose() * &self.factor;
        let evd = sym_evd(&gram)?;
        check_rank(&evd, k)?;
        let head = evd.truncate(k);
        let inv_sqrt: Vec<f64> = head.eigenvalues.iter().map(|&l| 1.0 / libm::sqrt(l)).collect();
        let mut vectors = scale_columns(&(&self.factor * &head.eigenvectors), &inv_sqrt);
        fix_column_signs(&mut vectors);
        Ok(SymmetricEvd {
            eigenvalues: head.eigenvalues,
            eigenvectors: vectors,
        })
    }
}

/// How many eigenpairs a pseudo-inverse retains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PinvTarget {
    /// Exactly this many leading eigenpairs.
    Rank(usize),
    /// Every eigenvalue above this fraction of the largest one.
    RelativeFloor(f64),
}

/// Pseudo-inverse of a PSD matrix stored as `W W^T` with `W = U_K Lambda_K^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdPseudoInverse {
    pub factor: DMatrix<f64>,
    pub rank: usize,
    /// Absolute eigenvalue floor applied during inversion.
    pub floor: f64,
}

impl PsdPseudoInverse {
    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }
}

pub fn pinv_psd(s: &DMatrix<f64>, target: PinvTarget) -> Result<PsdPseudoInverse> {
    let evd = sym_evd(s)?;
    let top = evd.eigenvalues.get(0).copied().unwrap_or(0.0);
    let slack = NEGATIVE_SLACK * top.abs().max(1.0);
    if let Some(&neg) = evd.eigenvalues.iter().find(|&&v| v < -slack) {
        return Err(Error::InvalidInput(format!(
            "matrix is not positive semidefinite (eigenvalue {neg:e})"
        )));
    }
    let abs_floor = EIGEN_FLOOR * top.max(0.0);
    let rank_available = evd.eigenvalues.iter().filter(|&&v| v > abs_floor).count();
    let (rank, floor) = match target {
        PinvTarget::Rank(k) => {
            if k > rank_available {
                return Err(Error::RankDeficient {
                    requested: k,
                    attainable: rank_available,
                });
            }
            (k, abs_floor)
        }
        PinvTarget::RelativeFloor(rel) => {
            if !(rel >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "relative floor must be nonnegative, got {rel}"
                )));
            }
            let floor = (rel * top).max(abs_floor);
            (evd.eigenvalues.iter().filter(|&&v| v > floor).count(), floor)
        }
    };
    let head = evd.truncate(rank);
    let inv_sqrt: Vec<f64> = head.eigenvalues.iter().map(|&l| 1.0 / libm::sqrt(l)).collect();
    Ok(PsdPseudoInverse {
        factor: scale_columns(&head.eigenvectors, &inv_sqrt),
        rank,
        floor,
    })
}

/// Residuals of the four Moore-Penrose identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinvCheck {
    /// `|S S+ S - S|`, `|S+ S S+ - S+|`, `|(S S+)^T - S S+|`, `|(S+ S)^T - S+ S|` (Frobenius).
    pub residuals: [f64; 4],
    /// Each residual compared against `PINV_REL_TOL` times its reference norm.
    pub passed: [bool; 4],
}

impl PinvCheck {
    pub fn all_pass(&self) -> bool {
        self.passed.iter().all(|&p| p)
    }
}

pub fn check_pseudoinverse_properties(s: &DMatrix<f64>, s_dag: &DMatrix<f64>) -> Result<PinvCheck> {
    if !s.is_square() || s.shape() != s_dag.shape() {
        return Err(Error::DimensionMismatch {
            expected: s.shape(),
            found: s_dag.shape(),
        });
    }
    let ss = s * s_dag;
    let ds = s_dag * s;
    let residuals = [
        (&ss * s - s).norm(),
        (&ds * s_dag - s_dag).norm(),
        (ss.transpose() - &ss).norm(),
        (ds.transpose() - &ds).norm(),
    ];
    let refs = [s.norm(), s_dag.norm(), ss.norm(), ds.norm()];
    let mut passed = [false; 4];
    for i in 0..4 {
        // Zero reference norms make the identity exact: require an exactly zero residual.
        passed[i] = residuals[i] <= PINV_REL_TOL * refs[i];
    }
    Ok(PinvCheck { residuals, passed })
}

/// Orthonormal basis for the column span of `u` via `u (u^T u)^{-1/2}`.
///
/// Fails when the columns are numerically dependent.
pub fn orthonormal_basis(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = u.transpose() * u;
    let evd = sym_evd(&gram)?;
    let rank = evd.numerical_rank(EIGEN_FLOOR);
    if rank < u.ncols() {
        return Err(Error::RankDeficient {
            requested: u.ncols(),
            attainable: rank,
        });
    }
    let inv_sqrt: Vec<f64> = evd.eigenvalues.iter().map(|&l| 1.0 / libm::sqrt(l)).collect();
    let whiten = scale_columns(&evd.eigenvectors, &inv_sqrt) * evd.eigenvectors.transpose();
    Ok(u * whiten)
}
