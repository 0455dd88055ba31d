//! Global and local Mahalanobis metrics between the columns of a data matrix,
//! in their conventional (PCA) and cluster-informed forms.
//!
//! Every model stores its pseudo-inverse covariance as `W W^T`, so a squared
//! distance is a squared Euclidean norm of `W^T (c1 - c2)`.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::cluster::{indicator_matrix, kmeans, KMeansParams};
use crate::error::{Error, Result};
use crate::linalg::{scale_columns, CovarianceOp, DataMatrix, SampleCovariance};
use crate::pca::{constrained_pca, pca_top_k, ConstrainedPcaParams, PrincipalBasis};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Plain,
    Informed,
}

impl Provenance {
    fn of(basis: &PrincipalBasis) -> Self {
        if basis.informed {
            Provenance::Informed
        } else {
            Provenance::Plain
        }
    }
}

/// Squared distances between all columns of a data matrix.
pub trait ColumnMetric {
    /// `n x n`, symmetric, zero diagonal.
    fn distance_matrix(&self, d: &DataMatrix) -> Result<DMatrix<f64>>;
}

pub fn distance_matrix<M: ColumnMetric + ?Sized>(model: &M, d: &DataMatrix) -> Result<DMatrix<f64>> {
    model.distance_matrix(d)
}

/// Plain squared Euclidean distance between columns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Euclidean;

impl ColumnMetric for Euclidean {
    fn distance_matrix(&self, d: &DataMatrix) -> Result<DMatrix<f64>> {
        Ok(pairwise_sq_distances(d.as_matrix()))
    }
}

/// Squared Euclidean distances between the columns of `points`.
pub fn pairwise_sq_distances(points: &DMatrix<f64>) -> DMatrix<f64> {
    let n = points.ncols();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let ci = points.column(i);
        for j in (i + 1)..n {
            let v = (ci - points.column(j)).norm_squared();
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn whitening_factor(basis: &PrincipalBasis) -> Result<DMatrix<f64>> {
    if let Some(bad) = basis.eigenvalues.iter().find(|&&l| !(l > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "eigenvalues must be positive to whiten, found {bad}"
        )));
    }
    let inv_sqrt: Vec<f64> = basis.eigenvalues.iter().map(|&l| 1.0 / libm::sqrt(l)).collect();
    Ok(scale_columns(&basis.directions, &inv_sqrt))
}

/// One pseudo-inverse covariance `U_K Lambda_K^{-1} U_K^T` shared by all samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMetricModel {
    basis: PrincipalBasis,
    factor: DMatrix<f64>,
}

impl GlobalMetricModel {
    pub fn from_basis(basis: PrincipalBasis) -> Result<Self> {
        let factor = whitening_factor(&basis)?;
        Ok(Self { basis, factor })
    }

    /// Model built from a known covariance with its top `k` eigenpairs.
    pub fn from_covariance<S: CovarianceOp + ?Sized>(sigma: &S, k: usize) -> Result<Self> {
        Self::from_basis(pca_top_k(sigma, k)?)
    }

    pub fn basis(&self) -> &PrincipalBasis {
        &self.basis
    }

    /// `W = U_K Lambda_K^{-1/2}`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn provenance(&self) -> Provenance {
        Provenance::of(&self.basis)
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// Materialized `W W^T`.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    /// `W^T D`: whitened coordinates of every column.
    pub fn project(&self, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if d.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: (self.dim(), d.ncols()),
                found: d.shape(),
            });
        }
        Ok(self.factor.transpose() * d)
    }
}

impl ColumnMetric for GlobalMetricModel {
    fn distance_matrix(&self, d: &DataMatrix) -> Result<DMatrix<f64>> {
        Ok(pairwise_sq_distances(&self.project(d.as_matrix())?))
    }
}

/// Squared global Mahalanobis distance `||W^T c1 - W^T c2||^2`.
pub fn global_distance(model: &GlobalMetricModel, c1: &DVector<f64>, c2: &DVector<f64>) -> Result<f64> {
    let m = model.dim();
    if c1.len() != m || c2.len() != m {
        return Err(Error::DimensionMismatch {
            expected: (m, 1),
            found: (if c1.len() != m { c1.len() } else { c2.len() }, 1),
        });
    }
    Ok((model.factor.tr_mul(&(c1 - c2))).norm_squared())
}

/// k-means settings for the row clustering of informed metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowClustering {
    pub clusters: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl RowClustering {
    pub fn new(clusters: usize, seed: u64) -> Self {
        let p = KMeansParams::new(clusters, seed);
        Self {
            clusters,
            restarts: p.restarts,
            max_iters: p.max_iters,
            seed,
        }
    }

    fn kmeans_params(&self, seed: u64) -> KMeansParams {
        KMeansParams {
            clusters: self.clusters,
            restarts: self.restarts,
            max_iters: self.max_iters,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalFitParams {
    pub rank: usize,
    /// `None` for plain PCA; otherwise rows are clustered with these settings.
    pub informed: Option<RowClustering>,
    pub pca: ConstrainedPcaParams,
    pub center: bool,
}

impl GlobalFitParams {
    pub fn plain(rank: usize) -> Self {
        Self {
            rank,
            informed: None,
            pca: ConstrainedPcaParams::default(),
            center: true,
        }
    }

    /// Informed fit with `rank + 1` row clusters.
    pub fn informed(rank: usize, seed: u64) -> Self {
        Self {
            informed: Some(RowClustering::new(rank + 1, seed)),
            ..Self::plain(rank)
        }
    }
}

/// Fits a global metric: plain PCA of the sample covariance, optionally refined
/// by clustering the rows and solving the constrained PCA problem.
pub fn fit_global(d: &DataMatrix, params: &GlobalFitParams) -> Result<GlobalMetricModel> {
    let cov = SampleCovariance::from_data(d, params.center)?;
    let plain = pca_top_k(&cov, params.rank)?;
    let basis = match &params.informed {
        None => plain,
        Some(rc) => {
            if rc.clusters > d.nrows() {
                return Err(Error::InvalidArgument(format!(
                    "{} row clusters requested for {} rows",
                    rc.clusters,
                    d.nrows()
                )));
            }
            let assignment = kmeans(d.as_matrix(), &rc.kmeans_params(rc.seed))?;
            constrained_pca(&cov, &indicator_matrix(&assignment), &plain, &params.pca)?
        }
    };
    GlobalMetricModel::from_basis(basis)
}

/// Per-sample pseudo-inverse covariances estimated from nearest-neighbor patches.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMetricModel {
    factors: Vec<DMatrix<f64>>,
    neighborhoods: Vec<Vec<usize>>,
    neighbors: usize,
    rank: usize,
    provenance: Provenance,
}

impl LocalMetricModel {
    /// `W_i = U_d^{(i)} Lambda_d^{(i) -1/2}` for column `i`.
    pub fn factor(&self, i: usize) -> &DMatrix<f64> {
        &self.factors[i]
    }

    /// Columns forming the patch of column `i`, nearest first (the column itself leads).
    pub fn neighborhood(&self, i: usize) -> &[usize] {
        &self.neighborhoods[i]
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn neighbors(&self) -> usize {
        self.neighbors
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    fn check_data(&self, d: &DataMatrix) -> Result<()> {
        let m = self.factors.first().map_or(0, |f| f.nrows());
        if d.ncols() != self.len() || d.nrows() != m {
            return Err(Error::DimensionMismatch {
                expected: (m, self.len()),
                found: (d.nrows(), d.ncols()),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalFitParams {
    /// Patch size `N`, the column itself included.
    pub neighbors: usize,
    pub rank: usize,
    pub informed: Option<RowClustering>,
    pub pca: ConstrainedPcaParams,
}

impl LocalFitParams {
    pub fn plain(neighbors: usize, rank: usize) -> Self {
        Self {
            neighbors,
            rank,
            informed: None,
            pca: ConstrainedPcaParams::default(),
        }
    }

    pub fn informed(neighbors: usize, rank: usize, clusters: usize, seed: u64) -> Self {
        Self {
            informed: Some(RowClustering::new(clusters, seed)),
            ..Self::plain(neighbors, rank)
        }
    }
}

/// The `n` nearest columns of every column by Euclidean distance, itself first.
pub fn nearest_neighbors(d: &DataMatrix, n: usize) -> Vec<Vec<usize>> {
    let dist = pairwise_sq_distances(d.as_matrix());
    let cols = d.ncols();
    (0..cols)
        .map(|i| {
            let mut order: Vec<usize> = (0..cols).collect();
            order.sort_by(|&a, &b| {
                dist[(i, a)]
                    .total_cmp(&dist[(i, b)])
                    .then_with(|| (a != i).cmp(&(b != i)))
                    .then_with(|| a.cmp(&b))
            });
            order.truncate(n);
            order
        })
        .collect()
}

/// Nearest-neighbor patches of every column with their covariances and plain
/// principal bases. Informed fits that differ only in the k-means settings can
/// share one instance.
#[derive(Debug, Clone)]
pub struct LocalPatches {
    neighborhoods: Vec<Vec<usize>>,
    patches: Vec<DataMatrix>,
    covariances: Vec<SampleCovariance>,
    plain: Vec<PrincipalBasis>,
    neighbors: usize,
    rank: usize,
}

impl LocalPatches {
    pub fn new(d: &DataMatrix, neighbors: usize, rank: usize) -> Result<Self> {
        let (m, n) = (d.nrows(), d.ncols());
        if neighbors < 2 || neighbors > n {
            return Err(Error::InvalidArgument(format!(
                "neighborhood size must lie in 2..={n}, got {neighbors}"
            )));
        }
        if rank == 0 || rank > m.min(neighbors - 1) {
            return Err(Error::InvalidArgument(format!(
                "rank must lie in 1..={}, got {rank}",
                m.min(neighbors - 1)
            )));
        }
        let neighborhoods = nearest_neighbors(d, neighbors);
        let mut patches = Vec::with_capacity(n);
        let mut covariances = Vec::with_capacity(n);
        let mut plain = Vec::with_capacity(n);
        for (i, hood) in neighborhoods.iter().enumerate() {
            let patch = d.select_columns(hood)?;
            let cov = SampleCovariance::from_data(&patch, true)?;
            let basis = pca_top_k(&cov, rank).map_err(|e| match e {
                Error::RankDeficient { requested, attainable } => Error::LocalRankDeficient {
                    column: i,
                    requested,
                    attainable,
                },
                other => other,
            })?;
            patches.push(patch);
            covariances.push(cov);
            plain.push(basis);
        }
        Ok(Self {
            neighborhoods,
            patches,
            covariances,
            plain,
            neighbors,
            rank,
        })
    }

    pub fn neighborhood(&self, i: usize) -> &[usize] {
        &self.neighborhoods[i]
    }

    /// Plain basis of column `i`'s patch.
    pub fn plain_basis(&self, i: usize) -> &PrincipalBasis {
        &self.plain[i]
    }

    /// Local model from the plain bases, or from bases constrained to a per-patch
    /// row clustering (column `i` uses k-means seed `derive_seed(rc.seed, i)`).
    pub fn fit(&self, informed: Option<&RowClustering>, pca: &ConstrainedPcaParams) -> Result<LocalMetricModel> {
        let m = self.patches.first().map_or(0, |p| p.nrows());
        if let Some(rc) = informed {
            if rc.clusters == 0 || rc.clusters > m {
                return Err(Error::InvalidArgument(format!(
                    "{} row clusters requested for {m} rows",
                    rc.clusters
                )));
            }
        }
        let mut factors = Vec::with_capacity(self.patches.len());
        for (i, plain) in self.plain.iter().enumerate() {
            let factor = match informed {
                None => whitening_factor(plain)?,
                Some(rc) => {
                    let params = rc.kmeans_params(derive_seed(rc.seed, i as u64));
                    let assignment = kmeans(self.patches[i].as_matrix(), &params)?;
                    let basis = constrained_pca(&self.covariances[i], &indicator_matrix(&assignment), plain, pca)?;
                    whitening_factor(&basis)?
                }
            };
            factors.push(factor);
        }
        Ok(LocalMetricModel {
            factors,
            neighborhoods: self.neighborhoods.clone(),
            neighbors: self.neighbors,
            rank: self.rank,
            provenance: if informed.is_some() {
                Provenance::Informed
            } else {
                Provenance::Plain
            },
        })
    }
}

/// Fits one local covariance model per column.
pub fn fit_local(d: &DataMatrix, params: &LocalFitParams) -> Result<LocalMetricModel> {
    if let Some(rc) = &params.informed {
        if rc.clusters == 0 || rc.clusters > d.nrows() {
            return Err(Error::InvalidArgument(format!(
                "{} row clusters requested for {} rows",
                rc.clusters,
                d.nrows()
            )));
        }
    }
    LocalPatches::new(d, params.neighbors, params.rank)?.fit(params.informed.as_ref(), &params.pca)
}

/// `1/2 (c_i - c_j)^T (W_i W_i^T + W_j W_j^T) (c_i - c_j)`.
pub fn local_distance(model: &LocalMetricModel, i: usize, j: usize, d: &DataMatrix) -> Result<f64> {
    model.check_data(d)?;
    for idx in [i, j] {
        if idx >= model.len() {
            return Err(Error::IndexOutOfRange {
                index: idx,
                len: model.len(),
            });
        }
    }
    if i == j {
        return Ok(0.0);
    }
    let diff = d.column(i) - d.column(j);
    let a = model.factors[i].tr_mul(&diff).norm_squared();
    let b = model.factors[j].tr_mul(&diff).norm_squared();
    Ok(0.5 * (a + b))
}

impl ColumnMetric for LocalMetricModel {
    fn distance_matrix(&self, d: &DataMatrix) -> Result<DMatrix<f64>> {
        self.check_data(d)?;
        let n = self.len();
        // Row block i holds W_i^T D.
        let projected: Vec<DMatrix<f64>> = self.factors.iter().map(|w| w.transpose() * d.as_matrix()).collect();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            let pi = &projected[i];
            for j in (i + 1)..n {
                let pj = &projected[j];
                let a = (pi.column(i) - pi.column(j)).norm_squared();
                let b = (pj.column(i) - pj.column(j)).norm_squared();
                let v = 0.5 * (a + b);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }
}
