//! Seeded generators for the linear hidden-square model and the two-type block
//! model, their analytic covariances, and the principal-direction error.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_basis, sym_evd, DataMatrix};
use crate::rng::{derive_seed, seeded, Rng};
use crate::survival::SurvivalRecord;

/// Rows of the linear model's mixing matrix.
pub const LINEAR_ROWS: usize = 1200;
/// Mean of the mixing-matrix rows in each of the three row blocks.
pub const LINEAR_BLOCK_MEANS: [[f64; 2]; 3] = [[1.0 / 3.0, 1.0], [1.0 / 3.0, -1.0], [-1.0, -3.0]];
/// Variance of each mixing-matrix entry around its block mean.
pub const LINEAR_ROW_VARIANCE: f64 = 0.01;
/// Variance of each hidden coordinate, uniform on `[0, 1]`.
pub const HIDDEN_VARIANCE: f64 = 1.0 / 12.0;

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `D = A X` with hidden samples `X` uniform on the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelDataset {
    pub data: DataMatrix,
    /// `2 x n`.
    pub hidden: DMatrix<f64>,
    /// `1200 x 2`.
    pub mixing: DMatrix<f64>,
    /// Block (0, 1 or 2) of every row; blocks are contiguous runs of 400 rows.
    pub row_blocks: Vec<usize>,
}

impl LinearModelDataset {
    /// Exact column covariance `A Sigma_x A^T`.
    pub fn model_covariance(&self) -> DMatrix<f64> {
        &self.mixing * self.mixing.transpose() * HIDDEN_VARIANCE
    }

    /// Squared hidden Mahalanobis distance `(x_i - x_j)^T Sigma_x^{-1} (x_i - x_j)`.
    pub fn hidden_mahalanobis(&self, i: usize, j: usize) -> f64 {
        (self.hidden.column(i) - self.hidden.column(j)).norm_squared() / HIDDEN_VARIANCE
    }

    /// Squared Euclidean distances between hidden samples.
    pub fn hidden_distances(&self) -> DMatrix<f64> {
        crate::metric::pairwise_sq_distances(&self.hidden)
    }
}

/// Linear model with `n` columns. The mixing matrix depends on `seed` only, and the
/// hidden samples form a prefix-stable stream, so smaller `n` yields leading columns.
pub fn gen_linear_model(n: usize, seed: u64) -> Result<LinearModelDataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("at least one column is required".into()));
    }
    let per_block = LINEAR_ROWS / 3;
    let sd = libm::sqrt(LINEAR_ROW_VARIANCE);
    let mut rng = seeded(derive_seed(seed, 0));
    let row_blocks: Vec<usize> = (0..LINEAR_ROWS).map(|i| i / per_block).collect();
    let mut mixing = DMatrix::zeros(LINEAR_ROWS, 2);
    for (i, &b) in row_blocks.iter().enumerate() {
        for c in 0..2 {
            mixing[(i, c)] = LINEAR_BLOCK_MEANS[b][c] + sd * normal(&mut rng);
        }
    }
    let mut rng = seeded(derive_seed(seed, 1));
    let mut hidden = DMatrix::zeros(2, n);
    for j in 0..n {
        hidden[(0, j)] = rng.random::<f64>();
        hidden[(1, j)] = rng.random::<f64>();
    }
    let data = DataMatrix::new(&mixing * &hidden)?;
    Ok(LinearModelDataset {
        data,
        hidden,
        mixing,
        row_blocks,
    })
}

/// Two column types, `K` row clusters with intra-cluster covariance `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockModel {
    pub sigma2: f64,
    pub rho: f64,
    /// Per-cluster mean for type A columns.
    pub mu_a: Vec<f64>,
    /// Per-cluster mean for type B columns.
    pub mu_b: Vec<f64>,
    pub cluster_sizes: Vec<usize>,
    /// Cluster of every row; clusters are contiguous.
    pub row_clusters: Vec<usize>,
}

/// Equal split of `m` rows into `k` clusters, remainder to the last.
pub fn equal_cluster_sizes(m: usize, k: usize) -> Vec<usize> {
    let base = m / k;
    let mut sizes = vec![base; k];
    sizes[k - 1] += m - base * k;
    sizes
}

impl BlockModel {
    /// Model with explicit cluster means.
    pub fn with_means(m: usize, sigma2: f64, rho: f64, mu_a: Vec<f64>, mu_b: Vec<f64>) -> Result<Self> {
        let k = mu_a.len();
        if k == 0 || k > m {
            return Err(Error::InvalidArgument(format!(
                "cluster count must lie in 1..={m}, got {k}"
            )));
        }
        if mu_b.len() != k {
            return Err(Error::DimensionMismatch {
                expected: (k, 1),
                found: (mu_b.len(), 1),
            });
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() || !(rho >= 0.0) || !(rho < sigma2) {
            return Err(Error::InvalidArgument(format!(
                "block model requires 0 <= rho < sigma2, got sigma2={sigma2}, rho={rho}"
            )));
        }
        if mu_a.iter().chain(&mu_b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("cluster means must be finite".into()));
        }
        let cluster_sizes = equal_cluster_sizes(m, k);
        let row_clusters = cluster_sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &s)| core::iter::repeat_n(c, s))
            .collect();
        Ok(Self {
            sigma2,
            rho,
            mu_a,
            mu_b,
            cluster_sizes,
            row_clusters,
        })
    }

    /// Means drawn from `seed`: `mu_A ~ U[0, 1]`, `mu_B = mu_A +/- U[0.5, 1.5]`
    /// with the sign alternating over clusters.
    pub fn new(m: usize, k: usize, sigma2: f64, rho: f64, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed);
        let mu_a: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let mu_b = mu_a
            .iter()
            .enumerate()
            .map(|(c, &a)| {
                let off = 0.5 + rng.random::<f64>();
                if c % 2 == 0 {
                    a + off
                } else {
                    a - off
                }
            })
            .collect();
        Self::with_means(m, sigma2, rho, mu_a, mu_b)
    }

    pub fn rows(&self) -> usize {
        self.row_clusters.len()
    }

    pub fn clusters(&self) -> usize {
        self.cluster_sizes.len()
    }

    /// `mu_A - mu_B` expanded to rows.
    pub fn mean_difference(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.rows(),
            self.row_clusters.iter().map(|&c| self.mu_a[c] - self.mu_b[c]),
        )
    }

    /// `Sigma = C + 1/4 (mu_A - mu_B)(mu_A - mu_B)^T` with block-diagonal `C`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.rows();
        let delta = self.mean_difference();
        DMatrix::from_fn(m, m, |i, j| {
            let c = if i == j {
                self.sigma2
            } else if self.row_clusters[i] == self.row_clusters[j] {
                self.rho
            } else {
                0.0
            };
            c + 0.25 * delta[i] * delta[j]
        })
    }

    /// Top `k` eigenpairs of the analytic covariance.
    ///
    /// The mean difference is cluster-constant, so the `K` leading eigenvectors lie in
    /// the span of the normalized cluster indicators and come from a `K x K` problem;
    /// every other eigenvalue equals `sigma2 - rho`.
    pub fn top_directions(&self, k: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let kc = self.clusters();
        let floor = self.sigma2 - self.rho;
        if k <= kc {
            let delta: Vec<f64> = (0..kc)
                .map(|c| libm::sqrt(self.cluster_sizes[c] as f64) * (self.mu_a[c] - self.mu_b[c]))
                .collect();
            let reduced = DMatrix::from_fn(kc, kc, |a, b| {
                let diag = if a == b {
                    self.sigma2 + (self.cluster_sizes[a] as f64 - 1.0) * self.rho
                } else {
                    0.0
                };
                diag + 0.25 * delta[a] * delta[b]
            });
            let evd = sym_evd(&reduced)?;
            if evd.eigenvalues[k - 1] > floor {
                let mut u = DMatrix::zeros(self.rows(), k);
                for (i, &c) in self.row_clusters.iter().enumerate() {
                    let w = 1.0 / libm::sqrt(self.cluster_sizes[c] as f64);
                    for j in 0..k {
                        u[(i, j)] = w * evd.eigenvectors[(c, j)];
                    }
                }
                return Ok((u, evd.eigenvalues.iter().take(k).copied().collect()));
            }
        }
        let evd = sym_evd(&self.covariance())?.truncate(k);
        Ok((evd.eigenvectors, evd.eigenvalues.iter().copied().collect()))
    }

    /// `n` columns with types drawn with probability 1/2.
    pub fn sample(&self, n: usize, seed: u64) -> Result<BlockModelDataset> {
        if n == 0 {
            return Err(Error::InvalidArgument("at least one column is required".into()));
        }
        let mut rng = seeded(seed);
        let shared = libm::sqrt(self.rho);
        let own = libm::sqrt(self.sigma2 - self.rho);
        let m = self.rows();
        let mut types = Vec::with_capacity(n);
        let mut data = DMatrix::zeros(m, n);
        let mut factors = vec![0.0; self.clusters()];
        for j in 0..n {
            let t = usize::from(rng.random::<f64>() < 0.5);
            types.push(t);
            for f in factors.iter_mut() {
                *f = normal(&mut rng);
            }
            for (i, &c) in self.row_clusters.iter().enumerate() {
                let mu = if t == 0 { self.mu_a[c] } else { self.mu_b[c] };
                data[(i, j)] = mu + shared * factors[c] + own * normal(&mut rng);
            }
        }
        Ok(BlockModelDataset {
            data: DataMatrix::new(data)?,
            types,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockModelDataset {
    pub data: DataMatrix,
    /// 0 for type A, 1 for type B.
    pub types: Vec<usize>,
}

/// Block model with `n` columns; means come from `derive_seed(seed, 0)` unless
/// given, columns from `derive_seed(seed, 1)`.
pub fn gen_block_model(
    m: usize,
    n: usize,
    k: usize,
    sigma2: f64,
    rho: f64,
    means: Option<(Vec<f64>, Vec<f64>)>,
    seed: u64,
) -> Result<(BlockModel, BlockModelDataset)> {
    let model = match means {
        Some((a, b)) => {
            if a.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: (k, 1),
                    found: (a.len(), 1),
                });
            }
            BlockModel::with_means(m, sigma2, rho, a, b)?
        }
        None => BlockModel::new(m, k, sigma2, rho, derive_seed(seed, 0))?,
    };
    let data = model.sample(n, derive_seed(seed, 1))?;
    Ok((model, data))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    Frobenius,
    Spectral,
}

const ORTHONORMAL_TOL: f64 = 1e-8;

fn orthonormalized(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = u.transpose() * u;
    if (gram - DMatrix::<f64>::identity(u.ncols(), u.ncols())).amax() <= ORTHONORMAL_TOL {
        Ok(u.clone())
    } else {
        orthonormal_basis(u)
    }
}

/// `|| U_bar U_bar^T - U_hat U_hat^T ||` between the projectors onto the two column
/// spans. Non-orthonormal inputs are orthonormalized first.
pub fn pd_error(u_hat: &DMatrix<f64>, u_bar: &DMatrix<f64>, norm: ErrorNorm) -> Result<f64> {
    if u_hat.nrows() != u_bar.nrows() {
        return Err(Error::DimensionMismatch {
            expected: (u_bar.nrows(), u_hat.ncols()),
            found: u_hat.shape(),
        });
    }
    let mut q1 = orthonormalized(u_hat)?;
    let mut q2 = orthonormalized(u_bar)?;
    if q1.ncols() > q2.ncols() {
        core::mem::swap(&mut q1, &mut q2);
    }
    // Singular values of the residual are the sines of the principal angles.
    let residual = &q1 - &q2 * (q2.transpose() * &q1);
    match norm {
        ErrorNorm::Frobenius => {
            let extra = (q2.ncols() - q1.ncols()) as f64;
            Ok(libm::sqrt(2.0 * residual.norm_squared() + extra))
        }
        ErrorNorm::Spectral => {
            if q1.ncols() != q2.ncols() {
                return Ok(1.0);
            }
            Ok(residual.singular_values().iter().copied().fold(0.0, f64::max))
        }
    }
}

/// Gene-expression surrogate: block-structured genes, two planted subject groups
/// with different cluster means, and group-dependent exponential survival.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneSurrogateParams {
    pub genes: usize,
    pub gene_clusters: usize,
    pub subjects: usize,
    pub sigma2: f64,
    pub rho: f64,
    /// Cluster means for group 0 are drawn from `U[0, mean_spread]`.
    pub mean_spread: f64,
    /// Group 1 cluster means differ by `+/- U[0.5, 1.5] * group_offset`.
    pub group_offset: f64,
    /// Extra low-variance genes without cluster or group structure.
    pub noise_genes: usize,
    pub noise_sd: f64,
    /// Median survival of groups 0 and 1.
    pub median_survival: [f64; 2],
    /// Censoring times are uniform on `[0, censor_max]`.
    pub censor_max: f64,
}

impl Default for GeneSurrogateParams {
    fn default() -> Self {
        Self {
            genes: 200,
            gene_clusters: 7,
            subjects: 82,
            sigma2: 1.0,
            rho: 0.2,
            mean_spread: 3.0,
            group_offset: 0.6,
            noise_genes: 0,
            noise_sd: 0.3,
            median_survival: [100.0, 10.0],
            censor_max: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneSurrogate {
    /// `(genes + noise_genes) x subjects`.
    pub expression: DataMatrix,
    /// Planted group of every subject.
    pub groups: Vec<usize>,
    pub survival: Vec<SurvivalRecord>,
}

pub fn gen_gene_surrogate(params: &GeneSurrogateParams, seed: u64) -> Result<GeneSurrogate> {
    let p = params;
    if p.median_survival.iter().any(|&t| !(t > 0.0)) || !(p.censor_max > 0.0) {
        return Err(Error::InvalidArgument("survival scales must be positive".into()));
    }
    let mut rng = seeded(derive_seed(seed, 0));
    let mu_a: Vec<f64> = (0..p.gene_clusters)
        .map(|_| p.mean_spread * rng.random::<f64>())
        .collect();
    let mu_b: Vec<f64> = mu_a
        .iter()
        .enumerate()
        .map(|(c, &a)| {
            let off = p.group_offset * (0.5 + rng.random::<f64>());
            if c % 2 == 0 {
                a + off
            } else {
                a - off
            }
        })
        .collect();
    let model = BlockModel::with_means(p.genes, p.sigma2, p.rho, mu_a, mu_b)?;
    let block = model.sample(p.subjects, derive_seed(seed, 1))?;
    let mut rng = seeded(derive_seed(seed, 2));
    let mut expression = block.data.into_inner();
    if p.noise_genes > 0 {
        let noise = DMatrix::from_fn(p.noise_genes, p.subjects, |_, _| p.noise_sd * normal(&mut rng));
        let mut stacked = DMatrix::zeros(p.genes + p.noise_genes, p.subjects);
        stacked.rows_mut(0, p.genes).copy_from(&expression);
        stacked.rows_mut(p.genes, p.noise_genes).copy_from(&noise);
        expression = stacked;
    }
    let survival = block
        .types
        .iter()
        .map(|&g| {
            let rate = core::f64::consts::LN_2 / p.median_survival[g];
            let death = -libm::log(1.0 - rng.random::<f64>()) / rate;
            let censor = p.censor_max * rng.random::<f64>();
            if death <= censor {
                SurvivalRecord::new(death, true, g)
            } else {
                SurvivalRecord::new(censor, false, g)
            }
        })
        .collect();
    Ok(GeneSurrogate {
        expression: DataMatrix::new(expression)?,
        groups: block.types,
        survival,
    })
}
