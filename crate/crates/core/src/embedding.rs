//! Diffusion-maps embedding from a squared-distance matrix, and the sign-based
//! spectral bipartition built on it.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::sym_evd;

/// Tolerance for treating an eigenvalue as the trivial `lambda = 1`.
pub const TRIVIAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// `n x q`; column `j` holds `lambda_j phi_j`.
    pub coordinates: DMatrix<f64>,
    /// Nontrivial eigenvalues of the transition matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Kernel scale, when the embedding was built from distances.
    pub eps: Option<f64>,
    /// Set when `lambda = 1` is numerically repeated, i.e. the affinity graph is disconnected.
    pub disconnected: bool,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.coordinates.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coordinates.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.coordinates.ncols()
    }
}

fn check_square(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::InvalidInput(format!(
            "{name} must be a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{name} has non-finite entries")));
    }
    Ok(())
}

/// `W_ij = exp(-d2_ij / eps)`.
pub fn gaussian_affinity(dist2: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "kernel scale must be positive, got {eps}"
        )));
    }
    check_square("distance matrix", dist2)?;
    if dist2.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("squared distances must be nonnegative".into()));
    }
    Ok(dist2.map(|d| libm::exp(-d / eps)))
}

/// `multiplier` times the median off-diagonal squared distance.
pub fn median_scale(dist2: &DMatrix<f64>, multiplier: f64) -> Result<f64> {
    check_square("distance matrix", dist2)?;
    let n = dist2.nrows();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    if !(multiplier > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "multiplier must be positive, got {multiplier}"
        )));
    }
    let mut off: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for j in 0..n {
        for i in (j + 1)..n {
            off.push(0.5 * (dist2[(i, j)] + dist2[(j, i)]));
        }
    }
    let med = crate::stats::median(&mut off).unwrap_or(0.0);
    if !(med > 0.0) {
        return Err(Error::DegenerateInput(
            "median pairwise distance is zero; kernel scale undefined".into(),
        ));
    }
    Ok(multiplier * med)
}

/// Row-stochastic `P = S^{-1} W`.
pub fn transition_matrix(affinity: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let degrees = degrees(affinity)?;
    let mut p = affinity.clone();
    for (i, mut row) in p.row_iter_mut().enumerate() {
        row /= degrees[i];
    }
    Ok(p)
}

fn degrees(affinity: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_square("affinity", affinity)?;
    if affinity.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("affinity entries must be nonnegative".into()));
    }
    let degrees: Vec<f64> = affinity.row_iter().map(|r| r.sum()).collect();
    if let Some(i) = degrees.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::InvalidInput(format!("point {i} has zero total affinity")));
    }
    Ok(degrees)
}

/// Diffusion-maps embedding of dimension `q`.
///
/// The eigenpairs of `P = S^{-1} W` come from the symmetric conjugate
/// `S^{-1/2} W S^{-1/2}`; right eigenvectors are `phi = S^{-1/2} v`, scaled to unit
/// norm under the stationary distribution. The leading pair (`lambda_0 = 1`) is dropped.
pub fn diffusion_map(affinity: &DMatrix<f64>, q: usize) -> Result<Embedding> {
    let degrees = degrees(affinity)?;
    let n = affinity.nrows();
    if q == 0 || q > n.saturating_sub(1) {
        return Err(Error::InvalidArgument(format!(
            "embedding dimension must lie in 1..={}, got {q}",
            n.saturating_sub(1)
        )));
    }
    let asym = (affinity - affinity.transpose()).amax();
    if asym > 1e-12 * affinity.amax() {
        return Err(Error::InvalidInput(format!(
            "affinity is not symmetric (max gap {asym:e})"
        )));
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|&s| 1.0 / libm::sqrt(s)).collect();
    let conj = DMatrix::from_fn(n, n, |i, j| affinity[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let volume: f64 = degrees.iter().sum();
    // sqrt(S) 1 is the exact lambda = 1 eigenvector; restrict to its orthogonal complement.
    let v0: Vec<f64> = degrees.iter().map(|&s| libm::sqrt(s / volume)).collect();
    let complement = complement_basis(&v0);
    let reduced = complement.transpose() * &conj * &complement;
    let evd = sym_evd(&reduced)?;
    let vectors = &complement * &evd.eigenvectors;
    let ones = evd.eigenvalues.iter().filter(|&&l| l > 1.0 - TRIVIAL_TOL).count();
    let mut coordinates = DMatrix::zeros(n, q);
    let mut eigenvalues = Vec::with_capacity(q);
    for j in 0..q {
        let lambda = evd.eigenvalues[j];
        let mut phi: Vec<f64> = (0..n)
            .map(|i| vectors[(i, j)] * inv_sqrt[i] * libm::sqrt(volume))
            .collect();
        let lead = phi
            .iter()
            .copied()
            .fold(0.0_f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if lead < 0.0 {
            phi.iter_mut().for_each(|p| *p = -*p);
        }
        for (i, p) in phi.iter().enumerate() {
            coordinates[(i, j)] = lambda * p;
        }
        eigenvalues.push(lambda);
    }
    Ok(Embedding {
        coordinates,
        eigenvalues,
        eps: None,
        disconnected: ones > 0,
    })
}

/// `n x (n-1)` orthonormal basis of the complement of unit vector `v`, from a
/// Householder reflection mapping `v` to the first axis.
fn complement_basis(v: &[f64]) -> DMatrix<f64> {
    let n = v.len();
    let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut w: Vec<f64> = v.to_vec();
    w[0] += sign;
    let ww: f64 = w.iter().map(|x| x * x).sum();
    DMatrix::from_fn(n, n - 1, |i, j| {
        let e = if i == j + 1 { 1.0 } else { 0.0 };
        e - 2.0 * w[i] * w[j + 1] / ww
    })
}

/// Affinity from squared distances with scale `eps`, then [`diffusion_map`].
pub fn diffusion_embedding(dist2: &DMatrix<f64>, eps: f64, q: usize) -> Result<Embedding> {
    let mut emb = diffusion_map(&gaussian_affinity(dist2, eps)?, q)?;
    emb.eps = Some(eps);
    Ok(emb)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bipartition {
    /// 0 where the first coordinate is negative, 1 otherwise.
    pub labels: Vec<usize>,
    /// Every point landed on the same side.
    pub single_group: bool,
}

impl Bipartition {
    pub fn sizes(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - ones, ones]
    }
}

/// Splits points by the sign of the first embedding coordinate.
pub fn spectral_bipartition(embedding: &Embedding) -> Result<Bipartition> {
    if embedding.dim() == 0 {
        return Err(Error::InvalidArgument("embedding has no coordinates".into()));
    }
    let labels: Vec<usize> = embedding
        .coordinates
        .column(0)
        .iter()
        .map(|&c| usize::from(c >= 0.0))
        .collect();
    let single_group = labels.windows(2).all(|w| w[0] == w[1]);
    Ok(Bipartition { labels, single_group })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::pairwise_sq_distances;
    use crate::rng::seeded;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(per: usize, offset: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = seeded(seed);
        DMatrix::from_fn(2, 2 * per, |r, c| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * 0.1 + if c >= per && r == 0 { offset } else { 0.0 }
        })
    }

    #[test]
    fn affinity_examples() {
        let w = gaussian_affinity(&DMatrix::zeros(3, 3), 1.0).unwrap();
        assert_eq!(w, DMatrix::from_element(3, 3, 1.0));
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 2.5, 2.5, 0.0]);
        let w = gaussian_affinity(&d, 2.5).unwrap();
        assert!((w[(0, 1)] - libm::exp(-1.0)).abs() < 1e-15);
        assert_eq!(w[(0, 0)], 1.0);
        assert!(gaussian_affinity(&d, 0.0).is_err());
        assert!(gaussian_affinity(&d, -1.0).is_err());
    }

    #[test]
    fn affinity_is_monotone() {
        let pts = blobs(10, 1.0, 1);
        let d = pairwise_sq_distances(&pts);
        let w = gaussian_affinity(&d, 0.3).unwrap();
        let pairs: Vec<(f64, f64)> = d.iter().copied().zip(w.iter().copied()).collect();
        for a in &pairs {
            for b in &pairs {
                if a.0 < b.0 {
                    assert!(a.1 >= b.1);
                }
            }
        }
    }

    #[test]
    fn median_scale_examples() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 4.0, 1.0, 0.0, 9.0, 4.0, 9.0, 0.0]);
        assert_eq!(median_scale(&d, 2.0).unwrap(), 8.0);
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 5.0, 5.0, 0.0]);
        assert_eq!(median_scale(&d, 1.0).unwrap(), 5.0);
        assert!(matches!(
            median_scale(&DMatrix::zeros(3, 3), 1.0),
            Err(Error::DegenerateInput(_))
        ));
        assert!(median_scale(&DMatrix::zeros(1, 1), 1.0).is_err());
    }

    #[test]
    fn transition_rows_sum_to_one() {
        let d = pairwise_sq_distances(&blobs(15, 0.5, 2));
        let p = transition_matrix(&gaussian_affinity(&d, 0.2).unwrap()).unwrap();
        for r in p.row_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_of_connected_kernel() {
        let d = pairwise_sq_distances(&blobs(20, 0.5, 3));
        let emb = diffusion_embedding(&d, 0.5, 5).unwrap();
        assert!(!emb.disconnected);
        assert!(emb.eigenvalues[0] < 1.0);
        assert!(emb.eigenvalues.iter().all(|&l| (-1.0..=1.0).contains(&l)));
        assert!(emb.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(emb.eps, Some(0.5));
    }

    #[test]
    fn far_blobs_split_exactly() {
        let per = 25;
        let pts = blobs(per, 10.0, 4);
        let d = pairwise_sq_distances(&pts);
        let eps = 1.0;
        let w = gaussian_affinity(&d, eps).unwrap();
        for i in 0..per {
            for j in per..2 * per {
                assert!(w[(i, j)] < 1e-10);
            }
        }
        let parts = spectral_bipartition(&diffusion_map(&w, 2).unwrap()).unwrap();
        let first = parts.labels[0];
        assert!(parts.labels[..per].iter().all(|&l| l == first));
        assert!(parts.labels[per..].iter().all(|&l| l != first));
        assert!(!parts.single_group);
    }

    #[test]
    fn disconnected_graph_is_flagged() {
        let mut w = DMatrix::zeros(4, 4);
        for (i, j) in [(0, 1), (2, 3)] {
            w[(i, j)] = 0.5;
            w[(j, i)] = 0.5;
        }
        for i in 0..4 {
            w[(i, i)] = 1.0;
        }
        assert!(diffusion_map(&w, 2).unwrap().disconnected);
    }

    #[test]
    fn dimension_bounds() {
        let w = DMatrix::from_element(3, 3, 1.0);
        assert!(diffusion_map(&w, 0).is_err());
        assert!(diffusion_map(&w, 3).is_err());
        assert!(diffusion_map(&w, 2).is_ok());
    }

    #[test]
    fn permutation_moves_coordinates() {
        let pts = blobs(12, 1.0, 5);
        let n = pts.ncols();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let permuted = DMatrix::from_fn(2, n, |r, c| pts[(r, perm[c])]);
        let a = diffusion_embedding(&pairwise_sq_distances(&pts), 0.5, 3).unwrap();
        let b = diffusion_embedding(&pairwise_sq_distances(&permuted), 0.5, 3).unwrap();
        for j in 0..3 {
            assert!((a.eigenvalues[j] - b.eigenvalues[j]).abs() < 1e-10);
            let same: f64 = (0..n)
                .map(|c| (b.coordinates[(c, j)] - a.coordinates[(perm[c], j)]).abs())
                .fold(0.0, f64::max);
            let flip: f64 = (0..n)
                .map(|c| (b.coordinates[(c, j)] + a.coordinates[(perm[c], j)]).abs())
                .fold(0.0, f64::max);
            assert!(same.min(flip) < 1e-8);
        }
    }

    #[test]
    fn bipartition_by_sign() {
        let emb = Embedding {
            coordinates: DMatrix::from_column_slice(4, 1, &[-1.0, -0.5, 0.3, 2.0]),
            eigenvalues: vec![0.9],
            eps: None,
            disconnected: false,
        };
        let parts = spectral_bipartition(&emb).unwrap();
        assert_eq!(parts.labels, vec![0, 0, 1, 1]);
        assert_eq!(parts.sizes(), [2, 2]);
        let emb = Embedding {
            coordinates: DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]),
            ..emb
        };
        assert!(spectral_bipartition(&emb).unwrap().single_group);
    }
}
