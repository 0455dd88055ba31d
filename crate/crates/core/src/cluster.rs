//! k-means over matrix rows, the orthonormal cluster indicator matrix, and the
//! gap statistic.
//!
//! Points are stored row-major in a flat buffer (`PointSet`); the public entry
//! points accept an `m x p` matrix whose rows are the points.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, Rng};

/// Row-major point cloud: `len` points of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: Vec<f64>,
    dim: usize,
}

impl PointSet {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} values do not form points of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { data, dim })
    }

    /// Rows of `m` become the points.
    pub fn from_rows(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            data.extend(m.row(i).iter());
        }
        Self { data, dim: cols.max(1) }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Per-coordinate `(min, max)`.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for i in 0..self.len() {
            for (b, &v) in bounds.iter_mut().zip(self.point(i)) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        bounds
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, ra) = a.as_chunks::<4>();
    let (cb, rb) = b.as_chunks::<4>();
    for (x, y) in ca.iter().zip(cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub clusters: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(clusters: usize, seed: u64) -> Self {
        Self {
            clusters,
            restarts: 20,
            max_iters: 300,
            seed,
        }
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }
}

/// Result of k-means: labels, cluster sizes, centroids and the final cost.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
    /// One centroid per row.
    pub centroids: DMatrix<f64>,
    /// Sum of squared distances of points to their centroids.
    pub cost: f64,
    /// Cost after the initial assignment and after every Lloyd iteration.
    pub cost_history: Vec<f64>,
}

impl ClusterAssignment {
    pub fn clusters(&self) -> usize {
        self.sizes.len()
    }

    /// Cost recomputed from scratch against `points`.
    pub fn recompute_cost(&self, points: &PointSet) -> f64 {
        (0..points.len())
            .map(|i| {
                let c: Vec<f64> = self.centroids.row(self.labels[i]).iter().copied().collect();
                sq_dist(points.point(i), &c)
            })
            .sum()
    }
}

/// k-means over the rows of `rows`.
pub fn kmeans(rows: &DMatrix<f64>, params: &KMeansParams) -> Result<ClusterAssignment> {
    kmeans_points(&PointSet::from_rows(rows), params)
}

/// Lloyd iterations from k-means++ seeding; best of `restarts` runs by cost.
pub fn kmeans_points(points: &PointSet, params: &KMeansParams) -> Result<ClusterAssignment> {
    let k = params.clusters;
    if k == 0 {
        return Err(Error::InvalidArgument("cluster count must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot form {k} clusters from {} points",
            points.len()
        )));
    }
    let mut best: Option<Run> = None;
    for r in 0..params.restarts.max(1) {
        let mut rng = seeded(derive_seed(params.seed, r as u64));
        let run = lloyd(points, k, params.max_iters, &mut rng);
        if best.as_ref().is_none_or(|b| run.cost < b.cost) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");
    let dim = points.dim();
    let mut sizes = vec![0usize; k];
    for &l in &run.labels {
        sizes[l] += 1;
    }
    Ok(ClusterAssignment {
        labels: run.labels,
        sizes,
        centroids: DMatrix::from_row_slice(k, dim, &run.centroids),
        cost: run.cost,
        cost_history: run.history,
    })
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<f64>,
    cost: f64,
    history: Vec<f64>,
}

/// Greedy k-means++: each new center is the best of `2 + ln k` D^2-weighted
/// candidates, judged by the resulting potential.
fn plus_plus_init(points: &PointSet, k: usize, rng: &mut Rng) -> Vec<f64> {
    let n = points.len();
    let dim = points.dim();
    let trials = 2 + libm::log(k as f64) as usize;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(points.point(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points.point(i), points.point(first))).collect();
    let mut candidate = vec![0.0; n];
    let mut best_nearest = vec![0.0; n];
    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        let mut best: Option<(usize, f64)> = None;
        for _ in 0..trials {
            let pick = if total > 0.0 {
                let target = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut chosen = n - 1;
                for (i, &w) in nearest.iter().enumerate() {
                    acc += w;
                    if acc > target {
                        chosen = i;
                        break;
                    }
                }
                chosen
            } else {
                rng.random_range(0..n)
            };
            let c = points.point(pick);
            let mut potential = 0.0;
            for (i, (slot, &d)) in candidate.iter_mut().zip(&nearest).enumerate() {
                *slot = d.min(sq_dist(points.point(i), c));
                potential += *slot;
            }
            if best.is_none_or(|(_, p)| potential < p) {
                best = Some((pick, potential));
                best_nearest.copy_from_slice(&candidate);
            }
        }
        let (pick, _) = best.expect("at least one trial");
        centroids.extend_from_slice(points.point(pick));
        nearest.copy_from_slice(&best_nearest);
    }
    centroids
}

/// Assigns every point to its nearest centroid; returns per-point squared distances.
fn assign(points: &PointSet, centroids: &[f64], k: usize, labels: &mut [usize], dists: &mut [f64]) -> bool {
    let dim = points.dim();
    let mut changed = false;
    for i in 0..points.len() {
        let p = points.point(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let d = sq_dist(p, &centroids[c * dim..(c + 1) * dim]);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if labels[i] != best {
            labels[i] = best;
            changed = true;
        }
        dists[i] = best_d;
    }
    changed
}

/// Moves each empty cluster's centroid onto the point farthest from its own centroid.
fn repair_empty(points: &PointSet, centroids: &mut [f64], k: usize, labels: &mut [usize], dists: &mut [f64]) {
    let dim = points.dim();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for i in 0..points.len() {
            if sizes[labels[i]] > 1 && dists[i] > far_d {
                far_d = dists[i];
                far = Some(i);
            }
        }
        let Some(i) = far else { return };
        sizes[labels[i]] -= 1;
        sizes[c] = 1;
        labels[i] = c;
        dists[i] = 0.0;
        centroids[c * dim..(c + 1) * dim].copy_from_slice(points.point(i));
    }
}

fn update_centroids(points: &PointSet, centroids: &mut [f64], k: usize, labels: &[usize]) {
    let dim = points.dim();
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for i in 0..points.len() {
        let l = labels[i];
        counts[l] += 1;
        for (s, &v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(points.point(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            for (dst, s) in centroids[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(&sums[c * dim..(c + 1) * dim])
            {
                *dst = s * inv;
            }
        }
    }
}

fn lloyd(points: &PointSet, k: usize, max_iters: usize, rng: &mut Rng) -> Run {
    let n = points.len();
    let mut centroids = plus_plus_init(points, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    assign(points, &centroids, k, &mut labels, &mut dists);
    repair_empty(points, &mut centroids, k, &mut labels, &mut dists);
    let mut history = vec![dists.iter().sum::<f64>()];
    for _ in 0..max_iters {
        update_centroids(points, &mut centroids, k, &labels);
        let changed = assign(points, &centroids, k, &mut labels, &mut dists);
        repair_empty(points, &mut centroids, k, &mut labels, &mut dists);
        history.push(dists.iter().sum());
        if !changed {
            break;
        }
    }
    // Final centroids are the means of the final partition.
    update_centroids(points, &mut centroids, k, &labels);
    let cost = (0..n)
        .map(|i| {
            sq_dist(
                points.point(i),
                &centroids[labels[i] * points.dim()..(labels[i] + 1) * points.dim()],
            )
        })
        .sum();
    Run {
        labels,
        centroids,
        cost,
        history,
    }
}

/// `m x K_c` matrix with entry `1/sqrt(m_k)` where row `i` belongs to cluster `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMatrix {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

impl IndicatorMatrix {
    /// Every label must be below `clusters` and every cluster non-empty.
    pub fn from_labels(labels: &[usize], clusters: usize) -> Result<Self> {
        let mut sizes = vec![0usize; clusters];
        for &l in labels {
            if l >= clusters {
                return Err(Error::InvalidInput(format!(
                    "label {l} out of range for {clusters} clusters"
                )));
            }
            sizes[l] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidInput(format!("cluster {empty} is empty")));
        }
        Ok(Self {
            labels: labels.to_vec(),
            sizes,
        })
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// The dense `H`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.rows(), self.clusters());
        for (i, &l) in self.labels.iter().enumerate() {
            h[(i, l)] = 1.0 / libm::sqrt(self.sizes[l] as f64);
        }
        h
    }

    /// The dense projector `H H^T`.
    pub fn projector(&self) -> DMatrix<f64> {
        let h = self.matrix();
        &h * h.transpose()
    }

    fn check_rows(&self, u: &DMatrix<f64>) -> Result<()> {
        if u.nrows() != self.rows() {
            return Err(Error::DimensionMismatch {
                expected: (self.rows(), u.ncols()),
                found: u.shape(),
            });
        }
        Ok(())
    }

    /// `H^T U`, a `K_c x K` matrix.
    pub fn restrict(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(u)?;
        let mut out = DMatrix::zeros(self.clusters(), u.ncols());
        for j in 0..u.ncols() {
            for (i, &l) in self.labels.iter().enumerate() {
                out[(l, j)] += u[(i, j)];
            }
        }
        for (l, &s) in self.sizes.iter().enumerate() {
            let inv = 1.0 / libm::sqrt(s as f64);
            for j in 0..u.ncols() {
                out[(l, j)] *= inv;
            }
        }
        Ok(out)
    }

    /// `H Y` for a `K_c x K` matrix `Y`.
    pub fn expand(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.nrows() != self.clusters() {
            return Err(Error::DimensionMismatch {
                expected: (self.clusters(), y.ncols()),
                found: y.shape(),
            });
        }
        let scale: Vec<f64> = self.sizes.iter().map(|&s| 1.0 / libm::sqrt(s as f64)).collect();
        Ok(DMatrix::from_fn(self.rows(), y.ncols(), |i, j| {
            let l = self.labels[i];
            y[(l, j)] * scale[l]
        }))
    }

    /// `H H^T U`: replaces each entry by the mean of its column over the row's cluster.
    pub fn project(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(u)?;
        let mut means = DMatrix::zeros(self.clusters(), u.ncols());
        for j in 0..u.ncols() {
            for (i, &l) in self.labels.iter().enumerate() {
                means[(l, j)] += u[(i, j)];
            }
        }
        for (l, &s) in self.sizes.iter().enumerate() {
            for j in 0..u.ncols() {
                means[(l, j)] /= s as f64;
            }
        }
        Ok(DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| {
            means[(self.labels[i], j)]
        }))
    }
}

pub fn indicator_matrix(assignment: &ClusterAssignment) -> IndicatorMatrix {
    IndicatorMatrix {
        labels: assignment.labels.clone(),
        sizes: assignment.sizes.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapParams {
    pub clusters: usize,
    pub n_refs: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl GapParams {
    pub fn new(clusters: usize, seed: u64) -> Self {
        Self {
            clusters,
            n_refs: 10,
            restarts: 3,
            max_iters: 100,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapResult {
    /// `E*[log W_K] - log W_K`.
    pub gap: f64,
    pub log_w: f64,
    pub ref_log_w: Vec<f64>,
    /// Simulation error `sd * sqrt(1 + 1/B)` of the reference mean.
    pub sim_error: f64,
}

pub fn gap_statistic(rows: &DMatrix<f64>, params: &GapParams) -> Result<GapResult> {
    gap_statistic_points(&PointSet::from_rows(rows), params)
}

/// Gap statistic against uniform references drawn in the bounding box of the points.
///
/// `W_K` is the pooled within-cluster dispersion, i.e. the k-means cost.
pub fn gap_statistic_points(points: &PointSet, params: &GapParams) -> Result<GapResult> {
    if params.n_refs < 5 {
        return Err(Error::InvalidArgument(format!(
            "gap statistic needs at least 5 reference sets, got {}",
            params.n_refs
        )));
    }
    let bounds = points.bounding_box();
    if bounds.iter().all(|&(lo, hi)| hi - lo <= 0.0) {
        return Err(Error::DegenerateInput("points have a zero bounding box".into()));
    }
    let km = KMeansParams {
        clusters: params.clusters,
        restarts: params.restarts,
        max_iters: params.max_iters,
        seed: derive_seed(params.seed, 0),
    };
    let w = kmeans_points(points, &km)?.cost;
    if !(w > 0.0) {
        return Err(Error::DegenerateInput(
            "zero within-cluster dispersion; gap is unbounded".into(),
        ));
    }
    let log_w = libm::log(w);
    let mut ref_log_w = Vec::with_capacity(params.n_refs);
    let mut buf = vec![0.0; points.len() * points.dim()];
    for b in 0..params.n_refs {
        let mut rng = seeded(derive_seed(params.seed, 1 + b as u64));
        for chunk in buf.chunks_mut(points.dim()) {
            for (v, &(lo, hi)) in chunk.iter_mut().zip(&bounds) {
                *v = lo + (hi - lo) * rng.random::<f64>();
            }
        }
        let reference = PointSet {
            data: buf.clone(),
            dim: points.dim(),
        };
        let km_ref = KMeansParams {
            seed: derive_seed(params.seed, 1_000_003 + b as u64),
            ..km
        };
        let cost = kmeans_points(&reference, &km_ref)?.cost;
        ref_log_w.push(libm::log(cost));
    }
    let nb = ref_log_w.len() as f64;
    let mean = ref_log_w.iter().sum::<f64>() / nb;
    let var = ref_log_w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nb;
    Ok(GapResult {
        gap: mean - log_w,
        log_w,
        ref_log_w,
        sim_error: libm::sqrt(var) * libm::sqrt(1.0 + 1.0 / nb),
    })
}

/// Index range where a curve stops increasing.
///
/// Forward slopes are taken between consecutive points. Scanning from the
/// steepest slope, the plateau starts at the first point whose forward slope
/// falls below `rel_threshold` times the maximum slope and extends over the
/// contiguous run of such slopes. Returns `None` when the curve has fewer than
/// two points, never increases, or never flattens.
pub fn detect_plateau(xs: &[f64], ys: &[f64], rel_threshold: f64) -> Option<RangeInclusive<usize>> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let slopes: Vec<f64> = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
        .collect();
    let (steepest, &max_slope) = slopes.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if !(max_slope > 0.0) {
        return None;
    }
    let threshold = rel_threshold * max_slope;
    let start = (steepest..slopes.len()).find(|&i| slopes[i] < threshold)?;
    let mut end = start;
    while end + 1 < slopes.len() && slopes[end + 1] < threshold {
        end += 1;
    }
    // Slope `end` spans points `end` and `end + 1`.
    Some(start..=end + 1)
}
