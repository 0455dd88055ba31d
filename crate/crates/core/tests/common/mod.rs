#![allow(dead_code)]

use infometric_core::rng::{seeded, Rng};
use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn random_psd(m: usize, rank: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded(seed);
    let g = gaussian(m, rank, &mut rng);
    let scales: Vec<f64> = (0..rank).map(|_| 0.1 + 10.0 * rng.random::<f64>()).collect();
    let g = DMatrix::from_fn(m, rank, |i, j| g[(i, j)] * scales[j]);
    &g * g.transpose()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Cluster-wise averages of every column, computed entry by entry.
pub fn cluster_means(u: &DMatrix<f64>, labels: &[usize], k: usize) -> DMatrix<f64> {
    let mut sums = DMatrix::<f64>::zeros(k, u.ncols());
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for c in 0..u.ncols() {
            sums[(l, c)] += u[(i, c)];
        }
    }
    DMatrix::from_fn(u.nrows(), u.ncols(), |i, c| {
        sums[(labels[i], c)] / counts[labels[i]] as f64
    })
}
