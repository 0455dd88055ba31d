//! Experiment runners. Each `run_*` returns a complete report; the typed
//! `*Results` structs are also exposed for programmatic use.

mod block_embed;
mod gap_scan;
mod gene;
mod pd_error;
mod recover;

pub use block_embed::{block_embed, run_block_embed, BlockEmbedResults, BlockEmbedTrial};
pub use gap_scan::{gap_scan, run_gap_scan, GapScanPoint, GapScanResults};
pub use gene::{gene_pipeline, load_gene_data, run_gene_pipeline, GeneData, GeneResults, MetricScore, SweepPoint};
pub use pd_error::{pd_error_experiment, run_pd_error, PdErrorPoint, PdErrorResults};
pub use recover::{recover, run_recover, RecoverResults};

use infometric_core::embedding::{diffusion_embedding, median_scale, Embedding};
use infometric_core::stats;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::report::ExperimentReport;

/// Validates the config and dispatches to its experiment.
pub fn run(config: &ExperimentConfig) -> CliResult<ExperimentReport> {
    config.validate()?;
    match &config.experiment {
        Experiment::Recover(_) => run_recover(config),
        Experiment::PdError(_) => run_pd_error(config),
        Experiment::BlockEmbed(_) => run_block_embed(config),
        Experiment::GenePipeline(_) => run_gene_pipeline(config),
        Experiment::GapScan(_) => run_gap_scan(config),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        Self {
            mean: stats::mean(values).unwrap_or(f64::NAN),
            std: if values.len() > 1 {
                stats::std_dev(values).unwrap_or(f64::NAN)
            } else {
                0.0
            },
        }
    }
}

/// Diffusion embedding with the kernel scale set to `multiplier` times the median squared distance.
pub(crate) fn embed(dist2: &DMatrix<f64>, multiplier: f64, dims: usize) -> CliResult<Embedding> {
    let eps = median_scale(dist2, multiplier)?;
    Ok(diffusion_embedding(dist2, eps, dims)?)
}

/// Square roots of the strictly upper triangle, row by row.
pub(crate) fn upper_distances(dist2: &DMatrix<f64>) -> Vec<f64> {
    let n = dist2.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(dist2[(i, j)].max(0.0).sqrt());
        }
    }
    out
}

/// Agreement between a bipartition and binary truth, up to swapping the labels.
pub fn majority_accuracy(labels: &[usize], truth: &[usize]) -> f64 {
    let agree = labels.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;
    agree.max(1.0 - agree)
}

/// Multiple correlation of `y` with the columns of `x` (intercept included).
pub fn multiple_correlation(y: &[f64], x: &DMatrix<f64>) -> f64 {
    let n = y.len();
    let design = DMatrix::from_fn(n, x.ncols() + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let target = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let Ok(beta) = svd.solve(&target, 1e-12) else {
        return f64::NAN;
    };
    let residual = &target - &design * beta;
    let mean = target.mean();
    let total: f64 = target.iter().map(|v| (v - mean) * (v - mean)).sum();
    (1.0 - residual.norm_squared() / total).max(0.0).sqrt()
}

pub(crate) fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("results serialize")
}

pub(crate) fn experiment_mismatch(expected: &str) -> CliError {
    CliError::Usage(format!("config does not describe a {expected} experiment"))
}
