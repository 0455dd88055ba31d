use infometric_core::embedding::spectral_bipartition;
use infometric_core::metric::{fit_global, ColumnMetric, Euclidean, GlobalFitParams, RowClustering};
use infometric_core::rng::derive_seed;
use infometric_core::synth::gen_block_model;
use rayon::prelude::*;
use serde::Serialize;

use super::{embed, experiment_mismatch, majority_accuracy, to_value, MeanStd};
use crate::config::{BlockEmbedParams, Experiment, ExperimentConfig};
use crate::error::CliResult;
use crate::report::{Curve, ExperimentReport};

/// Majority-aligned bipartition accuracies of one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockEmbedTrial {
    pub seed: u64,
    pub euclidean: f64,
    pub plain: f64,
    pub informed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockEmbedResults {
    pub euclidean: MeanStd,
    pub plain: MeanStd,
    pub informed: MeanStd,
    pub trials: Vec<BlockEmbedTrial>,
}

fn one_dataset(p: &BlockEmbedParams, seed: u64, keep: bool) -> CliResult<(BlockEmbedTrial, Option<Curve>)> {
    let b = &p.model;
    let (_, ds) = gen_block_model(b.rows, p.columns, b.clusters, b.sigma2, b.rho, None, seed)?;
    let plain = fit_global(&ds.data, &GlobalFitParams::plain(p.rank))?;
    let informed_params = GlobalFitParams {
        informed: Some(RowClustering::new(p.informed_clusters, derive_seed(seed, 2))),
        ..GlobalFitParams::plain(p.rank)
    };
    let informed = fit_global(&ds.data, &informed_params)?;
    let dms = [
        Euclidean.distance_matrix(&ds.data)?,
        plain.distance_matrix(&ds.data)?,
        informed.distance_matrix(&ds.data)?,
    ];
    let mut acc = [0.0; 3];
    let mut coords = Vec::new();
    for (a, dm) in acc.iter_mut().zip(&dms) {
        let emb = embed(dm, p.kernel_multiplier, p.embedding_dims)?;
        *a = majority_accuracy(&spectral_bipartition(&emb)?.labels, &ds.types);
        coords.push(emb.coordinates);
    }
    let curve = keep.then(|| {
        let mut columns = vec!["type".to_string()];
        for name in ["euclidean", "plain", "informed"] {
            for q in 0..p.embedding_dims {
                columns.push(format!("{name}_{}", q + 1));
            }
        }
        let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
        let mut curve = Curve::new("embedding", &refs);
        for (i, &t) in ds.types.iter().enumerate() {
            let mut row = vec![t as f64];
            for c in &coords {
                row.extend(c.row(i).iter().copied());
            }
            curve.push(row);
        }
        curve
    });
    Ok((
        BlockEmbedTrial {
            seed,
            euclidean: acc[0],
            plain: acc[1],
            informed: acc[2],
        },
        curve,
    ))
}

pub fn block_embed(p: &BlockEmbedParams, seed: u64) -> CliResult<(BlockEmbedResults, Vec<Curve>)> {
    let outcomes: Vec<(BlockEmbedTrial, Option<Curve>)> = (0..p.repeats)
        .into_par_iter()
        .map(|r| one_dataset(p, derive_seed(seed, r as u64), r == 0))
        .collect::<CliResult<_>>()?;
    let trials: Vec<BlockEmbedTrial> = outcomes.iter().map(|(t, _)| *t).collect();
    let curves: Vec<Curve> = outcomes.into_iter().filter_map(|(_, c)| c).collect();
    let col = |f: fn(&BlockEmbedTrial) -> f64| MeanStd::of(&trials.iter().map(f).collect::<Vec<_>>());
    Ok((
        BlockEmbedResults {
            euclidean: col(|t| t.euclidean),
            plain: col(|t| t.plain),
            informed: col(|t| t.informed),
            trials,
        },
        curves,
    ))
}

pub fn run_block_embed(config: &ExperimentConfig) -> CliResult<ExperimentReport> {
    let Experiment::BlockEmbed(p) = &config.experiment else {
        return Err(experiment_mismatch("block-embed"));
    };
    let (results, curves) = block_embed(p, config.seed)?;
    Ok(ExperimentReport::new(config, to_value(&results), curves, Vec::new()))
}
