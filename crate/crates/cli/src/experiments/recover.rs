use infometric_core::metric::{fit_global, ColumnMetric, Euclidean, GlobalFitParams, RowClustering};
use infometric_core::rng::derive_seed;
use infometric_core::stats::pearson;
use infometric_core::synth::gen_linear_model;
use nalgebra::DMatrix;
use serde::Serialize;

use super::{embed, experiment_mismatch, multiple_correlation, to_value, upper_distances};
use crate::config::{Experiment, ExperimentConfig, RecoverParams};
use crate::error::CliResult;
use crate::report::{Curve, ExperimentReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricTriple {
    pub euclidean: f64,
    pub plain: f64,
    pub informed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoverResults {
    /// Pearson correlation of each metric's distances with the hidden Euclidean distances.
    pub distance_correlation: MetricTriple,
    /// Multiple correlation of `cos(pi x1)` with the embedding coordinates.
    pub laplace_x1: MetricTriple,
    /// Multiple correlation of `cos(pi x2)` with the embedding coordinates.
    pub laplace_x2: MetricTriple,
    pub informed_iterations: usize,
    pub informed_gradient_norm: f64,
}

impl RecoverResults {
    /// Smaller of the two eigenfunction correlations, per metric.
    pub fn laplace_min(&self) -> MetricTriple {
        MetricTriple {
            euclidean: self.laplace_x1.euclidean.min(self.laplace_x2.euclidean),
            plain: self.laplace_x1.plain.min(self.laplace_x2.plain),
            informed: self.laplace_x1.informed.min(self.laplace_x2.informed),
        }
    }
}

pub fn recover(p: &RecoverParams, seed: u64) -> CliResult<(RecoverResults, Vec<Curve>)> {
    let ds = gen_linear_model(p.columns, seed)?;
    let fit_cols: Vec<usize> = (0..p.fit_columns).collect();
    let fit = ds.data.select_columns(&fit_cols)?;
    let plain = fit_global(&fit, &GlobalFitParams::plain(p.rank))?;
    let informed_params = GlobalFitParams {
        informed: Some(RowClustering::new(p.clusters, derive_seed(seed, 100))),
        ..GlobalFitParams::plain(p.rank)
    };
    let informed = fit_global(&fit, &informed_params)?;

    let hidden = ds.hidden_distances();
    let dms: [DMatrix<f64>; 3] = [
        Euclidean.distance_matrix(&ds.data)?,
        plain.distance_matrix(&ds.data)?,
        informed.distance_matrix(&ds.data)?,
    ];
    let hidden_upper = upper_distances(&hidden);
    let mut corr = [0.0; 3];
    for (c, dm) in corr.iter_mut().zip(&dms) {
        *c = pearson(&upper_distances(dm), &hidden_upper)?;
    }

    let cos: Vec<Vec<f64>> = (0..2)
        .map(|k| {
            ds.hidden
                .row(k)
                .iter()
                .map(|&x| (std::f64::consts::PI * x).cos())
                .collect()
        })
        .collect();
    let names = ["euclidean", "plain", "informed"];
    let mut columns = vec!["x1".to_string(), "x2".to_string()];
    let mut laplace = [[0.0; 3]; 2];
    let mut coords = Vec::new();
    for (m, dm) in dms.iter().enumerate() {
        let emb = embed(dm, p.kernel_multiplier, p.embedding_dims)?;
        for (k, target) in cos.iter().enumerate() {
            laplace[k][m] = multiple_correlation(target, &emb.coordinates);
        }
        for q in 0..emb.dim() {
            columns.push(format!("{}_{}", names[m], q + 1));
        }
        coords.push(emb.coordinates);
    }
    let col_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut embedding = Curve::new("embedding", &col_refs);
    for i in 0..p.columns {
        let mut row = vec![ds.hidden[(0, i)], ds.hidden[(1, i)]];
        for c in &coords {
            row.extend(c.row(i).iter().copied());
        }
        embedding.push(row);
    }

    let mut scatter = Curve::new("distances", &["hidden", "euclidean", "plain", "informed"]);
    for i in 0..p.fit_columns {
        for j in (i + 1)..p.fit_columns {
            scatter.push(vec![
                hidden[(i, j)].sqrt(),
                dms[0][(i, j)].sqrt(),
                dms[1][(i, j)].sqrt(),
                dms[2][(i, j)].sqrt(),
            ]);
        }
    }

    let triple = |v: [f64; 3]| MetricTriple {
        euclidean: v[0],
        plain: v[1],
        informed: v[2],
    };
    let results = RecoverResults {
        distance_correlation: triple(corr),
        laplace_x1: triple(laplace[0]),
        laplace_x2: triple(laplace[1]),
        informed_iterations: informed.basis().iterations_run,
        informed_gradient_norm: informed.basis().final_gradient_norm,
    };
    Ok((results, vec![scatter, embedding]))
}

pub fn run_recover(config: &ExperimentConfig) -> CliResult<ExperimentReport> {
    let Experiment::Recover(p) = &config.experiment else {
        return Err(experiment_mismatch("recover"));
    };
    let (results, curves) = recover(p, config.seed)?;
    let mut notes = Vec::new();
    if p.clusters == 1 {
        notes.push("a single row cluster makes every informed direction constant".to_string());
    }
    Ok(ExperimentReport::new(config, to_value(&results), curves, notes))
}
