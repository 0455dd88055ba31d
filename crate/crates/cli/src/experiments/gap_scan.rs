use infometric_core::cluster::{detect_plateau, gap_statistic, GapParams};
use infometric_core::metric::nearest_neighbors;
use infometric_core::rng::derive_seed;
use rayon::prelude::*;
use serde::Serialize;

use super::{experiment_mismatch, to_value};
use crate::config::{Experiment, ExperimentConfig, GapScanParams, GeneParams};
use crate::error::{CliError, CliResult};
use crate::report::{Curve, ExperimentReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapScanPoint {
    pub neighbors: usize,
    /// Gap averaged over all per-column neighborhoods.
    pub gap: f64,
    pub sim_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapScanResults {
    pub points: Vec<GapScanPoint>,
    /// Neighborhood sizes where the curve levels off, when detected.
    pub plateau: Option<[usize; 2]>,
    /// Number of consecutive increases at the start of the curve.
    pub increasing_prefix: usize,
}

pub fn gap_scan(p: &GapScanParams, seed: u64) -> CliResult<GapScanResults> {
    let source = GeneParams {
        data: p.data.clone(),
        surrogate: p.surrogate.clone(),
        top_genes: p.top_genes,
        ..GeneParams::default()
    };
    let data = super::load_gene_data(&source, seed)?;
    let d = &data.expression.data;
    if p.clusters > d.nrows() {
        return Err(CliError::Data(format!(
            "{} clusters requested for {} genes",
            p.clusters,
            d.nrows()
        )));
    }
    let mut points = Vec::new();
    for n in p.neighborhoods.values() {
        if n > d.ncols() {
            break;
        }
        let hoods = nearest_neighbors(d, n);
        let base = derive_seed(seed, n as u64);
        let gaps: Vec<(f64, f64)> = hoods
            .par_iter()
            .enumerate()
            .map(|(i, hood)| {
                let patch = d.select_columns(hood)?;
                let params = GapParams {
                    n_refs: p.references,
                    restarts: p.kmeans_restarts,
                    ..GapParams::new(p.clusters, derive_seed(base, i as u64))
                };
                let g = gap_statistic(patch.as_matrix(), &params)?;
                Ok((g.gap, g.sim_error))
            })
            .collect::<CliResult<_>>()?;
        let count = gaps.len() as f64;
        points.push(GapScanPoint {
            neighbors: n,
            gap: gaps.iter().map(|g| g.0).sum::<f64>() / count,
            sim_error: gaps.iter().map(|g| g.1).sum::<f64>() / count,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.neighbors as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.gap).collect();
    let plateau = detect_plateau(&xs, &ys, p.plateau_threshold)
        .map(|r| [points[*r.start()].neighbors, points[*r.end()].neighbors]);
    let increasing_prefix = ys.windows(2).take_while(|w| w[1] > w[0]).count();
    Ok(GapScanResults {
        points,
        plateau,
        increasing_prefix,
    })
}

pub fn run_gap_scan(config: &ExperimentConfig) -> CliResult<ExperimentReport> {
    let Experiment::GapScan(p) = &config.experiment else {
        return Err(experiment_mismatch("gap-scan"));
    };
    let results = gap_scan(p, config.seed)?;
    let mut notes = Vec::new();
    if results.points.len() < 2 {
        notes.push("insufficient range: a plateau needs at least two neighborhood sizes".into());
    } else if results.plateau.is_none() {
        notes.push("no plateau detected".into());
    }
    let mut curve = Curve::new("gap_vs_n", &["n", "gap", "sim_error"]);
    for pt in &results.points {
        curve.push(vec![pt.neighbors as f64, pt.gap, pt.sim_error]);
    }
    Ok(ExperimentReport::new(config, to_value(&results), vec![curve], notes))
}
