use infometric_core::cluster::{indicator_matrix, kmeans, IndicatorMatrix, KMeansParams};
use infometric_core::linalg::SampleCovariance;
use infometric_core::pca::{constrained_pca, pca_top_k, ConstrainedPcaParams};
use infometric_core::rng::derive_seed;
use infometric_core::synth::{pd_error, BlockModel, ErrorNorm};
use rayon::prelude::*;
use serde::Serialize;

use super::{experiment_mismatch, to_value, MeanStd};
use crate::config::{Experiment, ExperimentConfig, PdErrorParams};
use crate::error::CliResult;
use crate::report::{Curve, ExperimentReport};

/// Errors of the three estimates in one trial: `[plain, kmeans, oracle]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialErrors {
    pub frobenius: [f64; 3],
    pub spectral: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdErrorPoint {
    pub columns: usize,
    pub plain_f: MeanStd,
    pub kmeans_f: MeanStd,
    pub oracle_f: MeanStd,
    pub plain_2: MeanStd,
    pub kmeans_2: MeanStd,
    pub oracle_2: MeanStd,
    pub trials: Vec<TrialErrors>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdErrorResults {
    pub mu_a: Vec<f64>,
    pub mu_b: Vec<f64>,
    /// Leading eigenvalues of the analytic covariance.
    pub eigenvalues: Vec<f64>,
    pub points: Vec<PdErrorPoint>,
    /// Mean over all points and trials of the oracle and k-means Frobenius errors.
    pub oracle_f_overall: f64,
    pub kmeans_f_overall: f64,
}

fn trial(
    model: &BlockModel,
    truth: &nalgebra::DMatrix<f64>,
    oracle: &IndicatorMatrix,
    p: &PdErrorParams,
    n: usize,
    seed: u64,
) -> CliResult<TrialErrors> {
    let ds = model.sample(n, seed)?;
    let cov = SampleCovariance::from_data(&ds.data, true)?;
    let plain = pca_top_k(&cov, p.rank)?;
    let km = KMeansParams::new(p.informed_clusters, derive_seed(seed, 1)).with_restarts(p.kmeans_restarts);
    let assignment = kmeans(ds.data.as_matrix(), &km)?;
    let opt = ConstrainedPcaParams::default();
    let informed = constrained_pca(&cov, &indicator_matrix(&assignment), &plain, &opt)?;
    let with_oracle = constrained_pca(&cov, oracle, &plain, &opt)?;
    let bases = [&plain.directions, &informed.directions, &with_oracle.directions];
    let mut out = TrialErrors {
        frobenius: [0.0; 3],
        spectral: [0.0; 3],
    };
    for (i, u) in bases.into_iter().enumerate() {
        out.frobenius[i] = pd_error(u, truth, ErrorNorm::Frobenius)?;
        out.spectral[i] = pd_error(u, truth, ErrorNorm::Spectral)?;
    }
    Ok(out)
}

pub fn pd_error_experiment(p: &PdErrorParams, seed: u64) -> CliResult<PdErrorResults> {
    let b = &p.model;
    let model = BlockModel::new(b.rows, b.clusters, b.sigma2, b.rho, derive_seed(seed, 0))?;
    let (truth, eigenvalues) = model.top_directions(p.rank)?;
    let oracle = IndicatorMatrix::from_labels(&model.row_clusters, model.clusters())?;
    let mut points = Vec::with_capacity(p.columns.len());
    for (ni, &n) in p.columns.iter().enumerate() {
        let base = derive_seed(seed, 1 + ni as u64);
        let trials: Vec<TrialErrors> = (0..p.trials)
            .into_par_iter()
            .map(|t| trial(&model, &truth, &oracle, p, n, derive_seed(base, t as u64)))
            .collect::<CliResult<_>>()?;
        let col = |f: fn(&TrialErrors) -> f64| MeanStd::of(&trials.iter().map(f).collect::<Vec<_>>());
        points.push(PdErrorPoint {
            columns: n,
            plain_f: col(|t| t.frobenius[0]),
            kmeans_f: col(|t| t.frobenius[1]),
            oracle_f: col(|t| t.frobenius[2]),
            plain_2: col(|t| t.spectral[0]),
            kmeans_2: col(|t| t.spectral[1]),
            oracle_2: col(|t| t.spectral[2]),
            trials,
        });
    }
    let all: Vec<&TrialErrors> = points.iter().flat_map(|pt| pt.trials.iter()).collect();
    let overall = |i: usize| all.iter().map(|t| t.frobenius[i]).sum::<f64>() / all.len() as f64;
    Ok(PdErrorResults {
        mu_a: model.mu_a.clone(),
        mu_b: model.mu_b.clone(),
        eigenvalues,
        oracle_f_overall: overall(2),
        kmeans_f_overall: overall(1),
        points,
    })
}

pub fn run_pd_error(config: &ExperimentConfig) -> CliResult<ExperimentReport> {
    let Experiment::PdError(p) = &config.experiment else {
        return Err(experiment_mismatch("pd-error"));
    };
    let results = pd_error_experiment(p, config.seed)?;
    let mut curve = Curve::new(
        "error_vs_n",
        &[
            "n",
            "plain_f",
            "informed_f",
            "oracle_f",
            "plain_2",
            "informed_2",
            "oracle_2",
            "plain_f_std",
            "informed_f_std",
            "oracle_f_std",
        ],
    );
    for pt in &results.points {
        curve.push(vec![
            pt.columns as f64,
            pt.plain_f.mean,
            pt.kmeans_f.mean,
            pt.oracle_f.mean,
            pt.plain_2.mean,
            pt.kmeans_2.mean,
            pt.oracle_2.mean,
            pt.plain_f.std,
            pt.kmeans_f.std,
            pt.oracle_f.std,
        ]);
    }
    Ok(ExperimentReport::new(
        config,
        to_value(&results),
        vec![curve],
        Vec::new(),
    ))
}
