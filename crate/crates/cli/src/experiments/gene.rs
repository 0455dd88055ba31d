use infometric_core::embedding::{spectral_bipartition, Embedding};
use infometric_core::metric::{ColumnMetric, LocalPatches, RowClustering};
use infometric_core::pca::ConstrainedPcaParams;
use infometric_core::rng::derive_seed;
use infometric_core::survival::{kaplan_meier, logrank_test, SurvivalRecord};
use infometric_core::synth::gen_gene_surrogate;
use infometric_core::DataMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::{embed, experiment_mismatch, majority_accuracy, to_value, MeanStd};
use crate::config::{Experiment, ExperimentConfig, GeneParams};
use crate::error::{CliError, CliResult};
use crate::io::{align_survival, read_matrix, read_survival, top_variance_rows, LabeledMatrix};
use crate::report::{Curve, ExperimentReport};

/// Expression data ready for the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneData {
    /// Genes (already filtered) x subjects.
    pub expression: LabeledMatrix,
    /// Aligned with the subjects; `None` when no survival table was given.
    pub survival: Option<Vec<SurvivalRecord>>,
    /// Planted subject groups, known only for synthetic data.
    pub planted: Option<Vec<usize>>,
    /// Genes before filtering.
    pub total_genes: usize,
}

/// Reads the configured CSV files, or generates the synthetic surrogate, then
/// keeps the `top_genes` highest-variance genes.
pub fn load_gene_data(p: &GeneParams, seed: u64) -> CliResult<GeneData> {
    let (full, survival, planted) = match &p.data {
        Some(path) => {
            let m = read_matrix(path)?;
            let survival = match &p.survival {
                Some(sp) => Some(align_survival(&m.col_ids, &read_survival(sp)?)?),
                None => None,
            };
            (m, survival, None)
        }
        None => {
            let s = gen_gene_surrogate(&(&p.surrogate).into(), seed)?;
            let m = LabeledMatrix {
                row_ids: (0..s.expression.nrows()).map(|i| format!("g{:04}", i + 1)).collect(),
                col_ids: (0..s.expression.ncols()).map(|j| format!("s{:03}", j + 1)).collect(),
                data: s.expression,
            };
            let survival = s
                .survival
                .iter()
                .map(|r| SurvivalRecord::new(r.time, r.event, 0))
                .collect();
            (m, Some(survival), Some(s.groups))
        }
    };
    let total_genes = full.row_ids.len();
    let keep = top_variance_rows(full.data.as_matrix(), p.top_genes);
    let expression = LabeledMatrix {
        row_ids: keep.iter().map(|&i| full.row_ids[i].clone()).collect(),
        col_ids: full.col_ids,
        data: full.data.select_rows(&keep)?,
    };
    Ok(GeneData {
        expression,
        survival,
        planted,
        total_genes,
    })
}

/// Outcome of one metric: bipartition and, with survival data, the log-rank P-value.
#[derive(Debug, Clone, PartialEq)]
struct Split {
    embedding: Embedding,
    labels: Vec<usize>,
    p_value: Option<f64>,
    degenerate: bool,
}

fn split(dm: &nalgebra::DMatrix<f64>, p: &GeneParams, survival: Option<&[SurvivalRecord]>) -> CliResult<Split> {
    let embedding = embed(dm, p.kernel_multiplier, p.embedding_dims)?;
    let part = spectral_bipartition(&embedding)?;
    let p_value = match survival {
        None => None,
        // One group carries no survival contrast.
        Some(_) if part.single_group => Some(1.0),
        Some(records) => {
            let labeled: Vec<SurvivalRecord> = records
                .iter()
                .zip(&part.labels)
                .map(|(r, &g)| SurvivalRecord::new(r.time, r.event, g))
                .collect();
            Some(logrank_test(&labeled)?.p_value)
        }
    };
    Ok(Split {
        embedding,
        labels: part.labels,
        p_value,
        degenerate: part.single_group,
    })
}

/// LM split and one ILM split per k-means initialization, all at neighborhood size `n`.
fn splits_at(
    d: &DataMatrix,
    p: &GeneParams,
    n: usize,
    seed: u64,
    survival: Option<&[SurvivalRecord]>,
) -> CliResult<(Split, Vec<Split>)> {
    let patches = LocalPatches::new(d, n, p.rank)?;
    let pca = ConstrainedPcaParams::default();
    let lm = split(&patches.fit(None, &pca)?.distance_matrix(d)?, p, survival)?;
    let base = derive_seed(seed, 1000 + n as u64);
    let ilm = (0..p.initializations)
        .into_par_iter()
        .map(|init| {
            let mut rc = RowClustering::new(p.clusters, derive_seed(base, init as u64));
            rc.restarts = p.kmeans_restarts;
            let model = patches.fit(Some(&rc), &pca)?;
            split(&model.distance_matrix(d)?, p, survival)
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((lm, ilm))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricScore {
    /// Arithmetic mean of the per-initialization P-values (a single value for LM).
    pub p_value: Option<f64>,
    pub p_value_std: Option<f64>,
    pub p_values: Vec<f64>,
    /// Group sizes of the first initialization.
    pub group_sizes: [usize; 2],
    /// Mean majority-aligned agreement with the planted groups.
    pub accuracy: Option<f64>,
    /// Initializations whose embedding put every subject on one side.
    pub single_group_splits: usize,
}

fn score(splits: &[Split], planted: Option<&[usize]>) -> MetricScore {
    let p_values: Vec<f64> = splits.iter().filter_map(|s| s.p_value).collect();
    let (p_value, p_value_std) = if p_values.is_empty() {
        (None, None)
    } else {
        let ms = MeanStd::of(&p_values);
        (Some(ms.mean), Some(ms.std))
    };
    let ones = splits[0].labels.iter().filter(|&&l| l == 1).count();
    let accuracy = planted
        .map(|truth| splits.iter().map(|s| majority_accuracy(&s.labels, truth)).sum::<f64>() / splits.len() as f64);
    MetricScore {
        p_value,
        p_value_std,
        p_values,
        group_sizes: [splits[0].labels.len() - ones, ones],
        accuracy,
        single_group_splits: splits.iter().filter(|s| s.degenerate).count(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub neighbors: usize,
    pub p_lm: f64,
    pub p_ilm: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneResults {
    pub genes_total: usize,
    pub genes_used: usize,
    pub subjects: usize,
    pub lm: MetricScore,
    pub ilm: MetricScore,
    pub sweep: Vec<SweepPoint>,
}

pub fn gene_pipeline(p: &GeneParams, data: &GeneData, seed: u64) -> CliResult<(GeneResults, Vec<Curve>, Vec<String>)> {
    let d = &data.expression.data;
    let survival = data.survival.as_deref();
    let planted = data.planted.as_deref();
    if p.neighbors > d.ncols() {
        return Err(CliError::Data(format!(
            "neighborhood size {} exceeds the {} subjects",
            p.neighbors,
            d.ncols()
        )));
    }
    let mut notes = Vec::new();
    if p.top_genes > data.total_genes {
        notes.push(format!("only {} genes available; all are used", data.total_genes));
    }

    let (lm, ilm) = splits_at(d, p, p.neighbors, seed, survival)?;
    let lm_score = score(std::slice::from_ref(&lm), planted);
    let ilm_score = score(&ilm, planted);

    let mut curves = Vec::new();
    let mut columns = Vec::new();
    for name in ["lm", "ilm"] {
        for q in 0..p.embedding_dims {
            columns.push(format!("{name}_{}", q + 1));
        }
    }
    columns.extend(["lm_group".to_string(), "ilm_group".to_string()]);
    if planted.is_some() {
        columns.push("planted".to_string());
    }
    let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut emb_curve = Curve::new("embedding", &refs);
    for i in 0..d.ncols() {
        let mut row: Vec<f64> = lm.embedding.coordinates.row(i).iter().copied().collect();
        row.extend(ilm[0].embedding.coordinates.row(i).iter().copied());
        row.push(lm.labels[i] as f64);
        row.push(ilm[0].labels[i] as f64);
        if let Some(t) = planted {
            row.push(t[i] as f64);
        }
        emb_curve.push(row);
    }
    curves.push(emb_curve);

    let mut sweep = Vec::new();
    match survival {
        None => notes.push("no survival data: survival scoring and the P-value sweep were skipped".into()),
        Some(records) => {
            for (name, s) in [("survival_lm", &lm), ("survival_ilm", &ilm[0])] {
                let mut curve = Curve::new(name, &["group", "time", "survival"]);
                for g in 0..2 {
                    let labeled: Vec<SurvivalRecord> = records
                        .iter()
                        .zip(&s.labels)
                        .map(|(r, &l)| SurvivalRecord::new(r.time, r.event, l))
                        .collect();
                    if let Ok(km) = kaplan_meier(&labeled, g) {
                        for (t, v) in km.times.iter().zip(&km.survival) {
                            curve.push(vec![g as f64, *t, *v]);
                        }
                    }
                }
                curves.push(curve);
            }
            if let Some(grid) = &p.sweep {
                for n in grid.values() {
                    if n > d.ncols() {
                        notes.push(format!("sweep stopped at N={n}: only {} subjects", d.ncols()));
                        break;
                    }
                    let point = if n == p.neighbors {
                        SweepPoint {
                            neighbors: n,
                            p_lm: lm_score.p_value.unwrap_or(f64::NAN),
                            p_ilm: MeanStd {
                                mean: ilm_score.p_value.unwrap_or(f64::NAN),
                                std: ilm_score.p_value_std.unwrap_or(f64::NAN),
                            },
                        }
                    } else {
                        let (lm_n, ilm_n) = splits_at(d, p, n, seed, survival)?;
                        let ps: Vec<f64> = ilm_n.iter().filter_map(|s| s.p_value).collect();
                        SweepPoint {
                            neighbors: n,
                            p_lm: lm_n.p_value.unwrap_or(f64::NAN),
                            p_ilm: MeanStd::of(&ps),
                        }
                    };
                    sweep.push(point);
                }
                let mut curve = Curve::new("pvalue_vs_n", &["n", "p_lm", "p_ilm", "p_ilm_std"]);
                for pt in &sweep {
                    curve.push(vec![pt.neighbors as f64, pt.p_lm, pt.p_ilm.mean, pt.p_ilm.std]);
                }
                curves.push(curve);
            }
        }
    }

    let results = GeneResults {
        genes_total: data.total_genes,
        genes_used: d.nrows(),
        subjects: d.ncols(),
        lm: lm_score,
        ilm: ilm_score,
        sweep,
    };
    Ok((results, curves, notes))
}

pub fn run_gene_pipeline(config: &ExperimentConfig) -> CliResult<ExperimentReport> {
    let Experiment::GenePipeline(p) = &config.experiment else {
        return Err(experiment_mismatch("gene-pipeline"));
    };
    let data = load_gene_data(p, config.seed)?;
    let (results, curves, mut notes) = gene_pipeline(p, &data, config.seed)?;
    if p.data.is_none() {
        notes.insert(0, "synthetic surrogate data".into());
    }
    Ok(ExperimentReport::new(config, to_value(&results), curves, notes))
}
