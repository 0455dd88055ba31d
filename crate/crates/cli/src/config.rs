use std::path::{Path, PathBuf};

use infometric_core::synth::GeneSurrogateParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// A complete, self-describing experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Where the report and curves are written. Not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Experiment {
    Recover(RecoverParams),
    PdError(PdErrorParams),
    BlockEmbed(BlockEmbedParams),
    GenePipeline(GeneParams),
    GapScan(GapScanParams),
}

impl Experiment {
    pub fn id(&self) -> &'static str {
        match self {
            Experiment::Recover(_) => "recover",
            Experiment::PdError(_) => "pd-error",
            Experiment::BlockEmbed(_) => "block-embed",
            Experiment::GenePipeline(_) => "gene-pipeline",
            Experiment::GapScan(_) => "gap-scan",
        }
    }

    /// Default parameters for an experiment id.
    pub fn default_for(id: &str) -> CliResult<Self> {
        Ok(match id {
            "recover" => Experiment::Recover(RecoverParams::default()),
            "pd-error" => Experiment::PdError(PdErrorParams::default()),
            "block-embed" => Experiment::BlockEmbed(BlockEmbedParams::default()),
            "gene-pipeline" => Experiment::GenePipeline(GeneParams::default()),
            "gap-scan" => Experiment::GapScan(GapScanParams::default()),
            other => return Err(CliError::Usage(format!("unknown experiment '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoverParams {
    /// Columns generated and embedded.
    pub columns: usize,
    /// Leading columns used to estimate the metric.
    pub fit_columns: usize,
    pub rank: usize,
    /// Row clusters of the informed metric.
    pub clusters: usize,
    pub kernel_multiplier: f64,
    pub embedding_dims: usize,
}

impl Default for RecoverParams {
    fn default() -> Self {
        Self {
            columns: 500,
            fit_columns: 50,
            rank: 2,
            clusters: 3,
            kernel_multiplier: 1.0,
            embedding_dims: 2,
        }
    }
}

/// Block-model parameters shared by the pd-error and block-embed experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockParams {
    pub rows: usize,
    pub clusters: usize,
    pub sigma2: f64,
    pub rho: f64,
}

impl Default for BlockParams {
    fn default() -> Self {
        Self {
            rows: 900,
            clusters: 18,
            sigma2: 1.0,
            rho: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdErrorParams {
    pub model: BlockParams,
    /// Sample sizes `n` to sweep.
    pub columns: Vec<usize>,
    pub trials: usize,
    /// Principal directions estimated.
    pub rank: usize,
    /// Row clusters used by k-means for the informed estimate.
    pub informed_clusters: usize,
    pub kmeans_restarts: usize,
}

impl Default for PdErrorParams {
    fn default() -> Self {
        Self {
            model: BlockParams::default(),
            columns: (30..=100).step_by(10).collect(),
            trials: 50,
            rank: 18,
            informed_clusters: 18,
            kmeans_restarts: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockEmbedParams {
    pub model: BlockParams,
    pub columns: usize,
    pub rank: usize,
    pub informed_clusters: usize,
    pub kernel_multiplier: f64,
    pub embedding_dims: usize,
    /// Independent datasets; the first one's embeddings are emitted.
    pub repeats: usize,
}

impl Default for BlockEmbedParams {
    fn default() -> Self {
        Self {
            model: BlockParams::default(),
            columns: 100,
            rank: 18,
            informed_clusters: 18,
            kernel_multiplier: 1.0,
            embedding_dims: 2,
            repeats: 20,
        }
    }
}

/// Serializable mirror of the core surrogate parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateParams {
    pub genes: usize,
    pub gene_clusters: usize,
    pub subjects: usize,
    pub sigma2: f64,
    pub rho: f64,
    pub mean_spread: f64,
    pub group_offset: f64,
    pub noise_genes: usize,
    pub noise_sd: f64,
    pub median_survival: [f64; 2],
    pub censor_max: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        GeneSurrogateParams::default().into()
    }
}

impl From<GeneSurrogateParams> for SurrogateParams {
    fn from(p: GeneSurrogateParams) -> Self {
        Self {
            genes: p.genes,
            gene_clusters: p.gene_clusters,
            subjects: p.subjects,
            sigma2: p.sigma2,
            rho: p.rho,
            mean_spread: p.mean_spread,
            group_offset: p.group_offset,
            noise_genes: p.noise_genes,
            noise_sd: p.noise_sd,
            median_survival: p.median_survival,
            censor_max: p.censor_max,
        }
    }
}

impl From<&SurrogateParams> for GeneSurrogateParams {
    fn from(p: &SurrogateParams) -> Self {
        Self {
            genes: p.genes,
            gene_clusters: p.gene_clusters,
            subjects: p.subjects,
            sigma2: p.sigma2,
            rho: p.rho,
            mean_spread: p.mean_spread,
            group_offset: p.group_offset,
            noise_genes: p.noise_genes,
            noise_sd: p.noise_sd,
            median_survival: p.median_survival,
            censor_max: p.censor_max,
        }
    }
}

/// Inclusive grid `start, start + step, ..., <= end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: usize,
    pub end: usize,
    pub step: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<usize> {
        (self.start..=self.end).step_by(self.step.max(1)).collect()
    }

    fn validate(&self, name: &str) -> CliResult<()> {
        if self.step == 0 || self.start > self.end {
            return Err(CliError::Usage(format!(
                "{name}: need step > 0 and start <= end, got {}..={} step {}",
                self.start, self.end, self.step
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneParams {
    /// Genes x subjects CSV. Without it the synthetic surrogate is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Survival CSV (`id,time,event`). Optional when `data` is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub survival: Option<PathBuf>,
    pub surrogate: SurrogateParams,
    pub top_genes: usize,
    pub neighbors: usize,
    pub rank: usize,
    pub clusters: usize,
    pub kernel_multiplier: f64,
    pub embedding_dims: usize,
    /// k-means initializations the informed P-value is averaged over.
    pub initializations: usize,
    /// Lloyd restarts inside one initialization.
    pub kmeans_restarts: usize,
    /// Neighborhood sizes for the P-value curve; `null` skips it.
    pub sweep: Option<Grid>,
}

impl Default for GeneParams {
    fn default() -> Self {
        Self {
            data: None,
            survival: None,
            surrogate: SurrogateParams::default(),
            top_genes: 200,
            neighbors: 20,
            rank: 6,
            clusters: 7,
            kernel_multiplier: 2.0,
            embedding_dims: 2,
            initializations: 20,
            kmeans_restarts: 1,
            sweep: Some(Grid {
                start: 7,
                end: 60,
                step: 1,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapScanParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub surrogate: SurrogateParams,
    pub top_genes: usize,
    pub clusters: usize,
    pub neighborhoods: Grid,
    pub references: usize,
    pub kmeans_restarts: usize,
    /// A slope below this fraction of the steepest one counts as flat.
    pub plateau_threshold: f64,
}

impl Default for GapScanParams {
    fn default() -> Self {
        Self {
            data: None,
            surrogate: SurrogateParams::default(),
            top_genes: 200,
            clusters: 7,
            neighborhoods: Grid {
                start: 5,
                end: 60,
                step: 5,
            },
            references: 10,
            kmeans_restarts: 3,
            plateau_threshold: 0.2,
        }
    }
}

fn positive(name: &str, v: usize) -> CliResult<()> {
    if v == 0 {
        return Err(CliError::Usage(format!("{name} must be positive")));
    }
    Ok(())
}

fn positive_real(name: &str, v: f64) -> CliResult<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(CliError::Usage(format!("{name} must be a positive number, got {v}")));
    }
    Ok(())
}

fn check_block(p: &BlockParams) -> CliResult<()> {
    positive("model.rows", p.rows)?;
    positive("model.clusters", p.clusters)?;
    if p.clusters > p.rows {
        return Err(CliError::Usage("model.clusters exceeds model.rows".into()));
    }
    if !(p.rho >= 0.0 && p.rho < p.sigma2) {
        return Err(CliError::Usage(format!(
            "model needs 0 <= rho < sigma2, got rho={} sigma2={}",
            p.rho, p.sigma2
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn new(seed: u64, experiment: Experiment) -> Self {
        Self {
            seed,
            output_dir: None,
            experiment,
        }
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The config as it enters the report: everything except the output directory.
    pub fn canonical(&self) -> Self {
        Self {
            output_dir: None,
            ..self.clone()
        }
    }

    /// SHA-256 of the canonical compact JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.canonical()).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> CliResult<()> {
        match &self.experiment {
            Experiment::Recover(p) => {
                positive("columns", p.columns)?;
                positive("rank", p.rank)?;
                positive("clusters", p.clusters)?;
                positive("embedding_dims", p.embedding_dims)?;
                positive_real("kernel_multiplier", p.kernel_multiplier)?;
                if p.fit_columns < 2 || p.fit_columns > p.columns {
                    return Err(CliError::Usage(format!(
                        "fit_columns must lie in 2..={}, got {}",
                        p.columns, p.fit_columns
                    )));
                }
                if p.embedding_dims >= p.columns {
                    return Err(CliError::Usage("embedding_dims must be below columns".into()));
                }
            }
            Experiment::PdError(p) => {
                check_block(&p.model)?;
                positive("trials", p.trials)?;
                positive("rank", p.rank)?;
                positive("informed_clusters", p.informed_clusters)?;
                positive("kmeans_restarts", p.kmeans_restarts)?;
                if p.columns.is_empty() || p.columns.iter().any(|&n| n < 2) {
                    return Err(CliError::Usage("columns must be a non-empty list of sizes >= 2".into()));
                }
                if p.rank > p.model.clusters {
                    return Err(CliError::Usage("rank cannot exceed model.clusters".into()));
                }
            }
            Experiment::BlockEmbed(p) => {
                check_block(&p.model)?;
                positive("rank", p.rank)?;
                positive("informed_clusters", p.informed_clusters)?;
                positive("repeats", p.repeats)?;
                positive("embedding_dims", p.embedding_dims)?;
                positive_real("kernel_multiplier", p.kernel_multiplier)?;
                if p.columns < 2 || p.embedding_dims >= p.columns {
                    return Err(CliError::Usage("need columns >= 2 and embedding_dims < columns".into()));
                }
            }
            Experiment::GenePipeline(p) => {
                positive("top_genes", p.top_genes)?;
                positive("rank", p.rank)?;
                positive("clusters", p.clusters)?;
                positive("initializations", p.initializations)?;
                positive("kmeans_restarts", p.kmeans_restarts)?;
                positive("embedding_dims", p.embedding_dims)?;
                positive_real("kernel_multiplier", p.kernel_multiplier)?;
                if p.neighbors < p.rank + 1 {
                    return Err(CliError::Usage(format!(
                        "neighbors must be at least rank + 1 = {}, got {}",
                        p.rank + 1,
                        p.neighbors
                    )));
                }
                if let Some(grid) = &p.sweep {
                    grid.validate("sweep")?;
                    if grid.start < p.rank + 1 {
                        return Err(CliError::Usage(format!(
                            "sweep must start at rank + 1 = {} or later",
                            p.rank + 1
                        )));
                    }
                }
                if p.survival.is_some() && p.data.is_none() {
                    return Err(CliError::Usage("a survival file needs a data file".into()));
                }
            }
            Experiment::GapScan(p) => {
                positive("top_genes", p.top_genes)?;
                positive("clusters", p.clusters)?;
                positive("kmeans_restarts", p.kmeans_restarts)?;
                p.neighborhoods.validate("neighborhoods")?;
                if p.neighborhoods.start < 2 {
                    return Err(CliError::Usage("neighborhoods must start at 2 or later".into()));
                }
                if p.references < 5 {
                    return Err(CliError::Usage("references must be at least 5".into()));
                }
                positive_real("plateau_threshold", p.plateau_threshold)?;
            }
        }
        Ok(())
    }
}
