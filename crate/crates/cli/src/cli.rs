use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{Experiment, ExperimentConfig, Grid};
use crate::error::{CliError, CliResult};
use crate::experiments::{load_gene_data, run};
use crate::io::{write_matrix, write_survival};
use crate::OUT_DIR_ENV;

#[derive(Debug, Parser)]
#[command(
    name = "infometric",
    version,
    about = "Clustering-informed Mahalanobis metric experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $INFOMETRIC_OUT_DIR, else results/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Hidden-distance recovery on the linear model.
    Recover {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        columns: Option<usize>,
        #[arg(long)]
        fit_columns: Option<usize>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        kernel_multiplier: Option<f64>,
    },
    /// Principal-direction error of plain and informed PCA on the block model.
    PdError {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',')]
        columns: Option<Vec<usize>>,
        #[arg(long)]
        kmeans_restarts: Option<usize>,
    },
    /// Diffusion-maps bipartition of block-model columns.
    BlockEmbed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        columns: Option<usize>,
        #[arg(long)]
        kernel_multiplier: Option<f64>,
    },
    /// Local metrics, bipartition and survival scoring of an expression table.
    GenePipeline {
        #[command(flatten)]
        common: Common,
        /// Genes x subjects CSV (default: synthetic surrogate).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Survival CSV with columns id,time,event.
        #[arg(long)]
        survival: Option<PathBuf>,
        #[arg(long)]
        top_genes: Option<usize>,
        #[arg(long)]
        neighbors: Option<usize>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        initializations: Option<usize>,
        /// Skip the P-value vs. neighborhood-size curve.
        #[arg(long)]
        no_sweep: bool,
        /// Sweep grid as start:end:step.
        #[arg(long, conflicts_with = "no_sweep")]
        sweep: Option<String>,
    },
    /// Gap statistic as a function of the neighborhood size.
    GapScan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        top_genes: Option<usize>,
        #[arg(long)]
        clusters: Option<usize>,
        /// Neighborhood grid as start:end:step.
        #[arg(long)]
        neighborhoods: Option<String>,
        #[arg(long)]
        references: Option<usize>,
    },
    /// Write the synthetic expression and survival CSVs.
    Synth {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default config of an experiment.
    Config { experiment: String },
}

fn parse_grid(text: &str) -> CliResult<Grid> {
    let parts: Vec<&str> = text.split(':').collect();
    let nums: Option<Vec<usize>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match nums.as_deref() {
        Some([start, end, step]) => Ok(Grid {
            start: *start,
            end: *end,
            step: *step,
        }),
        Some([single]) => Ok(Grid {
            start: *single,
            end: *single,
            step: 1,
        }),
        _ => Err(CliError::Usage(format!("expected start:end:step, got '{text}'"))),
    }
}

fn base_config(common: &Common, id: &str) -> CliResult<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => {
            let c = ExperimentConfig::load(path)?;
            if c.experiment.id() != id {
                return Err(CliError::Usage(format!(
                    "{} describes a {} experiment, not {id}",
                    path.display(),
                    c.experiment.id()
                )));
            }
            c
        }
        None => ExperimentConfig::new(1, Experiment::default_for(id)?),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = Some(out.clone());
    }
    Ok(config)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn build_config(command: Command) -> CliResult<ExperimentConfig> {
    let config = match command {
        Command::Recover {
            common,
            columns,
            fit_columns,
            rank,
            clusters,
            kernel_multiplier,
        } => {
            let mut c = base_config(&common, "recover")?;
            if let Experiment::Recover(p) = &mut c.experiment {
                set(&mut p.columns, columns);
                set(&mut p.fit_columns, fit_columns);
                set(&mut p.rank, rank);
                set(&mut p.clusters, clusters);
                set(&mut p.kernel_multiplier, kernel_multiplier);
            }
            c
        }
        Command::PdError {
            common,
            trials,
            columns,
            kmeans_restarts,
        } => {
            let mut c = base_config(&common, "pd-error")?;
            if let Experiment::PdError(p) = &mut c.experiment {
                set(&mut p.trials, trials);
                set(&mut p.columns, columns);
                set(&mut p.kmeans_restarts, kmeans_restarts);
            }
            c
        }
        Command::BlockEmbed {
            common,
            repeats,
            columns,
            kernel_multiplier,
        } => {
            let mut c = base_config(&common, "block-embed")?;
            if let Experiment::BlockEmbed(p) = &mut c.experiment {
                set(&mut p.repeats, repeats);
                set(&mut p.columns, columns);
                set(&mut p.kernel_multiplier, kernel_multiplier);
            }
            c
        }
        Command::GenePipeline {
            common,
            data,
            survival,
            top_genes,
            neighbors,
            rank,
            clusters,
            initializations,
            no_sweep,
            sweep,
        } => {
            let mut c = base_config(&common, "gene-pipeline")?;
            if let Experiment::GenePipeline(p) = &mut c.experiment {
                if data.is_some() {
                    p.data = data;
                    p.survival = None;
                }
                if survival.is_some() {
                    p.survival = survival;
                }
                set(&mut p.top_genes, top_genes);
                set(&mut p.neighbors, neighbors);
                set(&mut p.rank, rank);
                set(&mut p.clusters, clusters);
                set(&mut p.initializations, initializations);
                if no_sweep {
                    p.sweep = None;
                }
                if let Some(text) = sweep {
                    p.sweep = Some(parse_grid(&text)?);
                }
            }
            c
        }
        Command::GapScan {
            common,
            data,
            top_genes,
            clusters,
            neighborhoods,
            references,
        } => {
            let mut c = base_config(&common, "gap-scan")?;
            if let Experiment::GapScan(p) = &mut c.experiment {
                if data.is_some() {
                    p.data = data;
                }
                set(&mut p.top_genes, top_genes);
                set(&mut p.clusters, clusters);
                set(&mut p.references, references);
                if let Some(text) = neighborhoods {
                    p.neighborhoods = parse_grid(&text)?;
                }
            }
            c
        }
        Command::Synth { .. } | Command::Config { .. } => unreachable!("handled before config assembly"),
    };
    config.validate()?;
    Ok(config)
}

/// Output directory: the config's, else `$INFOMETRIC_OUT_DIR`, else `results/<experiment>`.
pub fn output_dir(config: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = &config.output_dir {
        return dir.clone();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => Path::new("results").join(config.experiment.id()),
    }
}

fn write_synthetic(seed: u64, out: &Path) -> CliResult<()> {
    let params = crate::config::GeneParams {
        top_genes: usize::MAX,
        ..Default::default()
    };
    let data = load_gene_data(&params, seed)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let expression = out.join("expression.csv");
    write_matrix(&expression, &data.expression, "gene")?;
    let survival = out.join("survival.csv");
    write_survival(
        &survival,
        &data.expression.col_ids,
        data.survival.as_deref().unwrap_or_default(),
    )?;
    println!("{}", expression.display());
    println!("{}", survival.display());
    Ok(())
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Synth { seed, out } => write_synthetic(seed, &out),
        Command::Config { experiment } => {
            let config = ExperimentConfig::new(1, Experiment::default_for(&experiment)?);
            println!("{}", config.to_json());
            Ok(())
        }
        other => {
            let config = build_config(other)?;
            let report = run(&config)?;
            for path in report.write(&output_dir(&config))? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
