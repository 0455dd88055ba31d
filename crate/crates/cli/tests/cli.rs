use std::fs;
use std::path::Path;
use std::process::Command;

use infometric::config::{BlockParams, Experiment, GapScanParams, GeneParams, Grid, PdErrorParams, RecoverParams};
use infometric::io::{parse_matrix, read_survival};
use infometric::{run, CliError, ExperimentConfig};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_infometric"))
}

fn bundled(name: &str) -> String {
    format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn small_gene() -> GeneParams {
    GeneParams {
        neighbors: 15,
        initializations: 3,
        sweep: None,
        ..Default::default()
    }
}

fn small_recover() -> RecoverParams {
    RecoverParams {
        columns: 150,
        fit_columns: 30,
        ..Default::default()
    }
}

#[test]
fn config_round_trips_through_json() {
    for id in ["recover", "pd-error", "block-embed", "gene-pipeline", "gap-scan"] {
        let mut c = ExperimentConfig::new(7, Experiment::default_for(id).unwrap());
        c.output_dir = Some("somewhere".into());
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c, "{id}");
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.experiment.id(), id);
    }
}

#[test]
fn hash_ignores_output_dir_but_not_seed() {
    let a = ExperimentConfig::new(1, Experiment::Recover(small_recover()));
    let mut b = a.clone();
    b.output_dir = Some("/tmp/x".into());
    assert_eq!(a.hash(), b.hash());
    b.seed = 2;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn unknown_fields_and_experiments_are_rejected() {
    let bad = r#"{"seed":1,"experiment":"recover","colums":10}"#;
    assert!(matches!(ExperimentConfig::from_json(bad), Err(CliError::Usage(_))));
    let bad = r#"{"seed":1,"experiment":"nope"}"#;
    assert!(ExperimentConfig::from_json(bad).is_err());
    assert!(Experiment::default_for("nope").is_err());
}

#[test]
fn partial_config_takes_defaults() {
    let c = ExperimentConfig::from_json(r#"{"seed":3,"experiment":"recover","columns":120}"#).unwrap();
    let Experiment::Recover(p) = &c.experiment else {
        panic!()
    };
    assert_eq!(p.columns, 120);
    assert_eq!(p.fit_columns, RecoverParams::default().fit_columns);
}

#[test]
fn invalid_values_fail_validation() {
    let c = ExperimentConfig::new(
        1,
        Experiment::GenePipeline(GeneParams {
            neighbors: 3,
            rank: 6,
            ..Default::default()
        }),
    );
    assert!(matches!(c.validate(), Err(CliError::Usage(_))));
    let c = ExperimentConfig::new(
        1,
        Experiment::PdError(PdErrorParams {
            model: BlockParams {
                rho: 2.0,
                ..Default::default()
            },
            ..Default::default()
        }),
    );
    assert!(c.validate().is_err());
}

#[test]
fn written_csv_matches_in_memory_curves() {
    let config = ExperimentConfig::new(4, Experiment::Recover(small_recover()));
    let report = run(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    report.write(dir.path()).unwrap();
    assert!(!report.curves.is_empty());
    for curve in &report.curves {
        let mut reader = csv::Reader::from_path(dir.path().join(curve.file_name())).unwrap();
        let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header, curve.columns);
        let rows: Vec<Vec<f64>> = reader
            .records()
            .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows, curve.rows, "{}", curve.name);
    }
    let json: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["provenance"]["config_hash"], Value::String(config.hash()));
    assert_eq!(json["experiment"], "recover");
    assert!(json["config"].get("output_dir").is_none());
}

#[test]
fn rerun_gives_byte_identical_report() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let status = bin()
            .args([
                "gene-pipeline",
                "--neighbors",
                "15",
                "--initializations",
                "3",
                "--no-sweep",
                "--seed",
                "5",
            ])
            .arg("--out")
            .arg(dir)
            .output()
            .unwrap();
        assert!(status.status.success());
    }
    for name in ["report.json", "embedding.csv", "survival_lm.csv"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn exit_codes() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = bin().arg("bogus").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["recover", "--fit-columns", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin()
        .args(["gene-pipeline", "--data", "/nonexistent/expr.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let flat = dir.path().join("flat.csv");
    let ids: Vec<String> = (0..12).map(|i| format!("s{i}")).collect();
    let mut text = format!("gene,{}\n", ids.join(","));
    for g in 0..10 {
        text.push_str(&format!("g{g},{}\n", ["1.0"; 12].join(",")));
    }
    fs::write(&flat, text).unwrap();
    let out = bin()
        .args([
            "gene-pipeline",
            "--neighbors",
            "5",
            "--rank",
            "2",
            "--no-sweep",
            "--data",
        ])
        .arg(&flat)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn mismatched_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(
        &path,
        ExperimentConfig::new(1, Experiment::Recover(small_recover())).to_json(),
    )
    .unwrap();
    let out = bin().args(["block-embed", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(
        &path,
        ExperimentConfig::new(1, Experiment::Recover(small_recover())).to_json(),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["recover", "--seed", "9", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let json: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["provenance"]["seed"], 9);
    assert_eq!(json["config"]["columns"], 150);
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_env");
    let out = bin()
        .args(["recover", "--columns", "120", "--fit-columns", "20"])
        .env(infometric::OUT_DIR_ENV, &target)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("report.json").is_file());
}

#[test]
fn config_subcommand_prints_loadable_defaults() {
    let out = bin().args(["config", "gap-scan"]).output().unwrap();
    assert!(out.status.success());
    let c = ExperimentConfig::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(c.experiment, Experiment::GapScan(GapScanParams::default()));
}

fn write_ids_mismatch(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let expr = dir.join("e.csv");
    let surv = dir.join("s.csv");
    let mut text = String::from("gene,a,b,c,d\n");
    for g in 0..4 {
        text.push_str(&format!("g{g},{},{},{},{}\n", g, g + 1, 2 * g, 3));
    }
    fs::write(&expr, text).unwrap();
    fs::write(&surv, "id,time,event\na,1,1\nb,2,0\nc,3,1\nzz,4,1\n").unwrap();
    (expr, surv)
}

#[test]
fn survival_id_mismatch_lists_ids() {
    let dir = tempfile::tempdir().unwrap();
    let (expr, surv) = write_ids_mismatch(dir.path());
    let out = bin()
        .args([
            "gene-pipeline",
            "--neighbors",
            "3",
            "--rank",
            "1",
            "--no-sweep",
            "--data",
        ])
        .arg(&expr)
        .arg("--survival")
        .arg(&surv)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("d") && err.contains("zz"), "{err}");
}

#[test]
fn missing_survival_skips_scoring() {
    let mut p = small_gene();
    p.data = Some(bundled("expression.csv").into());
    let report = run(&ExperimentConfig::new(1, Experiment::GenePipeline(p))).unwrap();
    assert!(report.notes.iter().any(|n| n.contains("no survival data")));
    assert!(report.results["lm"]["p_value"].is_null());
    assert!(report.curve("embedding").is_some());
    assert!(report.curve("survival_lm").is_none());
}

#[test]
fn bundled_data_is_well_formed() {
    let m = parse_matrix(fs::File::open(bundled("expression.csv")).unwrap(), "expression").unwrap();
    assert_eq!((m.data.nrows(), m.data.ncols()), (200, 82));
    let s = read_survival(Path::new(&bundled("survival.csv"))).unwrap();
    assert_eq!(s.len(), 82);
}

#[test]
fn surrogate_pipeline_scores_both_metrics() {
    let report = run(&ExperimentConfig::new(1, Experiment::GenePipeline(small_gene()))).unwrap();
    assert!(report.notes.iter().any(|n| n == "synthetic surrogate data"));
    for key in ["lm", "ilm"] {
        let p = report.results[key]["p_value"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
    assert_eq!(report.results["ilm"]["p_values"].as_array().unwrap().len(), 3);
}

#[test]
fn single_cluster_recover_is_reported() {
    let p = RecoverParams {
        clusters: 1,
        ..small_recover()
    };
    let report = run(&ExperimentConfig::new(1, Experiment::Recover(p))).unwrap();
    assert!(report.notes.iter().any(|n| n.contains("single row cluster")));
}

#[test]
fn gap_scan_single_size_notes_insufficient_range() {
    let p = GapScanParams {
        neighborhoods: Grid {
            start: 20,
            end: 20,
            step: 1,
        },
        references: 5,
        ..Default::default()
    };
    let report = run(&ExperimentConfig::new(1, Experiment::GapScan(p))).unwrap();
    assert!(report.notes.iter().any(|n| n.starts_with("insufficient range")));
    assert!(report.results["plateau"].is_null());
}

#[test]
fn gap_grows_with_neighborhood_on_surrogate() {
    let p = GapScanParams {
        neighborhoods: Grid {
            start: 10,
            end: 40,
            step: 10,
        },
        references: 5,
        ..Default::default()
    };
    let report = run(&ExperimentConfig::new(1, Experiment::GapScan(p))).unwrap();
    let gaps = report.curve("gap_vs_n").unwrap().column("gap").unwrap();
    assert_eq!(gaps.len(), 4);
    assert!(gaps.windows(2).all(|w| w[1] > w[0]), "{gaps:?}");
}

#[test]
fn small_pd_error_run() {
    let p = PdErrorParams {
        model: BlockParams {
            rows: 120,
            clusters: 6,
            ..Default::default()
        },
        columns: vec![20, 40],
        trials: 5,
        rank: 6,
        informed_clusters: 6,
        kmeans_restarts: 5,
    };
    let report = run(&ExperimentConfig::new(2, Experiment::PdError(p))).unwrap();
    let curve = report.curve("error_vs_n").unwrap();
    assert_eq!(curve.column("n").unwrap(), vec![20.0, 40.0]);
    for (plain, informed) in curve
        .column("plain_f")
        .unwrap()
        .iter()
        .zip(curve.column("informed_f").unwrap())
    {
        assert!(informed < *plain);
    }
}
