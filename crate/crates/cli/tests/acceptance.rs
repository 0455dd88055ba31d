//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use infometric::config::{
    BlockEmbedParams, Experiment, GapScanParams, GeneParams, PdErrorParams, RecoverParams, SurrogateParams,
};
use infometric::experiments::{block_embed, gene_pipeline, load_gene_data, pd_error_experiment, recover};
use infometric::{run, ExperimentConfig};
use infometric_core::cluster::IndicatorMatrix;
use infometric_core::linalg::{pinv_psd, DataMatrix, PinvTarget, SampleCovariance};
use infometric_core::metric::{global_distance, GlobalMetricModel};
use infometric_core::pca::{
    constrained_pca, pca_gradient, pca_top_k, reconstruction_error, ConstrainedPcaParams, StepRule,
};
use infometric_core::rng::{seeded, Rng};
use infometric_core::survival::{kaplan_meier, logrank_test, SurvivalRecord};
use infometric_core::synth::gen_linear_model;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Exp, StandardNormal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Box<dyn FnOnce() -> Outcome>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn random_psd(m: usize, rank: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded(seed);
    let g = gaussian(m, rank, &mut rng);
    let scales: Vec<f64> = (0..rank).map(|_| 0.1 + 10.0 * rng.random::<f64>()).collect();
    let g = DMatrix::from_fn(m, rank, |i, j| g[(i, j)] * scales[j]);
    &g * g.transpose()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn shuffled_labels(m: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..m).map(|i| i % k).collect();
    labels.shuffle(&mut seeded(seed));
    labels
}

fn recovery(reports: &mut Vec<(u64, f64, f64, f64, f64)>) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut slowest = Duration::ZERO;
    for seed in 1..=5u64 {
        let start = Instant::now();
        let (r, _) = recover(&RecoverParams::default(), seed).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        let c = &r.distance_correlation;
        worst = worst.min(c.plain.min(c.informed));
        let l = r.laplace_min();
        reports.push((seed, c.plain, c.informed, l.plain, l.informed));
    }
    check(
        worst >= 0.98 && slowest < Duration::from_secs(30),
        format!("min correlation {worst:.4}, slowest seed {:.1}s", slowest.as_secs_f64()),
    )
}

fn oracle_equivalence() -> Outcome {
    let ds = gen_linear_model(500, 1).map_err(|e| e.to_string())?;
    let model = GlobalMetricModel::from_covariance(&ds.model_covariance(), 2).map_err(|e| e.to_string())?;
    let mut rng = seeded(99);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let i = rng.random_range(0..500);
        let j = (i + rng.random_range(1..500)) % 500;
        let got = global_distance(&model, &ds.data.column(i), &ds.data.column(j)).map_err(|e| e.to_string())?;
        let dx = ds.hidden[(0, i)] - ds.hidden[(0, j)];
        let dy = ds.hidden[(1, i)] - ds.hidden[(1, j)];
        worst = worst.max(rel(got, 12.0 * (dx * dx + dy * dy)));
    }
    check(
        worst < 1e-8,
        format!("worst relative error {worst:.2e} over 1000 pairs"),
    )
}

fn identity_residual(s: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let sd = s * d;
    let ds = d * s;
    [
        (&sd * s - s).norm() / s.norm(),
        (&ds * d - d).norm() / d.norm(),
        (sd.transpose() - &sd).norm() / sd.norm(),
        (ds.transpose() - &ds).norm() / ds.norm(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn pseudo_inverse_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let m = 5 + (seed as usize * 7) % 36;
        let rank = 1 + (seed as usize * 5) % m;
        let s = random_psd(m, rank, seed);
        let d = pinv_psd(&s, PinvTarget::Rank(rank))
            .map_err(|e| e.to_string())?
            .to_dense();
        worst = worst.max(identity_residual(&s, &d));
    }
    let full = gen_linear_model(1, 1).map_err(|e| e.to_string())?;
    let mut family = vec![full.model_covariance()];
    for seed in 2..=11u64 {
        let a = gen_linear_model(1, seed).map_err(|e| e.to_string())?.mixing;
        let rows: Vec<usize> = (0..150).map(|i| (i / 50) * 400 + i % 50).collect();
        let a = a.select_rows(&rows);
        family.push(&a * a.transpose() / 12.0);
    }
    for s in &family {
        let d = pinv_psd(s, PinvTarget::Rank(2)).map_err(|e| e.to_string())?.to_dense();
        worst = worst.max(identity_residual(s, &d));
    }
    check(
        worst < 1e-7,
        format!(
            "worst relative residual {worst:.2e} (50 random, {} mixing)",
            family.len()
        ),
    )
}

fn dense_objective(u: &DMatrix<f64>, sigma: &DMatrix<f64>) -> f64 {
    let p = DMatrix::<f64>::identity(sigma.nrows(), sigma.nrows()) - u * u.transpose();
    (&p * sigma * p.transpose()).trace()
}

fn gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let m = 6 + (seed as usize * 11) % 45;
        let k = 1 + seed as usize % 5;
        let sigma = random_psd(m, m.min(8), 1000 + seed);
        let u = gaussian(m, k, &mut seeded(seed)) * 0.3;
        let g = pca_gradient(&u, &sigma).map_err(|e| e.to_string())?;
        let h = 1e-5;
        let fd = DMatrix::from_fn(m, k, |i, c| {
            let mut up = u.clone();
            up[(i, c)] += h;
            let mut dn = u.clone();
            dn[(i, c)] -= h;
            (dense_objective(&up, &sigma) - dense_objective(&dn, &sigma)) / (2.0 * h)
        });
        worst = worst.max((&g - &fd).norm() / fd.norm());
    }
    check(
        worst < 1e-4,
        format!("worst relative error {worst:.2e} on 20 instances"),
    )
}

fn projection_algebra() -> Outcome {
    let mut proj: f64 = 0.0;
    for seed in 0..10u64 {
        let k = 2 + seed as usize % 5;
        let h = IndicatorMatrix::from_labels(&shuffled_labels(20 + 3 * seed as usize, k, seed), k)
            .map_err(|e| e.to_string())?;
        let p = h.projector();
        proj = proj.max((&p * &p - &p).amax()).max((p.transpose() - &p).amax());
    }

    let mut one_shot: f64 = 0.0;
    let mut rises = 0;
    let mut iterations = 0;
    for seed in 0..8u64 {
        let k = 6;
        let labels = shuffled_labels(50, k, 100 + seed);
        let h = IndicatorMatrix::from_labels(&labels, k).map_err(|e| e.to_string())?;
        let mut rng = seeded(200 + seed);
        let factors = gaussian(k, 30, &mut rng);
        let noise = gaussian(50, 30, &mut rng);
        let d = DMatrix::from_fn(50, 30, |i, j| 2.0 * factors[(labels[i], j)] + 0.7 * noise[(i, j)]);
        let cov = SampleCovariance::from_data(&DataMatrix::new(d).map_err(|e| e.to_string())?, true)
            .map_err(|e| e.to_string())?;
        let init = pca_top_k(&cov, 4).map_err(|e| e.to_string())?;

        let zero = ConstrainedPcaParams {
            max_iters: 0,
            ..Default::default()
        };
        let shot = constrained_pca(&cov, &h, &init, &zero).map_err(|e| e.to_string())?;
        let mut sums = DMatrix::<f64>::zeros(k, 4);
        let mut counts = [0usize; 6];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for c in 0..4 {
                sums[(l, c)] += init.directions[(i, c)];
            }
        }
        let mut expected = DMatrix::from_fn(50, 4, |i, c| sums[(labels[i], c)] / counts[labels[i]] as f64);
        for mut col in expected.column_iter_mut() {
            let n = col.norm();
            col /= n;
        }
        one_shot = one_shot.max((&shot.directions - &expected).amax());

        let params = ConstrainedPcaParams {
            step: StepRule::default(),
            ..Default::default()
        };
        let out = constrained_pca(&cov, &h, &init, &params).map_err(|e| e.to_string())?;
        let r0 = reconstruction_error(&h.project(&init.directions).map_err(|e| e.to_string())?, &cov)
            .map_err(|e| e.to_string())?;
        if rel(out.objective_history[0], r0) > 1e-10 {
            rises += 1;
        }
        rises += out.objective_history.windows(2).filter(|w| w[1] > w[0]).count();
        iterations += out.iterations_run;
    }
    check(
        proj < 1e-10 && one_shot < 1e-12 && rises == 0,
        format!(
            "projector residual {proj:.1e}, one-shot deviation {one_shot:.1e}, {rises} increases in {iterations} iterations"
        ),
    )
}

fn direction_error() -> Outcome {
    let start = Instant::now();
    let r = pd_error_experiment(&PdErrorParams::default(), 1).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let below = r
        .points
        .iter()
        .filter(|p| p.kmeans_f.mean < p.plain_f.mean && p.kmeans_2.mean < p.plain_2.mean)
        .count();
    check(
        below == r.points.len() && r.oracle_f_overall <= r.kmeans_f_overall && elapsed < Duration::from_secs(600),
        format!(
            "informed below plain at {below}/{} sizes, oracle {:.2e} vs k-means {:.2e}, {:.0}s",
            r.points.len(),
            r.oracle_f_overall,
            r.kmeans_f_overall,
            elapsed.as_secs_f64()
        ),
    )
}

fn block_separation() -> Outcome {
    let (r, _) = block_embed(&BlockEmbedParams::default(), 1).map_err(|e| e.to_string())?;
    check(
        r.trials.len() == 20 && r.informed.mean >= 0.95 && r.informed.mean > r.plain.mean,
        format!(
            "informed {:.3}, plain {:.3}, euclidean {:.3} over {} seeds",
            r.informed.mean,
            r.plain.mean,
            r.euclidean.mean,
            r.trials.len()
        ),
    )
}

fn laplace(reports: &[(u64, f64, f64, f64, f64)]) -> Outcome {
    if reports.is_empty() {
        return Err("recovery runs unavailable".into());
    }
    let worst = reports.iter().map(|r| r.3.min(r.4)).fold(f64::INFINITY, f64::min);
    check(
        worst >= 0.95,
        format!("min multiple correlation {worst:.4} over seeds 1..5"),
    )
}

fn survival_statistics() -> Outcome {
    let mut rng = seeded(13);
    let exp = Exp::new(1.0 / 50.0).expect("positive rate");
    let mut cohort: Vec<SurvivalRecord> = (0..120)
        .map(|i| {
            let t: f64 = exp.sample(&mut rng);
            let c: f64 = rng.random_range(20.0..150.0);
            SurvivalRecord::new(t.min(c), t <= c, i % 2)
        })
        .collect();
    let mut labels: Vec<usize> = cohort.iter().map(|r| r.group).collect();
    let trials = 2000;
    let mut hits = 0;
    for _ in 0..trials {
        labels.shuffle(&mut rng);
        for (r, &g) in cohort.iter_mut().zip(&labels) {
            r.group = g;
        }
        if logrank_test(&cohort).map_err(|e| e.to_string())?.p_value < 0.05 {
            hits += 1;
        }
    }
    let rate = hits as f64 / trials as f64;
    let km = kaplan_meier(&[1.0, 2.0, 3.0].map(|t| SurvivalRecord::new(t, true, 0)), 0).map_err(|e| e.to_string())?;
    let exact = [1.0, 2.0, 3.0].map(|t| km.at(t)) == [2.0 / 3.0, 1.0 / 3.0, 0.0];
    check(
        (rate - 0.05).abs() <= 0.02 && exact,
        format!("null rejection rate {rate:.4}, Kaplan-Meier example exact: {exact}"),
    )
}

fn gene_pipeline_check() -> Outcome {
    let params = GeneParams {
        sweep: None,
        surrogate: SurrogateParams::default(),
        ..Default::default()
    };
    let mut wins = 0;
    for seed in 1..=20u64 {
        let data = load_gene_data(&params, seed).map_err(|e| e.to_string())?;
        let (r, _, _) = gene_pipeline(&params, &data, seed).map_err(|e| e.to_string())?;
        if r.ilm.p_value < r.lm.p_value {
            wins += 1;
        }
    }
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let full = GeneParams {
        data: Some(dir.join("expression.csv")),
        survival: Some(dir.join("survival.csv")),
        ..Default::default()
    };
    let start = Instant::now();
    let report = run(&ExperimentConfig::new(1, Experiment::GenePipeline(full))).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let sweep = report.curve("pvalue_vs_n").map_or(0, |c| c.rows.len());
    check(
        wins >= 16 && elapsed < Duration::from_secs(120) && sweep > 0,
        format!(
            "ILM beats LM on {wins}/20 surrogate seeds; bundled CSV pipeline {:.0}s with {sweep} sweep points",
            elapsed.as_secs_f64()
        ),
    )
}

fn determinism() -> Outcome {
    let configs = [
        ExperimentConfig::new(1, Experiment::Recover(RecoverParams::default())),
        ExperimentConfig::new(
            1,
            Experiment::PdError(PdErrorParams {
                trials: 10,
                ..Default::default()
            }),
        ),
        ExperimentConfig::new(1, Experiment::BlockEmbed(BlockEmbedParams::default())),
        ExperimentConfig::new(
            1,
            Experiment::GenePipeline(GeneParams {
                sweep: None,
                ..Default::default()
            }),
        ),
        ExperimentConfig::new(1, Experiment::GapScan(GapScanParams::default())),
    ];
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut differing = Vec::new();
    for config in &configs {
        let id = config.experiment.id();
        let mut outputs = Vec::new();
        for pass in 0..2 {
            let dir = root.path().join(format!("{id}-{pass}"));
            let report = run(config).map_err(|e| e.to_string())?;
            let mut files: Vec<(String, Vec<u8>)> = report
                .write(&dir)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|p| {
                    (
                        p.file_name().unwrap().to_string_lossy().into_owned(),
                        fs::read(p).unwrap(),
                    )
                })
                .collect();
            files.sort();
            outputs.push(files);
        }
        if outputs[0] != outputs[1] {
            differing.push(id);
        }
    }
    check(
        differing.is_empty(),
        format!("{} experiments re-run; differing: {differing:?}", configs.len()),
    )
}

fn main() {
    let mut recover_runs = Vec::new();
    let recovery_outcome = recovery(&mut recover_runs);
    let criteria: Vec<Criterion> = vec![
        ("hidden-distance recovery", Box::new(move || recovery_outcome)),
        ("oracle metric equivalence", Box::new(oracle_equivalence)),
        ("pseudo-inverse identities", Box::new(pseudo_inverse_identities)),
        ("gradient vs finite differences", Box::new(gradient_check)),
        ("projection algebra", Box::new(projection_algebra)),
        ("principal-direction error", Box::new(direction_error)),
        ("block-model separation", Box::new(block_separation)),
        ("diffusion-map Laplace check", Box::new(move || laplace(&recover_runs))),
        ("survival statistics", Box::new(survival_statistics)),
        ("gene pipeline", Box::new(gene_pipeline_check)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{:2}] {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:2}] {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
