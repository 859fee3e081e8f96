//! Acceptance checks. Every test writes one `criterion N: PASS|FAIL|INFO`
//! line to stderr, uncaptured, so `cargo test --test acceptance` shows the
//! verdicts even when everything passes.
//!
//! Tests over the listening dataset read its `user_artists.dat` path from
//! `SLGCN_LASTFM` and are ignored by default; run them with
//! `cargo test --release --test acceptance -- --include-ignored`. The
//! unignored variants run the same checks on a scaled-down listening-shaped
//! surrogate and assert only what holds at any scale.

mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use slgcn::bench::{benchmark_costs, BenchmarkConfig};
use slgcn::eval::auc;
use slgcn::model::HeadKind;
use slgcn::pipeline::{compare_sampling, run_pipeline, RunSummary, METRICS_FILE};
use slgcn::sampler::select_topk;
use slgcn::seed;
use slgcn::similarity::{aggregation_bound_check, da_similarity_norm, DaMetric, Norm};
use slgcn::synth::{listening_surrogate, write_interactions, ListeningShape};
use slgcn::{ExperimentConfig, Strategy};

const PROPERTY_BUDGET: Duration = Duration::from_secs(120);
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const BENCHMARK_BUDGET: Duration = Duration::from_secs(30 * 60);
const ACCURACY_BUDGET: Duration = Duration::from_secs(10 * 60);

const BOUND_CASES: usize = 1000;
const BOUND_TOL: f64 = 1e-12;
const ORACLE_GRAPHS: u64 = 250;
const ORACLE_TOL: f64 = 1e-12;
const AUC_TOL: f64 = 1e-12;
const GRADIENT_TOL: f64 = 1e-4;
const MIN_SPEEDUP: f64 = 10.0;
const MIN_AUC_GAIN: f64 = 0.01;
const MIN_AUC: f64 = 0.85;
const MIN_NDCG10: f64 = 0.65;
const LASTFM_NODES: u64 = 1892 + 17_632;

fn verdict(criterion: u8, pass: Option<bool>, detail: &str) {
    let tag = match pass {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "INFO",
    };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {criterion}: {tag} {detail}");
}

fn config(lines: &[&str], dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    for kv in lines {
        let (k, v) = kv.split_once('=').unwrap();
        cfg.set(k, v).unwrap();
    }
    cfg.run.output_dir = dir.to_owned();
    cfg
}

fn lastfm() -> Option<PathBuf> {
    let path = PathBuf::from(std::env::var_os("SLGCN_LASTFM")?);
    assert!(path.exists(), "SLGCN_LASTFM={} does not exist", path.display());
    Some(path)
}

fn lastfm_config(path: &Path, extra: &[&str], dir: &Path) -> ExperimentConfig {
    let data = format!("data.path={}", path.display());
    let mut lines = vec![
        "synth.kind=none",
        data.as_str(),
        "data.delimiter=tab",
        "data.header=true",
        "data.weight_col=2",
    ];
    lines.extend_from_slice(extra);
    config(&lines, dir)
}

/// A listening-shaped surrogate at a fraction of the full size, written
/// as an interaction file.
fn surrogate(dir: &Path) -> PathBuf {
    let shape = ListeningShape {
        users: 400,
        items: 3000,
        interactions: 18_000,
        max_per_user: 50,
        genres: 10,
        in_genre: 0.8,
        zipf_exponent: 1.0,
    };
    let path = dir.join("surrogate.tsv");
    write_interactions(&listening_surrogate(&shape, 5).unwrap(), &path).unwrap();
    path
}

// Smaller model and batches for the scaled-down surrogate.
const SURROGATE_TRAINING: &[&str] = &["train.max_epochs=8", "train.steady_batch=2048"];

fn surrogate_config(path: &Path, extra: &[&str], dir: &Path) -> ExperimentConfig {
    let mut lines = SURROGATE_TRAINING.to_vec();
    lines.extend_from_slice(extra);
    lastfm_config(path, &lines, dir)
}

fn unit_dense(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let t: f64 = v.iter().sum();
    v.into_iter().map(|x| x / t).collect()
}

fn unit_sparse(rng: &mut impl Rng) -> Vec<(u32, f64)> {
    let dense = unit_dense(rng, 10);
    let kept: Vec<(u32, f64)> = (0..10u32).filter(|_| rng.gen_bool(0.5)).map(|i| (i, dense[i as usize])).collect();
    let kept = if kept.is_empty() { vec![(0, 1.0)] } else { kept };
    let t: f64 = kept.iter().map(|e| e.1).sum();
    kept.into_iter().map(|(i, v)| (i, v / t)).collect()
}

/// Worst bound slack over `BOUND_CASES` random instances, positive when
/// the bound is violated.
fn bound_slack(metric: DaMetric, stream: u64) -> f64 {
    let mut rng = seed::rng(stream, &[]);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..BOUND_CASES {
        let n = rng.gen_range(2..8);
        let p = unit_dense(&mut rng, n);
        let qs: Vec<Vec<f64>> = (0..rng.gen_range(1..6)).map(|_| unit_dense(&mut rng, n)).collect();
        let (lhs, rhs) = aggregation_bound_check(&p, &qs, metric).unwrap();
        worst = worst.max(lhs - rhs);
    }
    worst
}

#[test]
fn criterion_1_property_suite() {
    let start = Instant::now();
    let mut failures = Vec::new();

    for (name, metric, stream) in [
        ("kl", DaMetric::Kl { epsilon: 0.0 }, 1),
        ("l1", DaMetric::L1, 2),
        ("l2", DaMetric::L2, 3),
    ] {
        let slack = bound_slack(metric, stream);
        if slack > BOUND_TOL {
            failures.push(format!("{name} bound slack {slack:e}"));
        }
    }

    let mut rng = seed::rng(4, &[]);
    for _ in 0..BOUND_CASES {
        let (p, q) = (unit_sparse(&mut rng), unit_sparse(&mut rng));
        for norm in [Norm::L1, Norm::L2] {
            let a = da_similarity_norm(&p, &q, norm).unwrap().value;
            let b = da_similarity_norm(&q, &p, norm).unwrap().value;
            let own = da_similarity_norm(&p, &p, norm).unwrap().value;
            if a != b || a > 0.0 || own != 0.0 {
                failures.push(format!("{norm:?} symmetry/sign: {a} {b} {own}"));
            }
        }
    }

    let mut topk_sets = 0;
    for _ in 0..BOUND_CASES {
        let n = rng.gen_range(1..=8);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-3..3) as f64 / 2.0).collect();
        let indexed: Vec<(u32, f64)> = scores.iter().enumerate().map(|(i, &s)| (i as u32, s)).collect();
        for k in 1..=n {
            let top = select_topk(&indexed, k).unwrap();
            let mean = top.iter().map(|t| t.1).sum::<f64>() / k as f64;
            if (mean - common::best_subset_mean(&scores, k)).abs() > 1e-12 {
                failures.push(format!("top-{k} of {scores:?}"));
            }
            topk_sets += 1;
        }
    }

    for _ in 0..BOUND_CASES {
        let n = rng.gen_range(2..40);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let diff = (auc(&scores, &labels).unwrap() - common::pairwise_auc(&scores, &labels)).abs();
        if diff > AUC_TOL {
            failures.push(format!("auc differs by {diff:e}"));
        }
    }

    let mut worst_gradient = 0.0f64;
    for head in HeadKind::ALL {
        for trainable in [false, true] {
            for s in 0..3 {
                worst_gradient = worst_gradient.max(common::gradient_error(head, trainable, s, 1e-7));
            }
        }
    }
    if worst_gradient >= GRADIENT_TOL {
        failures.push(format!("gradient relative error {worst_gradient:e}"));
    }

    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < PROPERTY_BUDGET;
    verdict(
        1,
        Some(pass),
        &format!(
            "{BOUND_CASES} cases per bound, {topk_sets} top-K sets, gradient error {worst_gradient:.2e}, {:.1}s {failures:?}",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass, "{failures:?} in {elapsed:?}");
}

#[test]
fn criterion_2_oracle_equivalence() {
    let start = Instant::now();
    let mut compared = 0;
    let mut failures = Vec::new();
    for i in 0..ORACLE_GRAPHS {
        let g = common::small_graph(&mut common::corpus_rng(i));
        match common::check_scorers(&g, i, ORACLE_TOL) {
            Ok(n) => compared += n,
            Err(e) => failures.push(format!("graph {i}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < ORACLE_BUDGET;
    verdict(
        2,
        Some(pass),
        &format!(
            "{ORACLE_GRAPHS} graphs, {compared} candidate scores equal within {ORACLE_TOL:e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass, "{failures:?} in {elapsed:?}");
}

fn benchmark_verdict(cfg: &ExperimentConfig, label: &str) -> (slgcn::bench::BenchmarkReport, Duration) {
    let start = Instant::now();
    let report = benchmark_costs(cfg, &BenchmarkConfig::default()).unwrap();
    let elapsed = start.elapsed();
    for (name, counted, closed) in report.counter_checks() {
        assert_eq!(counted, closed, "{name}");
    }
    verdict(
        3,
        Some(report.speedup() >= MIN_SPEEDUP && elapsed < BENCHMARK_BUDGET),
        &format!(
            "{label}: aggregations {} vs recursive {}, speedup {:.2}x (needs {MIN_SPEEDUP}x), {:.0}s",
            report.slgcn_aggregations,
            report.recursive_aggregations,
            report.speedup(),
            elapsed.as_secs_f64()
        ),
    );
    (report, elapsed)
}

#[test]
fn criterion_3_preprocessing_once_surrogate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = surrogate_config(&surrogate(dir.path()), &[], dir.path());
    let (r, _) = benchmark_verdict(&cfg, "surrogate");
    assert_eq!(r.slgcn_aggregations, r.users + r.items);
    assert!(r.recursive_aggregations > r.slgcn_aggregations);
    assert!(r.speedup() > 1.0, "speedup {}", r.speedup());
}

#[test]
#[ignore = "needs SLGCN_LASTFM"]
fn criterion_3_preprocessing_once_lastfm() {
    let Some(path) = lastfm() else { return };
    let dir = tempfile::tempdir().unwrap();
    let (r, elapsed) = benchmark_verdict(&lastfm_config(&path, &[], dir.path()), "lastfm");
    assert_eq!(r.slgcn_aggregations, LASTFM_NODES);
    assert!(r.speedup() >= MIN_SPEEDUP, "speedup {:.2}", r.speedup());
    assert!(elapsed < BENCHMARK_BUDGET, "{elapsed:?}");
}

const BASELINES: [Strategy; 3] = [Strategy::Random, Strategy::FirstOrder, Strategy::SecondOrder];

fn sampling_verdict(cfg: &ExperimentConfig, label: &str, require_gain: bool) -> (bool, bool) {
    let mut strategies = BASELINES.to_vec();
    strategies.push(Strategy::Da);
    let rows = compare_sampling(cfg, &strategies).unwrap();
    let mans = |s: Strategy| rows.iter().find(|r| r.strategy == s).unwrap().summary.report.mans_users.unwrap();
    let auc_of = |s: Strategy| rows.iter().find(|r| r.strategy == s).unwrap().summary.report.auc;
    let da = mans(Strategy::Da);
    let ordered = BASELINES.iter().all(|&s| da > mans(s));
    let gain = auc_of(Strategy::Da) - auc_of(Strategy::Random);
    let table: Vec<String> = strategies
        .iter()
        .map(|&s| format!("{s} mans {:.4} auc {:.4}", mans(s), auc_of(s)))
        .collect();
    let pass = ordered && (!require_gain || gain >= MIN_AUC_GAIN);
    let gain_note = if require_gain {
        format!("needs {MIN_AUC_GAIN}")
    } else {
        "checked on the real dataset only".to_owned()
    };
    verdict(
        4,
        Some(pass),
        &format!("{label}: {}; auc gain over random {gain:+.4} ({gain_note})", table.join(", ")),
    );
    (ordered, gain >= MIN_AUC_GAIN)
}

#[test]
fn criterion_4_sampling_quality_surrogate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = surrogate_config(&surrogate(dir.path()), &[], dir.path());
    let (ordered, _) = sampling_verdict(&cfg, "surrogate", false);
    assert!(ordered, "DA sampling does not have the highest MANS");
}

#[test]
#[ignore = "needs SLGCN_LASTFM"]
fn criterion_4_sampling_quality_lastfm() {
    let Some(path) = lastfm() else { return };
    let dir = tempfile::tempdir().unwrap();
    let (ordered, gain) = sampling_verdict(&lastfm_config(&path, &[], dir.path()), "lastfm", true);
    assert!(ordered && gain);
}

const ACCURACY_RUN: &[&str] = &["sampling.strategy=da", "sampling.k=25", "features.dim=128", "model.trainable_inputs=true"];

fn accuracy(cfg: &ExperimentConfig) -> (RunSummary, Duration) {
    let start = Instant::now();
    let s = run_pipeline(cfg).unwrap();
    (s, start.elapsed())
}

#[test]
fn criterion_5_accuracy_surrogate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = surrogate_config(&surrogate(dir.path()), ACCURACY_RUN, dir.path());
    let (s, elapsed) = accuracy(&cfg);
    let r = &s.report;
    verdict(
        5,
        None,
        &format!(
            "surrogate: auc {:.4} ndcg10 {:.4} after {} epochs, {:.0}s (thresholds apply to the real dataset)",
            r.auc,
            r.ndcg_at_10,
            s.epochs_run,
            elapsed.as_secs_f64()
        ),
    );
    assert!(r.auc.is_finite() && r.auc > 0.5, "auc {}", r.auc);
    assert!((0.0..=1.0).contains(&r.ndcg_at_10));
}

#[test]
#[ignore = "needs SLGCN_LASTFM"]
fn criterion_5_accuracy_lastfm() {
    let Some(path) = lastfm() else { return };
    let dir = tempfile::tempdir().unwrap();
    let (s, elapsed) = accuracy(&lastfm_config(&path, ACCURACY_RUN, dir.path()));
    let r = &s.report;
    let pass = r.auc >= MIN_AUC && r.ndcg_at_10 >= MIN_NDCG10 && elapsed < ACCURACY_BUDGET;
    verdict(
        5,
        Some(pass),
        &format!(
            "lastfm: auc {:.4} (needs {MIN_AUC}) ndcg10 {:.4} (needs {MIN_NDCG10}), {:.0}s",
            r.auc,
            r.ndcg_at_10,
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

fn head_ablation(base: &ExperimentConfig, label: &str) -> bool {
    let mut aucs = Vec::new();
    for head in HeadKind::ALL {
        let mut cfg = base.clone();
        cfg.set("model.head", head.as_str()).unwrap();
        cfg.run.output_dir = base.run.output_dir.join(head.as_str());
        let s = run_pipeline(&cfg).unwrap_or_else(|e| panic!("{label} {head}: {e}"));
        aucs.push((head, s.report.auc));
    }
    let of = |h: HeadKind| aucs.iter().find(|a| a.0 == h).unwrap().1;
    let pass = of(HeadKind::Std) >= of(HeadKind::Lin);
    let listed: Vec<String> = aucs.iter().map(|(h, a)| format!("{h} {a:.4}")).collect();
    verdict(6, Some(pass), &format!("{label}: {}; all heads finished", listed.join(", ")));
    pass
}

#[test]
fn criterion_6_head_ablation_planted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &[
            "synth.kind=planted",
            "synth.users=300",
            "synth.items=150",
            "synth.clusters=6",
            "synth.per_user=12",
            "sampling.k=10",
            "features.dim=32",
            "model.repr_dim=64",
            "model.hidden=64,64,64",
            "train.max_epochs=15",
            "train.steady_batch=1024",
        ],
        dir.path(),
    );
    assert!(head_ablation(&cfg, "planted"), "STD below LIN");
}

#[test]
fn criterion_6_head_ablation_surrogate() {
    let dir = tempfile::tempdir().unwrap();
    // STD converges more slowly than LIN, so every head trains until early stopping
    let cfg = surrogate_config(&surrogate(dir.path()), &["train.max_epochs=120"], dir.path());
    assert!(head_ablation(&cfg, "surrogate"), "STD below LIN");
}

#[test]
#[ignore = "needs SLGCN_LASTFM"]
fn criterion_6_head_ablation_lastfm() {
    let Some(path) = lastfm() else { return };
    let dir = tempfile::tempdir().unwrap();
    assert!(head_ablation(&lastfm_config(&path, &[], dir.path()), "lastfm"), "STD below LIN");
}

#[test]
fn criterion_7_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = surrogate(dir.path());
    let metrics: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|run| {
            let out = dir.path().join(run);
            let cfg = surrogate_config(&data, &["train.max_epochs=3"], &out);
            run_pipeline(&cfg).unwrap();
            std::fs::read(out.join(METRICS_FILE)).unwrap()
        })
        .collect();
    let pass = metrics[0] == metrics[1];
    verdict(7, Some(pass), &format!("two runs, metrics files of {} bytes identical: {pass}", metrics[0].len()));
    assert!(pass);
}
