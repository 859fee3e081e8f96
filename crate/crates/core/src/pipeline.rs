//! End-to-end experiment runs and their on-disk artifacts.
//!
//! Every artifact header names the SHA-256 of the artifacts it was built
//! from; readers compare those against the files present and refuse a
//! mismatch with [`Error::Lineage`].

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, FeatureSource, Precision, SynthKind};
use crate::error::{Error, Result};
use crate::eval::{evaluate, write_metrics_csv, KnownInteractions, MetricsReport, ModelScorer};
use crate::features::{seeded_features_for, FeatureMatrix};
use crate::graph::{
    binarize_ratings, load_interactions, split_dataset, translate_graph, write_id_sidecar, DatasetSplit, InteractionGraph,
    NodeType, TranslatedGraph,
};
use crate::model::checkpoint::{checkpoint_meta, load_checkpoint, save_checkpoint};
use crate::model::train::{train, TrainOutcome};
use crate::model::{AggregatedFeatures, Model};
use crate::sampler::{build_subgraph_with, neighborhood_quality, yardstick, SampledSubgraph, Strategy};
use crate::scalar::Scalar;
use crate::similarity::{DaConfig, Profiles, SimilarityCacheWriter};
use crate::synth::{listening_surrogate, planted_clusters, ListeningShape, PlantedConfig};

pub const CONFIG_FILE: &str = "config.txt";
pub const SPLIT_FILE: &str = "split.txt";
pub const SUBGRAPH_FILE: &str = "subgraph.txt";
pub const FEATURES_FILE: &str = "features.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const TIMINGS_FILE: &str = "timings.txt";
pub const SAMPLING_TABLE_FILE: &str = "sampling.csv";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Checks that `header` records `key=expected`.
pub fn check_lineage(path: &Path, header: &[String], key: &str, expected: &str) -> Result<()> {
    let prefix = format!("{key}=");
    match header.iter().find_map(|h| h.strip_prefix(&prefix)) {
        Some(found) if found == expected => Ok(()),
        Some(found) => Err(Error::Lineage {
            path: path.to_owned(),
            msg: format!("built from {key} {found}, but the current {key} hashes to {expected}"),
        }),
        None => Err(Error::Lineage {
            path: path.to_owned(),
            msg: format!("header does not record `{key}`"),
        }),
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Wall-clock seconds per phase, in execution order.
#[derive(Debug, Clone, Default)]
pub struct Timings(pub Vec<(String, f64)>);

impl Timings {
    pub fn time<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = stage(name, f());
        self.0.push((name.to_owned(), start.elapsed().as_secs_f64()));
        out
    }
}

/// A loaded interaction graph and the hash identifying its source.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: InteractionGraph,
    pub hash: String,
}

/// Loads the configured data file or generates the configured synthetic
/// graph. Ratings, when present, are thresholded for positive preference.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let seed = cfg.run.seed;
    let s = &cfg.synth;
    let (graph, hash) = match s.kind {
        SynthKind::None => {
            let path = cfg.data.path.as_deref().ok_or_else(|| Error::Config("data.path is not set".into()))?;
            (load_interactions(path, &cfg.schema())?, hash_file(path)?)
        }
        SynthKind::Planted => {
            let g = planted_clusters(&PlantedConfig {
                users: s.users,
                items: s.items,
                clusters: s.clusters,
                per_user: s.per_user,
                noise: s.noise,
                seed,
            })?;
            let id = format!("planted {} {} {} {} {} {seed}", s.users, s.items, s.clusters, s.per_user, s.noise);
            (g, sha256_hex(id.as_bytes()))
        }
        SynthKind::Lastfm => {
            let g = listening_surrogate(&ListeningShape::lastfm(), seed)?;
            (g, sha256_hex(format!("lastfm-surrogate {seed}").as_bytes()))
        }
    };
    let graph = if cfg.data.rating_col.is_some() {
        graph.with_threshold(cfg.data.threshold)
    } else {
        graph
    };
    Ok(Dataset { graph, hash })
}

fn threshold(cfg: &ExperimentConfig) -> Option<f64> {
    cfg.data.rating_col.and(cfg.data.threshold)
}

/// Labels and splits the dataset, writing the split manifest, id sidecars
/// and a copy of the configuration. Returns the split and its hash.
pub fn ingest(cfg: &ExperimentConfig, data: &Dataset, dir: &Path) -> Result<(DatasetSplit, String)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config_path = dir.join(CONFIG_FILE);
    std::fs::write(&config_path, cfg.to_text()).map_err(|e| Error::io(&config_path, e))?;
    write_id_sidecar(&data.graph, NodeType::USER, &dir.join("users.ids"))?;
    write_id_sidecar(&data.graph, NodeType::ITEM, &dir.join("items.ids"))?;
    let labeled = binarize_ratings(&data.graph, threshold(cfg))?;
    let split = split_dataset(&labeled, cfg.data.split, cfg.run.seed)?;
    let path = dir.join(SPLIT_FILE);
    split.write_manifest(&path, &format!("data={}", data.hash))?;
    Ok((split, hash_file(&path)?))
}

/// Reads the split manifest of `dir`, checking it was built from `data`.
pub fn read_split(dir: &Path, data: &Dataset) -> Result<(DatasetSplit, String)> {
    let path = dir.join(SPLIT_FILE);
    let (split, header) = DatasetSplit::read_manifest(&path)?;
    check_lineage(&path, &header, "data", &data.hash)?;
    Ok((split, hash_file(&path)?))
}

/// The graph restricted to training interactions: user-item edges survive
/// only for pairs in the train split; other relations are kept.
pub fn train_graph(graph: &InteractionGraph, split: &DatasetSplit) -> InteractionGraph {
    let train: HashSet<(u32, u32)> = split.train.iter().map(|r| (r.user, r.item)).collect();
    graph.filter_edges(|e| {
        e.source.node_type != NodeType::USER || e.target.node_type != NodeType::ITEM || train.contains(&(e.source.index, e.target.index))
    })
}

/// Samples the subgraph over the train graph and writes it. With
/// `similarity.cache` the candidate scores are written too, one file per
/// node type.
pub fn sample(cfg: &ExperimentConfig, train: &InteractionGraph, tg: &TranslatedGraph, split_hash: &str, dir: &Path) -> Result<(SampledSubgraph, String)> {
    let header = format!("split={split_hash}");
    let sub = sample_scored(cfg, train, tg, &header, dir, cfg.similarity.cache)?;
    let path = dir.join(SUBGRAPH_FILE);
    sub.write(&path, &header)?;
    Ok((sub, hash_file(&path)?))
}

fn sample_scored(cfg: &ExperimentConfig, train: &InteractionGraph, tg: &TranslatedGraph, header: &str, dir: &Path, cache: bool) -> Result<SampledSubgraph> {
    let opts = cfg.sampling_options();
    match (cache, crate::sampler::metric_tag(&opts)) {
        (true, Some(metric)) => {
            let mut writers = Vec::with_capacity(2);
            for t in [NodeType::USER, NodeType::ITEM] {
                let path = dir.join(format!("similarity.{}.txt", type_file(t)));
                writers.push(SimilarityCacheWriter::create(&path, header, metric)?);
            }
            let sub = build_subgraph_with(train, tg, &opts, |node, scores| {
                let w = &mut writers[node.node_type.0 as usize];
                for &(v, s) in scores {
                    w.write_row(node.index, v, s)?;
                }
                Ok(())
            })?;
            for w in writers {
                w.finish()?;
            }
            Ok(sub)
        }
        (true, None) => Err(Error::Config(format!("strategy {} scores no candidates", cfg.sampling.strategy))),
        _ => build_subgraph_with(train, tg, &opts, |_, _| Ok(())),
    }
}

fn type_file(t: NodeType) -> &'static str {
    if t == NodeType::USER {
        "users"
    } else {
        "items"
    }
}

pub fn read_subgraph(dir: &Path, split_hash: &str) -> Result<(SampledSubgraph, String)> {
    let path = dir.join(SUBGRAPH_FILE);
    let (sub, header) = SampledSubgraph::read(&path)?;
    check_lineage(&path, &header, "split", split_hash)?;
    Ok((sub, hash_file(&path)?))
}

fn node_counts(graph: &InteractionGraph) -> Vec<usize> {
    graph.node_types().map(|t| graph.node_count(t)).collect()
}

/// Seeded features are generated and written to `dir`; file features are
/// loaded from their configured path. Returns the matrix and the hash of the
/// file it lives in.
pub fn make_features<T: Scalar>(cfg: &ExperimentConfig, graph: &InteractionGraph, dir: &Path) -> Result<(FeatureMatrix<T>, String)> {
    match cfg.features.source {
        FeatureSource::Seeded => {
            let f = seeded_features_for(&node_counts(graph), cfg.features.dim, cfg.run.seed)?;
            let path = dir.join(FEATURES_FILE);
            f.save(&path)?;
            Ok((f, hash_file(&path)?))
        }
        FeatureSource::File => read_features(cfg, graph, dir),
    }
}

pub fn features_path(cfg: &ExperimentConfig, dir: &Path) -> PathBuf {
    match (cfg.features.source, &cfg.features.path) {
        (FeatureSource::File, Some(p)) => p.clone(),
        _ => dir.join(FEATURES_FILE),
    }
}

pub fn read_features<T: Scalar>(cfg: &ExperimentConfig, graph: &InteractionGraph, dir: &Path) -> Result<(FeatureMatrix<T>, String)> {
    let path = features_path(cfg, dir);
    let f = FeatureMatrix::load(&path, &node_counts(graph))?;
    Ok((f, hash_file(&path)?))
}

/// Hashes of the artifacts a model is trained from.
#[derive(Debug, Clone, PartialEq)]
pub struct Lineage {
    pub split: String,
    pub subgraph: String,
    pub features: String,
}

impl Lineage {
    fn meta(&self) -> Vec<String> {
        vec![
            format!("split={}", self.split),
            format!("subgraph={}", self.subgraph),
            format!("features={}", self.features),
        ]
    }
}

/// Aggregates once, trains and writes the checkpoint and training log.
pub fn fit<T: Scalar>(
    cfg: &ExperimentConfig,
    split: &DatasetSplit,
    sub: &SampledSubgraph,
    features: &FeatureMatrix<T>,
    lineage: &Lineage,
    dir: &Path,
    timings: &mut Timings,
) -> Result<(TrainOutcome<T>, AggregatedFeatures<T>)> {
    let inputs = timings.time("aggregate", || AggregatedFeatures::build(features, &[(cfg.sampling.lambda, sub)]))?;
    let outcome = timings.time("train", || {
        let o = train(split, &inputs, cfg.model_config(inputs.input_dim()), &cfg.train_config())?;
        save_checkpoint(&dir.join(CHECKPOINT_FILE), &o.model, Some(&o.optimizer), &lineage.meta())?;
        o.log.write_csv(&dir.join(TRAIN_LOG_FILE))?;
        Ok(o)
    })?;
    Ok((outcome, inputs))
}

/// Loads the checkpoint of `dir`, checking it was trained from `lineage`.
pub fn read_model<T: Scalar>(dir: &Path, lineage: &Lineage) -> Result<Model<T>> {
    let path = dir.join(CHECKPOINT_FILE);
    let meta = checkpoint_meta(&path)?;
    check_lineage(&path, &meta, "split", &lineage.split)?;
    check_lineage(&path, &meta, "subgraph", &lineage.subgraph)?;
    check_lineage(&path, &meta, "features", &lineage.features)?;
    Ok(load_checkpoint(&path)?.model)
}

/// DA configuration MANS is reported under: the sampling metric for DA
/// sampling, DA-L1 otherwise.
pub fn quality_metric(cfg: &ExperimentConfig) -> DaConfig {
    if cfg.sampling.strategy == Strategy::Da {
        cfg.da_config()
    } else {
        yardstick()
    }
}

/// Test metrics, MANS and run facts.
pub fn assess<T: Scalar>(
    cfg: &ExperimentConfig,
    model: &Model<T>,
    inputs: &AggregatedFeatures<T>,
    split: &DatasetSplit,
    sub: &SampledSubgraph,
    profiles: &Profiles,
    quality: &DaConfig,
) -> Result<MetricsReport> {
    let counts = (inputs.users().rows(), inputs.items().rows());
    let known = KnownInteractions::from_split(split, counts.0, counts.1);
    let scorer = ModelScorer { model, inputs };
    let e = evaluate(&scorer, &split.test, &known, &cfg.eval, cfg.run.seed)?;
    let q = neighborhood_quality(sub, profiles, quality)?;
    let mut report = MetricsReport {
        auc: e.auc,
        ndcg_at_10: e.ndcg,
        mans_users: q.users,
        mans_items: q.items,
        mans_all: Some(q.all),
        ..MetricsReport::default()
    };
    let extra = [
        ("strategy", cfg.sampling.strategy.to_string()),
        ("mode", cfg.sampling.mode.to_string()),
        ("k", cfg.sampling.k.to_string()),
        ("mans_metric", q.metric.to_string()),
        ("head", cfg.model.head.to_string()),
        ("trainable_inputs", cfg.model.trainable_inputs.to_string()),
        ("eval_users", e.users.to_string()),
        ("eval_tasks", e.tasks.to_string()),
    ];
    report.extra.extend(extra.into_iter().map(|(k, v)| (k.to_owned(), v)));
    Ok(report)
}

/// Outcome of one run: the metrics as written plus training facts.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report: MetricsReport,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub aggregations: usize,
    pub output_dir: PathBuf,
}

pub(crate) struct Shared<T> {
    pub(crate) data: Dataset,
    pub(crate) split: DatasetSplit,
    pub(crate) split_hash: String,
    pub(crate) train: InteractionGraph,
    pub(crate) translated: TranslatedGraph,
    pub(crate) profiles: Profiles,
    pub(crate) features: FeatureMatrix<T>,
    pub(crate) features_hash: String,
}

pub(crate) fn prepare<T: Scalar>(cfg: &ExperimentConfig, dir: &Path, timings: &mut Timings) -> Result<Shared<T>> {
    let data = timings.time("load", || load_dataset(cfg))?;
    info!(
        "loaded {} users, {} items, {} edges",
        data.graph.user_count(),
        data.graph.item_count(),
        data.graph.edges().len()
    );
    let (split, split_hash) = timings.time("split", || ingest(cfg, &data, dir))?;
    let (train, translated) = timings.time("translate", || {
        let g = train_graph(&data.graph, &split);
        let tg = translate_graph(&g, true);
        Ok((g, tg))
    })?;
    let profiles = Profiles::build(&train);
    let (features, features_hash) = timings.time("features", || make_features(cfg, &data.graph, dir))?;
    Ok(Shared {
        data,
        split,
        split_hash,
        train,
        translated,
        profiles,
        features,
        features_hash,
    })
}

fn run_with<T: Scalar>(cfg: &ExperimentConfig, shared: &Shared<T>, quality: &DaConfig, dir: &Path, timings: &mut Timings) -> Result<RunSummary> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (sub, sub_hash) = timings.time("sample", || sample(cfg, &shared.train, &shared.translated, &shared.split_hash, dir))?;
    let lineage = Lineage {
        split: shared.split_hash.clone(),
        subgraph: sub_hash,
        features: shared.features_hash.clone(),
    };
    let (outcome, inputs) = fit(cfg, &shared.split, &sub, &shared.features, &lineage, dir, timings)?;
    let mut report = timings.time("evaluate", || assess(cfg, &outcome.model, &inputs, &shared.split, &sub, &shared.profiles, quality))?;
    let facts = [
        ("epochs_run", outcome.epochs_run.to_string()),
        ("best_epoch", outcome.best_epoch.map_or("none".into(), |e| e.to_string())),
        ("aggregations", outcome.aggregations.to_string()),
        ("users", shared.data.graph.user_count().to_string()),
        ("items", shared.data.graph.item_count().to_string()),
    ];
    report.extra.extend(facts.into_iter().map(|(k, v)| (k.to_owned(), v)));
    report.timings = timings.0.clone();
    report.write(&dir.join(METRICS_FILE))?;
    report.write_timings(&dir.join(TIMINGS_FILE))?;
    Ok(RunSummary {
        report,
        epochs_run: outcome.epochs_run,
        best_epoch: outcome.best_epoch,
        aggregations: outcome.aggregations,
        output_dir: dir.to_owned(),
    })
}

fn run_typed<T: Scalar>(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let dir = cfg.run.output_dir.clone();
    let mut timings = Timings::default();
    let shared = prepare::<T>(cfg, &dir, &mut timings)?;
    run_with(cfg, &shared, &quality_metric(cfg), &dir, &mut timings)
}

/// Validates the configuration, then runs load, split, translate,
/// features, sample, aggregate, train and evaluate, writing every artifact
/// to `run.output_dir`.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    match cfg.model.precision {
        Precision::F32 => run_typed::<f32>(cfg),
        Precision::F64 => run_typed::<f64>(cfg),
    }
}

/// One row of the sampling comparison.
#[derive(Debug, Clone)]
pub struct SamplingRow {
    pub strategy: Strategy,
    pub summary: RunSummary,
}

fn compare_typed<T: Scalar>(cfg: &ExperimentConfig, strategies: &[Strategy]) -> Result<Vec<SamplingRow>> {
    let root = cfg.run.output_dir.clone();
    let mut timings = Timings::default();
    let shared = prepare::<T>(cfg, &root, &mut timings)?;
    let quality = cfg.da_config();
    let mut rows = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let mut c = cfg.clone();
        c.sampling.strategy = strategy;
        let dir = root.join(strategy.as_str());
        let mut t = timings.clone();
        let summary = run_with(&c, &shared, &quality, &dir, &mut t).map_err(|e| e.in_stage(format!("strategy {strategy}")))?;
        info!(
            "{strategy}: mans_users {:?} auc {:.4} ndcg10 {:.4}",
            summary.report.mans_users, summary.report.auc, summary.report.ndcg_at_10
        );
        rows.push(SamplingRow { strategy, summary });
    }
    write_sampling_table(&root.join(SAMPLING_TABLE_FILE), &rows)?;
    let labeled: Vec<(String, MetricsReport)> = rows
        .iter()
        .map(|r| (r.strategy.to_string(), r.summary.report.clone()))
        .collect();
    write_metrics_csv(&root.join("metrics.csv"), &labeled)?;
    Ok(rows)
}

/// Runs the pipeline once per strategy with a shared split, features and
/// seed. Writes `sampling.csv` with MANS, AUC and NDCG@10 per strategy, all
/// MANS values under the configured DA metric.
pub fn compare_sampling(cfg: &ExperimentConfig, strategies: &[Strategy]) -> Result<Vec<SamplingRow>> {
    if strategies.len() < 2 {
        return Err(Error::Config("need at least 2 strategies to compare".into()));
    }
    cfg.validate()?;
    match cfg.model.precision {
        Precision::F32 => compare_typed::<f32>(cfg, strategies),
        Precision::F64 => compare_typed::<f64>(cfg, strategies),
    }
}

pub fn write_sampling_table(path: &Path, rows: &[SamplingRow]) -> Result<()> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    let mut text = String::from("strategy,mans_users,mans_items,auc,ndcg10\n");
    for r in rows {
        let m = &r.summary.report;
        let _ = writeln!(text, "{},{},{},{},{}", r.strategy, opt(m.mans_users), opt(m.mans_items), m.auc, m.ndcg_at_10);
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// State shared by the staged commands: the dataset, its split as read back
/// from the output directory, and the train graph.
struct Staged {
    data: Dataset,
    split: DatasetSplit,
    split_hash: String,
    train: InteractionGraph,
}

fn staged(cfg: &ExperimentConfig) -> Result<Staged> {
    cfg.validate()?;
    let data = stage("load", load_dataset(cfg))?;
    let (split, split_hash) = stage("split", read_split(&cfg.run.output_dir, &data))?;
    let train = train_graph(&data.graph, &split);
    Ok(Staged {
        data,
        split,
        split_hash,
        train,
    })
}

/// Loads, labels and splits the data into `run.output_dir`.
pub fn ingest_stage(cfg: &ExperimentConfig) -> Result<DatasetSplit> {
    cfg.validate()?;
    let data = stage("load", load_dataset(cfg))?;
    let (split, _) = stage("split", ingest(cfg, &data, &cfg.run.output_dir))?;
    Ok(split)
}

/// Writes the candidate similarity files of the configured strategy.
pub fn similarity_stage(cfg: &ExperimentConfig) -> Result<()> {
    let s = staged(cfg)?;
    let tg = translate_graph(&s.train, true);
    let header = format!("split={}", s.split_hash);
    stage("similarity", sample_scored(cfg, &s.train, &tg, &header, &cfg.run.output_dir, true)).map(|_| ())
}

/// Samples the subgraph from the ingested split.
pub fn sample_stage(cfg: &ExperimentConfig) -> Result<SampledSubgraph> {
    let s = staged(cfg)?;
    let tg = translate_graph(&s.train, true);
    stage("sample", sample(cfg, &s.train, &tg, &s.split_hash, &cfg.run.output_dir)).map(|r| r.0)
}

fn train_typed<T: Scalar>(cfg: &ExperimentConfig) -> Result<TrainOutcome<T>> {
    let s = staged(cfg)?;
    let dir = &cfg.run.output_dir;
    let (sub, subgraph) = stage("sample", read_subgraph(dir, &s.split_hash))?;
    let (features, features_hash) = stage("features", make_features::<T>(cfg, &s.data.graph, dir))?;
    let lineage = Lineage {
        split: s.split_hash,
        subgraph,
        features: features_hash,
    };
    let mut timings = Timings::default();
    let (outcome, _) = fit(cfg, &s.split, &sub, &features, &lineage, dir, &mut timings)?;
    Ok(outcome)
}

/// Facts about a finished training stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub best_val_auc: Option<f64>,
    pub aggregations: usize,
}

/// Aggregates and trains on the sampled subgraph, writing the checkpoint.
pub fn train_stage(cfg: &ExperimentConfig) -> Result<TrainSummary> {
    fn summary<T>(o: TrainOutcome<T>) -> TrainSummary {
        TrainSummary {
            epochs_run: o.epochs_run,
            best_epoch: o.best_epoch,
            best_val_auc: o.best_val_auc,
            aggregations: o.aggregations,
        }
    }
    match cfg.model.precision {
        Precision::F32 => train_typed::<f32>(cfg).map(summary),
        Precision::F64 => train_typed::<f64>(cfg).map(summary),
    }
}

fn evaluate_typed<T: Scalar>(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    let s = staged(cfg)?;
    let dir = &cfg.run.output_dir;
    let mut timings = Timings::default();
    let (sub, subgraph) = stage("sample", read_subgraph(dir, &s.split_hash))?;
    let (features, features_hash) = stage("features", read_features::<T>(cfg, &s.data.graph, dir))?;
    let lineage = Lineage {
        split: s.split_hash.clone(),
        subgraph,
        features: features_hash,
    };
    let model = stage("train", read_model::<T>(dir, &lineage))?;
    let inputs = timings.time("aggregate", || AggregatedFeatures::build(&features, &[(cfg.sampling.lambda, &sub)]))?;
    let profiles = Profiles::build(&s.train);
    let mut report = timings.time("evaluate", || assess(cfg, &model, &inputs, &s.split, &sub, &profiles, &quality_metric(cfg)))?;
    let facts = [
        ("aggregations", inputs.aggregations().to_string()),
        ("users", s.data.graph.user_count().to_string()),
        ("items", s.data.graph.item_count().to_string()),
    ];
    report.extra.extend(facts.into_iter().map(|(k, v)| (k.to_owned(), v)));
    report.timings = timings.0;
    report.write(&dir.join(METRICS_FILE))?;
    report.write_timings(&dir.join(TIMINGS_FILE))?;
    Ok(report)
}

/// Scores the trained checkpoint on the test split and writes the metrics.
pub fn evaluate_stage(cfg: &ExperimentConfig) -> Result<MetricsReport> {
    match cfg.model.precision {
        Precision::F32 => evaluate_typed::<f32>(cfg),
        Precision::F64 => evaluate_typed::<f64>(cfg),
    }
}

pub const REPORT_FILE: &str = "report.txt";

/// Published accuracy with pretrained features, printed next to ours.
pub const REFERENCE_AUC: f64 = 0.9528;
pub const REFERENCE_NDCG10: f64 = 0.8112;

/// Collects the metrics, sampling table and benchmark found in `dir` into
/// one text report and writes it as `report.txt`.
pub fn write_report(dir: &Path) -> Result<String> {
    let mut out = String::new();
    let mut found = false;
    let read = |name: &str| -> Result<Option<String>> {
        let path = dir.join(name);
        match std::fs::read_to_string(&path) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    };
    if let Some(m) = read(METRICS_FILE)? {
        found = true;
        out.push_str("[metrics]\n");
        out.push_str(&m);
        let _ = writeln!(out, "reference_auc={REFERENCE_AUC}");
        let _ = writeln!(out, "reference_ndcg10={REFERENCE_NDCG10}");
    }
    for (section, name) in [("sampling", SAMPLING_TABLE_FILE), ("benchmark", crate::bench::BENCHMARK_FILE), ("timings", TIMINGS_FILE)] {
        if let Some(t) = read(name)? {
            found = true;
            let _ = writeln!(out, "\n[{section}]");
            out.push_str(&t);
        }
    }
    if !found {
        return Err(Error::invalid(format!("{} holds no metrics, sampling table or benchmark", dir.display())));
    }
    let path = dir.join(REPORT_FILE);
    std::fs::write(&path, &out).map_err(|e| Error::io(&path, e))?;
    Ok(out)
}
