//! Experiment configuration as flat `section.key = value` text.
//!
//! Blank lines and `#` comments are ignored. Unknown and repeated keys are
//! errors. [`ExperimentConfig::to_text`] writes every key in [`KEYS`] order,
//! so parsing its output gives back the same configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::EvalProtocol;
use crate::graph::{Schema, SplitRatios};
use crate::model::train::TrainConfig;
use crate::model::{AdamConfig, HeadKind, ModelConfig};
use crate::sampler::{SamplingOptions, SelectionMode, Strategy};
use crate::similarity::{DaConfig, DaMetric, MissingSlice, RelationWeights, DEFAULT_KL_EPSILON};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("data.path", "interaction file; empty when synth.kind is not none"),
    ("data.delimiter", "tab, comma or auto"),
    ("data.header", "true, false or auto"),
    ("data.user_col", "0-based user id column"),
    ("data.item_col", "0-based item id column"),
    ("data.rating_col", "0-based rating column or none"),
    ("data.weight_col", "0-based interaction count column or none"),
    ("data.threshold", "ratings at or above are positive; none labels every pair positive"),
    ("data.split", "train,validation,test ratios"),
    ("synth.kind", "none, planted or lastfm (a listening-shaped surrogate)"),
    ("synth.users", "planted: user count"),
    ("synth.items", "planted: item count"),
    ("synth.clusters", "planted: cluster count"),
    ("synth.per_user", "planted: interactions per user"),
    ("synth.noise", "planted: probability of an off-cluster pick"),
    ("similarity.metric", "DA distance: l1, l2 or kl"),
    ("similarity.epsilon", "KL smoothing mass"),
    ("similarity.missing", "missing relation slice: skip or a penalty distance"),
    ("similarity.walks", "random walks per node"),
    ("similarity.walk_length", "steps per random walk"),
    ("similarity.cache", "write per-node similarity tables to the output directory"),
    ("sampling.strategy", "random, walk, 1ord, 2ord or da"),
    ("sampling.k", "neighbors kept per node"),
    ("sampling.mode", "topk or importance"),
    ("sampling.lambda", "weight of the neighborhood block in the model input"),
    ("features.source", "seeded or file"),
    ("features.path", "feature file when features.source = file"),
    ("features.dim", "raw feature width for seeded features"),
    ("model.head", "std, lin, vcos or cos"),
    ("model.repr_dim", "width of the node representation"),
    ("model.hidden", "comma-separated MLP widths"),
    ("model.trainable_inputs", "train the aggregated input tables"),
    ("model.precision", "f32 or f64"),
    ("train.max_epochs", "epoch limit"),
    ("train.warmup_batch", "records per batch during warm-up"),
    ("train.steady_batch", "records per batch after warm-up"),
    ("train.switch_step", "warm-up length in batches"),
    ("train.negatives", "sampled negatives per positive"),
    ("train.patience", "epochs without validation gain before stopping, or none"),
    ("train.lr", "Adam learning rate"),
    ("train.l2", "L2 coefficient added to gradients"),
    ("eval.negatives", "sampled negatives per ranking task"),
    ("eval.k", "NDCG cutoff"),
    ("eval.auc_pool", "pooled or ranking"),
    ("run.seed", "master seed"),
    ("run.output_dir", "artifact directory"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SynthKind {
    #[default]
    None,
    Planted,
    Lastfm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureSource {
    #[default]
    Seeded,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    L1,
    L2,
    Kl,
}

macro_rules! tags {
    ($ty:ident { $($v:ident => $s:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$v => $s),+ }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Ok($ty::$v),)+
                    _ => Err(Error::Config(format!("unknown {} `{s}`", stringify!($ty)))),
                }
            }
        }
    };
}

tags!(SynthKind { None => "none", Planted => "planted", Lastfm => "lastfm" });
tags!(FeatureSource { Seeded => "seeded", File => "file" });
tags!(Precision { F32 => "f32", F64 => "f64" });
tags!(MetricKind { L1 => "l1", L2 => "l2", Kl => "kl" });

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub delimiter: Option<char>,
    pub header: Option<bool>,
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: Option<usize>,
    pub weight_col: Option<usize>,
    pub threshold: Option<f64>,
    pub split: SplitRatios,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub kind: SynthKind,
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    pub per_user: usize,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityConfig {
    pub metric: MetricKind,
    pub epsilon: f64,
    pub missing: MissingSlice,
    pub walks: usize,
    pub walk_length: usize,
    pub cache: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub strategy: Strategy,
    pub k: usize,
    pub mode: SelectionMode,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturesConfig {
    pub source: FeatureSource,
    pub path: Option<PathBuf>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub head: HeadKind,
    pub repr_dim: usize,
    pub hidden: Vec<usize>,
    pub trainable_inputs: bool,
    pub precision: Precision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub max_epochs: usize,
    pub warmup_batch: usize,
    pub steady_batch: usize,
    pub switch_step: usize,
    pub negatives: usize,
    pub patience: Option<usize>,
    pub lr: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub similarity: SimilarityConfig,
    pub sampling: SamplingConfig,
    pub features: FeaturesConfig,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalProtocol,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let m = ModelConfig::new(1);
        ExperimentConfig {
            data: DataConfig {
                path: None,
                delimiter: None,
                header: None,
                user_col: 0,
                item_col: 1,
                rating_col: None,
                weight_col: None,
                threshold: Some(4.0),
                split: SplitRatios::default(),
            },
            synth: SynthConfig {
                kind: SynthKind::None,
                users: 100,
                items: 50,
                clusters: 4,
                per_user: 8,
                noise: 0.1,
            },
            similarity: SimilarityConfig {
                metric: MetricKind::L1,
                epsilon: DEFAULT_KL_EPSILON,
                missing: MissingSlice::Skip,
                walks: crate::similarity::DEFAULT_WALKS,
                walk_length: crate::similarity::DEFAULT_WALK_LENGTH,
                cache: false,
            },
            sampling: SamplingConfig {
                strategy: Strategy::Da,
                k: crate::sampler::DEFAULT_K,
                mode: SelectionMode::TopK,
                lambda: 1.0,
            },
            features: FeaturesConfig {
                source: FeatureSource::Seeded,
                path: None,
                dim: crate::features::DEFAULT_DIM,
            },
            model: ModelSection {
                head: m.head,
                repr_dim: m.repr_dim,
                hidden: m.hidden,
                trainable_inputs: m.trainable_inputs,
                precision: Precision::F32,
            },
            train: TrainSection {
                max_epochs: t.max_epochs,
                warmup_batch: t.warmup_batch,
                steady_batch: t.steady_batch,
                switch_step: t.switch_step,
                negatives: t.negatives,
                patience: t.patience,
                lr: t.adam.lr,
                l2: t.adam.l2,
            },
            eval: EvalProtocol::default(),
            run: RunConfig {
                seed: 0,
                output_dir: PathBuf::from("out"),
            },
        }
    }
}

fn opt_str<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_owned(), T::to_string)
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(String::new, |p| p.display().to_string())
}

fn parse_num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("`{v}` is not a valid number"))
}

fn parse_opt<T: FromStr>(v: &str) -> std::result::Result<Option<T>, String> {
    if v.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse_num(v).map(Some)
    }
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("`{v}` is not a boolean")),
    }
}

fn parse_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn message(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        e => e.to_string(),
    }
}

fn parse_tag<T: FromStr<Err = Error>>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(message)
}

impl ExperimentConfig {
    /// Current value of `key` in its text form.
    pub fn get(&self, key: &str) -> Option<String> {
        let d = &self.data;
        Some(match key {
            "data.path" => path_str(&d.path),
            "data.delimiter" => match d.delimiter {
                None => "auto".into(),
                Some('\t') => "tab".into(),
                Some(',') => "comma".into(),
                Some(c) => c.to_string(),
            },
            "data.header" => d.header.map_or_else(|| "auto".into(), |h| h.to_string()),
            "data.user_col" => d.user_col.to_string(),
            "data.item_col" => d.item_col.to_string(),
            "data.rating_col" => opt_str(&d.rating_col),
            "data.weight_col" => opt_str(&d.weight_col),
            "data.threshold" => opt_str(&d.threshold),
            "data.split" => format!("{},{},{}", d.split.train, d.split.validation, d.split.test),
            "synth.kind" => self.synth.kind.to_string(),
            "synth.users" => self.synth.users.to_string(),
            "synth.items" => self.synth.items.to_string(),
            "synth.clusters" => self.synth.clusters.to_string(),
            "synth.per_user" => self.synth.per_user.to_string(),
            "synth.noise" => self.synth.noise.to_string(),
            "similarity.metric" => self.similarity.metric.to_string(),
            "similarity.epsilon" => self.similarity.epsilon.to_string(),
            "similarity.missing" => match self.similarity.missing {
                MissingSlice::Skip => "skip".into(),
                MissingSlice::Penalty(p) => p.to_string(),
            },
            "similarity.walks" => self.similarity.walks.to_string(),
            "similarity.walk_length" => self.similarity.walk_length.to_string(),
            "similarity.cache" => self.similarity.cache.to_string(),
            "sampling.strategy" => self.sampling.strategy.to_string(),
            "sampling.k" => self.sampling.k.to_string(),
            "sampling.mode" => self.sampling.mode.to_string(),
            "sampling.lambda" => self.sampling.lambda.to_string(),
            "features.source" => self.features.source.to_string(),
            "features.path" => path_str(&self.features.path),
            "features.dim" => self.features.dim.to_string(),
            "model.head" => self.model.head.to_string(),
            "model.repr_dim" => self.model.repr_dim.to_string(),
            "model.hidden" => self.model.hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
            "model.trainable_inputs" => self.model.trainable_inputs.to_string(),
            "model.precision" => self.model.precision.to_string(),
            "train.max_epochs" => self.train.max_epochs.to_string(),
            "train.warmup_batch" => self.train.warmup_batch.to_string(),
            "train.steady_batch" => self.train.steady_batch.to_string(),
            "train.switch_step" => self.train.switch_step.to_string(),
            "train.negatives" => self.train.negatives.to_string(),
            "train.patience" => opt_str(&self.train.patience),
            "train.lr" => self.train.lr.to_string(),
            "train.l2" => self.train.l2.to_string(),
            "eval.negatives" => self.eval.negatives.to_string(),
            "eval.k" => self.eval.k.to_string(),
            "eval.auc_pool" => self.eval.auc_pool.as_str().into(),
            "run.seed" => self.run.seed.to_string(),
            "run.output_dir" => self.run.output_dir.display().to_string(),
            _ => return None,
        })
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_inner(key, value.trim())
            .map_err(|msg| Error::Config(format!("`{key}`: {msg}")))
    }

    fn set_inner(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let d = &mut self.data;
        match key {
            "data.path" => d.path = parse_path(v),
            "data.delimiter" => {
                d.delimiter = match v {
                    "auto" => None,
                    "tab" | "\\t" => Some('\t'),
                    "comma" | "," => Some(','),
                    s if s.chars().count() == 1 => s.chars().next(),
                    _ => return Err(format!("`{v}` is not a delimiter")),
                }
            }
            "data.header" => d.header = if v == "auto" { None } else { Some(parse_bool(v)?) },
            "data.user_col" => d.user_col = parse_num(v)?,
            "data.item_col" => d.item_col = parse_num(v)?,
            "data.rating_col" => d.rating_col = parse_opt(v)?,
            "data.weight_col" => d.weight_col = parse_opt(v)?,
            "data.threshold" => d.threshold = parse_opt(v)?,
            "data.split" => {
                let parts: Vec<f64> = v.split(',').map(|x| parse_num(x.trim())).collect::<std::result::Result<_, _>>()?;
                let [train, validation, test] = parts[..] else {
                    return Err("expected three ratios".into());
                };
                d.split = SplitRatios { train, validation, test };
            }
            "synth.kind" => self.synth.kind = parse_tag(v)?,
            "synth.users" => self.synth.users = parse_num(v)?,
            "synth.items" => self.synth.items = parse_num(v)?,
            "synth.clusters" => self.synth.clusters = parse_num(v)?,
            "synth.per_user" => self.synth.per_user = parse_num(v)?,
            "synth.noise" => self.synth.noise = parse_num(v)?,
            "similarity.metric" => self.similarity.metric = parse_tag(v)?,
            "similarity.epsilon" => self.similarity.epsilon = parse_num(v)?,
            "similarity.missing" => {
                self.similarity.missing = if v == "skip" {
                    MissingSlice::Skip
                } else {
                    MissingSlice::Penalty(parse_num(v)?)
                }
            }
            "similarity.walks" => self.similarity.walks = parse_num(v)?,
            "similarity.walk_length" => self.similarity.walk_length = parse_num(v)?,
            "similarity.cache" => self.similarity.cache = parse_bool(v)?,
            "sampling.strategy" => self.sampling.strategy = parse_tag(v)?,
            "sampling.k" => self.sampling.k = parse_num(v)?,
            "sampling.mode" => self.sampling.mode = parse_tag(v)?,
            "sampling.lambda" => self.sampling.lambda = parse_num(v)?,
            "features.source" => self.features.source = parse_tag(v)?,
            "features.path" => self.features.path = parse_path(v),
            "features.dim" => self.features.dim = parse_num(v)?,
            "model.head" => self.model.head = parse_tag(v)?,
            "model.repr_dim" => self.model.repr_dim = parse_num(v)?,
            "model.hidden" => {
                self.model.hidden = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(|x| parse_num(x.trim())).collect::<std::result::Result<_, _>>()?
                }
            }
            "model.trainable_inputs" => self.model.trainable_inputs = parse_bool(v)?,
            "model.precision" => self.model.precision = parse_tag(v)?,
            "train.max_epochs" => self.train.max_epochs = parse_num(v)?,
            "train.warmup_batch" => self.train.warmup_batch = parse_num(v)?,
            "train.steady_batch" => self.train.steady_batch = parse_num(v)?,
            "train.switch_step" => self.train.switch_step = parse_num(v)?,
            "train.negatives" => self.train.negatives = parse_num(v)?,
            "train.patience" => self.train.patience = parse_opt(v)?,
            "train.lr" => self.train.lr = parse_num(v)?,
            "train.l2" => self.train.l2 = parse_num(v)?,
            "eval.negatives" => self.eval.negatives = parse_num(v)?,
            "eval.k" => self.eval.k = parse_num(v)?,
            "eval.auc_pool" => self.eval.auc_pool = parse_tag(v)?,
            "run.seed" => self.run.seed = parse_num(v)?,
            "run.output_dir" => {
                if v.is_empty() {
                    return Err("output directory must not be empty".into());
                }
                self.run.output_dir = PathBuf::from(v)
            }
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Parses configuration text over the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Config(format!("line {}: {msg}", n + 1));
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| at("expected `section.key = value`".into()))?;
            let k = k.trim();
            if !KEYS.iter().any(|(key, _)| *key == k) {
                return Err(at(format!("unknown key `{k}`")));
            }
            if seen.contains(&k) {
                return Err(at(format!("`{k}` is set twice")));
            }
            seen.push(k);
            cfg.set(k, v).map_err(|e| at(message(e)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::parse(&text)
    }

    /// Every key in [`KEYS`] order as `key = value` lines.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|(k, _)| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    /// Range checks and file existence.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        let s = self.data.split;
        let ratios = [s.train, s.validation, s.test];
        if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 || s.train <= 0.0 {
            return bad("data.split must be non-negative ratios summing to 1 with a positive train share");
        }
        match (self.synth.kind, &self.data.path) {
            (SynthKind::None, None) => return bad("data.path is required when synth.kind = none"),
            (SynthKind::None, Some(p)) if !p.is_file() => {
                return Err(Error::Config(format!("data.path `{}` does not exist", p.display())))
            }
            _ => {}
        }
        if self.features.source == FeatureSource::File {
            match &self.features.path {
                None => return bad("features.path is required when features.source = file"),
                Some(p) if !p.is_file() => {
                    return Err(Error::Config(format!("features.path `{}` does not exist", p.display())))
                }
                _ => {}
            }
        }
        if self.sampling.k == 0 {
            return bad("sampling.k must be at least 1");
        }
        if !(self.sampling.lambda >= 0.0) || !self.sampling.lambda.is_finite() {
            return bad("sampling.lambda must be a non-negative number");
        }
        if self.features.dim == 0 {
            return bad("features.dim must be at least 1");
        }
        if !(self.similarity.epsilon >= 0.0) {
            return bad("similarity.epsilon must be non-negative");
        }
        if self.similarity.walks == 0 || self.similarity.walk_length < 2 {
            return bad("similarity.walks must be at least 1 and walk_length at least 2");
        }
        if self.eval.negatives == 0 || self.eval.k == 0 {
            return bad("eval.negatives and eval.k must be at least 1");
        }
        if !(self.train.lr > 0.0) || !(self.train.l2 >= 0.0) {
            return bad("train.lr must be positive and train.l2 non-negative");
        }
        self.train_config().validate()?;
        self.model_config(self.features.dim * 2).validate()
    }

    pub fn schema(&self) -> Schema {
        Schema {
            delimiter: self.data.delimiter,
            has_header: self.data.header,
            user_col: self.data.user_col,
            item_col: self.data.item_col,
            rating_col: self.data.rating_col,
            weight_col: self.data.weight_col,
            ..Schema::default()
        }
    }

    pub fn da_config(&self) -> DaConfig {
        DaConfig {
            metric: match self.similarity.metric {
                MetricKind::L1 => DaMetric::L1,
                MetricKind::L2 => DaMetric::L2,
                MetricKind::Kl => DaMetric::Kl {
                    epsilon: self.similarity.epsilon,
                },
            },
            weights: RelationWeights::uniform(),
            missing: self.similarity.missing,
        }
    }

    pub fn sampling_options(&self) -> SamplingOptions {
        SamplingOptions {
            strategy: self.sampling.strategy,
            k: self.sampling.k,
            mode: self.sampling.mode,
            seed: self.run.seed,
            da: self.da_config(),
            walks: self.similarity.walks,
            walk_length: self.similarity.walk_length,
        }
    }

    pub fn model_config(&self, input_dim: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            repr_dim: self.model.repr_dim,
            hidden: self.model.hidden.clone(),
            head: self.model.head,
            trainable_inputs: self.model.trainable_inputs,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_epochs: self.train.max_epochs,
            warmup_batch: self.train.warmup_batch,
            steady_batch: self.train.steady_batch,
            switch_step: self.train.switch_step,
            negatives: self.train.negatives,
            patience: self.train.patience,
            adam: AdamConfig {
                lr: self.train.lr,
                l2: self.train.l2,
                ..AdamConfig::default()
            },
            seed: self.run.seed,
        }
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentConfig::parse(s)
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
