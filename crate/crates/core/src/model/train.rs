//! Mini-batch training with sampled negatives and early stopping.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::eval::{auc, auc_pairs, KnownInteractions, ModelScorer, Scorer};
use crate::graph::{DatasetSplit, LabeledInteraction};
use crate::linalg::Matrix;
use crate::model::{adam_step, AdamConfig, AdamState, AggregatedFeatures, Model, ModelConfig};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub warmup_batch: usize,
    pub steady_batch: usize,
    /// Number of warm-up batches before switching to `steady_batch`.
    pub switch_step: usize,
    /// Sampled negatives per training positive.
    pub negatives: usize,
    /// Stop after this many epochs without a validation AUC improvement.
    pub patience: Option<usize>,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 200,
            warmup_batch: 100,
            steady_batch: 10_240,
            switch_step: 100,
            negatives: 4,
            patience: Some(10),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Batch size of the batch with global index `step` (0-based).
    pub fn batch_size(&self, step: usize) -> usize {
        if step < self.switch_step {
            self.warmup_batch
        } else {
            self.steady_batch
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.warmup_batch == 0 || self.steady_batch == 0 {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub step: usize,
    pub epoch: usize,
    pub batch_size: usize,
    pub loss: f64,
    /// Set on the last batch of each epoch when validation runs.
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
}

impl TrainLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "step,epoch,batch_size,loss,val_auc").map_err(io)?;
        for r in &self.rows {
            let v = r.val_auc.map_or(String::new(), |v| v.to_string());
            writeln!(w, "{},{},{},{},{v}", r.step, r.epoch, r.batch_size, r.loss).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Mean batch loss of one epoch.
    pub fn epoch_loss(&self, epoch: usize) -> Option<f64> {
        let rows: Vec<f64> = self.rows.iter().filter(|r| r.epoch == epoch).map(|r| r.loss).collect();
        (!rows.is_empty()).then(|| rows.iter().sum::<f64>() / rows.len() as f64)
    }

    pub fn validation(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows.iter().filter_map(|r| r.val_auc.map(|v| (r.epoch, v)))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub optimizer: AdamState<T>,
    pub log: TrainLog,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub best_val_auc: Option<f64>,
    /// Node aggregations behind the inputs; training itself performs none.
    pub aggregations: usize,
}

pub(crate) fn batch_rows(records: &[&LabeledInteraction], known: &KnownInteractions, negatives: usize, rng: &mut impl rand::Rng) -> (Vec<u32>, Vec<u32>, Vec<f64>) {
    let cap = records.len() * (1 + negatives);
    let (mut u, mut i, mut y) = (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
    for r in records {
        u.push(r.user);
        i.push(r.item);
        y.push(r.label() as f64);
        if r.positive {
            for _ in 0..negatives {
                if let Some(n) = known.sample_unobserved(r.user, rng) {
                    u.push(r.user);
                    i.push(n);
                    y.push(0.0);
                }
            }
        }
    }
    (u, i, y)
}

/// Trains a fresh model on the train split of `split`.
///
/// Each epoch shuffles the train records and walks them in batches; every
/// positive brings `negatives` uniformly drawn items the user has no train
/// interaction with, and observed label-0 records act as negatives as they
/// are. Validation AUC is computed after every epoch when the validation
/// split is nonempty. With early stopping the best parameters are restored.
pub fn train<T: Scalar>(split: &DatasetSplit, inputs: &AggregatedFeatures<T>, model_config: ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let users = inputs.users().rows();
    let items = inputs.items().rows();
    if split
        .iter_tagged()
        .any(|(_, r)| r.user as usize >= users || r.item as usize >= items)
    {
        return Err(Error::Shape("split references nodes without inputs".into()));
    }
    let train_known = KnownInteractions::new(&split.train, users, items);
    let all_known = KnownInteractions::from_split(split, users, items);
    let val_pairs = auc_pairs(&split.validation, &all_known, cfg.seed, seed::stream::VALIDATION);
    let val_ok = val_pairs.iter().any(|p| p.2) && val_pairs.iter().any(|p| !p.2);
    if cfg.patience.is_some() && !val_ok {
        return Err(Error::invalid("early stopping needs validation positives and negatives"));
    }
    let (val_u, val_i): (Vec<u32>, Vec<u32>) = val_pairs.iter().map(|p| (p.0, p.1)).unzip();
    let val_labels: Vec<bool> = val_pairs.iter().map(|p| p.2).collect();

    let mut model = Model::new(model_config, Some(inputs), cfg.seed)?;
    let positives = split.train.iter().filter(|r| r.positive).count() as f64;
    let rows = split.train.len() as f64 + positives * cfg.negatives as f64;
    if positives > 0.0 && positives < rows {
        model.set_output_bias(T::of((positives / (rows - positives)).ln()));
    }
    let mut opt = AdamState::new(cfg.adam, &model.parameters().tensors);
    let names = model.parameters().names.clone();
    let mut log = TrainLog::default();
    let mut step = 0usize;
    let mut best: Option<(f64, usize, Vec<Matrix<T>>)> = None;
    let mut epochs_run = 0;

    for epoch in 0..cfg.max_epochs {
        let mut order: Vec<&LabeledInteraction> = split.train.iter().collect();
        order.shuffle(&mut seed::rng(cfg.seed, &[seed::stream::SHUFFLE, epoch as u64]));
        let mut at = 0;
        while at < order.len() {
            let size = cfg.batch_size(step);
            let chunk = &order[at..(at + size).min(order.len())];
            at += chunk.len();
            let mut rng = seed::rng(cfg.seed, &[seed::stream::NEGATIVES, step as u64]);
            let (bu, bi, by) = batch_rows(chunk, &train_known, cfg.negatives, &mut rng);
            let labels: Vec<T> = by.iter().map(|&y| T::of(y)).collect();
            let (loss, grads) = model.loss_and_gradient(inputs, &bu, &bi, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at step {step}")));
            }
            adam_step(model.tensors_mut(), &grads, &mut opt, &names)?;
            log.rows.push(TrainLogRow {
                step,
                epoch,
                batch_size: size,
                loss: loss.as_f64(),
                val_auc: None,
            });
            step += 1;
        }
        epochs_run = epoch + 1;
        if !val_ok {
            continue;
        }
        let scores = ModelScorer { model: &model, inputs }.score(&val_u, &val_i)?;
        let v = auc(&scores, &val_labels)?;
        log.rows.last_mut().expect("nonempty epoch").val_auc = Some(v);
        info!(
            "epoch {epoch}: loss {:.5} val_auc {v:.5}",
            log.epoch_loss(epoch).unwrap_or(f64::NAN)
        );
        if best.as_ref().is_none_or(|b| v > b.0) {
            best = Some((v, epoch, model.parameters().tensors.clone()));
        } else if let (Some(p), Some(b)) = (cfg.patience, best.as_ref()) {
            if epoch - b.1 >= p {
                debug!("early stop at epoch {epoch}, best {}", b.1);
                break;
            }
        }
    }
    let (best_val_auc, best_epoch) = match best {
        Some((v, e, tensors)) => {
            if cfg.patience.is_some() {
                model.tensors_mut().clone_from_slice(&tensors);
            }
            (Some(v), Some(e))
        }
        None => (None, None),
    };
    Ok(TrainOutcome {
        model,
        optimizer: opt,
        log,
        epochs_run,
        best_epoch,
        best_val_auc,
        aggregations: inputs.aggregations(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{split_dataset, SplitRatios};
    use crate::model::HeadKind;
    use rand::Rng;

    #[test]
    fn batch_schedule_switches_after_warmup() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.batch_size(0), 100);
        assert_eq!(cfg.batch_size(99), 100);
        assert_eq!(cfg.batch_size(100), 10_240);
    }

    /// Two user groups, each preferring its own half of the items.
    fn planted(users: u32, items: u32, per_user: u32, seed: u64) -> (DatasetSplit, AggregatedFeatures<f64>) {
        let mut rng = seed::rng(seed, &[1]);
        let mut records = Vec::new();
        for u in 0..users {
            let half = (u % 2) * (items / 2);
            let mut chosen: Vec<u32> = Vec::new();
            while chosen.len() < per_user as usize {
                let i = half + rng.gen_range(0..items / 2);
                if !chosen.contains(&i) {
                    chosen.push(i);
                }
            }
            for i in chosen {
                records.push(LabeledInteraction { user: u, item: i, positive: true });
            }
        }
        let split = split_dataset(&records, SplitRatios::default(), seed).unwrap();
        let dim = 4;
        let mut table = |n: u32, group: fn(u32, u32) -> u32| {
            let mut data = Vec::new();
            for k in 0..n {
                let g = group(k, n) as f64;
                data.extend([g, 1.0 - g, rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)]);
            }
            Matrix::from_vec(n as usize, dim, data).unwrap()
        };
        let u = table(users, |k, _| k % 2);
        let i = table(items, |k, n| (k >= n / 2) as u32);
        (split, AggregatedFeatures::from_tables(dim, 0, u, i).unwrap())
    }

    fn small_config(head: HeadKind) -> ModelConfig {
        ModelConfig {
            input_dim: 4,
            repr_dim: 8,
            hidden: vec![8, 8],
            head,
            trainable_inputs: false,
        }
    }

    #[test]
    fn loss_decreases_and_is_deterministic() {
        let (split, inputs) = planted(20, 20, 10, 4);
        assert_eq!(split.len(), 200);
        let cfg = TrainConfig {
            max_epochs: 20,
            warmup_batch: 16,
            steady_batch: 64,
            switch_step: 5,
            patience: None,
            seed: 3,
            ..Default::default()
        };
        let a = train(&split, &inputs, small_config(HeadKind::Std), &cfg).unwrap();
        assert!(a.log.epoch_loss(19).unwrap() < a.log.epoch_loss(0).unwrap());
        assert_eq!(a.epochs_run, 20);
        let b = train(&split, &inputs, small_config(HeadKind::Std), &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn early_stopping_restores_the_best_epoch() {
        let (split, inputs) = planted(30, 20, 8, 6);
        let cfg = TrainConfig {
            max_epochs: 40,
            warmup_batch: 32,
            steady_batch: 32,
            patience: Some(3),
            seed: 1,
            ..Default::default()
        };
        let out = train(&split, &inputs, small_config(HeadKind::Vcos), &cfg).unwrap();
        let best = out.best_val_auc.unwrap();
        let logged: Vec<(usize, f64)> = out.log.validation().collect();
        assert_eq!(logged.iter().map(|v| v.1).fold(f64::MIN, f64::max), best);
        if out.epochs_run < 40 {
            assert_eq!(out.epochs_run - 1 - out.best_epoch.unwrap(), 3);
        }
        let all = KnownInteractions::from_split(&split, 30, 20);
        let pairs = auc_pairs(&split.validation, &all, cfg.seed, seed::stream::VALIDATION);
        let (u, i): (Vec<u32>, Vec<u32>) = pairs.iter().map(|p| (p.0, p.1)).unzip();
        let labels: Vec<bool> = pairs.iter().map(|p| p.2).collect();
        let s = ModelScorer { model: &out.model, inputs: &inputs }.score(&u, &i).unwrap();
        assert_eq!(auc(&s, &labels).unwrap(), best);
    }

    #[test]
    fn empty_training_split_is_rejected() {
        let (mut split, inputs) = planted(4, 4, 2, 1);
        split.train.clear();
        assert!(train(&split, &inputs, small_config(HeadKind::Std), &TrainConfig::default()).is_err());
    }

    #[test]
    fn log_csv_has_the_documented_columns() {
        let log = TrainLog {
            rows: vec![
                TrainLogRow { step: 0, epoch: 0, batch_size: 100, loss: 0.5, val_auc: None },
                TrainLogRow { step: 1, epoch: 0, batch_size: 100, loss: 0.25, val_auc: Some(0.75) },
            ],
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        log.write_csv(f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert_eq!(text, "step,epoch,batch_size,loss,val_auc\n0,0,100,0.5,\n1,0,100,0.25,0.75\n");
    }
}
