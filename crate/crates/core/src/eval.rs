//! Ranking metrics and the held-out evaluation protocol.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{DatasetSplit, LabeledInteraction};
use crate::model::{AggregatedFeatures, Model};
use crate::scalar::Scalar;
use crate::seed;

/// Area under the ROC curve by rank sum, ties sharing their average rank.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape("scores and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("AUC needs at least one positive and one negative"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg * order[i..j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// One held-out positive ranked against sampled negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingTask {
    pub user: u32,
    pub positive: u32,
    pub negatives: Vec<u32>,
    /// Positive's score first, then one per negative.
    pub scores: Vec<f64>,
}

impl RankingTask {
    /// 1-based rank of the positive; equal-scored negatives rank ahead.
    pub fn rank(&self) -> usize {
        let p = self.scores[0];
        1 + self.scores[1..].iter().filter(|&&s| s >= p).count()
    }
}

pub fn ndcg_at_k(task: &RankingTask, k: usize) -> f64 {
    let r = task.rank();
    if r <= k {
        1.0 / ((1 + r) as f64).log2()
    } else {
        0.0
    }
}

/// Scores `(user, item)` pairs; higher means more relevant.
pub trait Scorer {
    fn score(&self, users: &[u32], items: &[u32]) -> Result<Vec<f64>>;
}

impl<F> Scorer for F
where
    F: Fn(u32, u32) -> f64,
{
    fn score(&self, users: &[u32], items: &[u32]) -> Result<Vec<f64>> {
        Ok(users.iter().zip(items).map(|(&u, &i)| self(u, i)).collect())
    }
}

/// A model bound to its inputs. Scores are logits so that saturated
/// probabilities do not collapse into ties.
pub struct ModelScorer<'a, T> {
    pub model: &'a Model<T>,
    pub inputs: &'a AggregatedFeatures<T>,
}

impl<T: Scalar> Scorer for ModelScorer<'_, T> {
    fn score(&self, users: &[u32], items: &[u32]) -> Result<Vec<f64>> {
        Ok(self
            .model
            .logits(self.inputs, users, items)?
            .into_iter()
            .map(|x| x.as_f64())
            .collect())
    }
}

/// Every observed `(user, item)` pair, any label, any split.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownInteractions {
    per_user: Vec<Vec<u32>>,
    item_count: usize,
}

impl KnownInteractions {
    pub fn new<'a>(records: impl IntoIterator<Item = &'a LabeledInteraction>, user_count: usize, item_count: usize) -> Self {
        let mut per_user = vec![Vec::new(); user_count];
        for r in records {
            per_user[r.user as usize].push(r.item);
        }
        for v in &mut per_user {
            v.sort_unstable();
            v.dedup();
        }
        KnownInteractions { per_user, item_count }
    }

    pub fn from_split(split: &DatasetSplit, user_count: usize, item_count: usize) -> Self {
        Self::new(split.iter_tagged().map(|(_, r)| r), user_count, item_count)
    }

    pub fn contains(&self, user: u32, item: u32) -> bool {
        self.per_user[user as usize].binary_search(&item).is_ok()
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    pub fn unobserved_count(&self, user: u32) -> usize {
        self.item_count - self.per_user[user as usize].len()
    }

    /// A uniform item the user has never interacted with, or `None` if the
    /// user has interacted with every item.
    pub fn sample_unobserved<R: Rng>(&self, user: u32, rng: &mut R) -> Option<u32> {
        let seen = &self.per_user[user as usize];
        let free = self.item_count - seen.len();
        if free == 0 {
            return None;
        }
        // rank among unobserved items, mapped past the observed ones
        let mut target = rng.gen_range(0..free) as u32;
        for &s in seen {
            if s <= target {
                target += 1;
            } else {
                break;
            }
        }
        Some(target)
    }

    /// Up to `n` distinct unobserved items.
    pub fn sample_distinct<R: Rng>(&self, user: u32, n: usize, rng: &mut R) -> Vec<u32> {
        let free = self.unobserved_count(user);
        if free <= n {
            let seen = &self.per_user[user as usize];
            return (0..self.item_count as u32)
                .filter(|i| seen.binary_search(i).is_err())
                .collect();
        }
        let mut out: Vec<u32> = Vec::with_capacity(n);
        while out.len() < n {
            let c = self.sample_unobserved(user, rng).expect("free items remain");
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }
}

/// Which pairs the AUC is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AucPool {
    /// Held-out pairs, topped up with sampled unobserved pairs to 1:1.
    #[default]
    Pooled,
    /// The positives and negatives of the NDCG ranking lists.
    Ranking,
}

impl AucPool {
    pub fn as_str(self) -> &'static str {
        match self {
            AucPool::Pooled => "pooled",
            AucPool::Ranking => "ranking",
        }
    }
}

impl FromStr for AucPool {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(AucPool::Pooled),
            "ranking" => Ok(AucPool::Ranking),
            _ => Err(Error::Config(format!("unknown AUC pool `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalProtocol {
    pub negatives: usize,
    pub k: usize,
    pub auc_pool: AucPool,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            negatives: 50,
            k: 10,
            auc_pool: AucPool::Pooled,
        }
    }
}

/// Held-out records plus, if label-0 pairs are fewer than positives,
/// sampled unobserved pairs up to 1:1. Extra negatives take the users of
/// the positives in order.
pub fn auc_pairs(records: &[LabeledInteraction], known: &KnownInteractions, seed: u64, stream: u64) -> Vec<(u32, u32, bool)> {
    let mut out: Vec<(u32, u32, bool)> = records.iter().map(|r| (r.user, r.item, r.positive)).collect();
    let pos: Vec<&LabeledInteraction> = records.iter().filter(|r| r.positive).collect();
    let neg = records.len() - pos.len();
    let mut rng = seed::rng(seed, &[stream]);
    for r in pos.iter().take(pos.len().saturating_sub(neg)) {
        if let Some(i) = known.sample_unobserved(r.user, &mut rng) {
            out.push((r.user, i, false));
        }
    }
    out
}

/// Ranking tasks for every held-out positive with seeded negatives.
pub fn ranking_tasks(records: &[LabeledInteraction], known: &KnownInteractions, negatives: usize, seed: u64) -> Vec<RankingTask> {
    let mut short = 0usize;
    let tasks = records
        .iter()
        .filter(|r| r.positive)
        .map(|r| {
            let mut rng = seed::rng(seed, &[seed::stream::EVAL, r.user as u64, r.item as u64]);
            let negs = known.sample_distinct(r.user, negatives, &mut rng);
            if negs.len() < negatives {
                short += 1;
            }
            RankingTask {
                user: r.user,
                positive: r.item,
                negatives: negs,
                scores: Vec::new(),
            }
        })
        .collect();
    if short > 0 {
        warn!("{short} ranking tasks have fewer than {negatives} unobserved negatives");
    }
    tasks
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub auc: f64,
    pub ndcg: f64,
    pub users: usize,
    pub tasks: usize,
}

/// AUC and NDCG@k on held-out records. NDCG is averaged per user first and
/// then across users; users without held-out positives are skipped.
pub fn evaluate<S: Scorer + ?Sized>(scorer: &S, records: &[LabeledInteraction], known: &KnownInteractions, protocol: &EvalProtocol, seed: u64) -> Result<Evaluation> {
    if records.is_empty() {
        return Err(Error::invalid("evaluation split is empty"));
    }
    if protocol.k == 0 {
        return Err(Error::invalid("NDCG cutoff must be at least 1"));
    }
    let mut tasks = ranking_tasks(records, known, protocol.negatives, seed);
    if tasks.is_empty() {
        return Err(Error::invalid("evaluation split has no positives"));
    }
    let mut users = Vec::new();
    let mut items = Vec::new();
    for t in &tasks {
        users.extend(std::iter::repeat_n(t.user, 1 + t.negatives.len()));
        items.push(t.positive);
        items.extend(&t.negatives);
    }
    let scores = scorer.score(&users, &items)?;
    let mut at = 0;
    for t in &mut tasks {
        let n = 1 + t.negatives.len();
        t.scores = scores[at..at + n].to_vec();
        at += n;
    }
    let mut per_user: std::collections::BTreeMap<u32, (f64, usize)> = Default::default();
    for t in &tasks {
        let e = per_user.entry(t.user).or_default();
        e.0 += ndcg_at_k(t, protocol.k);
        e.1 += 1;
    }
    let ndcg = per_user.values().map(|&(s, n)| s / n as f64).sum::<f64>() / per_user.len() as f64;
    let auc_value = match protocol.auc_pool {
        AucPool::Pooled => {
            let pairs = auc_pairs(records, known, seed, seed::stream::EVAL);
            let (u, i): (Vec<u32>, Vec<u32>) = pairs.iter().map(|p| (p.0, p.1)).unzip();
            let labels: Vec<bool> = pairs.iter().map(|p| p.2).collect();
            auc(&scorer.score(&u, &i)?, &labels)?
        }
        AucPool::Ranking => {
            let mut labels = Vec::with_capacity(scores.len());
            for t in &tasks {
                labels.push(true);
                labels.extend(std::iter::repeat_n(false, t.negatives.len()));
            }
            auc(&scores, &labels)?
        }
    };
    Ok(Evaluation {
        auc: auc_value,
        ndcg,
        users: per_user.len(),
        tasks: tasks.len(),
    })
}

/// Deterministic results of one experiment. Timings are kept apart so the
/// metrics file is reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub auc: f64,
    pub ndcg_at_10: f64,
    pub mans_users: Option<f64>,
    pub mans_items: Option<f64>,
    pub mans_all: Option<f64>,
    /// Additional deterministic facts, in insertion order.
    pub extra: Vec<(String, String)>,
    /// Wall-clock seconds per phase.
    pub timings: Vec<(String, f64)>,
}

impl MetricsReport {
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("auc".to_owned(), self.auc.to_string()),
            ("ndcg10".to_owned(), self.ndcg_at_10.to_string()),
        ];
        for (k, v) in [("mans_users", self.mans_users), ("mans_items", self.mans_items), ("mans_all", self.mans_all)] {
            if let Some(v) = v {
                kv.push((k.to_owned(), v.to_string()));
            }
        }
        kv.extend(self.extra.iter().cloned());
        kv
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.key_values().into_iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text: String = self.key_values().iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn write_timings(&self, path: &Path) -> Result<()> {
        let text: String = self.timings.iter().map(|(k, v)| format!("{k}={v:.6}\n")).collect();
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<MetricsReport> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut r = MetricsReport::default();
        for (n, line) in text.lines().enumerate() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, n + 1, "expected key=value"))?;
            let num = || v.parse::<f64>().map_err(|_| Error::parse(path, n + 1, format!("`{k}` is not a number")));
            match k {
                "auc" => r.auc = num()?,
                "ndcg10" => r.ndcg_at_10 = num()?,
                "mans_users" => r.mans_users = Some(num()?),
                "mans_items" => r.mans_items = Some(num()?),
                "mans_all" => r.mans_all = Some(num()?),
                _ => r.extra.push((k.to_owned(), v.to_owned())),
            }
        }
        Ok(r)
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.key_values() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// One CSV row per labeled report; columns are the union of keys in first
/// appearance order.
pub fn write_metrics_csv(path: &Path, rows: &[(String, MetricsReport)]) -> Result<()> {
    let mut columns: Vec<String> = Vec::new();
    let kvs: Vec<Vec<(String, String)>> = rows.iter().map(|(_, r)| r.key_values()).collect();
    for kv in &kvs {
        for (k, _) in kv {
            if !columns.contains(k) {
                columns.push(k.clone());
            }
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "experiment,{}", columns.join(",")).map_err(io)?;
    for ((label, _), kv) in rows.iter().zip(&kvs) {
        let cells: Vec<&str> = columns
            .iter()
            .map(|c| kv.iter().find(|(k, _)| k == c).map_or("", |(_, v)| v.as_str()))
            .collect();
        writeln!(w, "{label},{}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}
