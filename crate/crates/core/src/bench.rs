//! Cost benchmark: aggregate-once training against a recursive multi-layer
//! baseline over the same sampled subgraph, features, head and batches.
//!
//! The baseline recomputes every training sample's receptive tree each time
//! the sample is seen. Layers `1..L` map `h ⊕ mean(children h)` through a
//! per-type `W_l: R^{2m} -> R^m` with ReLU; layer `L` produces the head input
//! of the root. Trees are expanded per sample with no sharing between
//! samples or between repeated nodes.
//!
//! Counters are exact over all epochs. Wall clock is measured on the first
//! `timed_epochs` epochs and extrapolated linearly.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;

use crate::config::{ExperimentConfig, Precision};
use crate::error::{Error, Result};
use crate::eval::KnownInteractions;
use crate::features::FeatureMatrix;
use crate::graph::{LabeledInteraction, NodeType};
use crate::linalg::{gemm, Matrix, Op};
use crate::model::optim::{adam_step, AdamState};
use crate::model::train::{batch_rows, TrainConfig};
use crate::model::{glorot, AggregatedFeatures, Model, ModelConfig};
use crate::pipeline::{prepare, Timings};
use crate::sampler::{build_subgraph, NeighborLists, SampledSubgraph};
use crate::scalar::Scalar;
use crate::seed;

pub const BENCHMARK_FILE: &str = "benchmark.txt";

/// Samples per chunk of a recursive batch; bounds the memory of the trees.
const CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkConfig {
    pub layers: usize,
    pub epochs: usize,
    pub timed_epochs: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            layers: 2,
            epochs: 50,
            timed_epochs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub users: u64,
    pub items: u64,
    pub layers: u64,
    pub epochs: u64,
    pub timed_epochs: u64,
    /// Samples fed per epoch: train records plus drawn negatives.
    pub train_samples: u64,
    pub slgcn_aggregations: u64,
    pub slgcn_mappings: u64,
    pub recursive_aggregations: u64,
    pub recursive_mappings: u64,
    /// Node aggregations inside the recursive receptive trees.
    pub recursive_tree_aggregations: u64,
    /// Hidden-layer node mappings inside the recursive receptive trees.
    pub recursive_tree_mappings: u64,
    pub slgcn_preprocess_secs: f64,
    pub slgcn_epoch_secs: f64,
    pub recursive_epoch_secs: f64,
}

impl BenchmarkReport {
    /// `(name, counted, closed form)` for every counter.
    pub fn counter_checks(&self) -> Vec<(&'static str, u64, u64)> {
        let samples = self.epochs * self.train_samples;
        vec![
            ("slgcn_aggregations", self.slgcn_aggregations, self.users + self.items),
            ("slgcn_mappings", self.slgcn_mappings, samples),
            ("recursive_aggregations", self.recursive_aggregations, samples),
            ("recursive_mappings", self.recursive_mappings, samples * self.layers),
        ]
    }

    pub fn counters_match(&self) -> bool {
        self.counter_checks().iter().all(|c| c.1 == c.2)
    }

    pub fn slgcn_secs(&self) -> f64 {
        self.slgcn_preprocess_secs + self.epochs as f64 * self.slgcn_epoch_secs
    }

    pub fn recursive_secs(&self) -> f64 {
        self.epochs as f64 * self.recursive_epoch_secs
    }

    pub fn speedup(&self) -> f64 {
        self.recursive_secs() / self.slgcn_secs()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let ints = [
            ("users", self.users),
            ("items", self.items),
            ("layers", self.layers),
            ("epochs", self.epochs),
            ("timed_epochs", self.timed_epochs),
            ("train_samples", self.train_samples),
            ("slgcn_aggregations", self.slgcn_aggregations),
            ("slgcn_mappings", self.slgcn_mappings),
            ("recursive_aggregations", self.recursive_aggregations),
            ("recursive_mappings", self.recursive_mappings),
            ("recursive_tree_aggregations", self.recursive_tree_aggregations),
            ("recursive_tree_mappings", self.recursive_tree_mappings),
        ];
        for (k, v) in ints {
            let _ = writeln!(s, "{k}={v}");
        }
        let _ = writeln!(s, "counters_match={}", self.counters_match());
        let secs = [
            ("slgcn_preprocess_secs", self.slgcn_preprocess_secs),
            ("slgcn_epoch_secs", self.slgcn_epoch_secs),
            ("recursive_epoch_secs", self.recursive_epoch_secs),
            ("slgcn_secs", self.slgcn_secs()),
            ("recursive_secs", self.recursive_secs()),
            ("speedup", self.speedup()),
        ];
        for (k, v) in secs {
            let _ = writeln!(s, "{k}={v:.6}");
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Per-sample receptive trees of one node type, levels `0..=depth`.
struct Forest {
    levels: Vec<Vec<u32>>,
    /// For levels below `depth`: each node's child range in the next level.
    children: Vec<Vec<(usize, usize)>>,
}

impl Forest {
    fn grow(roots: &[u32], lists: &NeighborLists, depth: usize) -> Forest {
        let mut levels = vec![roots.to_vec()];
        let mut children = Vec::with_capacity(depth);
        for j in 0..depth {
            let mut next = Vec::new();
            let ranges = levels[j]
                .iter()
                .map(|&v| {
                    let start = next.len();
                    next.extend_from_slice(lists.neighbors(v));
                    (start, next.len())
                })
                .collect();
            children.push(ranges);
            levels.push(next);
        }
        Forest { levels, children }
    }
}

/// Rows `h(v) ⊕ mean(below(c) for children c)`, zeros for a childless node.
fn concat_mean<'a, T: Scalar>(
    rows: usize,
    m: usize,
    h: impl Fn(usize) -> &'a [T],
    below: impl Fn(usize) -> &'a [T],
    ranges: &[(usize, usize)],
) -> Matrix<T> {
    let mut a = Matrix::zeros(rows, 2 * m);
    for (r, &(s, e)) in ranges.iter().enumerate() {
        let row = a.row_mut(r);
        row[..m].copy_from_slice(h(r));
        if e > s {
            for c in s..e {
                for (o, &x) in row[m..].iter_mut().zip(below(c)) {
                    *o += x;
                }
            }
            let scale = T::of(1.0 / (e - s) as f64);
            for o in &mut row[m..] {
                *o *= scale;
            }
        }
    }
    a
}

/// Routes a gradient of `concat_mean` rows back to both levels.
fn split_concat_mean<T: Scalar>(da: &Matrix<T>, ranges: &[(usize, usize)], dh: &mut Matrix<T>, dbelow: &mut Matrix<T>) {
    let m = dh.cols();
    for (r, &(s, e)) in ranges.iter().enumerate() {
        let row = da.row(r);
        for (o, &g) in dh.row_mut(r).iter_mut().zip(&row[..m]) {
            *o += g;
        }
        if e > s {
            let scale = T::of(1.0 / (e - s) as f64);
            for c in s..e {
                for (o, &g) in dbelow.row_mut(c).iter_mut().zip(&row[m..]) {
                    *o += g * scale;
                }
            }
        }
    }
}

/// Hidden layers of the recursive baseline for one node type.
struct Recursive<'a, T> {
    features: &'a Matrix<T>,
    lists: &'a NeighborLists,
    layers: usize,
}

/// Forward state of one chunk: per hidden layer and level, the layer input
/// and its activation.
struct Trace<T> {
    forest: Forest,
    hidden: Vec<Vec<(Matrix<T>, Matrix<T>)>>,
}

impl<T: Scalar> Recursive<'_, T> {
    fn forward(&self, roots: &[u32], weights: &[Matrix<T>]) -> (Matrix<T>, Trace<T>) {
        let depth = self.layers;
        let forest = Forest::grow(roots, self.lists, depth);
        let m = self.features.cols();
        let mut hidden: Vec<Vec<(Matrix<T>, Matrix<T>)>> = Vec::with_capacity(depth - 1);
        // layer inputs read raw features in place; later layers read the
        // activations below them
        let layer_input = |hidden: &[Vec<(Matrix<T>, Matrix<T>)>], l: usize, j: usize| -> Matrix<T> {
            let ranges = &forest.children[j];
            if l == 1 {
                let (top, next) = (&forest.levels[j], &forest.levels[j + 1]);
                concat_mean(top.len(), m, |r| self.features.row(top[r] as usize), |c| self.features.row(next[c] as usize), ranges)
            } else {
                let (h, below) = (&hidden[l - 2][j].1, &hidden[l - 2][j + 1].1);
                concat_mean(h.rows(), m, |r| h.row(r), |c| below.row(c), ranges)
            }
        };
        for l in 1..depth {
            let w = &weights[l - 1];
            let mut stored = Vec::with_capacity(depth - l + 1);
            for j in 0..=depth - l {
                let a = layer_input(&hidden, l, j);
                let mut z = Matrix::zeros(a.rows(), w.rows());
                gemm(T::one(), &a, Op::N, w, Op::T, T::zero(), &mut z);
                for x in z.as_mut_slice() {
                    if *x < T::zero() {
                        *x = T::zero();
                    }
                }
                stored.push((a, z));
            }
            hidden.push(stored);
        }
        let top = layer_input(&hidden, depth, 0);
        (top, Trace { forest, hidden })
    }

    /// Accumulates weight gradients given the gradient of the head input.
    fn backward(&self, trace: &Trace<T>, d_top: Matrix<T>, weights: &[Matrix<T>], grads: &mut [Matrix<T>]) {
        let depth = self.layers;
        let m = self.features.cols();
        let mut d_a = vec![d_top];
        for l in (2..=depth).rev() {
            let top = depth - l;
            let below = &trace.hidden[l - 2];
            let mut dh: Vec<Matrix<T>> = (0..=top + 1)
                .map(|j| Matrix::zeros(trace.forest.levels[j].len(), m))
                .collect();
            for j in 0..=top {
                let (upper, lower) = dh.split_at_mut(j + 1);
                split_concat_mean(&d_a[j], &trace.forest.children[j], &mut upper[j], &mut lower[0]);
            }
            let w = &weights[l - 2];
            d_a = Vec::with_capacity(top + 2);
            for (j, mut g) in dh.into_iter().enumerate() {
                let (a, z) = &below[j];
                for (x, &act) in g.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if act <= T::zero() {
                        *x = T::zero();
                    }
                }
                gemm(T::one(), &g, Op::T, a, Op::N, T::one(), &mut grads[l - 2]);
                if l > 2 {
                    let mut da = Matrix::zeros(g.rows(), w.cols());
                    gemm(T::one(), &g, Op::N, w, Op::N, T::zero(), &mut da);
                    d_a.push(da);
                }
            }
        }
    }
}

/// Tree sizes per node: `sizes[j][v]` nodes at depth `j` below `v`.
fn tree_sizes(lists: &NeighborLists, depth: usize) -> Vec<Vec<u64>> {
    let n = lists.node_count();
    let mut sizes = vec![vec![1u64; n]];
    for j in 0..depth {
        let next = (0..n as u32)
            .map(|v| lists.neighbors(v).iter().map(|&c| sizes[j][c as usize]).sum())
            .collect();
        sizes.push(next);
    }
    sizes
}

/// `(aggregations, hidden mappings)` in the tree of `v`.
fn tree_cost(sizes: &[Vec<u64>], v: u32, layers: usize) -> (u64, u64) {
    let mut agg = 0;
    let mut map = 0;
    for l in 1..=layers {
        let nodes: u64 = (0..=layers - l).map(|j| sizes[j][v as usize]).sum();
        agg += nodes;
        if l < layers {
            map += nodes;
        }
    }
    (agg, map)
}

fn epoch_batches(
    train: &[LabeledInteraction],
    known: &KnownInteractions,
    cfg: &TrainConfig,
    epoch: usize,
    step: &mut usize,
    mut visit: impl FnMut(&[u32], &[u32], &[f64]) -> Result<()>,
) -> Result<()> {
    let mut order: Vec<&LabeledInteraction> = train.iter().collect();
    order.shuffle(&mut seed::rng(cfg.seed, &[seed::stream::SHUFFLE, epoch as u64]));
    let mut at = 0;
    while at < order.len() {
        let size = cfg.batch_size(*step);
        let chunk = &order[at..(at + size).min(order.len())];
        at += chunk.len();
        let mut rng = seed::rng(cfg.seed, &[seed::stream::NEGATIVES, *step as u64]);
        let (u, i, y) = batch_rows(chunk, known, cfg.negatives, &mut rng);
        visit(&u, &i, &y)?;
        *step += 1;
    }
    Ok(())
}

fn prior_model<T: Scalar>(config: ModelConfig, inputs: Option<&AggregatedFeatures<T>>, train: &[LabeledInteraction], negatives: usize, seed: u64) -> Result<Model<T>> {
    let mut model = Model::new(config, inputs, seed)?;
    let positives = train.iter().filter(|r| r.positive).count() as f64;
    let rows = train.len() as f64 + positives * negatives as f64;
    if positives > 0.0 && positives < rows {
        model.set_output_bias(T::of((positives / (rows - positives)).ln()));
    }
    Ok(model)
}

/// Loss, head gradients and hidden-weight gradients of one recursive batch.
/// `weights` holds the user layers then the item layers.
fn recursive_batch<T: Scalar>(
    model: &Model<T>,
    nets: &[Recursive<'_, T>; 2],
    weights: &[Matrix<T>],
    u: &[u32],
    i: &[u32],
    labels: &[T],
) -> Result<(T, Vec<Matrix<T>>, Vec<Matrix<T>>)> {
    let hidden = nets[0].layers - 1;
    let total = T::of(u.len() as f64);
    let mut loss = T::zero();
    let mut mgrads: Option<Vec<Matrix<T>>> = None;
    let mut wgrads: Vec<Matrix<T>> = weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
    let (wu, wi) = weights.split_at(hidden);
    for s in (0..u.len()).step_by(CHUNK) {
        let e = (s + CHUNK).min(u.len());
        let (xu, tu) = nets[0].forward(&u[s..e], wu);
        let (xi, ti) = nets[1].forward(&i[s..e], wi);
        let ids: Vec<u32> = (0..(e - s) as u32).collect();
        let (l, mut g, mut gu, mut gi) = model.loss_and_input_gradient(&xu, &xi, &ids, &ids, &labels[s..e])?;
        let share = T::of((e - s) as f64) / total;
        loss += l * share;
        scale_all(&mut g, share);
        scale_all(std::slice::from_mut(&mut gu), share);
        scale_all(std::slice::from_mut(&mut gi), share);
        let (gwu, gwi) = wgrads.split_at_mut(hidden);
        nets[0].backward(&tu, gu, wu, gwu);
        nets[1].backward(&ti, gi, wi, gwi);
        match mgrads.as_mut() {
            None => mgrads = Some(g),
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    for (x, &y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                        *x += y;
                    }
                }
            }
        }
    }
    let mgrads = mgrads.ok_or_else(|| Error::Shape("empty batch".into()))?;
    Ok((loss, mgrads, wgrads))
}

fn labels_of<T: Scalar>(y: &[f64]) -> Vec<T> {
    y.iter().map(|&v| T::of(v)).collect()
}

fn scale_all<T: Scalar>(ms: &mut [Matrix<T>], s: T) {
    for m in ms {
        for x in m.as_mut_slice() {
            *x *= s;
        }
    }
}

/// Runs both trainers on already prepared inputs.
pub fn benchmark_on<T: Scalar>(
    cfg: &ExperimentConfig,
    bench: &BenchmarkConfig,
    train: &[LabeledInteraction],
    features: &FeatureMatrix<T>,
    sub: &SampledSubgraph,
) -> Result<BenchmarkReport> {
    if bench.layers == 0 || bench.epochs == 0 || bench.timed_epochs == 0 || bench.timed_epochs > bench.epochs {
        return Err(Error::Config("benchmark needs layers >= 1 and 1 <= timed_epochs <= epochs".into()));
    }
    if train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let tc = cfg.train_config();
    let (users, items) = (features.table(NodeType::USER).rows(), features.table(NodeType::ITEM).rows());
    let known = KnownInteractions::new(train, users, items);
    let m = features.dim();
    let mut model_cfg = cfg.model_config(2 * m);
    model_cfg.trainable_inputs = false;

    // aggregate once
    let clock = Instant::now();
    let inputs = AggregatedFeatures::build(features, &[(cfg.sampling.lambda, sub)])?;
    let slgcn_preprocess_secs = clock.elapsed().as_secs_f64();
    let mut model = prior_model(model_cfg.clone(), Some(&inputs), train, tc.negatives, tc.seed)?;
    let names = model.parameters().names.clone();
    let mut opt = AdamState::new(tc.adam, &model.parameters().tensors);
    let mut step = 0;
    let mut slgcn_mappings = 0u64;
    let mut per_epoch = Vec::with_capacity(bench.epochs);
    let clock = Instant::now();
    for epoch in 0..bench.timed_epochs {
        epoch_batches(train, &known, &tc, epoch, &mut step, |u, i, y| {
            let (_, grads) = model.loss_and_gradient(&inputs, u, i, &labels_of(y))?;
            adam_step(model.tensors_mut(), &grads, &mut opt, &names)?;
            slgcn_mappings += u.len() as u64;
            Ok(())
        })?;
        per_epoch.push(slgcn_mappings);
    }
    let slgcn_epoch_secs = clock.elapsed().as_secs_f64() / bench.timed_epochs as f64;
    for epoch in bench.timed_epochs..bench.epochs {
        epoch_batches(train, &known, &tc, epoch, &mut step, |u, _, _| {
            slgcn_mappings += u.len() as u64;
            Ok(())
        })?;
    }
    info!("aggregate-once: {slgcn_preprocess_secs:.3}s preprocessing, {slgcn_epoch_secs:.3}s per epoch");

    // recursive baseline
    let depth = bench.layers;
    let nets = [NodeType::USER, NodeType::ITEM].map(|t| Recursive {
        features: features.table(t),
        lists: sub.of_type(t),
        layers: depth,
    });
    let sizes = nets.each_ref().map(|n| tree_sizes(n.lists, depth));
    let mut model = prior_model(model_cfg, None, train, tc.negatives, tc.seed)?;
    let mut opt = AdamState::new(tc.adam, &model.parameters().tensors);
    let mut rng = seed::rng(tc.seed, &[seed::stream::BENCH]);
    let mut weights: Vec<Matrix<T>> = (0..2 * (depth - 1)).map(|_| glorot(m, 2 * m, &mut rng)).collect();
    let weight_names: Vec<String> = (0..2 * (depth - 1)).map(|k| format!("recursive.{}.{}", k / (depth - 1), k % (depth - 1))).collect();
    let mut wopt = AdamState::new(tc.adam, &weights);
    let (mut rec_agg, mut rec_map, mut tree_agg, mut tree_map) = (0u64, 0u64, 0u64, 0u64);
    let mut count = |u: &[u32], i: &[u32]| {
        rec_agg += u.len() as u64;
        rec_map += (u.len() * depth) as u64;
        for (&a, &b) in u.iter().zip(i) {
            let (ua, um) = tree_cost(&sizes[0], a, depth);
            let (ia, im) = tree_cost(&sizes[1], b, depth);
            tree_agg += ua + ia;
            tree_map += um + im;
        }
    };
    let mut step = 0;
    let clock = Instant::now();
    for epoch in 0..bench.timed_epochs {
        epoch_batches(train, &known, &tc, epoch, &mut step, |u, i, y| {
            count(u, i);
            let (_, grads, wgrads) = recursive_batch(&model, &nets, &weights, u, i, &labels_of(y))?;
            adam_step(model.tensors_mut(), &grads, &mut opt, &names)?;
            if !weights.is_empty() {
                adam_step(&mut weights, &wgrads, &mut wopt, &weight_names)?;
            }
            Ok(())
        })?;
    }
    let recursive_epoch_secs = clock.elapsed().as_secs_f64() / bench.timed_epochs as f64;
    for epoch in bench.timed_epochs..bench.epochs {
        epoch_batches(train, &known, &tc, epoch, &mut step, |u, i, _| {
            count(u, i);
            Ok(())
        })?;
    }
    info!("recursive: {recursive_epoch_secs:.3}s per epoch");
    Ok(BenchmarkReport {
        users: users as u64,
        items: items as u64,
        layers: depth as u64,
        epochs: bench.epochs as u64,
        timed_epochs: bench.timed_epochs as u64,
        train_samples: per_epoch[0],
        slgcn_aggregations: inputs.aggregations() as u64,
        slgcn_mappings,
        recursive_aggregations: rec_agg,
        recursive_mappings: rec_map,
        recursive_tree_aggregations: tree_agg,
        recursive_tree_mappings: tree_map,
        slgcn_preprocess_secs,
        slgcn_epoch_secs,
        recursive_epoch_secs,
    })
}

fn benchmark_typed<T: Scalar>(cfg: &ExperimentConfig, bench: &BenchmarkConfig) -> Result<BenchmarkReport> {
    let dir = &cfg.run.output_dir;
    let mut timings = Timings::default();
    let shared = prepare::<T>(cfg, dir, &mut timings)?;
    let sub = build_subgraph(&shared.train, &shared.translated, &cfg.sampling_options())?;
    let report = benchmark_on(cfg, bench, &shared.split.train, &shared.features, &sub)?;
    report.write(&dir.join(BENCHMARK_FILE))?;
    Ok(report)
}

/// Prepares the configured data, samples the subgraph and benchmarks both
/// trainers on it, writing the report to `run.output_dir`.
pub fn benchmark_costs(cfg: &ExperimentConfig, bench: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    match cfg.model.precision {
        Precision::F32 => benchmark_typed::<f32>(cfg, bench),
        Precision::F64 => benchmark_typed::<f64>(cfg, bench),
    }
}
