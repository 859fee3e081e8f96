//! Node similarity: interaction distributions, distribution-aware (DA)
//! distances, first/second-order proximity and random-walk visit scores.
//!
//! All DA similarities are negative distances, so larger is more similar and
//! identical distributions score exactly zero. Scores are only ever computed
//! for translated-graph candidates, never all pairs.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{InteractionGraph, NodeRef, NodeType, RelationId, TranslatedGraph};
use crate::seed;

/// Sparse probability distribution: (target index, probability), sorted by
/// index, probabilities summing to one.
pub type SparseDist = [(u32, f64)];

/// Scores keyed by candidate index, sorted by index.
pub type CandidateScores = Vec<(u32, f64)>;

/// A (relation, counterpart type) pair; one distribution per node and slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SliceKey {
    pub relation: RelationId,
    pub target: NodeType,
}

fn slice_of(graph: &InteractionGraph, t: NodeType, relation: RelationId) -> Option<SliceKey> {
    let r = graph.relation(relation);
    if r.source == t {
        Some(SliceKey {
            relation,
            target: r.target,
        })
    } else if r.target == t {
        Some(SliceKey {
            relation,
            target: r.source,
        })
    } else {
        None
    }
}

/// Normalized positive-edge weights of `node` towards `target`-typed nodes
/// under `relation`.
pub fn interaction_profile(
    graph: &InteractionGraph,
    node: NodeRef,
    relation: RelationId,
    target: NodeType,
) -> Result<Vec<(u32, f64)>> {
    let mut out: Vec<(u32, f64)> = graph
        .positive_incident(node)
        .iter()
        .filter(|inc| inc.relation == relation && inc.node.node_type == target)
        .map(|inc| (inc.node.index, inc.weight))
        .collect();
    if out.is_empty() {
        return Err(Error::NoInteractions(format!(
            "node {node} under relation `{}`",
            graph.relation(relation).name
        )));
    }
    let total: f64 = out.iter().map(|&(_, w)| w).sum();
    for e in &mut out {
        e.1 /= total;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
struct SliceTable {
    offsets: Vec<usize>,
    entries: Vec<(u32, f64)>,
}

/// Every node's distributions for one node type, one table per slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileStore {
    pub node_type: NodeType,
    slices: Vec<SliceKey>,
    tables: Vec<SliceTable>,
}

impl ProfileStore {
    pub fn build(graph: &InteractionGraph, t: NodeType) -> Self {
        let slices: Vec<SliceKey> = (0..graph.relations().len())
            .filter_map(|r| slice_of(graph, t, RelationId(r as u16)))
            .collect();
        let n = graph.node_count(t);
        let tables = slices
            .iter()
            .map(|key| {
                let mut offsets = Vec::with_capacity(n + 1);
                offsets.push(0);
                let mut entries = Vec::new();
                for i in 0..n as u32 {
                    if let Ok(p) = interaction_profile(graph, NodeRef::new(t, i), key.relation, key.target) {
                        entries.extend(p);
                    }
                    offsets.push(entries.len());
                }
                SliceTable { offsets, entries }
            })
            .collect();
        ProfileStore {
            node_type: t,
            slices,
            tables,
        }
    }

    pub fn slices(&self) -> &[SliceKey] {
        &self.slices
    }

    pub fn node_count(&self) -> usize {
        self.tables.first().map_or(0, |t| t.offsets.len() - 1)
    }

    /// The distribution of `index` in slice `slice`; empty without support.
    pub fn profile(&self, slice: usize, index: u32) -> &SparseDist {
        let t = &self.tables[slice];
        &t.entries[t.offsets[index as usize]..t.offsets[index as usize + 1]]
    }

    pub fn has_support(&self, index: u32) -> bool {
        (0..self.slices.len()).any(|s| !self.profile(s, index).is_empty())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profiles {
    pub users: ProfileStore,
    pub items: ProfileStore,
}

impl Profiles {
    pub fn build(graph: &InteractionGraph) -> Self {
        Profiles {
            users: ProfileStore::build(graph, NodeType::USER),
            items: ProfileStore::build(graph, NodeType::ITEM),
        }
    }

    pub fn of_type(&self, t: NodeType) -> &ProfileStore {
        if t == NodeType::USER {
            &self.users
        } else {
            &self.items
        }
    }
}

/// Which similarity produced a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricTag {
    DaKl,
    DaL1,
    DaL2,
    FirstOrder,
    SecondOrder,
    RandomWalk,
}

impl MetricTag {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricTag::DaKl => "da-kl",
            MetricTag::DaL1 => "da-l1",
            MetricTag::DaL2 => "da-l2",
            MetricTag::FirstOrder => "first-order",
            MetricTag::SecondOrder => "second-order",
            MetricTag::RandomWalk => "random-walk",
        }
    }
}

impl fmt::Display for MetricTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "da-kl" => MetricTag::DaKl,
            "da-l1" => MetricTag::DaL1,
            "da-l2" => MetricTag::DaL2,
            "first-order" => MetricTag::FirstOrder,
            "second-order" => MetricTag::SecondOrder,
            "random-walk" => MetricTag::RandomWalk,
            _ => return Err(Error::invalid(format!("unknown metric tag `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityScore {
    pub value: f64,
    pub metric: MetricTag,
}

/// Distance underlying a DA similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DaMetric {
    /// KL divergence with additive smoothing over the union support.
    Kl { epsilon: f64 },
    L1,
    L2,
}

pub const DEFAULT_KL_EPSILON: f64 = 1e-3;

impl DaMetric {
    pub fn tag(self) -> MetricTag {
        match self {
            DaMetric::Kl { .. } => MetricTag::DaKl,
            DaMetric::L1 => MetricTag::DaL1,
            DaMetric::L2 => MetricTag::DaL2,
        }
    }

    pub fn distance(self, p: &SparseDist, q: &SparseDist) -> Result<f64> {
        match self {
            DaMetric::Kl { epsilon } => kl_divergence(p, q, epsilon),
            DaMetric::L1 => Ok(l1_distance(p, q)),
            DaMetric::L2 => Ok(l2_distance(p, q)),
        }
    }
}

/// Walks the union of two sorted supports, yielding `(p, q)` with zeros for
/// missing entries.
fn union_pairs<'a, T: Float>(p: &'a [(u32, T)], q: &'a [(u32, T)]) -> impl Iterator<Item = (T, T)> + 'a {
    let (mut i, mut j) = (0, 0);
    std::iter::from_fn(move || {
        let next = match (p.get(i), q.get(j)) {
            (Some(&(a, x)), Some(&(b, y))) => {
                if a == b {
                    i += 1;
                    j += 1;
                    (x, y)
                } else if a < b {
                    i += 1;
                    (x, T::zero())
                } else {
                    j += 1;
                    (T::zero(), y)
                }
            }
            (Some(&(_, x)), None) => {
                i += 1;
                (x, T::zero())
            }
            (None, Some(&(_, y))) => {
                j += 1;
                (T::zero(), y)
            }
            (None, None) => return None,
        };
        Some(next)
    })
}

/// `sum p~ ln(p~/q~)` over the union support, where `p~`, `q~` add `epsilon`
/// to every union entry and renormalize.
pub fn kl_divergence<T: Float>(p: &[(u32, T)], q: &[(u32, T)], epsilon: T) -> Result<T> {
    if epsilon < T::zero() {
        return Err(Error::invalid("KL smoothing must be non-negative"));
    }
    let n = T::from(union_pairs(p, q).count()).unwrap();
    let p_total = p.iter().fold(T::zero(), |a, &(_, x)| a + x) + epsilon * n;
    let q_total = q.iter().fold(T::zero(), |a, &(_, y)| a + y) + epsilon * n;
    let mut d = T::zero();
    for (x, y) in union_pairs(p, q) {
        let px = (x + epsilon) / p_total;
        let qy = (y + epsilon) / q_total;
        if px > T::zero() {
            if qy <= T::zero() {
                return Err(Error::DivergentKl);
            }
            d = d + px * (px / qy).ln();
        }
    }
    // Rounding can leave a tiny negative value for identical inputs.
    Ok(d.max(T::zero()))
}

pub fn l1_distance<T: Float>(p: &[(u32, T)], q: &[(u32, T)]) -> T {
    union_pairs(p, q).fold(T::zero(), |a, (x, y)| a + (x - y).abs())
}

pub fn l2_distance<T: Float>(p: &[(u32, T)], q: &[(u32, T)]) -> T {
    union_pairs(p, q)
        .fold(T::zero(), |a, (x, y)| a + (x - y) * (x - y))
        .sqrt()
}

fn nonempty(p: &SparseDist, q: &SparseDist) -> Result<()> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::NoInteractions("empty distribution support".into()));
    }
    Ok(())
}

pub fn da_similarity_kl(px: &SparseDist, py: &SparseDist, epsilon: f64) -> Result<SimilarityScore> {
    nonempty(px, py)?;
    Ok(SimilarityScore {
        value: -kl_divergence(px, py, epsilon)?,
        metric: MetricTag::DaKl,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

pub fn da_similarity_norm(px: &SparseDist, py: &SparseDist, norm: Norm) -> Result<SimilarityScore> {
    nonempty(px, py)?;
    Ok(match norm {
        Norm::L1 => SimilarityScore {
            value: -l1_distance(px, py),
            metric: MetricTag::DaL1,
        },
        Norm::L2 => SimilarityScore {
            value: -l2_distance(px, py),
            metric: MetricTag::DaL2,
        },
    })
}

/// Importance weight per slice. Empty means uniform over the store's slices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelationWeights {
    explicit: Vec<(SliceKey, f64)>,
}

impl RelationWeights {
    pub fn uniform() -> Self {
        RelationWeights::default()
    }

    pub fn explicit(weights: Vec<(SliceKey, f64)>) -> Result<Self> {
        if weights.iter().any(|&(_, w)| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("relation weights must be finite and non-negative"));
        }
        if !weights.is_empty() && weights.iter().all(|&(_, w)| w == 0.0) {
            return Err(Error::invalid("at least one relation weight must be positive"));
        }
        Ok(RelationWeights { explicit: weights })
    }

    pub fn is_uniform(&self) -> bool {
        self.explicit.is_empty()
    }

    pub fn entries(&self) -> &[(SliceKey, f64)] {
        &self.explicit
    }

    pub fn weight(&self, key: SliceKey, slice_count: usize) -> f64 {
        if self.explicit.is_empty() {
            1.0 / slice_count as f64
        } else {
            self.explicit
                .iter()
                .find(|(k, _)| *k == key)
                .map_or(0.0, |&(_, w)| w)
        }
    }
}

/// What a slice contributes when one of the two nodes has no support there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MissingSlice {
    /// Drop the slice and rescale the remaining weights to the full total.
    Skip,
    /// Count the slice at this distance.
    Penalty(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaConfig {
    pub metric: DaMetric,
    pub weights: RelationWeights,
    pub missing: MissingSlice,
}

impl Default for DaConfig {
    fn default() -> Self {
        DaConfig {
            metric: DaMetric::L1,
            weights: RelationWeights::uniform(),
            missing: MissingSlice::Skip,
        }
    }
}

/// Weighted DA similarity across every slice of the node type.
pub fn da_similarity_hetero(store: &ProfileStore, x: u32, y: u32, cfg: &DaConfig) -> Result<SimilarityScore> {
    let n = store.slices().len();
    let mut total_weight = 0.0;
    let mut active_weight = 0.0;
    let mut active = 0usize;
    let mut sum = 0.0;
    for (s, &key) in store.slices().iter().enumerate() {
        let w = cfg.weights.weight(key, n);
        total_weight += w;
        let (px, py) = (store.profile(s, x), store.profile(s, y));
        if px.is_empty() || py.is_empty() {
            if let MissingSlice::Penalty(d) = cfg.missing {
                sum += w * d;
                active_weight += w;
            }
            continue;
        }
        active += 1;
        active_weight += w;
        if w > 0.0 {
            sum += w * cfg.metric.distance(px, py)?;
        }
    }
    if active == 0 {
        return Err(Error::NoInteractions(format!(
            "no slice with support for both {x} and {y}"
        )));
    }
    if active_weight <= 0.0 {
        return Err(Error::NoInteractions(format!(
            "every positively weighted slice is missing for {x} or {y}"
        )));
    }
    let value = -(sum * total_weight / active_weight);
    Ok(SimilarityScore {
        value: if value == 0.0 { 0.0 } else { value },
        metric: cfg.metric.tag(),
    })
}

/// DA scores of `node` against each of its translated-graph candidates.
/// Candidates that share no slice with `node` are left out.
pub fn da_scores(tg: &TranslatedGraph, profiles: &Profiles, node: NodeRef, cfg: &DaConfig) -> Result<CandidateScores> {
    let store = profiles.of_type(node.node_type);
    let mut out = Vec::new();
    for &v in tg.of_type(node.node_type).candidates(node.index) {
        match da_similarity_hetero(store, node.index, v, cfg) {
            Ok(s) => out.push((v, s.value)),
            Err(Error::NoInteractions(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Positive-edge weight totals of `node` restricted to `other`-typed
/// neighbors, keyed by neighbor. Parallel relations are merged.
fn weight_map(graph: &InteractionGraph, node: NodeRef, keep: impl Fn(NodeType) -> bool) -> (Vec<(NodeRef, f64)>, f64) {
    let mut out: Vec<(NodeRef, f64)> = Vec::new();
    let mut total = 0.0;
    for inc in graph.positive_incident(node) {
        if !keep(inc.node.node_type) {
            continue;
        }
        total += inc.weight;
        match out.last_mut() {
            Some(last) if last.0 == inc.node => last.1 += inc.weight,
            _ => out.push((inc.node, inc.weight)),
        }
    }
    (out, total)
}

fn lookup(map: &[(NodeRef, f64)], key: NodeRef) -> f64 {
    map.binary_search_by_key(&key, |&(k, _)| k)
        .map_or(0.0, |i| map[i].1)
}

/// Two-hop traversal probability `u -> a -> u'` through shared auxiliary
/// nodes, each hop proportional to edge weight.
pub fn first_order_scores(tg: &TranslatedGraph, graph: &InteractionGraph, node: NodeRef) -> CandidateScores {
    let t = node.node_type;
    let (own, own_total) = weight_map(graph, node, |nt| nt != t);
    if own_total <= 0.0 {
        return Vec::new();
    }
    let mut aux_cache: HashMap<NodeRef, (Vec<(NodeRef, f64)>, f64)> = HashMap::new();
    let mut out = Vec::new();
    for (v, shared) in tg.of_type(t).shared_lists(node.index) {
        let peer = NodeRef::new(t, v);
        let mut score = 0.0;
        for &a in shared {
            let p = lookup(&own, a) / own_total;
            let (aux_map, aux_total) = aux_cache
                .entry(a)
                .or_insert_with(|| weight_map(graph, a, |nt| nt == t));
            score += p * lookup(aux_map, peer) / *aux_total;
        }
        out.push((v, score));
    }
    out
}

/// Number of shared auxiliary neighbors per candidate.
pub fn second_order_scores(tg: &TranslatedGraph, node: NodeRef) -> CandidateScores {
    tg.of_type(node.node_type)
        .shared_lists(node.index)
        .map(|(v, shared)| (v, shared.len() as f64))
        .collect()
}

pub const DEFAULT_WALKS: usize = 1000;
pub const DEFAULT_WALK_LENGTH: usize = 4;

/// L1-normalized visit counts of same-type nodes over `walks` seeded random
/// walks of `length` steps from `node`.
///
/// Each step moves to a positive-edge neighbor with probability proportional
/// to edge weight: one uniform draw `r` in `[0, total)` selects the first
/// neighbor (in incidence order) whose cumulative weight exceeds `r`. Visits
/// to the start node are not counted. The stream is seeded from
/// `(seed, node type, node index)` only.
pub fn random_walk_scores(
    graph: &InteractionGraph,
    node: NodeRef,
    walks: usize,
    length: usize,
    seed: u64,
) -> Result<CandidateScores> {
    if walks == 0 {
        return Err(Error::invalid("random walks need walks >= 1"));
    }
    if length < 2 {
        return Err(Error::invalid("random walks need length >= 2 to return to the start type"));
    }
    let mut rng = seed::rng(
        seed,
        &[seed::stream::WALK, node.node_type.0 as u64, node.index as u64],
    );
    let mut visits: HashMap<u32, u64> = HashMap::new();
    let mut cumulative: HashMap<NodeRef, (Vec<f64>, f64)> = HashMap::new();
    for _ in 0..walks {
        let mut cur = node;
        for _ in 0..length {
            let inc = graph.positive_incident(cur);
            if inc.is_empty() {
                break;
            }
            let (cum, total) = cumulative.entry(cur).or_insert_with(|| {
                let mut acc = 0.0;
                let cum: Vec<f64> = inc
                    .iter()
                    .map(|e| {
                        acc += e.weight;
                        acc
                    })
                    .collect();
                (cum, acc)
            });
            let r = rng.gen::<f64>() * *total;
            let pick = cum.partition_point(|&c| c <= r).min(inc.len() - 1);
            cur = inc[pick].node;
            if cur.node_type == node.node_type && cur != node {
                *visits.entry(cur.index).or_insert(0) += 1;
            }
        }
    }
    let total: u64 = visits.values().sum();
    let mut out: CandidateScores = visits
        .into_iter()
        .map(|(v, c)| (v, c as f64 / total as f64))
        .collect();
    out.sort_by_key(|&(v, _)| v);
    Ok(out)
}

/// Dense distance between distributions over a common support.
fn dense_distance(metric: DaMetric, p: &[f64], q: &[f64]) -> f64 {
    match metric {
        DaMetric::Kl { .. } => p
            .iter()
            .zip(q)
            .map(|(&a, &b)| {
                if a == 0.0 {
                    0.0
                } else if b == 0.0 {
                    f64::INFINITY
                } else {
                    a * (a / b).ln()
                }
            })
            .sum(),
        DaMetric::L1 => p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum(),
        DaMetric::L2 => p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
    }
}

/// Compares `d(P_u, mean(Q))` against `mean(d(P_u, Q_i))`. Convexity of the
/// distance in its second argument guarantees `lhs <= rhs`. Smoothing is not
/// applied for KL here: the distributions are used as given.
pub fn aggregation_bound_check(p_u: &[f64], qs: &[Vec<f64>], metric: DaMetric) -> Result<(f64, f64)> {
    if qs.is_empty() {
        return Err(Error::invalid("bound check needs at least one neighbor distribution"));
    }
    if qs.iter().any(|q| q.len() != p_u.len()) {
        return Err(Error::Shape("all distributions need the same support".into()));
    }
    let k = qs.len() as f64;
    let mean: Vec<f64> = (0..p_u.len())
        .map(|i| qs.iter().map(|q| q[i]).sum::<f64>() / k)
        .collect();
    let lhs = dense_distance(metric, p_u, &mean);
    let rhs = qs.iter().map(|q| dense_distance(metric, p_u, q)).sum::<f64>() / k;
    Ok((lhs, rhs))
}

/// Streaming writer for the text similarity table.
pub struct SimilarityCacheWriter {
    path: std::path::PathBuf,
    metric: MetricTag,
    w: BufWriter<File>,
}

impl SimilarityCacheWriter {
    pub fn create(path: &Path, header: &str, metric: MetricTag) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for h in header.lines() {
            writeln!(w, "# {h}").map_err(|e| Error::io(path, e))?;
        }
        Ok(SimilarityCacheWriter {
            path: path.to_owned(),
            metric,
            w,
        })
    }

    pub fn write_row(&mut self, u: u32, v: u32, value: f64) -> Result<()> {
        writeln!(self.w, "{u} {v} {} {value}", self.metric).map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Text similarity table: `u v metric value` lines after `#` header lines.
pub fn write_similarity_cache(
    path: &Path,
    header: &str,
    metric: MetricTag,
    rows: impl IntoIterator<Item = (u32, u32, f64)>,
) -> Result<()> {
    let mut w = SimilarityCacheWriter::create(path, header, metric)?;
    for (u, v, value) in rows {
        w.write_row(u, v, value)?;
    }
    w.finish()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTable {
    pub header: Vec<String>,
    pub rows: Vec<(u32, u32, MetricTag, f64)>,
}

pub fn read_similarity_cache(path: &Path) -> Result<SimilarityTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table = SimilarityTable {
        header: Vec::new(),
        rows: Vec::new(),
    };
    for (n, line) in text.lines().enumerate() {
        if let Some(h) = line.strip_prefix("# ") {
            table.header.push(h.to_owned());
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::parse(path, n + 1, "expected `u v metric value`");
        if f.len() != 4 {
            return Err(bad());
        }
        table.rows.push((
            f[0].parse().map_err(|_| bad())?,
            f[1].parse().map_err(|_| bad())?,
            f[2].parse().map_err(|_| bad())?,
            f[3].parse().map_err(|_| bad())?,
        ));
    }
    Ok(table)
}
