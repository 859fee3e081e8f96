//! Sampled subgraph construction and neighborhood quality (ANS / MANS).

use std::cmp::Ordering;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{InteractionGraph, NodeRef, NodeType, TranslatedGraph};
use crate::seed;
use crate::similarity::{
    da_scores, da_similarity_hetero, first_order_scores, random_walk_scores, second_order_scores, DaConfig, DaMetric,
    MetricTag, Profiles, DEFAULT_WALKS, DEFAULT_WALK_LENGTH,
};

pub const DEFAULT_K: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Random,
    Walk,
    FirstOrder,
    SecondOrder,
    Da,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Random,
        Strategy::Walk,
        Strategy::FirstOrder,
        Strategy::SecondOrder,
        Strategy::Da,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Walk => "walk",
            Strategy::FirstOrder => "1ord",
            Strategy::SecondOrder => "2ord",
            Strategy::Da => "da",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown sampling strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SelectionMode {
    #[default]
    TopK,
    Importance,
}

impl SelectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMode::TopK => "topk",
            SelectionMode::Importance => "importance",
        }
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topk" => Ok(SelectionMode::TopK),
            "importance" => Ok(SelectionMode::Importance),
            _ => Err(Error::Config(format!("unknown selection mode `{s}`"))),
        }
    }
}

fn by_score_then_index(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// The `k` highest-scoring candidates, ties broken by ascending index.
pub fn select_topk(scores: &[(u32, f64)], k: usize) -> Result<Vec<(u32, f64)>> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let mut v = scores.to_vec();
    if v.len() > k {
        v.select_nth_unstable_by(k - 1, by_score_then_index);
        v.truncate(k);
    }
    v.sort_by(by_score_then_index);
    Ok(v)
}

/// `k` draws without replacement, each proportional to the shifted score.
///
/// Scores are shifted by `min(0, min score)` so that negative similarities
/// become non-negative weights; non-negative scores are used as given.
/// Weighted draws use exponential keys `ln(u) / w` (A-Res). Zero-weight
/// candidates are only taken once every positive-weight candidate is used.
pub fn sample_importance_with<R: Rng>(scores: &[(u32, f64)], k: usize, rng: &mut R) -> Result<Vec<(u32, f64)>> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if scores.iter().any(|s| !s.1.is_finite()) {
        return Err(Error::Numeric("non-finite similarity score".into()));
    }
    let min = scores.iter().map(|s| s.1).fold(0.0f64, f64::min);
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(scores.len());
    let mut zero: Vec<usize> = Vec::new();
    for (i, &(_, s)) in scores.iter().enumerate() {
        let w = s - min;
        if w > 0.0 {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            keyed.push((u.ln() / w, i));
        } else {
            zero.push(i);
        }
    }
    if keyed.is_empty() && scores.len() > k {
        warn!("all importance weights are zero; sampling uniformly");
    }
    keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    let mut picked: Vec<usize> = keyed.into_iter().take(k).map(|(_, i)| i).collect();
    if picked.len() < k {
        let need = k - picked.len();
        if zero.len() > need {
            zero.partial_shuffle(rng, need);
            zero.truncate(need);
        }
        picked.extend(zero);
    }
    Ok(picked.into_iter().map(|i| scores[i]).collect())
}

pub fn sample_importance(scores: &[(u32, f64)], k: usize, seed: u64) -> Result<Vec<(u32, f64)>> {
    sample_importance_with(scores, k, &mut seed::rng(seed, &[seed::stream::SAMPLE]))
}

/// CSR neighbor lists for one node type.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborLists {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    scores: Vec<f64>,
}

impl NeighborLists {
    pub fn from_lists(lists: Vec<Vec<(u32, f64)>>) -> Self {
        let mut out = NeighborLists {
            offsets: vec![0],
            ..Default::default()
        };
        for list in lists {
            for (n, s) in list {
                out.neighbors.push(n);
                out.scores.push(s);
            }
            out.offsets.push(out.neighbors.len());
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, index: u32) -> &[u32] {
        &self.neighbors[self.offsets[index as usize]..self.offsets[index as usize + 1]]
    }

    pub fn scores(&self, index: u32) -> &[f64] {
        &self.scores[self.offsets[index as usize]..self.offsets[index as usize + 1]]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len()
    }
}

/// Per-node sampled same-type neighbors for users and items.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSubgraph {
    pub strategy: Strategy,
    pub k: usize,
    pub mode: SelectionMode,
    pub seed: u64,
    /// Similarity that produced the neighbor scores.
    pub metric: Option<MetricTag>,
    pub users: NeighborLists,
    pub items: NeighborLists,
}

impl SampledSubgraph {
    pub fn of_type(&self, t: NodeType) -> &NeighborLists {
        if t == NodeType::USER {
            &self.users
        } else {
            &self.items
        }
    }

    pub fn neighbors(&self, node: NodeRef) -> &[u32] {
        self.of_type(node.node_type).neighbors(node.index)
    }

    /// `{u}` followed by the sampled neighbors of `u`.
    pub fn closed_neighborhood(&self, node: NodeRef) -> Vec<NodeRef> {
        std::iter::once(node)
            .chain(
                self.neighbors(node)
                    .iter()
                    .map(|&i| NodeRef::new(node.node_type, i)),
            )
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.users.edge_count() + self.items.edge_count()
    }

    pub fn write(&self, path: &Path, header: &str) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        for h in header.lines() {
            writeln!(w, "# {h}").map_err(io)?;
        }
        let metric = self.metric.map_or("none", MetricTag::as_str);
        writeln!(
            w,
            "# strategy={} k={} mode={} seed={} metric={metric}",
            self.strategy, self.k, self.mode, self.seed
        )
        .map_err(io)?;
        for t in [NodeType::USER, NodeType::ITEM] {
            let lists = self.of_type(t);
            for i in 0..lists.node_count() as u32 {
                write!(w, "{} {i} :", t.0).map_err(io)?;
                for (j, (n, s)) in lists.neighbors(i).iter().zip(lists.scores(i)).enumerate() {
                    let sep = if j == 0 { " " } else { " ; " };
                    write!(w, "{sep}{n},{s}").map_err(io)?;
                }
                writeln!(w).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Reads a subgraph file; returns the subgraph and the free-form header
    /// lines that preceded the parameter line.
    pub fn read(path: &Path) -> Result<(SampledSubgraph, Vec<String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut header = Vec::new();
        let mut params: Option<(Strategy, usize, SelectionMode, u64, Option<MetricTag>)> = None;
        let mut lists: [Vec<Vec<(u32, f64)>>; 2] = [Vec::new(), Vec::new()];
        for (n, line) in text.lines().enumerate() {
            let bad = |msg: &str| Error::parse(path, n + 1, msg);
            if let Some(h) = line.strip_prefix("# ") {
                if h.starts_with("strategy=") {
                    let mut kv = std::collections::HashMap::new();
                    for part in h.split_whitespace() {
                        let (k, v) = part.split_once('=').ok_or_else(|| bad("malformed parameter"))?;
                        kv.insert(k, v);
                    }
                    let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(&format!("missing `{k}`")));
                    let metric = match get("metric")? {
                        "none" => None,
                        m => Some(m.parse()?),
                    };
                    params = Some((
                        get("strategy")?.parse()?,
                        get("k")?.parse().map_err(|_| bad("bad k"))?,
                        get("mode")?.parse()?,
                        get("seed")?.parse().map_err(|_| bad("bad seed"))?,
                        metric,
                    ));
                } else {
                    header.push(h.to_owned());
                }
                continue;
            }
            let (head, body) = line.split_once(':').ok_or_else(|| bad("expected `type index : ...`"))?;
            let mut hp = head.split_whitespace();
            let (Some(t), Some(i), None) = (hp.next(), hp.next(), hp.next()) else {
                return Err(bad("expected `type index`"));
            };
            let t: usize = t.parse().map_err(|_| bad("bad node type"))?;
            let i: usize = i.parse().map_err(|_| bad("bad node index"))?;
            if t > 1 || i != lists[t].len() {
                return Err(bad("node rows must be dense and ordered"));
            }
            let mut row = Vec::new();
            for entry in body.split(';').map(str::trim).filter(|e| !e.is_empty()) {
                let (nb, sc) = entry.split_once(',').ok_or_else(|| bad("expected `neighbor,score`"))?;
                row.push((
                    nb.trim().parse().map_err(|_| bad("bad neighbor index"))?,
                    sc.trim().parse().map_err(|_| bad("bad score"))?,
                ));
            }
            lists[t].push(row);
        }
        let (strategy, k, mode, seed, metric) =
            params.ok_or_else(|| Error::parse(path, 0, "missing strategy/k/mode/seed header"))?;
        let [users, items] = lists;
        Ok((
            SampledSubgraph {
                strategy,
                k,
                mode,
                seed,
                metric,
                users: NeighborLists::from_lists(users),
                items: NeighborLists::from_lists(items),
            },
            header,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingOptions {
    pub strategy: Strategy,
    pub k: usize,
    pub mode: SelectionMode,
    pub seed: u64,
    pub da: DaConfig,
    pub walks: usize,
    pub walk_length: usize,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions {
            strategy: Strategy::Da,
            k: DEFAULT_K,
            mode: SelectionMode::TopK,
            seed: 0,
            da: DaConfig::default(),
            walks: DEFAULT_WALKS,
            walk_length: DEFAULT_WALK_LENGTH,
        }
    }
}

/// Candidate scores of one node under a strategy. Random gives every
/// candidate score zero.
pub fn candidate_scores(
    graph: &InteractionGraph,
    tg: &TranslatedGraph,
    profiles: Option<&Profiles>,
    node: NodeRef,
    opts: &SamplingOptions,
) -> Result<Vec<(u32, f64)>> {
    match opts.strategy {
        Strategy::Random => Ok(tg
            .of_type(node.node_type)
            .candidates(node.index)
            .iter()
            .map(|&v| (v, 0.0))
            .collect()),
        Strategy::Walk => random_walk_scores(graph, node, opts.walks, opts.walk_length, opts.seed),
        Strategy::FirstOrder => Ok(first_order_scores(tg, graph, node)),
        Strategy::SecondOrder => Ok(second_order_scores(tg, node)),
        Strategy::Da => {
            let profiles = profiles.ok_or_else(|| Error::invalid("DA sampling needs interaction profiles"))?;
            da_scores(tg, profiles, node, &opts.da)
        }
    }
}

/// Similarity metric behind a strategy's scores; `None` for random.
pub fn metric_tag(opts: &SamplingOptions) -> Option<MetricTag> {
    match opts.strategy {
        Strategy::Random => None,
        Strategy::Walk => Some(MetricTag::RandomWalk),
        Strategy::FirstOrder => Some(MetricTag::FirstOrder),
        Strategy::SecondOrder => Some(MetricTag::SecondOrder),
        Strategy::Da => Some(opts.da.metric.tag()),
    }
}

/// Samples up to `K` same-type neighbors for every user and item.
///
/// Random draws `K` candidates uniformly without replacement. Every other
/// strategy scores candidates and then selects by `mode`. Each node uses its
/// own stream seeded by `(seed, type, index)`.
pub fn build_subgraph(graph: &InteractionGraph, tg: &TranslatedGraph, opts: &SamplingOptions) -> Result<SampledSubgraph> {
    build_subgraph_with(graph, tg, opts, |_, _| Ok(()))
}

/// [`build_subgraph`] that also hands every node's candidate scores to
/// `visit` before selection.
pub fn build_subgraph_with<F>(graph: &InteractionGraph, tg: &TranslatedGraph, opts: &SamplingOptions, mut visit: F) -> Result<SampledSubgraph>
where
    F: FnMut(NodeRef, &[(u32, f64)]) -> Result<()>,
{
    if opts.k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let profiles = (opts.strategy == Strategy::Da).then(|| Profiles::build(graph));
    let mut per_type = Vec::with_capacity(2);
    for t in [NodeType::USER, NodeType::ITEM] {
        let mut lists = Vec::with_capacity(graph.node_count(t));
        for i in 0..graph.node_count(t) as u32 {
            let node = NodeRef::new(t, i);
            let scores = candidate_scores(graph, tg, profiles.as_ref(), node, opts)?;
            visit(node, &scores)?;
            let mut rng = seed::rng(opts.seed, &[seed::stream::SAMPLE, t.0 as u64, i as u64]);
            let mut chosen = match (opts.strategy, opts.mode) {
                (Strategy::Random, _) => {
                    let mut s = scores;
                    let take = opts.k.min(s.len());
                    s.partial_shuffle(&mut rng, take);
                    s.truncate(take);
                    s
                }
                (_, SelectionMode::TopK) => select_topk(&scores, opts.k)?,
                (_, SelectionMode::Importance) => sample_importance_with(&scores, opts.k, &mut rng)?,
            };
            if opts.strategy == Strategy::Random {
                chosen.sort_by_key(|&(v, _)| v);
            }
            lists.push(chosen);
        }
        per_type.push(NeighborLists::from_lists(lists));
    }
    let items = per_type.pop().unwrap();
    let users = per_type.pop().unwrap();
    Ok(SampledSubgraph {
        strategy: opts.strategy,
        k: opts.k,
        mode: opts.mode,
        seed: opts.seed,
        metric: metric_tag(opts),
        users,
        items,
    })
}

/// Mean similarity between `node` and its sampled neighbors. Errors on an
/// empty neighbor list.
pub fn ans<F>(subgraph: &SampledSubgraph, node: NodeRef, mut sim: F) -> Result<f64>
where
    F: FnMut(NodeRef, NodeRef) -> Result<f64>,
{
    let nbrs = subgraph.neighbors(node);
    if nbrs.is_empty() {
        return Err(Error::invalid(format!("ANS undefined for {node}: no neighbors")));
    }
    let mut total = 0.0;
    for &v in nbrs {
        total += sim(node, NodeRef::new(node.node_type, v))?;
    }
    Ok(total / nbrs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSet {
    Users,
    Items,
    All,
}

/// Mean ANS over the nodes of `set` that have at least one neighbor.
pub fn mans<F>(subgraph: &SampledSubgraph, mut sim: F, set: NodeSet) -> Result<f64>
where
    F: FnMut(NodeRef, NodeRef) -> Result<f64>,
{
    let types: &[NodeType] = match set {
        NodeSet::Users => &[NodeType::USER],
        NodeSet::Items => &[NodeType::ITEM],
        NodeSet::All => &[NodeType::USER, NodeType::ITEM],
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for &t in types {
        let lists = subgraph.of_type(t);
        for i in 0..lists.node_count() as u32 {
            if lists.neighbors(i).is_empty() {
                continue;
            }
            total += ans(subgraph, NodeRef::new(t, i), &mut sim)?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("MANS undefined: no node has a sampled neighbor"));
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodQuality {
    /// ANS of every node with a nonempty neighbor list.
    pub per_node: Vec<(NodeRef, f64)>,
    pub users: Option<f64>,
    pub items: Option<f64>,
    pub all: f64,
    pub metric: MetricTag,
}

/// ANS and MANS of a subgraph under a DA similarity.
pub fn neighborhood_quality(subgraph: &SampledSubgraph, profiles: &Profiles, da: &DaConfig) -> Result<NeighborhoodQuality> {
    let mut per_node = Vec::new();
    let mut sums = [(0.0, 0usize); 2];
    for (slot, t) in [NodeType::USER, NodeType::ITEM].into_iter().enumerate() {
        let store = profiles.of_type(t);
        let lists = subgraph.of_type(t);
        for i in 0..lists.node_count() as u32 {
            if lists.neighbors(i).is_empty() {
                continue;
            }
            let node = NodeRef::new(t, i);
            let a = ans(subgraph, node, |x, y| Ok(da_similarity_hetero(store, x.index, y.index, da)?.value))?;
            per_node.push((node, a));
            sums[slot].0 += a;
            sums[slot].1 += 1;
        }
    }
    let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
    let count = sums[0].1 + sums[1].1;
    if count == 0 {
        return Err(Error::invalid("MANS undefined: no node has a sampled neighbor"));
    }
    Ok(NeighborhoodQuality {
        per_node,
        users: mean(sums[0]),
        items: mean(sums[1]),
        all: (sums[0].0 + sums[1].0) / count as f64,
        metric: da.metric.tag(),
    })
}

/// DA-L1 configuration used to compare strategies on one yardstick.
pub fn yardstick() -> DaConfig {
    DaConfig {
        metric: DaMetric::L1,
        ..DaConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{translate_graph, GraphBuilder};

    fn ids(v: &[(u32, f64)]) -> Vec<u32> {
        v.iter().map(|x| x.0).collect()
    }

    #[test]
    fn topk_orders_and_breaks_ties_by_index() {
        let s = [(0, 0.9), (1, 0.5), (2, 0.1)];
        assert_eq!(ids(&select_topk(&s, 2).unwrap()), vec![0, 1]);
        assert_eq!(ids(&select_topk(&[(3, 0.5), (1, 0.5)], 1).unwrap()), vec![1]);
        assert_eq!(ids(&select_topk(&[(0, 0.9)], 5).unwrap()), vec![0]);
        assert!(select_topk(&s, 0).is_err());
    }

    #[test]
    fn importance_forced_and_zero_mass() {
        assert_eq!(ids(&sample_importance(&[(4, -0.3)], 1, 1).unwrap()), vec![4]);
        for seed in 0..10_000 {
            let got = sample_importance(&[(0, 1.0), (1, 0.0)], 1, seed).unwrap();
            assert_eq!(got[0].0, 0);
        }
    }

    #[test]
    fn importance_frequency_follows_weights() {
        let trials = 10_000;
        let hits = (0..trials)
            .filter(|&seed| sample_importance(&[(0, 3.0), (1, 1.0)], 1, seed).unwrap()[0].0 == 0)
            .count();
        let freq = hits as f64 / trials as f64;
        assert!((freq - 0.75).abs() <= 0.02, "{freq}");
    }

    #[test]
    fn importance_all_equal_is_uniform_and_without_replacement() {
        let s: Vec<(u32, f64)> = (0..4).map(|i| (i, -0.2)).collect();
        let mut counts = [0usize; 4];
        for seed in 0..8000 {
            let got = sample_importance(&s, 2, seed).unwrap();
            assert_eq!(got.len(), 2);
            assert_ne!(got[0].0, got[1].0);
            for (v, _) in got {
                counts[v as usize] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 / 16_000.0 - 0.25).abs() < 0.02, "{counts:?}");
        }
    }

    fn small_graph() -> InteractionGraph {
        let mut b = GraphBuilder::new();
        let r = b.add_relation("click", NodeType::USER, NodeType::ITEM).unwrap();
        b.ensure_nodes(NodeType::USER, 6);
        b.ensure_nodes(NodeType::ITEM, 5);
        let edges = [(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0), (2, 1, 3.0), (2, 2, 1.0), (3, 2, 1.0), (3, 3, 1.0), (4, 0, 1.0), (4, 3, 2.0)];
        for (u, i, w) in edges {
            b.add_interaction(NodeRef::user(u), NodeRef::item(i), r, w, None).unwrap();
        }
        b.build()
    }

    #[test]
    fn subgraph_is_deterministic_and_well_formed() {
        let g = small_graph();
        let tg = translate_graph(&g, true);
        for strategy in Strategy::ALL {
            for mode in [SelectionMode::TopK, SelectionMode::Importance] {
                let opts = SamplingOptions {
                    strategy,
                    mode,
                    k: 2,
                    seed: 5,
                    walks: 50,
                    ..Default::default()
                };
                let a = build_subgraph(&g, &tg, &opts).unwrap();
                assert_eq!(a, build_subgraph(&g, &tg, &opts).unwrap());
                for t in [NodeType::USER, NodeType::ITEM] {
                    let lists = a.of_type(t);
                    assert_eq!(lists.node_count(), g.node_count(t));
                    for i in 0..lists.node_count() as u32 {
                        let n = lists.neighbors(i);
                        assert!(n.len() <= 2 && !n.contains(&i));
                        let mut d = n.to_vec();
                        d.sort();
                        d.dedup();
                        assert_eq!(d.len(), n.len());
                    }
                }
                // isolated user 5 keeps an empty list
                assert!(a.neighbors(NodeRef::user(5)).is_empty());
            }
        }
    }

    #[test]
    fn da_topk_composes_scores_and_selection() {
        let g = small_graph();
        let tg = translate_graph(&g, true);
        let opts = SamplingOptions {
            k: 2,
            ..Default::default()
        };
        let sub = build_subgraph(&g, &tg, &opts).unwrap();
        let profiles = Profiles::build(&g);
        for i in 0..6 {
            let node = NodeRef::user(i);
            let scores = da_scores(&tg, &profiles, node, &opts.da).unwrap();
            assert_eq!(sub.neighbors(node), &ids(&select_topk(&scores, 2).unwrap())[..]);
        }
    }

    #[test]
    fn unknown_strategy_is_a_config_error() {
        assert!(matches!("pagerank".parse::<Strategy>(), Err(Error::Config(_))));
        assert_eq!("1ord".parse::<Strategy>().unwrap(), Strategy::FirstOrder);
    }

    fn fixed_subgraph(users: Vec<Vec<(u32, f64)>>) -> SampledSubgraph {
        SampledSubgraph {
            strategy: Strategy::Da,
            k: 2,
            mode: SelectionMode::TopK,
            seed: 0,
            metric: Some(MetricTag::DaL1),
            users: NeighborLists::from_lists(users),
            items: NeighborLists::from_lists(vec![]),
        }
    }

    #[test]
    fn ans_and_mans_are_means() {
        let sub = fixed_subgraph(vec![vec![(1, 0.0), (2, 0.0)], vec![(0, 0.0)], vec![]]);
        let table = |a: NodeRef, b: NodeRef| {
            Ok(match (a.index, b.index) {
                (0, 1) => -0.1,
                (0, 2) => -0.3,
                (1, 0) => -0.5,
                _ => 0.0,
            })
        };
        assert!((ans(&sub, NodeRef::user(0), table).unwrap() + 0.2).abs() < 1e-15);
        assert_eq!(ans(&sub, NodeRef::user(1), table).unwrap(), -0.5);
        assert!(ans(&sub, NodeRef::user(2), table).is_err());
        let m = mans(&sub, table, NodeSet::Users).unwrap();
        assert!((m - (-0.2 - 0.5) / 2.0).abs() < 1e-15);
        assert!(mans(&sub, table, NodeSet::Items).is_err());
        assert_eq!(mans(&sub, |_, _| Ok(0.0), NodeSet::All).unwrap(), 0.0);
    }

    #[test]
    fn quality_decomposes_over_types() {
        let g = small_graph();
        let tg = translate_graph(&g, true);
        let sub = build_subgraph(&g, &tg, &SamplingOptions { k: 2, ..Default::default() }).unwrap();
        let q = neighborhood_quality(&sub, &Profiles::build(&g), &yardstick()).unwrap();
        let nu = q.per_node.iter().filter(|p| p.0.node_type == NodeType::USER).count() as f64;
        let ni = q.per_node.len() as f64 - nu;
        let combined = (q.users.unwrap() * nu + q.items.unwrap() * ni) / (nu + ni);
        assert!((combined - q.all).abs() < 1e-12);
        let mean: f64 = q.per_node.iter().map(|p| p.1).sum::<f64>() / q.per_node.len() as f64;
        assert!((mean - q.all).abs() < 1e-12);
    }

    #[test]
    fn subgraph_file_round_trip() {
        let g = small_graph();
        let tg = translate_graph(&g, true);
        let sub = build_subgraph(&g, &tg, &SamplingOptions { k: 3, seed: 9, ..Default::default() }).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        sub.write(f.path(), "dataset=small").unwrap();
        let (back, header) = SampledSubgraph::read(f.path()).unwrap();
        assert_eq!(back, sub);
        assert_eq!(header, vec!["dataset=small"]);
    }
}
