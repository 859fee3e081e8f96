//! Brute-force oracles and generators shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use slgcn::graph::{GraphBuilder, InteractionGraph, NodeRef, NodeType};
use slgcn::linalg::Matrix;
use slgcn::model::{AggregatedFeatures, HeadKind, Model, ModelConfig};
use slgcn::seed;
use slgcn::similarity::{
    da_scores, first_order_scores, random_walk_scores, second_order_scores, DaConfig, DaMetric, MissingSlice, Profiles, RelationWeights,
};

/// Edge as generated, before the graph sees it.
#[derive(Debug, Clone, Copy)]
pub struct RawEdge {
    pub a: NodeRef,
    pub b: NodeRef,
    pub relation: u16,
    pub weight: f64,
    pub positive: bool,
}

pub struct SmallGraph {
    pub graph: InteractionGraph,
    pub edges: Vec<RawEdge>,
    pub counts: Vec<usize>,
}

/// Random heterogeneous graph with at most 10 nodes: users, items and
/// optionally tags, some rated edges below the positive threshold.
pub fn small_graph(rng: &mut ChaCha8Rng) -> SmallGraph {
    let users = rng.gen_range(1..=4);
    let items = rng.gen_range(1..=4);
    let tags = rng.gen_range(0..=(10 - users - items).min(2));
    let rated = rng.gen_bool(0.5);
    let mut b = GraphBuilder::new();
    let interact = b.add_relation("interact", NodeType::USER, NodeType::ITEM).unwrap();
    b.ensure_nodes(NodeType::USER, users);
    b.ensure_nodes(NodeType::ITEM, items);
    let mut relations = vec![(interact, NodeType::USER, NodeType::ITEM)];
    let mut counts = vec![users, items];
    if tags > 0 {
        let tag = b.add_node_type("tag");
        b.ensure_nodes(tag, tags);
        counts.push(tags);
        relations.push((b.add_relation("user_tag", NodeType::USER, tag).unwrap(), NodeType::USER, tag));
        relations.push((b.add_relation("item_tag", NodeType::ITEM, tag).unwrap(), NodeType::ITEM, tag));
    }
    if rated {
        b.set_positive_threshold(Some(3.0));
    }
    let mut edges = Vec::new();
    for &(r, s, t) in &relations {
        for i in 0..counts[s.0 as usize] as u32 {
            for j in 0..counts[t.0 as usize] as u32 {
                if !rng.gen_bool(0.55) {
                    continue;
                }
                let weight = if rng.gen_bool(0.5) { rng.gen_range(1..=5) as f64 } else { rng.gen_range(0.1..3.0) };
                let rating = rated.then(|| rng.gen_range(1..=5) as f64);
                let (a, bn) = (NodeRef::new(s, i), NodeRef::new(t, j));
                b.add_interaction(a, bn, r, weight, rating).unwrap();
                edges.push(RawEdge {
                    a,
                    b: bn,
                    relation: r.0,
                    weight,
                    positive: rating.is_none_or(|x| x >= 3.0),
                });
            }
        }
    }
    SmallGraph {
        graph: b.build(),
        edges,
        counts,
    }
}

/// Positive incidence `(neighbor, relation, weight)` sorted by neighbor then
/// relation.
fn incidence(g: &SmallGraph, node: NodeRef) -> Vec<(NodeRef, u16, f64)> {
    let mut out: Vec<(NodeRef, u16, f64)> = g
        .edges
        .iter()
        .filter(|e| e.positive)
        .filter_map(|e| {
            if e.a == node {
                Some((e.b, e.relation, e.weight))
            } else if e.b == node {
                Some((e.a, e.relation, e.weight))
            } else {
                None
            }
        })
        .collect();
    out.sort_by_key(|&(n, r, _)| (n.node_type.0, n.index, r));
    out
}

/// Same-type peers of `x` reachable through one shared auxiliary node, with
/// the shared auxiliary nodes.
fn peers(g: &SmallGraph, x: NodeRef) -> BTreeMap<u32, BTreeSet<NodeRef>> {
    let t = x.node_type;
    let mut out: BTreeMap<u32, BTreeSet<NodeRef>> = BTreeMap::new();
    for (a, _, _) in incidence(g, x) {
        if a.node_type == t {
            continue;
        }
        for (y, _, _) in incidence(g, a) {
            if y.node_type == t && y != x {
                out.entry(y.index).or_default().insert(a);
            }
        }
    }
    out
}

/// Dense normalized distribution of `x` in slice (relation, other type).
fn dense_profile(g: &SmallGraph, x: NodeRef, relation: u16, other: NodeType) -> Option<Vec<f64>> {
    let mut v = vec![0.0; g.counts[other.0 as usize]];
    for (n, r, w) in incidence(g, x) {
        if r == relation && n.node_type == other {
            v[n.index as usize] += w;
        }
    }
    let total: f64 = v.iter().sum();
    (total > 0.0).then(|| v.iter().map(|w| w / total).collect())
}

fn dense_distance(metric: DaMetric, p: &[f64], q: &[f64]) -> f64 {
    match metric {
        DaMetric::L1 => p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum(),
        DaMetric::L2 => p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
        DaMetric::Kl { epsilon } => {
            let support: Vec<usize> = (0..p.len()).filter(|&k| p[k] > 0.0 || q[k] > 0.0).collect();
            let n = support.len() as f64;
            let pt: f64 = p.iter().sum::<f64>() + epsilon * n;
            let qt: f64 = q.iter().sum::<f64>() + epsilon * n;
            let d: f64 = support
                .iter()
                .map(|&k| {
                    let (a, b) = ((p[k] + epsilon) / pt, (q[k] + epsilon) / qt);
                    if a > 0.0 {
                        a * (a / b).ln()
                    } else {
                        0.0
                    }
                })
                .sum();
            d.max(0.0)
        }
    }
}

/// Slices of type `t`: (relation, other type) for relations touching `t`.
fn slices(g: &SmallGraph, t: NodeType) -> Vec<(u16, NodeType)> {
    g.graph
        .relations()
        .iter()
        .enumerate()
        .filter_map(|(r, rel)| {
            if rel.source == t {
                Some((r as u16, rel.target))
            } else if rel.target == t {
                Some((r as u16, rel.source))
            } else {
                None
            }
        })
        .collect()
}

pub fn brute_da(g: &SmallGraph, x: NodeRef, cfg: &DaConfig) -> Vec<(u32, f64)> {
    let t = x.node_type;
    let sl = slices(g, t);
    let w = 1.0 / sl.len() as f64;
    let mut out = Vec::new();
    for y in peers(g, x).into_keys() {
        let y = NodeRef::new(t, y);
        let (mut sum, mut active_w, mut active) = (0.0, 0.0, 0);
        for &(r, other) in &sl {
            match (dense_profile(g, x, r, other), dense_profile(g, y, r, other)) {
                (Some(p), Some(q)) => {
                    active += 1;
                    active_w += w;
                    sum += w * dense_distance(cfg.metric, &p, &q);
                }
                _ => {
                    if let MissingSlice::Penalty(d) = cfg.missing {
                        sum += w * d;
                        active_w += w;
                    }
                }
            }
        }
        if active > 0 {
            out.push((y.index, -(sum * (w * sl.len() as f64) / active_w)));
        }
    }
    out
}

pub fn brute_first_order(g: &SmallGraph, x: NodeRef) -> Vec<(u32, f64)> {
    let t = x.node_type;
    let own: Vec<(NodeRef, u16, f64)> = incidence(g, x).into_iter().filter(|e| e.0.node_type != t).collect();
    let own_total: f64 = own.iter().map(|e| e.2).sum();
    if own_total <= 0.0 {
        return Vec::new();
    }
    peers(g, x)
        .into_iter()
        .map(|(y, shared)| {
            let score = shared
                .iter()
                .map(|&a| {
                    let p: f64 = own.iter().filter(|e| e.0 == a).map(|e| e.2).sum::<f64>() / own_total;
                    let back: Vec<(NodeRef, u16, f64)> = incidence(g, a).into_iter().filter(|e| e.0.node_type == t).collect();
                    let total: f64 = back.iter().map(|e| e.2).sum();
                    let to_y: f64 = back.iter().filter(|e| e.0 == NodeRef::new(t, y)).map(|e| e.2).sum();
                    p * to_y / total
                })
                .sum();
            (y, score)
        })
        .collect()
}

pub fn brute_second_order(g: &SmallGraph, x: NodeRef) -> Vec<(u32, f64)> {
    peers(g, x).into_iter().map(|(y, s)| (y, s.len() as f64)).collect()
}

pub fn brute_walk(g: &SmallGraph, x: NodeRef, walks: usize, length: usize, master: u64) -> Vec<(u32, f64)> {
    let mut rng = seed::rng(master, &[seed::stream::WALK, x.node_type.0 as u64, x.index as u64]);
    let mut visits: BTreeMap<u32, u64> = BTreeMap::new();
    for _ in 0..walks {
        let mut cur = x;
        for _ in 0..length {
            let inc = incidence(g, cur);
            if inc.is_empty() {
                break;
            }
            let mut cum = Vec::with_capacity(inc.len());
            let mut acc = 0.0;
            for e in &inc {
                acc += e.2;
                cum.push(acc);
            }
            let r = rng.gen::<f64>() * acc;
            let pick = cum.iter().position(|&c| c > r).unwrap_or(inc.len() - 1);
            cur = inc[pick].0;
            if cur.node_type == x.node_type && cur != x {
                *visits.entry(cur.index).or_default() += 1;
            }
        }
    }
    let total: u64 = visits.values().sum();
    visits.into_iter().map(|(v, c)| (v, c as f64 / total as f64)).collect()
}

fn close(a: &[(u32, f64)], b: &[(u32, f64)], tol: f64) -> Result<(), String> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.0 != y.0) {
        return Err(format!("candidate sets differ: {a:?} vs {b:?}"));
    }
    for (x, y) in a.iter().zip(b) {
        if (x.1 - y.1).abs() > tol {
            return Err(format!("score of {} differs: {} vs {}", x.0, x.1, y.1));
        }
    }
    Ok(())
}

pub const SCORERS: [&str; 5] = ["da-kl", "da-l1", "da-l2", "first-order", "second-order"];

/// Compares every scorer against its brute-force oracle on every user and
/// item of `g`. Returns the number of scored candidates compared.
pub fn check_scorers(g: &SmallGraph, master: u64, tol: f64) -> Result<usize, String> {
    let tg = slgcn::graph::translate_graph(&g.graph, true);
    let profiles = Profiles::build(&g.graph);
    let mut compared = 0;
    let das = [
        ("da-kl", DaMetric::Kl { epsilon: 1e-3 }, MissingSlice::Skip),
        ("da-l1", DaMetric::L1, MissingSlice::Skip),
        ("da-l2", DaMetric::L2, MissingSlice::Penalty(1.0)),
    ];
    for t in [NodeType::USER, NodeType::ITEM] {
        for i in 0..g.counts[t.0 as usize] as u32 {
            let x = NodeRef::new(t, i);
            for (name, metric, missing) in das {
                let cfg = DaConfig {
                    metric,
                    weights: RelationWeights::uniform(),
                    missing,
                };
                let got = da_scores(&tg, &profiles, x, &cfg).map_err(|e| format!("{name} {x}: {e}"))?;
                close(&got, &brute_da(g, x, &cfg), tol).map_err(|e| format!("{name} {x}: {e}"))?;
                compared += got.len();
            }
            let first = first_order_scores(&tg, &g.graph, x);
            close(&first, &brute_first_order(g, x), tol).map_err(|e| format!("first-order {x}: {e}"))?;
            let second = second_order_scores(&tg, x);
            close(&second, &brute_second_order(g, x), tol).map_err(|e| format!("second-order {x}: {e}"))?;
            let walks = random_walk_scores(&g.graph, x, 200, 4, master).map_err(|e| e.to_string())?;
            close(&walks, &brute_walk(g, x, 200, 4, master), tol).map_err(|e| format!("random-walk {x}: {e}"))?;
            compared += first.len() + second.len() + walks.len();
        }
    }
    Ok(compared)
}

/// Fraction of correctly ordered positive/negative pairs, ties counting
/// one half.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut good, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if si > sj {
                    good += 1.0;
                } else if si == sj {
                    good += 0.5;
                }
            }
        }
    }
    good / pairs
}

/// Best mean score over every `k`-subset of `scores`.
pub fn best_subset_mean(scores: &[f64], k: usize) -> f64 {
    let n = scores.len();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let s: f64 = (0..n).filter(|&b| mask & (1 << b) != 0).map(|b| scores[b]).sum();
        best = best.max(s / k as f64);
    }
    best
}

fn small_inputs(users: usize, items: usize, dim: usize, rng: &mut ChaCha8Rng) -> AggregatedFeatures<f64> {
    let mut table = |rows: usize| Matrix::from_vec(rows, dim, (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let (u, i) = (table(users), table(items));
    AggregatedFeatures::from_tables(dim / 2, 1, u, i).unwrap()
}

/// Largest relative difference between analytic and central-difference
/// gradients over every parameter of a small model; entries where both are
/// below `floor` in magnitude are skipped.
pub fn gradient_error(head: HeadKind, trainable: bool, seed: u64, floor: f64) -> f64 {
    let mut rng = seed::rng(seed, &[99]);
    let inputs = small_inputs(4, 5, 6, &mut rng);
    let config = ModelConfig {
        input_dim: 6,
        repr_dim: 5,
        hidden: vec![7, 4],
        head,
        trainable_inputs: trainable,
    };
    let mut model = Model::<f64>::new(config, Some(&inputs), seed).unwrap();
    let users = [0, 1, 3, 2, 0, 3];
    let items = [4, 0, 2, 2, 1, 3];
    let labels = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
    let (_, grads) = model.loss_and_gradient(&inputs, &users, &items, &labels).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (k, g) in grads.iter().enumerate() {
        for e in 0..g.as_slice().len() {
            let orig = model.tensors_mut()[k].as_slice()[e];
            let mut eval = |x: f64| {
                model.tensors_mut()[k].as_mut_slice()[e] = x;
                model.loss_and_gradient(&inputs, &users, &items, &labels).unwrap().0
            };
            let numeric = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
            eval(orig);
            let analytic = g.as_slice()[e];
            let scale = numeric.abs().max(analytic.abs());
            if scale < floor {
                continue;
            }
            worst = worst.max((numeric - analytic).abs() / scale);
        }
    }
    worst
}

pub fn corpus_rng(i: u64) -> ChaCha8Rng {
    seed::rng(2024, &[i])
}
