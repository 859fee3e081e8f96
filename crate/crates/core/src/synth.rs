//! Seeded synthetic interaction data.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{GraphBuilder, InteractionGraph, NodeRef, NodeType};
use crate::seed;

/// Users and items split into clusters; users mostly pick items of their own
/// cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    pub per_user: usize,
    /// Probability that a pick ignores the cluster structure.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            users: 100,
            items: 50,
            clusters: 4,
            per_user: 8,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// Cluster of user or item `i`.
pub fn cluster_of(i: usize, clusters: usize) -> usize {
    i % clusters
}

fn add_pairs(pairs: &[(u32, u32, f64)], users: usize, items: usize) -> InteractionGraph {
    let mut b = GraphBuilder::new();
    let r = b
        .add_relation("interact", NodeType::USER, NodeType::ITEM)
        .expect("distinct types");
    b.ensure_nodes(NodeType::USER, users);
    b.ensure_nodes(NodeType::ITEM, items);
    for &(u, i, w) in pairs {
        b.add_interaction(NodeRef::user(u), NodeRef::item(i), r, w, None)
            .expect("registered nodes, positive weight");
    }
    b.build()
}

/// Planted-cluster graph with integer weights in `1..=5`.
pub fn planted_clusters(cfg: &PlantedConfig) -> Result<InteractionGraph> {
    if cfg.clusters == 0 || cfg.items < cfg.clusters || cfg.users == 0 {
        return Err(Error::invalid("need at least one user and one item per cluster"));
    }
    if cfg.per_user > cfg.items / cfg.clusters {
        return Err(Error::invalid("per_user exceeds the cluster size"));
    }
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::invalid("noise must lie in [0, 1]"));
    }
    let mut rng = seed::rng(cfg.seed, &[seed::stream::SYNTH]);
    let by_cluster: Vec<Vec<u32>> = (0..cfg.clusters)
        .map(|c| (0..cfg.items as u32).filter(|&i| cluster_of(i as usize, cfg.clusters) == c).collect())
        .collect();
    let mut pairs = Vec::new();
    for u in 0..cfg.users {
        let own = &by_cluster[cluster_of(u, cfg.clusters)];
        let mut chosen: Vec<u32> = Vec::with_capacity(cfg.per_user);
        while chosen.len() < cfg.per_user {
            let i = if rng.gen::<f64>() < cfg.noise {
                rng.gen_range(0..cfg.items as u32)
            } else {
                own[rng.gen_range(0..own.len())]
            };
            if !chosen.contains(&i) {
                chosen.push(i);
            }
        }
        for i in chosen {
            pairs.push((u as u32, i, rng.gen_range(1..=5) as f64));
        }
    }
    Ok(add_pairs(&pairs, cfg.users, cfg.items))
}

/// Shape of the user/artist listening dataset the surrogate imitates.
#[derive(Debug, Clone, PartialEq)]
pub struct ListeningShape {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub max_per_user: usize,
    pub genres: usize,
    /// Probability that a pick comes from the user's own genre.
    pub in_genre: f64,
    pub zipf_exponent: f64,
}

impl ListeningShape {
    /// 1,892 users, 17,632 artists, 86,769 listening pairs, at most 50
    /// artists per user.
    pub fn lastfm() -> Self {
        ListeningShape {
            users: 1892,
            items: 17_632,
            interactions: 86_769,
            max_per_user: 50,
            genres: 20,
            in_genre: 0.8,
            zipf_exponent: 1.0,
        }
    }
}

fn lognormal_weight(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; listen counts have median ~ e^5.5 with a heavy tail
    let (a, b): (f64, f64) = (rng.gen_range(f64::MIN_POSITIVE..1.0), rng.gen());
    let z = (-2.0 * a.ln()).sqrt() * (std::f64::consts::TAU * b).cos();
    (5.5 + 1.3 * z).exp().round().max(1.0)
}

/// Listening-count graph with the given shape: every item is listened to at
/// least once, per-user counts are capped, popularity is Zipf within each
/// genre and users favor one genre.
pub fn listening_surrogate(shape: &ListeningShape, seed: u64) -> Result<InteractionGraph> {
    let cap = shape.users * shape.max_per_user;
    if shape.interactions > cap || shape.interactions < shape.items || shape.genres == 0 {
        return Err(Error::invalid("interaction count incompatible with the shape"));
    }
    let mut rng = seed::rng(seed, &[seed::stream::SYNTH, 1]);
    // per-user quotas: start full and remove picks until the total fits
    let mut quota = vec![shape.max_per_user; shape.users];
    let mut excess = cap - shape.interactions;
    while excess > 0 {
        let u = rng.gen_range(0..shape.users);
        if quota[u] > 5 {
            quota[u] -= 1;
            excess -= 1;
        }
    }
    let genre_items: Vec<Vec<u32>> = (0..shape.genres)
        .map(|g| (0..shape.items as u32).filter(|&i| i as usize % shape.genres == g).collect())
        .collect();
    let genre_users: Vec<Vec<u32>> = (0..shape.genres)
        .map(|g| (0..shape.users as u32).filter(|&u| u as usize % shape.genres == g).collect())
        .collect();
    let zipf = |n: usize| WeightedIndex::new((1..=n).map(|r| 1.0 / (r as f64).powf(shape.zipf_exponent))).expect("positive weights");
    let genre_zipf: Vec<WeightedIndex<f64>> = genre_items.iter().map(|v| zipf(v.len())).collect();
    let global_zipf = zipf(shape.items);
    let mut picks: Vec<Vec<u32>> = vec![Vec::new(); shape.users];
    // coverage: each item goes to a user of its genre with room left
    let mut cursor = vec![0usize; shape.genres];
    for i in 0..shape.items as u32 {
        let g = i as usize % shape.genres;
        let users = &genre_users[g];
        let mut tries = 0;
        loop {
            let u = users[cursor[g] % users.len()] as usize;
            cursor[g] += 1 + rng.gen_range(0..3);
            if picks[u].len() < quota[u] {
                picks[u].push(i);
                break;
            }
            tries += 1;
            if tries > 4 * users.len() {
                return Err(Error::invalid("genre has no room left for coverage"));
            }
        }
    }
    for u in 0..shape.users {
        let g = u % shape.genres;
        while picks[u].len() < quota[u] {
            let i = if rng.gen::<f64>() < shape.in_genre {
                genre_items[g][genre_zipf[g].sample(&mut rng)]
            } else {
                global_zipf.sample(&mut rng) as u32
            };
            if !picks[u].contains(&i) {
                picks[u].push(i);
            }
        }
    }
    let mut pairs = Vec::with_capacity(shape.interactions);
    for (u, items) in picks.iter().enumerate() {
        for &i in items {
            pairs.push((u as u32, i, lognormal_weight(&mut rng)));
        }
    }
    Ok(add_pairs(&pairs, shape.users, shape.items))
}

/// Writes user-item edges as `userID<TAB>artistID<TAB>weight` with a header,
/// using external ids. Ratings, when present, are written as the weight
/// column's neighbor `rating`.
pub fn write_interactions(graph: &InteractionGraph, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let rated = graph.edges().iter().any(|e| e.rating.is_some());
    if rated {
        writeln!(w, "userID\titemID\tweight\trating").map_err(io)?;
    } else {
        writeln!(w, "userID\tartistID\tweight").map_err(io)?;
    }
    for e in graph.edges() {
        if e.source.node_type != NodeType::USER || e.target.node_type != NodeType::ITEM {
            continue;
        }
        let (u, i) = (graph.external_id(e.source), graph.external_id(e.target));
        match (rated, e.rating) {
            (true, Some(r)) => writeln!(w, "{u}\t{i}\t{}\t{r}", e.weight),
            (true, None) => writeln!(w, "{u}\t{i}\t{}\t", e.weight),
            _ => writeln!(w, "{u}\t{i}\t{}", e.weight),
        }
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
