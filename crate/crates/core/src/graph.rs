//! Heterogeneous interaction graph: loading, labeling, splitting and the
//! translation into user-user / item-item candidate relations.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeType(pub u16);

impl NodeType {
    pub const USER: NodeType = NodeType(0);
    pub const ITEM: NodeType = NodeType(1);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub node_type: NodeType,
    pub index: u32,
}

impl NodeRef {
    pub fn new(node_type: NodeType, index: u32) -> Self {
        NodeRef { node_type, index }
    }

    pub fn user(index: u32) -> Self {
        NodeRef::new(NodeType::USER, index)
    }

    pub fn item(index: u32) -> Self {
        NodeRef::new(NodeType::ITEM, index)
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.node_type.0, self.index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub name: String,
    pub source: NodeType,
    pub target: NodeType,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub source: NodeRef,
    pub target: NodeRef,
    pub relation: RelationId,
    pub weight: f64,
    pub rating: Option<f64>,
}

/// One entry of a node's incidence list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Incident {
    pub node: NodeRef,
    pub relation: RelationId,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct IdMap {
    ids: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdMap {
    fn intern(&mut self, id: &str) -> u32 {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len() as u32;
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }
}

/// Typed, weighted interaction store. Immutable once built.
///
/// Nodes of type [`NodeType::USER`] and [`NodeType::ITEM`] always exist;
/// further types are auxiliary (tags, brands, ...). Every node also has a
/// dense *global* id: the concatenation of the per-type index ranges in type
/// order, which is what the incidence lists are keyed by.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    type_names: Vec<String>,
    ids: Vec<IdMap>,
    relations: Vec<Relation>,
    edges: Vec<Edge>,
    positive_threshold: Option<f64>,
    type_offsets: Vec<usize>,
    inc_offsets: Vec<usize>,
    incidence: Vec<Incident>,
    positive_offsets: Vec<usize>,
    positive_incidence: Vec<Incident>,
}

impl InteractionGraph {
    pub fn user_count(&self) -> usize {
        self.node_count(NodeType::USER)
    }

    pub fn item_count(&self) -> usize {
        self.node_count(NodeType::ITEM)
    }

    pub fn node_count(&self, t: NodeType) -> usize {
        self.ids.get(t.0 as usize).map_or(0, |m| m.ids.len())
    }

    pub fn total_nodes(&self) -> usize {
        *self.type_offsets.last().unwrap_or(&0)
    }

    pub fn node_types(&self) -> impl Iterator<Item = NodeType> + '_ {
        (0..self.type_names.len()).map(|t| NodeType(t as u16))
    }

    pub fn type_name(&self, t: NodeType) -> &str {
        &self.type_names[t.0 as usize]
    }

    pub fn type_by_name(&self, name: &str) -> Option<NodeType> {
        self.type_names
            .iter()
            .position(|n| n == name)
            .map(|i| NodeType(i as u16))
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn relation(&self, r: RelationId) -> &Relation {
        &self.relations[r.0 as usize]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn positive_threshold(&self) -> Option<f64> {
        self.positive_threshold
    }

    /// Whether an edge expresses positive preference: unrated edges always do,
    /// rated edges only at or above the configured threshold.
    pub fn is_positive(&self, e: &Edge) -> bool {
        match (self.positive_threshold, e.rating) {
            (Some(t), Some(r)) => r >= t,
            _ => true,
        }
    }

    pub fn external_id(&self, node: NodeRef) -> &str {
        &self.ids[node.node_type.0 as usize].ids[node.index as usize]
    }

    pub fn lookup(&self, t: NodeType, id: &str) -> Option<NodeRef> {
        self.ids
            .get(t.0 as usize)?
            .index
            .get(id)
            .map(|&i| NodeRef::new(t, i))
    }

    #[inline]
    pub fn global_id(&self, node: NodeRef) -> usize {
        self.type_offsets[node.node_type.0 as usize] + node.index as usize
    }

    pub fn node_at(&self, global: usize) -> NodeRef {
        let t = self.type_offsets.partition_point(|&o| o <= global) - 1;
        NodeRef::new(NodeType(t as u16), (global - self.type_offsets[t]) as u32)
    }

    /// All edges touching `node` in either direction, sorted by neighbor.
    pub fn incident(&self, node: NodeRef) -> &[Incident] {
        let g = self.global_id(node);
        &self.incidence[self.inc_offsets[g]..self.inc_offsets[g + 1]]
    }

    /// Like [`incident`](Self::incident) but restricted to positive edges.
    pub fn positive_incident(&self, node: NodeRef) -> &[Incident] {
        let g = self.global_id(node);
        &self.positive_incidence[self.positive_offsets[g]..self.positive_offsets[g + 1]]
    }

    pub fn neighbors(&self, node: NodeRef, positive_only: bool) -> &[Incident] {
        if positive_only {
            self.positive_incident(node)
        } else {
            self.incident(node)
        }
    }

    /// Returns a copy whose positive-preference threshold is `threshold`.
    pub fn with_threshold(&self, threshold: Option<f64>) -> InteractionGraph {
        let mut g = self.clone();
        g.positive_threshold = threshold;
        g.rebuild_index();
        g
    }

    /// Returns a copy with the same nodes and only the edges `keep` accepts.
    pub fn filter_edges(&self, keep: impl Fn(&Edge) -> bool) -> InteractionGraph {
        let mut g = self.clone();
        g.edges.retain(|e| keep(e));
        g.rebuild_index();
        g
    }

    fn rebuild_index(&mut self) {
        let mut offsets = vec![0usize];
        for m in &self.ids {
            offsets.push(offsets.last().unwrap() + m.ids.len());
        }
        self.type_offsets = offsets;
        let (o, i) = self.build_incidence(false);
        self.inc_offsets = o;
        self.incidence = i;
        let (o, i) = self.build_incidence(true);
        self.positive_offsets = o;
        self.positive_incidence = i;
    }

    fn build_incidence(&self, positive_only: bool) -> (Vec<usize>, Vec<Incident>) {
        let n = self.total_nodes();
        let mut degree = vec![0usize; n];
        let kept: Vec<&Edge> = self
            .edges
            .iter()
            .filter(|e| !positive_only || self.is_positive(e))
            .collect();
        for e in &kept {
            degree[self.global_id(e.source)] += 1;
            degree[self.global_id(e.target)] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let placeholder = Incident {
            node: NodeRef::user(0),
            relation: RelationId(0),
            weight: 0.0,
        };
        let mut list = vec![placeholder; *offsets.last().unwrap()];
        let mut fill = offsets.clone();
        for e in kept {
            let (s, t) = (self.global_id(e.source), self.global_id(e.target));
            list[fill[s]] = Incident {
                node: e.target,
                relation: e.relation,
                weight: e.weight,
            };
            fill[s] += 1;
            list[fill[t]] = Incident {
                node: e.source,
                relation: e.relation,
                weight: e.weight,
            };
            fill[t] += 1;
        }
        for g in 0..n {
            list[offsets[g]..offsets[g + 1]].sort_by_key(|inc| (inc.node, inc.relation));
        }
        (offsets, list)
    }
}

/// Accumulates interactions; duplicates of the same (source, target,
/// relation) add their weights.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    type_names: Vec<String>,
    ids: Vec<IdMap>,
    relations: Vec<Relation>,
    edges: HashMap<(NodeRef, NodeRef, RelationId), (f64, Option<f64>)>,
    positive_threshold: Option<f64>,
}

impl Default for GraphBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl GraphBuilder {
    /// A builder with the `user` and `item` node types registered.
    pub fn new() -> Self {
        GraphBuilder {
            type_names: vec!["user".into(), "item".into()],
            ids: vec![IdMap::default(), IdMap::default()],
            relations: Vec::new(),
            edges: HashMap::new(),
            positive_threshold: None,
        }
    }

    pub fn add_node_type(&mut self, name: &str) -> NodeType {
        if let Some(i) = self.type_names.iter().position(|n| n == name) {
            return NodeType(i as u16);
        }
        self.type_names.push(name.to_owned());
        self.ids.push(IdMap::default());
        NodeType((self.type_names.len() - 1) as u16)
    }

    pub fn add_relation(&mut self, name: &str, source: NodeType, target: NodeType) -> Result<RelationId> {
        if source == target {
            return Err(Error::invalid(format!(
                "relation `{name}` would connect a node type to itself"
            )));
        }
        if let Some(i) = self.relations.iter().position(|r| r.name == name) {
            return Ok(RelationId(i as u16));
        }
        self.relations.push(Relation {
            name: name.to_owned(),
            source,
            target,
        });
        Ok(RelationId((self.relations.len() - 1) as u16))
    }

    pub fn relation_by_name(&self, name: &str) -> Option<RelationId> {
        self.relations
            .iter()
            .position(|r| r.name == name)
            .map(|i| RelationId(i as u16))
    }

    pub fn node(&mut self, t: NodeType, id: &str) -> NodeRef {
        NodeRef::new(t, self.ids[t.0 as usize].intern(id))
    }

    /// Registers nodes with ids `"0".."count-1"`, handy for synthetic graphs.
    pub fn ensure_nodes(&mut self, t: NodeType, count: usize) {
        for i in self.ids[t.0 as usize].ids.len()..count {
            self.ids[t.0 as usize].intern(&i.to_string());
        }
    }

    pub fn set_positive_threshold(&mut self, threshold: Option<f64>) {
        self.positive_threshold = threshold;
    }

    pub fn add_interaction(
        &mut self,
        source: NodeRef,
        target: NodeRef,
        relation: RelationId,
        weight: f64,
        rating: Option<f64>,
    ) -> Result<()> {
        let rel = self
            .relations
            .get(relation.0 as usize)
            .ok_or_else(|| Error::UnknownRelation(format!("#{}", relation.0)))?;
        if rel.source != source.node_type || rel.target != target.node_type {
            return Err(Error::invalid(format!(
                "relation `{}` does not connect {} to {}",
                rel.name, source, target
            )));
        }
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::invalid(format!("edge weight must be positive, got {weight}")));
        }
        for n in [source, target] {
            if n.index as usize >= self.ids[n.node_type.0 as usize].ids.len() {
                return Err(Error::invalid(format!("node {n} is not registered")));
            }
        }
        let entry = self
            .edges
            .entry((source, target, relation))
            .or_insert((0.0, None));
        entry.0 += weight;
        if let Some(r) = rating {
            if let Some(old) = entry.1 {
                if old != r {
                    warn!(
                        "contradictory ratings {old} and {r} for {source} -> {target}; keeping the last one"
                    );
                }
            }
            entry.1 = Some(r);
        }
        Ok(())
    }

    pub fn build(self) -> InteractionGraph {
        let mut edges: Vec<Edge> = self
            .edges
            .into_iter()
            .map(|((source, target, relation), (weight, rating))| Edge {
                source,
                target,
                relation,
                weight,
                rating,
            })
            .collect();
        edges.sort_by_key(|e| (e.relation, e.source, e.target));
        let mut g = InteractionGraph {
            type_names: self.type_names,
            ids: self.ids,
            relations: self.relations,
            edges,
            positive_threshold: self.positive_threshold,
            type_offsets: Vec::new(),
            inc_offsets: Vec::new(),
            incidence: Vec::new(),
            positive_offsets: Vec::new(),
            positive_incidence: Vec::new(),
        };
        g.rebuild_index();
        g
    }
}

/// Column layout of an interaction file.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    /// `None` detects tab or comma per line.
    pub delimiter: Option<char>,
    /// `None` treats the first line as a header when one of its numeric
    /// columns fails to parse.
    pub has_header: Option<bool>,
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: Option<usize>,
    pub weight_col: Option<usize>,
    pub relation_col: Option<usize>,
    /// Registered relations as (relation name, target node type name). The
    /// first entry is used when there is no relation column.
    pub relations: Vec<(String, String)>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            delimiter: None,
            has_header: None,
            user_col: 0,
            item_col: 1,
            rating_col: None,
            weight_col: None,
            relation_col: None,
            relations: vec![("interact".into(), "item".into())],
        }
    }
}

fn split_line(line: &str, delimiter: Option<char>) -> Vec<&str> {
    let d = delimiter.unwrap_or(if line.contains('\t') { '\t' } else { ',' });
    line.split(d).map(str::trim).collect()
}

/// Reads an interaction file. One edge per distinct (user, target, relation)
/// with summed weights; ids are mapped to dense indices in order of first
/// appearance.
pub fn load_interactions(path: &Path, schema: &Schema) -> Result<InteractionGraph> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut b = GraphBuilder::new();
    if schema.relations.is_empty() {
        return Err(Error::Config("schema registers no relations".into()));
    }
    for (name, target) in &schema.relations {
        let t = b.add_node_type(target);
        if t == NodeType::USER {
            return Err(Error::Config(format!("relation `{name}` targets users")));
        }
        b.add_relation(name, NodeType::USER, t)?;
    }

    let numeric_cols: Vec<usize> = [schema.rating_col, schema.weight_col]
        .into_iter()
        .flatten()
        .collect();
    let needed = [
        Some(schema.user_col),
        Some(schema.item_col),
        schema.rating_col,
        schema.weight_col,
        schema.relation_col,
    ]
    .into_iter()
    .flatten()
    .max()
    .unwrap_or(0);

    let mut first = true;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let cols = split_line(trimmed, schema.delimiter);
        if first {
            first = false;
            let header = match schema.has_header {
                Some(h) => h,
                None => numeric_cols
                    .iter()
                    .any(|&c| cols.get(c).is_some_and(|v| v.parse::<f64>().is_err())),
            };
            if header {
                continue;
            }
        }
        if cols.len() <= needed {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected at least {} columns, found {}", needed + 1, cols.len()),
            ));
        }
        let num = |c: usize, what: &str| -> Result<f64> {
            cols[c]
                .parse::<f64>()
                .map_err(|_| Error::parse(path, lineno, format!("{what} `{}` is not a number", cols[c])))
        };
        let rating = schema.rating_col.map(|c| num(c, "rating")).transpose()?;
        let weight = match schema.weight_col {
            Some(c) => num(c, "weight")?,
            None => 1.0,
        };
        if !(weight > 0.0) {
            return Err(Error::parse(path, lineno, format!("weight {weight} is not positive")));
        }
        let relation = match schema.relation_col {
            Some(c) => b
                .relation_by_name(cols[c])
                .ok_or_else(|| Error::UnknownRelation(cols[c].to_owned()))?,
            None => RelationId(0),
        };
        let target_type = b.relations[relation.0 as usize].target;
        if cols[schema.user_col].is_empty() || cols[schema.item_col].is_empty() {
            return Err(Error::parse(path, lineno, "empty id"));
        }
        let u = b.node(NodeType::USER, cols[schema.user_col]);
        let t = b.node(target_type, cols[schema.item_col]);
        b.add_interaction(u, t, relation, weight, rating)?;
    }
    Ok(b.build())
}

/// Writes the id <-> index mapping of one node type as `index<TAB>id` lines.
pub fn write_id_sidecar(graph: &InteractionGraph, t: NodeType, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (i, id) in graph.ids[t.0 as usize].ids.iter().enumerate() {
        writeln!(w, "{i}\t{id}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_id_sidecar(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let (idx, id) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, n + 1, "expected `index<TAB>id`"))?;
        if idx.parse::<usize>().ok() != Some(out.len()) {
            return Err(Error::parse(path, n + 1, "indices must be dense and ascending"));
        }
        out.push(id.to_owned());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledInteraction {
    pub user: u32,
    pub item: u32,
    pub positive: bool,
}

impl LabeledInteraction {
    pub fn label(&self) -> u8 {
        self.positive as u8
    }
}

/// One labeled entry per (user, item) pair of the user -> item relations.
///
/// With a threshold every such edge must carry a rating; ratings at or above
/// it are positive. Without one every observed pair is positive.
pub fn binarize_ratings(graph: &InteractionGraph, threshold: Option<f64>) -> Result<Vec<LabeledInteraction>> {
    let mut labels: HashMap<(u32, u32), bool> = HashMap::new();
    for e in graph.edges() {
        if e.source.node_type != NodeType::USER || e.target.node_type != NodeType::ITEM {
            continue;
        }
        let positive = match threshold {
            Some(t) => {
                let r = e.rating.ok_or_else(|| {
                    Error::NoInteractions(format!(
                        "rating on edge {} -> {} (threshold mode needs ratings)",
                        graph.external_id(e.source),
                        graph.external_id(e.target)
                    ))
                })?;
                r >= t
            }
            None => true,
        };
        let slot = labels.entry((e.source.index, e.target.index)).or_insert(false);
        *slot |= positive;
    }
    let mut out: Vec<LabeledInteraction> = labels
        .into_iter()
        .map(|((user, item), positive)| LabeledInteraction { user, item, positive })
        .collect();
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledInteraction>,
    pub validation: Vec<LabeledInteraction>,
    pub test: Vec<LabeledInteraction>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn iter_tagged(&self) -> impl Iterator<Item = (SplitTag, &LabeledInteraction)> {
        self.train
            .iter()
            .map(|l| (SplitTag::Train, l))
            .chain(self.validation.iter().map(|l| (SplitTag::Validation, l)))
            .chain(self.test.iter().map(|l| (SplitTag::Test, l)))
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `user_index item_index label split_tag` lines.
    pub fn write_manifest(&self, path: &Path, header: &str) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        for h in header.lines() {
            writeln!(w, "# {h}").map_err(io)?;
        }
        writeln!(w, "# seed={}", self.seed).map_err(io)?;
        for (tag, l) in self.iter_tagged() {
            writeln!(w, "{} {} {} {}", l.user, l.item, l.label(), tag.as_str()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_manifest(path: &Path) -> Result<(DatasetSplit, Vec<String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut split = DatasetSplit {
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
            seed: 0,
        };
        let mut header = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if let Some(h) = line.strip_prefix("# ") {
                if let Some(s) = h.strip_prefix("seed=") {
                    split.seed = s
                        .parse()
                        .map_err(|_| Error::parse(path, n + 1, "bad seed"))?;
                } else {
                    header.push(h.to_owned());
                }
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::parse(path, n + 1, "expected `user item label split`"));
            }
            let bad = |what: &str| Error::parse(path, n + 1, format!("bad {what}"));
            let l = LabeledInteraction {
                user: f[0].parse().map_err(|_| bad("user index"))?,
                item: f[1].parse().map_err(|_| bad("item index"))?,
                positive: match f[2] {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad("label")),
                },
            };
            match f[3] {
                "train" => split.train.push(l),
                "validation" => split.validation.push(l),
                "test" => split.test.push(l),
                _ => return Err(bad("split tag")),
            }
        }
        Ok((split, header))
    }
}

/// Uniformly random split of the labeled pairs. Sizes are the rounded ratio
/// shares of train and validation; test takes the remainder.
pub fn split_dataset(labeled: &[LabeledInteraction], ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
    let r = [ratios.train, ratios.validation, ratios.test];
    if r.iter().any(|&x| !(x >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split ratios must be non-negative and sum to 1, got {r:?}"
        )));
    }
    if labeled.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 labeled records to split, got {}",
            labeled.len()
        )));
    }
    let mut pool = labeled.to_vec();
    pool.sort();
    let mut rng = seed::rng(seed, &[seed::stream::SPLIT]);
    pool.shuffle(&mut rng);

    let n = pool.len() as f64;
    let n_train = (n * ratios.train).round() as usize;
    let n_val = ((n * ratios.validation).round() as usize).min(pool.len() - n_train);
    let test = pool.split_off(n_train + n_val);
    let validation = pool.split_off(n_train);
    Ok(DatasetSplit {
        train: pool,
        validation,
        test,
        seed,
    })
}

/// Per-node candidate lists of one homogeneous node type, in CSR form.
///
/// For node `u`, candidate `v` appears iff the two share at least one
/// neighbor of another type; the shared neighbors are kept per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateAdjacency {
    pub node_type: NodeType,
    offsets: Vec<usize>,
    candidates: Vec<u32>,
    shared_offsets: Vec<usize>,
    shared: Vec<NodeRef>,
}

impl CandidateAdjacency {
    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn candidates(&self, index: u32) -> &[u32] {
        let i = index as usize;
        &self.candidates[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Shared auxiliary neighbors for each candidate of `index`, parallel to
    /// [`candidates`](Self::candidates).
    pub fn shared_lists(&self, index: u32) -> impl Iterator<Item = (u32, &[NodeRef])> + '_ {
        let i = index as usize;
        (self.offsets[i]..self.offsets[i + 1]).map(move |slot| {
            (
                self.candidates[slot],
                &self.shared[self.shared_offsets[slot]..self.shared_offsets[slot + 1]],
            )
        })
    }

    pub fn shared_with(&self, index: u32, other: u32) -> Option<&[NodeRef]> {
        let i = index as usize;
        let range = self.offsets[i]..self.offsets[i + 1];
        let pos = self.candidates[range.clone()].binary_search(&other).ok()?;
        let slot = range.start + pos;
        Some(&self.shared[self.shared_offsets[slot]..self.shared_offsets[slot + 1]])
    }

    pub fn pair_count(&self) -> usize {
        self.candidates.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslatedGraph {
    pub users: CandidateAdjacency,
    pub items: CandidateAdjacency,
    pub positive_only: bool,
}

impl TranslatedGraph {
    pub fn of_type(&self, t: NodeType) -> &CandidateAdjacency {
        if t == NodeType::USER {
            &self.users
        } else {
            &self.items
        }
    }
}

fn translate_type(graph: &InteractionGraph, t: NodeType, positive_only: bool) -> CandidateAdjacency {
    let n = graph.node_count(t);
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut candidates = Vec::new();
    let mut shared_offsets = vec![0usize];
    let mut shared = Vec::new();
    let mut pairs: Vec<(u32, NodeRef)> = Vec::new();

    for u in 0..n as u32 {
        let me = NodeRef::new(t, u);
        pairs.clear();
        let mut last_aux = None;
        for inc in graph.neighbors(me, positive_only) {
            let aux = inc.node;
            // A node can reach the same auxiliary node through two relations.
            if aux.node_type == t || last_aux == Some(aux) {
                continue;
            }
            last_aux = Some(aux);
            let mut last_peer = None;
            for back in graph.neighbors(aux, positive_only) {
                let v = back.node;
                if v.node_type == t && v != me && last_peer != Some(v) {
                    pairs.push((v.index, aux));
                    last_peer = Some(v);
                }
            }
        }
        pairs.sort_unstable();
        let mut i = 0;
        while i < pairs.len() {
            let v = pairs[i].0;
            candidates.push(v);
            while i < pairs.len() && pairs[i].0 == v {
                shared.push(pairs[i].1);
                i += 1;
            }
            shared_offsets.push(shared.len());
        }
        offsets.push(candidates.len());
    }
    CandidateAdjacency {
        node_type: t,
        offsets,
        candidates,
        shared_offsets,
        shared,
    }
}

/// Rewrites heterogeneous paths into user-user and item-item candidate
/// relations through shared neighbors of other types.
pub fn translate_graph(graph: &InteractionGraph, positive_only: bool) -> TranslatedGraph {
    TranslatedGraph {
        users: translate_type(graph, NodeType::USER, positive_only),
        items: translate_type(graph, NodeType::ITEM, positive_only),
        positive_only,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn bipartite(users: usize, items: usize, edges: &[(u32, u32)]) -> InteractionGraph {
        let mut b = GraphBuilder::new();
        let r = b.add_relation("interact", NodeType::USER, NodeType::ITEM).unwrap();
        b.ensure_nodes(NodeType::USER, users);
        b.ensure_nodes(NodeType::ITEM, items);
        for &(u, i) in edges {
            b.add_interaction(NodeRef::user(u), NodeRef::item(i), r, 1.0, None)
                .unwrap();
        }
        b.build()
    }

    #[test]
    fn load_accumulates_duplicate_records() {
        let f = write_tmp("u1\ti1\nu1\ti1\nu1\ti2\n");
        let g = load_interactions(f.path(), &Schema::default()).unwrap();
        assert_eq!((g.user_count(), g.item_count()), (1, 2));
        let w: Vec<(String, f64)> = g
            .edges()
            .iter()
            .map(|e| (g.external_id(e.target).to_owned(), e.weight))
            .collect();
        assert_eq!(w, vec![("i1".to_owned(), 2.0), ("i2".to_owned(), 1.0)]);
    }

    #[test]
    fn load_empty_file_gives_empty_graph() {
        let f = write_tmp("");
        let g = load_interactions(f.path(), &Schema::default()).unwrap();
        assert_eq!((g.user_count(), g.item_count(), g.edges().len()), (0, 0, 0));
    }

    #[test]
    fn load_reports_malformed_line_number() {
        let f = write_tmp("user,item,rating\nu1,i1,4\nu2,i2,four\n");
        let schema = Schema {
            rating_col: Some(2),
            ..Schema::default()
        };
        match load_interactions(f.path(), &schema) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_unknown_relation() {
        let f = write_tmp("u1,i1,click\nu1,t1,follow\n");
        let schema = Schema {
            relation_col: Some(2),
            relations: vec![("click".into(), "item".into())],
            ..Schema::default()
        };
        assert!(matches!(
            load_interactions(f.path(), &schema),
            Err(Error::UnknownRelation(r)) if r == "follow"
        ));
    }

    #[test]
    fn load_keeps_last_contradictory_rating() {
        let f = write_tmp("u1,i1,2\nu1,i1,5\n");
        let schema = Schema {
            rating_col: Some(2),
            has_header: Some(false),
            ..Schema::default()
        };
        let g = load_interactions(f.path(), &schema).unwrap();
        assert_eq!(g.edges()[0].rating, Some(5.0));
        assert_eq!(g.edges()[0].weight, 2.0);
    }

    #[test]
    fn load_handles_auxiliary_relations() {
        let f = write_tmp("u1\ta\tlisten\nu1\trock\ttag\nu2\trock\ttag\n");
        let schema = Schema {
            relation_col: Some(2),
            relations: vec![("listen".into(), "item".into()), ("tag".into(), "tag".into())],
            ..Schema::default()
        };
        let g = load_interactions(f.path(), &schema).unwrap();
        let tag = g.type_by_name("tag").unwrap();
        assert_eq!((g.user_count(), g.item_count(), g.node_count(tag)), (2, 1, 1));
        let tg = translate_graph(&g, true);
        assert_eq!(tg.users.candidates(0), &[1]);
    }

    #[test]
    fn loading_twice_gives_equal_graphs() {
        let f = write_tmp("a,x\nb,y\na,y\nc,x\n");
        let g1 = load_interactions(f.path(), &Schema::default()).unwrap();
        let g2 = load_interactions(f.path(), &Schema::default()).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn binarize_threshold_is_inclusive() {
        let mut b = GraphBuilder::new();
        let r = b.add_relation("rate", NodeType::USER, NodeType::ITEM).unwrap();
        b.ensure_nodes(NodeType::USER, 1);
        b.ensure_nodes(NodeType::ITEM, 3);
        for (i, rating) in [(0, 4.0), (1, 3.0), (2, 5.0)] {
            b.add_interaction(NodeRef::user(0), NodeRef::item(i), r, 1.0, Some(rating))
                .unwrap();
        }
        let g = b.build();
        let labels: Vec<u8> = binarize_ratings(&g, Some(4.0))
            .unwrap()
            .iter()
            .map(|l| l.label())
            .collect();
        assert_eq!(labels, vec![1, 0, 1]);

        let all_at_threshold = binarize_ratings(&g, Some(3.0)).unwrap();
        assert!(all_at_threshold.iter().all(|l| l.positive));
        assert_eq!(all_at_threshold.len(), g.edges().len());
    }

    #[test]
    fn binarize_requires_ratings_in_threshold_mode() {
        let g = bipartite(1, 1, &[(0, 0)]);
        assert!(binarize_ratings(&g, Some(4.0)).is_err());
        assert!(binarize_ratings(&g, None).unwrap()[0].positive);
    }

    fn records(n: u32) -> Vec<LabeledInteraction> {
        (0..n)
            .map(|i| LabeledInteraction {
                user: i,
                item: i * 3,
                positive: true,
            })
            .collect()
    }

    #[test]
    fn split_sizes_follow_rounded_ratios() {
        let s = split_dataset(&records(10), SplitRatios::default(), 7).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn split_is_deterministic_and_partitions_input() {
        let recs = records(57);
        let a = split_dataset(&recs, SplitRatios::default(), 7).unwrap();
        let b = split_dataset(&recs, SplitRatios::default(), 7).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<_> = a.iter_tagged().map(|(_, l)| *l).collect();
        all.sort();
        assert_eq!(all, recs);
        let c = split_dataset(&recs, SplitRatios::default(), 8).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn split_allows_an_empty_test_share() {
        let r = SplitRatios {
            train: 0.5,
            validation: 0.5,
            test: 0.0,
        };
        let s = split_dataset(&records(10), r, 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (5, 5, 0));
    }

    #[test]
    fn split_rejects_tiny_inputs_and_bad_ratios() {
        assert!(split_dataset(&records(2), SplitRatios::default(), 1).is_err());
        let bad = SplitRatios {
            train: 0.9,
            validation: 0.2,
            test: 0.0,
        };
        assert!(split_dataset(&records(10), bad, 1).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let s = split_dataset(&records(20), SplitRatios::default(), 3).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        s.write_manifest(f.path(), "dataset=abc").unwrap();
        let (back, header) = DatasetSplit::read_manifest(f.path()).unwrap();
        assert_eq!(back, s);
        assert_eq!(header, vec!["dataset=abc".to_owned()]);
    }

    #[test]
    fn id_sidecar_round_trip() {
        let f = write_tmp("alice,x\nbob,y\n");
        let g = load_interactions(f.path(), &Schema::default()).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_id_sidecar(&g, NodeType::USER, out.path()).unwrap();
        assert_eq!(read_id_sidecar(out.path()).unwrap(), vec!["alice", "bob"]);
    }

    #[test]
    fn translation_links_users_through_shared_items() {
        // u0 -> {A, B}, u1 -> {B, C}
        let g = bipartite(2, 3, &[(0, 0), (0, 1), (1, 1), (1, 2)]);
        let tg = translate_graph(&g, true);
        assert_eq!(tg.users.candidates(0), &[1]);
        assert_eq!(tg.users.shared_with(0, 1).unwrap(), &[NodeRef::item(1)]);
        // items A and C are not linked, B links to both
        assert_eq!(tg.items.candidates(0), &[1]);
        assert_eq!(tg.items.candidates(1), &[0, 2]);
    }

    #[test]
    fn translation_skips_disjoint_supports() {
        let g = bipartite(2, 2, &[(0, 0), (1, 1)]);
        let tg = translate_graph(&g, true);
        assert!(tg.users.candidates(0).is_empty());
        assert!(tg.users.candidates(1).is_empty());
    }

    #[test]
    fn three_users_on_one_item_each_see_two_candidates() {
        let g = bipartite(3, 1, &[(0, 0), (1, 0), (2, 0)]);
        let tg = translate_graph(&g, true);
        for u in 0..3 {
            assert_eq!(tg.users.candidates(u).len(), 2);
            assert!(!tg.users.candidates(u).contains(&u));
        }
    }

    #[test]
    fn positive_only_translation_ignores_low_ratings() {
        let mut b = GraphBuilder::new();
        let r = b.add_relation("rate", NodeType::USER, NodeType::ITEM).unwrap();
        b.ensure_nodes(NodeType::USER, 2);
        b.ensure_nodes(NodeType::ITEM, 1);
        b.set_positive_threshold(Some(4.0));
        b.add_interaction(NodeRef::user(0), NodeRef::item(0), r, 1.0, Some(5.0))
            .unwrap();
        b.add_interaction(NodeRef::user(1), NodeRef::item(0), r, 1.0, Some(2.0))
            .unwrap();
        let g = b.build();
        assert!(translate_graph(&g, true).users.candidates(0).is_empty());
        assert_eq!(translate_graph(&g, false).users.candidates(0), &[1]);
    }

    #[test]
    fn global_ids_round_trip() {
        let g = bipartite(3, 4, &[(0, 0)]);
        for gid in 0..g.total_nodes() {
            assert_eq!(g.global_id(g.node_at(gid)), gid);
        }
        assert_eq!(g.node_at(3), NodeRef::item(0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn translation_is_symmetric(edges in proptest::collection::vec((0u32..8, 0u32..6), 0..30)) {
                let g = bipartite(8, 6, &edges);
                let tg = translate_graph(&g, true);
                for adj in [&tg.users, &tg.items] {
                    for u in 0..adj.node_count() as u32 {
                        for &v in adj.candidates(u) {
                            prop_assert!(v != u);
                            prop_assert!(adj.candidates(v).contains(&u));
                            prop_assert_eq!(adj.shared_with(u, v), adj.shared_with(v, u));
                        }
                    }
                }
            }
        }
    }
}
