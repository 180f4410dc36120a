//! Discrete attributed graphs, datasets, per-class statistics, and the
//! line-delimited serialization format.
//!
//! A [`Graph`] is immutable after construction and stores undirected edges in
//! canonical order (endpoints sorted within a pair, pairs sorted
//! lexicographically), so two graphs with the same structure compare and
//! serialize identically. [`ContinuousGraph`] is the dense relaxed encoding
//! consumed by the neural models: an `[n, n, channels]` adjacency tensor whose
//! last axis is a categorical distribution per node pair (channel 0 meaning
//! "no edge") and an `[n, node_categories]` feature matrix.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Version tag written into every serialized record.
pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance when checking that a relaxed tensor slot is exactly one-hot.
const ONE_HOT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    EmptyGraph,
    #[error("edge ({u}, {v}) references a node outside 0..{node_count}")]
    InvalidEdge { u: usize, v: usize, node_count: usize },
    #[error("self-loop on node {node} is not allowed")]
    SelfLoop { node: usize },
    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: usize, v: usize },
    #[error("expected {expected} {what} labels, got {actual}")]
    LabelCount { what: &'static str, expected: usize, actual: usize },
    #[error("{what} index {index} out of range 0..{limit}")]
    CategoryRange { what: &'static str, index: usize, limit: usize },
    #[error("class {class} needs at least 2 graphs for statistics, found {count}")]
    InsufficientData { class: usize, count: usize },
    #[error("graph with {node_count} nodes does not fit into n_max = {n_max}")]
    TooLarge { node_count: usize, n_max: usize },
    #[error("invalid dense encoding: {0}")]
    Encoding(String),
    #[error("invalid tensor shape: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unsupported schema version {found}, expected {SCHEMA_VERSION}")]
    UnsupportedSchema { found: u32 },
}

/// An undirected attributed graph with a class label.
///
/// Node labels are category indices; edge labels are optional category
/// indices (datasets without edge categories leave them out entirely).
/// `motif_nodes` is bookkeeping for synthetic datasets that embed a known
/// subgraph: the indices of the nodes making up that subgraph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRecord", into = "GraphRecord")]
pub struct Graph {
    node_labels: Vec<usize>,
    edges: Vec<(usize, usize)>,
    edge_labels: Option<Vec<usize>>,
    class_label: usize,
    motif_nodes: Option<Vec<usize>>,
}

impl Graph {
    pub fn new(
        node_labels: Vec<usize>,
        edges: Vec<(usize, usize)>,
        edge_labels: Option<Vec<usize>>,
        class_label: usize,
    ) -> Result<Self, GraphError> {
        let n = node_labels.len();
        if n == 0 {
            return Err(GraphError::EmptyGraph);
        }
        if let Some(labels) = &edge_labels {
            if labels.len() != edges.len() {
                return Err(GraphError::LabelCount {
                    what: "edge",
                    expected: edges.len(),
                    actual: labels.len(),
                });
            }
        }
        // Canonical order: endpoints sorted within each pair, pairs sorted,
        // labels carried along with their pair.
        let mut indexed: Vec<(usize, usize, usize)> = edges
            .iter()
            .enumerate()
            .map(|(i, &(u, v))| (u.min(v), u.max(v), i))
            .collect();
        for &(u, v, _) in &indexed {
            if v >= n {
                return Err(GraphError::InvalidEdge { u, v, node_count: n });
            }
            if u == v {
                return Err(GraphError::SelfLoop { node: u });
            }
        }
        indexed.sort_by_key(|&(u, v, _)| (u, v));
        for w in indexed.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(GraphError::DuplicateEdge { u: w[0].0, v: w[0].1 });
            }
        }
        let sorted_edges: Vec<(usize, usize)> = indexed.iter().map(|&(u, v, _)| (u, v)).collect();
        let sorted_labels = edge_labels
            .map(|labels| indexed.iter().map(|&(_, _, i)| labels[i]).collect());
        Ok(Graph {
            node_labels,
            edges: sorted_edges,
            edge_labels: sorted_labels,
            class_label,
            motif_nodes: None,
        })
    }

    /// Attach the indices of an embedded known subgraph.
    pub fn with_motif_nodes(mut self, mut nodes: Vec<usize>) -> Result<Self, GraphError> {
        nodes.sort_unstable();
        nodes.dedup();
        if let Some(&max) = nodes.last() {
            if max >= self.node_count() {
                return Err(GraphError::CategoryRange {
                    what: "motif node",
                    index: max,
                    limit: self.node_count(),
                });
            }
        }
        self.motif_nodes = Some(nodes);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_labels(&self) -> &[usize] {
        &self.node_labels
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_labels(&self) -> Option<&[usize]> {
        self.edge_labels.as_deref()
    }

    pub fn class_label(&self) -> usize {
        self.class_label
    }

    pub fn motif_nodes(&self) -> Option<&[usize]> {
        self.motif_nodes.as_deref()
    }

    /// Number of incident edges per node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.node_count()];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n <= 1 {
            return true;
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == n
    }

    /// Subgraph induced by `keep` (order-insensitive, deduplicated). Kept
    /// nodes are renumbered by ascending original index; motif metadata is
    /// intersected with the surviving nodes.
    pub fn induced_subgraph(&self, keep: &[usize]) -> Result<Graph, GraphError> {
        let mut keep: Vec<usize> = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if keep.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        if *keep.last().unwrap() >= self.node_count() {
            return Err(GraphError::CategoryRange {
                what: "node",
                index: *keep.last().unwrap(),
                limit: self.node_count(),
            });
        }
        let mut remap = vec![usize::MAX; self.node_count()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let node_labels = keep.iter().map(|&i| self.node_labels[i]).collect();
        let mut edges = Vec::new();
        let mut labels = self.edge_labels.as_ref().map(|_| Vec::new());
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            if remap[u] != usize::MAX && remap[v] != usize::MAX {
                edges.push((remap[u], remap[v]));
                if let Some(l) = &mut labels {
                    l.push(self.edge_labels.as_ref().unwrap()[i]);
                }
            }
        }
        let mut out = Graph::new(node_labels, edges, labels, self.class_label)?;
        if let Some(motif) = &self.motif_nodes {
            let surviving: Vec<usize> = motif
                .iter()
                .filter(|&&m| remap[m] != usize::MAX)
                .map(|&m| remap[m])
                .collect();
            out = out.with_motif_nodes(surviving)?;
        }
        Ok(out)
    }

    /// Relabeled copy where old node `i` becomes `perm[i]`; `perm` must be a
    /// permutation of `0..node_count`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph, GraphError> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(GraphError::Config("not a permutation of node indices".into()));
        }
        let mut node_labels = vec![0usize; n];
        for (old, &new) in perm.iter().enumerate() {
            node_labels[new] = self.node_labels[old];
        }
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let mut out =
            Graph::new(node_labels, edges, self.edge_labels.clone(), self.class_label)?;
        if let Some(motif) = &self.motif_nodes {
            out = out.with_motif_nodes(motif.iter().map(|&m| perm[m]).collect())?;
        }
        Ok(out)
    }
}

/// Average degree x = |E| / n, counting each undirected edge once.
pub fn average_degree(g: &Graph) -> f64 {
    g.edge_count() as f64 / g.node_count() as f64
}

/// Per-class average-degree statistics and mean node count.
///
/// `degree_std` uses the population formula (divide by N): the statistics
/// describe the full set of class graphs, not a sample from a larger pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub degree_mean: f64,
    pub degree_std: f64,
    pub mean_node_count: f64,
    pub class_label: usize,
}

/// A collection of graphs with shared category vocabularies.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    graphs: Vec<Graph>,
    class_names: Vec<String>,
    node_category_names: Vec<String>,
    edge_category_names: Vec<String>,
    provenance: Option<DatasetProvenance>,
}

/// Where a derived dataset came from (attached by pruning).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetProvenance {
    /// Content hash of the source dataset.
    pub pruned_from: String,
    /// Human-readable summary of the transformation parameters.
    pub config: String,
}

impl GraphDataset {
    pub fn new(
        graphs: Vec<Graph>,
        class_names: Vec<String>,
        node_category_names: Vec<String>,
        edge_category_names: Vec<String>,
    ) -> Result<Self, GraphError> {
        let ds = GraphDataset {
            graphs,
            class_names,
            node_category_names,
            edge_category_names,
            provenance: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<(), GraphError> {
        for g in &self.graphs {
            if g.class_label() >= self.class_names.len() {
                return Err(GraphError::CategoryRange {
                    what: "class",
                    index: g.class_label(),
                    limit: self.class_names.len(),
                });
            }
            for &l in g.node_labels() {
                if l >= self.node_category_names.len() {
                    return Err(GraphError::CategoryRange {
                        what: "node category",
                        index: l,
                        limit: self.node_category_names.len(),
                    });
                }
            }
            match (g.edge_labels(), self.edge_category_names.is_empty()) {
                (Some(labels), false) => {
                    for &l in labels {
                        if l >= self.edge_category_names.len() {
                            return Err(GraphError::CategoryRange {
                                what: "edge category",
                                index: l,
                                limit: self.edge_category_names.len(),
                            });
                        }
                    }
                }
                (Some(_), true) => {
                    return Err(GraphError::Config(
                        "graphs carry edge labels but the dataset declares no edge categories"
                            .into(),
                    ));
                }
                (None, false) if g.edge_count() > 0 => {
                    return Err(GraphError::Config(
                        "dataset declares edge categories but a graph lacks edge labels".into(),
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn with_provenance(mut self, provenance: DatasetProvenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn node_category_names(&self) -> &[String] {
        &self.node_category_names
    }

    pub fn edge_category_names(&self) -> &[String] {
        &self.edge_category_names
    }

    pub fn provenance(&self) -> Option<&DatasetProvenance> {
        self.provenance.as_ref()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// Number of node feature categories (at least 1).
    pub fn node_categories(&self) -> usize {
        self.node_category_names.len().max(1)
    }

    /// Width of the one-hot edge encoding: declared categories plus the
    /// "no edge" channel; unlabeled datasets use a single "edge" category.
    pub fn edge_channels(&self) -> usize {
        self.edge_category_names.len().max(1) + 1
    }

    pub fn max_node_count(&self) -> usize {
        self.graphs.iter().map(Graph::node_count).max().unwrap_or(0)
    }

    pub fn indices_of_class(&self, class: usize) -> Vec<usize> {
        (0..self.graphs.len())
            .filter(|&i| self.graphs[i].class_label() == class)
            .collect()
    }

    /// SHA-256 of the serialized content, as lowercase hex.
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write cannot fail");
        let mut hasher = Sha256::new();
        hasher.update(&buf);
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Compute degree and size statistics for one class of a dataset.
///
/// Requires at least two graphs in the class so the spread is meaningful.
pub fn compute_class_stats(ds: &GraphDataset, class: usize) -> Result<ClassStats, GraphError> {
    let idx = ds.indices_of_class(class);
    if idx.len() < 2 {
        return Err(GraphError::InsufficientData { class, count: idx.len() });
    }
    let degrees: Vec<f64> = idx.iter().map(|&i| average_degree(&ds.graphs()[i])).collect();
    let n = degrees.len() as f64;
    let mean = degrees.iter().sum::<f64>() / n;
    let var = degrees.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let mean_nodes =
        idx.iter().map(|&i| ds.graphs()[i].node_count() as f64).sum::<f64>() / n;
    Ok(ClassStats {
        degree_mean: mean,
        degree_std: var.sqrt(),
        mean_node_count: mean_nodes,
        class_label: class,
    })
}

/// Dense relaxed encoding of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousGraph {
    adjacency: ArrayD<f64>,
    features: ArrayD<f64>,
}

impl ContinuousGraph {
    /// Validates shape consistency, value ranges, per-pair channel
    /// distributions, symmetry, and feature rows (one-hot-summing or all-zero
    /// padding).
    pub fn new(adjacency: ArrayD<f64>, features: ArrayD<f64>) -> Result<Self, GraphError> {
        if adjacency.ndim() != 3 {
            return Err(GraphError::Shape(format!(
                "adjacency must be [n, n, channels], got {:?}",
                adjacency.shape()
            )));
        }
        if features.ndim() != 2 {
            return Err(GraphError::Shape(format!(
                "features must be [n, categories], got {:?}",
                features.shape()
            )));
        }
        let (n, n2, ch) = (adjacency.shape()[0], adjacency.shape()[1], adjacency.shape()[2]);
        if n != n2 {
            return Err(GraphError::Shape("adjacency first two axes must match".into()));
        }
        if ch < 2 {
            return Err(GraphError::Shape("adjacency needs at least 2 channels".into()));
        }
        if features.shape()[0] != n {
            return Err(GraphError::Shape("features rows must match adjacency size".into()));
        }
        if adjacency.iter().chain(features.iter()).any(|&v| !v.is_finite()) {
            return Err(GraphError::Shape("non-finite tensor entry".into()));
        }
        if adjacency
            .iter()
            .chain(features.iter())
            .any(|&v| !(-ONE_HOT_TOL..=1.0 + ONE_HOT_TOL).contains(&v))
        {
            return Err(GraphError::Shape("entries must lie in [0, 1]".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let mut sum = 0.0;
                for c in 0..ch {
                    let a = adjacency[IxDyn(&[i, j, c])];
                    if (a - adjacency[IxDyn(&[j, i, c])]).abs() > ONE_HOT_TOL {
                        return Err(GraphError::Shape(format!(
                            "adjacency not symmetric at ({i}, {j}, {c})"
                        )));
                    }
                    sum += a;
                }
                if (sum - 1.0).abs() > ONE_HOT_TOL {
                    return Err(GraphError::Shape(format!(
                        "channel distribution at ({i}, {j}) sums to {sum}"
                    )));
                }
            }
        }
        for i in 0..n {
            let row_sum: f64 = features.index_axis(ndarray::Axis(0), i).sum();
            if row_sum.abs() > ONE_HOT_TOL && (row_sum - 1.0).abs() > ONE_HOT_TOL {
                return Err(GraphError::Shape(format!(
                    "feature row {i} sums to {row_sum}, expected 0 (padding) or 1"
                )));
            }
        }
        Ok(ContinuousGraph { adjacency, features })
    }

    pub fn n_max(&self) -> usize {
        self.adjacency.shape()[0]
    }

    pub fn edge_channels(&self) -> usize {
        self.adjacency.shape()[2]
    }

    pub fn node_categories(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn adjacency(&self) -> &ArrayD<f64> {
        &self.adjacency
    }

    pub fn features(&self) -> &ArrayD<f64> {
        &self.features
    }
}

/// One-hot encode a graph into an `n_max`-padded dense form.
///
/// Absent pairs (and the diagonal) put all mass on channel 0; padded rows are
/// all-zero in the feature matrix and channel-0 in the adjacency.
pub fn to_dense(
    g: &Graph,
    n_max: usize,
    node_categories: usize,
    edge_channels: usize,
) -> Result<ContinuousGraph, GraphError> {
    let n = g.node_count();
    if n > n_max {
        return Err(GraphError::TooLarge { node_count: n, n_max });
    }
    let mut adjacency = ArrayD::zeros(IxDyn(&[n_max, n_max, edge_channels]));
    let mut features = ArrayD::zeros(IxDyn(&[n_max, node_categories]));
    for i in 0..n_max {
        for j in 0..n_max {
            adjacency[IxDyn(&[i, j, 0])] = 1.0;
        }
    }
    for (e, &(u, v)) in g.edges().iter().enumerate() {
        let label = g.edge_labels().map_or(0, |l| l[e]);
        let ch = 1 + label;
        if ch >= edge_channels {
            return Err(GraphError::CategoryRange {
                what: "edge category",
                index: label,
                limit: edge_channels - 1,
            });
        }
        for (a, b) in [(u, v), (v, u)] {
            adjacency[IxDyn(&[a, b, 0])] = 0.0;
            adjacency[IxDyn(&[a, b, ch])] = 1.0;
        }
    }
    for (i, &l) in g.node_labels().iter().enumerate() {
        if l >= node_categories {
            return Err(GraphError::CategoryRange {
                what: "node category",
                index: l,
                limit: node_categories,
            });
        }
        features[IxDyn(&[i, l])] = 1.0;
    }
    ContinuousGraph::new(adjacency, features)
}

/// Decode a hard one-hot dense encoding back into a [`Graph`].
///
/// With `declared_node_count`, nodes `0..n` are kept even when isolated and
/// the padding region must be exactly empty — this is the inverse of
/// [`to_dense`]. Without it (generator output), a node exists iff it has at
/// least one incident edge; surviving nodes are renumbered by ascending index.
pub fn from_dense(
    cg: &ContinuousGraph,
    class_label: usize,
    declared_node_count: Option<usize>,
) -> Result<Graph, GraphError> {
    let n_max = cg.n_max();
    let channels = cg.edge_channels();
    if let Some(n) = declared_node_count {
        if n > n_max {
            return Err(GraphError::TooLarge { node_count: n, n_max });
        }
    }

    let one_hot_slot = |values: Vec<f64>, what: &str| -> Result<usize, GraphError> {
        let mut hot = None;
        for (c, &v) in values.iter().enumerate() {
            if (v - 1.0).abs() <= ONE_HOT_TOL {
                if hot.is_some() {
                    return Err(GraphError::Encoding(format!("{what}: multiple hot entries")));
                }
                hot = Some(c);
            } else if v.abs() > ONE_HOT_TOL {
                return Err(GraphError::Encoding(format!(
                    "{what}: entry {v} is neither 0 nor 1"
                )));
            }
        }
        hot.ok_or_else(|| GraphError::Encoding(format!("{what}: no hot entry")))
    };

    let mut raw_edges = Vec::new();
    let mut raw_labels = Vec::new();
    for i in 0..n_max {
        for j in (i + 1)..n_max {
            let column: Vec<f64> =
                (0..channels).map(|c| cg.adjacency[IxDyn(&[i, j, c])]).collect();
            let ch = one_hot_slot(column, &format!("adjacency pair ({i}, {j})"))?;
            if ch > 0 {
                raw_edges.push((i, j));
                raw_labels.push(ch - 1);
            }
        }
        let diag: Vec<f64> = (0..channels).map(|c| cg.adjacency[IxDyn(&[i, i, c])]).collect();
        if one_hot_slot(diag, &format!("adjacency diagonal {i}"))? != 0 {
            return Err(GraphError::Encoding(format!("self-loop encoded at node {i}")));
        }
    }

    let mut present = vec![false; n_max];
    match declared_node_count {
        Some(n) => {
            for (k, p) in present.iter_mut().enumerate() {
                *p = k < n;
            }
            for &(u, v) in &raw_edges {
                if v >= n {
                    return Err(GraphError::Encoding(format!(
                        "edge ({u}, {v}) outside the declared {n} nodes"
                    )));
                }
            }
        }
        None => {
            for &(u, v) in &raw_edges {
                present[u] = true;
                present[v] = true;
            }
        }
    }

    let kept: Vec<usize> = (0..n_max).filter(|&i| present[i]).collect();
    if kept.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let mut remap = vec![usize::MAX; n_max];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }

    let mut node_labels = Vec::with_capacity(kept.len());
    for &i in &kept {
        let row: Vec<f64> =
            (0..cg.node_categories()).map(|c| cg.features[IxDyn(&[i, c])]).collect();
        node_labels.push(one_hot_slot(row, &format!("feature row {i}"))?);
    }
    if let Some(n) = declared_node_count {
        for i in n..n_max {
            let row_sum: f64 = (0..cg.node_categories())
                .map(|c| cg.features[IxDyn(&[i, c])].abs())
                .sum();
            if row_sum > ONE_HOT_TOL {
                return Err(GraphError::Encoding(format!(
                    "padding feature row {i} is not empty"
                )));
            }
        }
    }

    let edges: Vec<(usize, usize)> =
        raw_edges.iter().map(|&(u, v)| (remap[u], remap[v])).collect();
    let labels = if channels > 2 { Some(raw_labels) } else { None };
    Graph::new(node_labels, edges, labels, class_label)
}

// ---------------------------------------------------------------------------
// Serialization: one JSON object per line, header first.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    schema_version: u32,
    kind: String,
    class_names: Vec<String>,
    node_category_names: Vec<String>,
    edge_category_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<DatasetProvenance>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    schema_version: u32,
    /// Node count.
    v: usize,
    /// Node category indices, one per node.
    nodes: Vec<usize>,
    /// Edges as (u, v, label); label is 0 for unlabeled graphs.
    edges: Vec<(usize, usize, usize)>,
    /// Class label.
    y: usize,
    #[serde(default, skip_serializing_if = "GraphMeta::is_empty")]
    meta: GraphMeta,
    /// Present (even for unlabeled graphs) so `edges` labels are unambiguous.
    labeled_edges: bool,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GraphMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    motif_nodes: Option<Vec<usize>>,
}

impl GraphMeta {
    fn is_empty(&self) -> bool {
        self.motif_nodes.is_none()
    }
}

impl From<Graph> for GraphRecord {
    fn from(g: Graph) -> Self {
        let labeled = g.edge_labels.is_some();
        let edges = g
            .edges
            .iter()
            .enumerate()
            .map(|(i, &(u, v))| (u, v, g.edge_labels.as_ref().map_or(0, |l| l[i])))
            .collect();
        GraphRecord {
            schema_version: SCHEMA_VERSION,
            v: g.node_labels.len(),
            nodes: g.node_labels,
            edges,
            y: g.class_label,
            meta: GraphMeta { motif_nodes: g.motif_nodes },
            labeled_edges: labeled,
        }
    }
}

impl TryFrom<GraphRecord> for Graph {
    type Error = GraphError;

    fn try_from(r: GraphRecord) -> Result<Self, Self::Error> {
        if r.schema_version != SCHEMA_VERSION {
            return Err(GraphError::UnsupportedSchema { found: r.schema_version });
        }
        if r.nodes.len() != r.v {
            return Err(GraphError::LabelCount {
                what: "node",
                expected: r.v,
                actual: r.nodes.len(),
            });
        }
        let (edges, labels): (Vec<(usize, usize)>, Vec<usize>) =
            r.edges.iter().map(|&(u, v, l)| ((u, v), l)).unzip();
        let labels = r.labeled_edges.then_some(labels);
        let mut g = Graph::new(r.nodes, edges, labels, r.y)?;
        if let Some(m) = r.meta.motif_nodes {
            g = g.with_motif_nodes(m)?;
        }
        Ok(g)
    }
}

impl GraphDataset {
    fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), GraphError> {
        let header = HeaderRecord {
            schema_version: SCHEMA_VERSION,
            kind: "dataset".into(),
            class_names: self.class_names.clone(),
            node_category_names: self.node_category_names.clone(),
            edge_category_names: self.edge_category_names.clone(),
            provenance: self.provenance.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
        for g in &self.graphs {
            writeln!(w, "{}", serde_json::to_string(g).expect("graph serializes"))?;
        }
        Ok(())
    }

    fn read_jsonl<R: Read>(r: R) -> Result<Self, GraphError> {
        let reader = BufReader::new(r);
        let mut lines = reader.lines().enumerate();
        let header: HeaderRecord = loop {
            match lines.next() {
                None => {
                    // A completely empty file is an empty dataset.
                    return GraphDataset::new(Vec::new(), Vec::new(), Vec::new(), Vec::new());
                }
                Some((lineno, line)) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str(&line).map_err(|e| GraphError::Parse {
                        line: lineno + 1,
                        message: e.to_string(),
                    })?;
                }
            }
        };
        if header.schema_version != SCHEMA_VERSION {
            return Err(GraphError::UnsupportedSchema { found: header.schema_version });
        }
        let mut graphs = Vec::new();
        for (lineno, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let g: Graph = serde_json::from_str(&line).map_err(|e| GraphError::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
            graphs.push(g);
        }
        let mut ds = GraphDataset::new(
            graphs,
            header.class_names,
            header.node_category_names,
            header.edge_category_names,
        )?;
        if let Some(p) = header.provenance {
            ds = ds.with_provenance(p);
        }
        Ok(ds)
    }
}

/// Write a dataset as line-delimited JSON (header first, one graph per line).
pub fn save_dataset(path: &Path, ds: &GraphDataset) -> Result<(), GraphError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    ds.write_jsonl(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Read a dataset written by [`save_dataset`]. Parse failures report the
/// 1-based line number.
pub fn load_dataset(path: &Path) -> Result<GraphDataset, GraphError> {
    let file = File::open(path)?;
    GraphDataset::read_jsonl(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unlabeled(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::new(vec![0; n], edges.to_vec(), None, 0).unwrap()
    }

    fn random_graph(rng: &mut ChaCha8Rng, labeled: bool) -> Graph {
        let n = rng.random_range(1..=9);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.random_bool(0.4) {
                    edges.push((u, v));
                }
            }
        }
        let labels = labeled.then(|| (0..edges.len()).map(|_| rng.random_range(0..3)).collect());
        let nodes = (0..n).map(|_| rng.random_range(0..4)).collect();
        let mut g = Graph::new(nodes, edges, labels, rng.random_range(0..2)).unwrap();
        if rng.random_bool(0.3) && n >= 2 {
            g = g.with_motif_nodes(vec![0, n - 1]).unwrap();
        }
        g
    }

    #[test]
    fn average_degree_on_known_shapes() {
        let triangle = unlabeled(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(average_degree(&triangle), 1.0);
        let lonely = unlabeled(1, &[]);
        assert_eq!(average_degree(&lonely), 0.0);
        let path5 = unlabeled(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        assert_eq!(average_degree(&path5), 0.8);
    }

    #[test]
    fn constructor_rejects_invalid_structure() {
        assert!(matches!(
            Graph::new(vec![], vec![], None, 0),
            Err(GraphError::EmptyGraph)
        ));
        assert!(matches!(
            Graph::new(vec![0; 3], vec![(0, 3)], None, 0),
            Err(GraphError::InvalidEdge { .. })
        ));
        assert!(matches!(
            Graph::new(vec![0; 3], vec![(1, 1)], None, 0),
            Err(GraphError::SelfLoop { node: 1 })
        ));
        assert!(matches!(
            Graph::new(vec![0; 3], vec![(0, 1), (1, 0)], None, 0),
            Err(GraphError::DuplicateEdge { u: 0, v: 1 })
        ));
        assert!(matches!(
            Graph::new(vec![0; 3], vec![(0, 1)], Some(vec![]), 0),
            Err(GraphError::LabelCount { .. })
        ));
    }

    #[test]
    fn edges_are_canonicalized_with_labels_attached() {
        let g = Graph::new(
            vec![0; 4],
            vec![(3, 2), (1, 0), (0, 2)],
            Some(vec![7, 8, 9]),
            0,
        )
        .unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (2, 3)]);
        assert_eq!(g.edge_labels().unwrap(), &[8, 9, 7]);
    }

    #[test]
    fn two_point_class_stats() {
        // Average degrees 1.0 (triangle) and 3.0 (K4 with doubled... use a
        // 2-node multiedge-free stand-in: 4 nodes, 12 edges impossible — use
        // explicit graphs with degrees 1.0 and 3.0).
        let g1 = unlabeled(3, &[(0, 1), (1, 2), (0, 2)]); // x = 1.0
        let mut edges = Vec::new();
        for u in 0..8 {
            for v in (u + 1)..8 {
                edges.push((u, v));
            }
        }
        let g2 = unlabeled(8, &edges); // 28 edges on 8 nodes: x = 3.5
        let ds = GraphDataset::new(
            vec![g1, g2],
            vec!["a".into()],
            vec!["n".into()],
            vec![],
        )
        .unwrap();
        let stats = compute_class_stats(&ds, 0).unwrap();
        assert!((stats.degree_mean - 2.25).abs() < 1e-12);
        assert!((stats.degree_std - 1.25).abs() < 1e-12);
        assert!((stats.mean_node_count - 5.5).abs() < 1e-12);
    }

    #[test]
    fn identical_graphs_have_zero_std() {
        let g = unlabeled(3, &[(0, 1)]);
        let ds = GraphDataset::new(
            vec![g.clone(), g.clone(), g],
            vec!["a".into()],
            vec!["n".into()],
            vec![],
        )
        .unwrap();
        let stats = compute_class_stats(&ds, 0).unwrap();
        assert_eq!(stats.degree_std, 0.0);
    }

    #[test]
    fn class_stats_match_naive_recomputation_on_seeded_stars() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut graphs = Vec::new();
        for _ in 0..100 {
            let n = rng.random_range(3..40);
            let edges: Vec<(usize, usize)> = (1..n).map(|v| (0, v)).collect();
            graphs.push(unlabeled(n, &edges));
        }
        let ds =
            GraphDataset::new(graphs, vec!["star".into()], vec!["n".into()], vec![]).unwrap();
        let stats = compute_class_stats(&ds, 0).unwrap();

        let xs: Vec<f64> = ds.graphs().iter().map(average_degree).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((stats.degree_mean - mean).abs() < 1e-12);
        assert!((stats.degree_std - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn class_stats_require_two_graphs() {
        let g = unlabeled(2, &[(0, 1)]);
        let ds = GraphDataset::new(
            vec![g],
            vec!["a".into(), "b".into()],
            vec!["n".into()],
            vec![],
        )
        .unwrap();
        assert!(matches!(
            compute_class_stats(&ds, 1),
            Err(GraphError::InsufficientData { class: 1, count: 0 })
        ));
    }

    #[test]
    fn to_dense_one_hot_layout() {
        let g = Graph::new(vec![0, 1], vec![(0, 1)], Some(vec![1]), 0).unwrap();
        let cg = to_dense(&g, 3, 2, 3).unwrap();
        // Edge label 1 lands on channel 2, mirrored.
        assert_eq!(cg.adjacency()[IxDyn(&[0, 1, 2])], 1.0);
        assert_eq!(cg.adjacency()[IxDyn(&[1, 0, 2])], 1.0);
        assert_eq!(cg.adjacency()[IxDyn(&[0, 1, 0])], 0.0);
        // Absent pair and padding use channel 0.
        assert_eq!(cg.adjacency()[IxDyn(&[0, 2, 0])], 1.0);
        assert_eq!(cg.adjacency()[IxDyn(&[2, 2, 0])], 1.0);
        // Padded feature row is empty.
        assert_eq!(cg.features()[IxDyn(&[2, 0])], 0.0);
        assert_eq!(cg.features()[IxDyn(&[2, 1])], 0.0);
    }

    #[test]
    fn to_dense_of_edgeless_graph_is_all_absence() {
        let g = unlabeled(2, &[]);
        let cg = to_dense(&g, 2, 1, 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(cg.adjacency()[IxDyn(&[i, j, 0])], 1.0);
            }
        }
    }

    #[test]
    fn to_dense_rejects_oversized_graph() {
        let g = unlabeled(5, &[]);
        assert!(matches!(
            to_dense(&g, 4, 1, 2),
            Err(GraphError::TooLarge { node_count: 5, n_max: 4 })
        ));
    }

    #[test]
    fn dense_round_trip_recovers_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let g = random_graph(&mut rng, true);
            let cg = to_dense(&g, 12, 4, 4).unwrap();
            let back = from_dense(&cg, g.class_label(), Some(g.node_count())).unwrap();
            // Motif metadata is not part of the dense encoding.
            let stripped = Graph::new(
                g.node_labels().to_vec(),
                g.edges().to_vec(),
                g.edge_labels().map(|l| l.to_vec()),
                g.class_label(),
            )
            .unwrap();
            assert_eq!(back, stripped);
        }
    }

    #[test]
    fn from_dense_without_declared_count_drops_isolated_nodes() {
        // Nodes 0 and 2 joined by an edge; node 1 isolated.
        let g = unlabeled(3, &[(0, 2)]);
        let cg = to_dense(&g, 4, 1, 2).unwrap();
        let back = from_dense(&cg, 0, None).unwrap();
        assert_eq!(back.node_count(), 2);
        assert_eq!(back.edges(), &[(0, 1)]);
    }

    #[test]
    fn from_dense_rejects_soft_input() {
        let g = unlabeled(2, &[(0, 1)]);
        let mut cg = to_dense(&g, 2, 1, 2).unwrap();
        cg.adjacency[IxDyn(&[0, 1, 0])] = 0.5;
        cg.adjacency[IxDyn(&[0, 1, 1])] = 0.5;
        cg.adjacency[IxDyn(&[1, 0, 0])] = 0.5;
        cg.adjacency[IxDyn(&[1, 0, 1])] = 0.5;
        assert!(matches!(from_dense(&cg, 0, None), Err(GraphError::Encoding(_))));
    }

    #[test]
    fn from_dense_of_empty_sample_is_an_error() {
        let g = unlabeled(3, &[]);
        let cg = to_dense(&g, 3, 1, 2).unwrap();
        assert!(matches!(from_dense(&cg, 0, None), Err(GraphError::EmptyGraph)));
    }

    #[test]
    fn continuous_graph_validation_catches_asymmetry_and_bad_sums() {
        let mut adjacency = ArrayD::zeros(IxDyn(&[2, 2, 2]));
        for i in 0..2 {
            for j in 0..2 {
                adjacency[IxDyn(&[i, j, 0])] = 1.0;
            }
        }
        let features = ArrayD::zeros(IxDyn(&[2, 1]));
        assert!(ContinuousGraph::new(adjacency.clone(), features.clone()).is_ok());

        let mut asym = adjacency.clone();
        asym[IxDyn(&[0, 1, 0])] = 0.0;
        asym[IxDyn(&[0, 1, 1])] = 1.0;
        assert!(matches!(
            ContinuousGraph::new(asym, features.clone()),
            Err(GraphError::Shape(_))
        ));

        let mut bad_sum = adjacency;
        bad_sum[IxDyn(&[0, 0, 1])] = 0.5;
        assert!(matches!(
            ContinuousGraph::new(bad_sum, features),
            Err(GraphError::Shape(_))
        ));
    }

    #[test]
    fn induced_subgraph_keeps_internal_edges_and_remaps_motifs() {
        let g = Graph::new(vec![0, 1, 2, 3], vec![(0, 1), (1, 2), (2, 3)], None, 1)
            .unwrap()
            .with_motif_nodes(vec![1, 3])
            .unwrap();
        let sub = g.induced_subgraph(&[1, 2, 3]).unwrap();
        assert_eq!(sub.node_labels(), &[1, 2, 3]);
        assert_eq!(sub.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(sub.motif_nodes().unwrap(), &[0, 2]);
        assert_eq!(sub.class_label(), 1);
    }

    #[test]
    fn permuted_preserves_structure() {
        let g = Graph::new(vec![5, 6, 7], vec![(0, 1), (1, 2)], Some(vec![1, 0]), 0).unwrap();
        let p = g.permuted(&[2, 0, 1]).unwrap();
        // Old edge (0,1) with label 1 becomes (2,0) -> canonical (0,2).
        assert_eq!(p.node_labels(), &[6, 7, 5]);
        assert_eq!(p.edges(), &[(0, 1), (0, 2)]);
        assert_eq!(p.edge_labels().unwrap(), &[0, 1]);
        assert_eq!(average_degree(&g), average_degree(&p));
    }

    #[test]
    fn connectivity_detection() {
        assert!(unlabeled(1, &[]).is_connected());
        assert!(unlabeled(3, &[(0, 1), (1, 2)]).is_connected());
        assert!(!unlabeled(3, &[(0, 1)]).is_connected());
    }

    #[test]
    fn serialization_round_trip_on_many_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for labeled in [false, true] {
            let graphs: Vec<Graph> =
                (0..1000).map(|_| random_graph(&mut rng, labeled)).collect();
            let edge_names = if labeled {
                vec!["a".into(), "b".into(), "c".into()]
            } else {
                vec![]
            };
            let ds = GraphDataset::new(
                graphs,
                vec!["c0".into(), "c1".into()],
                vec!["n0".into(), "n1".into(), "n2".into(), "n3".into()],
                edge_names,
            )
            .unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("ds.jsonl");
            save_dataset(&path, &ds).unwrap();
            let back = load_dataset(&path).unwrap();
            assert_eq!(ds, back);
        }
    }

    #[test]
    fn save_is_deterministic_and_hash_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let graphs: Vec<Graph> = (0..20).map(|_| random_graph(&mut rng, false)).collect();
        let ds = GraphDataset::new(
            graphs,
            vec!["c0".into(), "c1".into()],
            vec!["n0".into(), "n1".into(), "n2".into(), "n3".into()],
            vec![],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        save_dataset(&p1, &ds).unwrap();
        save_dataset(&p2, &ds).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(ds.content_hash(), ds.content_hash());
        assert_eq!(ds.content_hash().len(), 64);
    }

    #[test]
    fn empty_file_loads_as_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        let ds = load_dataset(&path).unwrap();
        assert!(ds.is_empty());
    }

    #[test]
    fn unknown_field_is_a_parse_error_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let header = r#"{"schema_version":1,"kind":"dataset","class_names":["a"],"node_category_names":["n"],"edge_category_names":[]}"#;
        let bad = r#"{"schema_version":1,"v":1,"nodes":[0],"edges":[],"y":0,"labeled_edges":false,"surprise":3}"#;
        std::fs::write(&path, format!("{header}\n{bad}\n")).unwrap();
        match load_dataset(&path) {
            Err(GraphError::Parse { line: 2, message }) => {
                assert!(message.contains("surprise"), "message: {message}");
            }
            other => panic!("expected parse error on line 2, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let header = r#"{"schema_version":1,"kind":"dataset","class_names":["a"],"node_category_names":["n"],"edge_category_names":[]}"#;
        std::fs::write(&path, format!("{header}\nnot json\n")).unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(GraphError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn future_schema_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v9.jsonl");
        let header = r#"{"schema_version":9,"kind":"dataset","class_names":[],"node_category_names":[],"edge_category_names":[]}"#;
        std::fs::write(&path, format!("{header}\n")).unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(GraphError::UnsupportedSchema { found: 9 })
        ));
    }

    #[test]
    fn dataset_validation_rejects_out_of_range_labels() {
        let g = Graph::new(vec![0, 3], vec![], None, 0).unwrap();
        assert!(matches!(
            GraphDataset::new(vec![g], vec!["a".into()], vec!["n".into()], vec![]),
            Err(GraphError::CategoryRange { what: "node category", .. })
        ));
        let g = unlabeled(2, &[]);
        assert!(matches!(
            GraphDataset::new(vec![g], vec![], vec!["n".into()], vec![]),
            Err(GraphError::CategoryRange { what: "class", .. })
        ));
    }

    #[test]
    fn provenance_round_trips() {
        let g = unlabeled(2, &[(0, 1)]);
        let ds = GraphDataset::new(vec![g], vec!["a".into()], vec!["n".into()], vec![])
            .unwrap()
            .with_provenance(DatasetProvenance {
                pruned_from: "abc123".into(),
                config: "fraction=0.1".into(),
            });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        save_dataset(&path, &ds).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back.provenance().unwrap().pruned_from, "abc123");
    }
}
