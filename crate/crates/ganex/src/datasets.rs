//! Benchmark dataset generators and a loader for the public multi-file
//! molecular graph format.
//!
//! All generators are deterministic given a seed. Three synthetic families
//! are provided — shape classification (lollipop / wheel / grid / star),
//! motif detection (a sparse random base graph with an attached known
//! subgraph), and edge-color cyclicity — plus a seeded molecular surrogate
//! with the same shape as the real mutagenicity dataset for environments
//! where the original files are not on disk.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, GraphDataset, GraphError};

/// Settings for the shape dataset (classes lollipop, wheel, grid, star).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapeConfig {
    pub graphs_per_class: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        ShapeConfig { graphs_per_class: 250, min_nodes: 6, max_nodes: 15 }
    }
}

/// Settings for the motif dataset (classes house, house_x, comp4, comp5).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotifConfig {
    pub graphs_per_class: usize,
    pub base_min_nodes: usize,
    pub base_max_nodes: usize,
    /// Undirected edges per node in the base graph (sparse ≈ 1.35).
    pub base_edges_per_node: f64,
    /// Edges connecting the motif to the base graph.
    pub bridge_edges: usize,
}

impl Default for MotifConfig {
    fn default() -> Self {
        MotifConfig {
            graphs_per_class: 250,
            base_min_nodes: 50,
            base_max_nodes: 60,
            base_edges_per_node: 1.35,
            bridge_edges: 1,
        }
    }
}

/// Settings for the cyclicity dataset (classes red_cyclic, green_cyclic,
/// acyclic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CyclicityConfig {
    pub graphs_per_class: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
}

impl Default for CyclicityConfig {
    fn default() -> Self {
        CyclicityConfig { graphs_per_class: 250, min_nodes: 40, max_nodes: 60 }
    }
}

/// Settings for the seeded molecular surrogate dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MolecularConfig {
    pub graphs: usize,
    pub min_pendants: usize,
    pub max_pendants: usize,
}

impl Default for MolecularConfig {
    fn default() -> Self {
        MolecularConfig { graphs: 188, min_pendants: 2, max_pendants: 8 }
    }
}

const MOTIF_CLASSES: [&str; 4] = ["house", "house_x", "comp4", "comp5"];

/// Internal edge sets of the four motifs, on local indices `0..size`.
fn motif_edges(class: usize) -> Vec<(usize, usize)> {
    match class {
        // Square 0-1-2-3 with a roof apex 4 over the (0, 1) edge: a 5-cycle
        // plus one chord.
        0 => vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)],
        // The house plus both square diagonals.
        1 => vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4), (0, 2), (1, 3)],
        2 => complete_edges(4),
        3 => complete_edges(5),
        _ => unreachable!("motif class out of range"),
    }
}

fn motif_size(class: usize) -> usize {
    match class {
        0 | 1 | 3 => 5,
        2 => 4,
        _ => unreachable!("motif class out of range"),
    }
}

fn complete_edges(n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            edges.push((u, v));
        }
    }
    edges
}

/// The bare motif of one motif-dataset class, as a standalone graph labeled
/// with that class (all nodes motif nodes).
pub fn motif_graph(class: usize) -> Result<Graph, GraphError> {
    if class >= MOTIF_CLASSES.len() {
        return Err(GraphError::CategoryRange {
            what: "class",
            index: class,
            limit: MOTIF_CLASSES.len(),
        });
    }
    let size = motif_size(class);
    Graph::new(vec![0; size], motif_edges(class), None, class)?
        .with_motif_nodes((0..size).collect())
}

/// Random connected graph: a random recursive tree plus uniform extra edges
/// up to `target_edges` total (duplicates skipped, so very dense targets may
/// fall slightly short).
fn random_connected_edges(
    rng: &mut ChaCha8Rng,
    n: usize,
    target_edges: usize,
) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(target_edges);
    let mut seen = HashSet::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push((u, v));
        seen.insert((u, v));
    }
    let mut attempts = 0;
    while edges.len() < target_edges && attempts < 20 * target_edges {
        attempts += 1;
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if seen.insert(key) {
            edges.push(key);
        }
    }
    edges
}

/// Generate the four-class shape dataset.
pub fn gen_shape_dataset(cfg: &ShapeConfig, seed: u64) -> Result<GraphDataset, GraphError> {
    if cfg.graphs_per_class == 0 {
        return Err(GraphError::Config("graphs_per_class must be positive".into()));
    }
    if cfg.min_nodes < 5 || cfg.max_nodes < cfg.min_nodes {
        return Err(GraphError::Config(
            "shape sizes need min_nodes >= 5 and max_nodes >= min_nodes".into(),
        ));
    }
    // Every grid is r x c with r, c >= 2; make sure at least one fits.
    let grid_dims: Vec<(usize, usize)> = (2..=cfg.max_nodes / 2)
        .flat_map(|r| (r..=cfg.max_nodes / r).map(move |c| (r, c)))
        .filter(|&(r, c)| (cfg.min_nodes..=cfg.max_nodes).contains(&(r * c)))
        .collect();
    if grid_dims.is_empty() {
        return Err(GraphError::Config(format!(
            "no r x c grid with r, c >= 2 fits into {}..={} nodes",
            cfg.min_nodes, cfg.max_nodes
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(4 * cfg.graphs_per_class);
    for class in 0..4 {
        for _ in 0..cfg.graphs_per_class {
            let n = rng.random_range(cfg.min_nodes..=cfg.max_nodes);
            let edges = match class {
                0 => {
                    // Lollipop: complete candy on m nodes, stick path on the rest.
                    let m = rng.random_range(3..=(n - 2));
                    let mut edges = complete_edges(m);
                    for v in m..n {
                        edges.push((v - 1, v));
                    }
                    edges
                }
                1 => {
                    // Wheel: hub 0, rim cycle 1..n.
                    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (0, v)).collect();
                    for v in 1..(n - 1) {
                        edges.push((v, v + 1));
                    }
                    edges.push((n - 1, 1));
                    edges
                }
                2 => {
                    let &(r, c) = grid_dims
                        .choose(&mut rng)
                        .expect("grid dimension list is nonempty");
                    let mut edges = Vec::new();
                    for i in 0..r {
                        for j in 0..c {
                            if j + 1 < c {
                                edges.push((i * c + j, i * c + j + 1));
                            }
                            if i + 1 < r {
                                edges.push((i * c + j, (i + 1) * c + j));
                            }
                        }
                    }
                    edges
                }
                _ => (1..n).map(|v| (0, v)).collect(),
            };
            let node_count = if class == 2 {
                edges.iter().map(|&(u, v)| u.max(v)).max().unwrap() + 1
            } else {
                n
            };
            graphs.push(Graph::new(vec![0; node_count], edges, None, class)?);
        }
    }
    GraphDataset::new(
        graphs,
        vec!["lollipop".into(), "wheel".into(), "grid".into(), "star".into()],
        vec!["node".into()],
        vec![],
    )
}

/// Generate the four-class motif dataset: every graph is a sparse random
/// connected base with one motif attached by bridge edges; the motif node
/// indices are recorded as metadata.
pub fn gen_motif_dataset(cfg: &MotifConfig, seed: u64) -> Result<GraphDataset, GraphError> {
    if cfg.graphs_per_class == 0 {
        return Err(GraphError::Config("graphs_per_class must be positive".into()));
    }
    if cfg.base_min_nodes < 6 || cfg.base_max_nodes < cfg.base_min_nodes {
        return Err(GraphError::Config(
            "motif base needs base_min_nodes >= 6 and base_max_nodes >= base_min_nodes".into(),
        ));
    }
    if !(1.0..=3.0).contains(&cfg.base_edges_per_node) {
        return Err(GraphError::Config(
            "base_edges_per_node must lie in [1, 3] (connected but sparse)".into(),
        ));
    }
    if cfg.bridge_edges == 0 {
        return Err(GraphError::Config("bridge_edges must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(4 * cfg.graphs_per_class);
    for class in 0..4 {
        let m_edges = motif_edges(class);
        let m_size = motif_size(class);
        for _ in 0..cfg.graphs_per_class {
            let base_n = rng.random_range(cfg.base_min_nodes..=cfg.base_max_nodes);
            let target = (cfg.base_edges_per_node * base_n as f64).round() as usize;
            let mut edges = random_connected_edges(&mut rng, base_n, target);
            for &(u, v) in &m_edges {
                edges.push((base_n + u, base_n + v));
            }
            let mut used = HashSet::new();
            for _ in 0..cfg.bridge_edges {
                // Distinct bridges; duplicates are resampled.
                loop {
                    let motif_node = base_n + rng.random_range(0..m_size);
                    let base_node = rng.random_range(0..base_n);
                    if used.insert((motif_node, base_node)) {
                        edges.push((base_node, motif_node));
                        break;
                    }
                }
            }
            let total = base_n + m_size;
            let g = Graph::new(vec![0; total], edges, None, class)?
                .with_motif_nodes((base_n..total).collect())?;
            graphs.push(g);
        }
    }
    GraphDataset::new(
        graphs,
        MOTIF_CLASSES.iter().map(|s| s.to_string()).collect(),
        vec!["node".into()],
        vec![],
    )
}

/// Generate the three-class edge-color cyclicity dataset. Cyclic classes are
/// a random tree plus one chord whose unique cycle is monochromatic in the
/// class color; acyclic graphs are plain random trees. Edge category 0 is
/// red, 1 is green.
pub fn gen_cyclicity_dataset(
    cfg: &CyclicityConfig,
    seed: u64,
) -> Result<GraphDataset, GraphError> {
    if cfg.graphs_per_class == 0 {
        return Err(GraphError::Config("graphs_per_class must be positive".into()));
    }
    if cfg.min_nodes < 4 || cfg.max_nodes < cfg.min_nodes {
        return Err(GraphError::Config(
            "cyclicity sizes need min_nodes >= 4 and max_nodes >= min_nodes".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(3 * cfg.graphs_per_class);
    for class in 0..3 {
        for _ in 0..cfg.graphs_per_class {
            let n = rng.random_range(cfg.min_nodes..=cfg.max_nodes);
            // Random recursive tree; parent[v] < v.
            let mut parent = vec![0usize; n];
            let mut edges: Vec<(usize, usize)> = Vec::with_capacity(n);
            for (v, p) in parent.iter_mut().enumerate().skip(1) {
                let u = rng.random_range(0..v);
                *p = u;
                edges.push((u, v));
            }
            let mut labels: Vec<usize> =
                (0..edges.len()).map(|_| rng.random_range(0..2)).collect();

            if class < 2 {
                let color = class; // 0 = red, 1 = green
                // Chord between two nodes not already adjacent in the tree.
                let (u, v) = loop {
                    let u = rng.random_range(0..n);
                    let v = rng.random_range(0..n);
                    if u == v {
                        continue;
                    }
                    let adjacent = parent[u.max(v)] == u.min(v);
                    if !adjacent {
                        break (u, v);
                    }
                };
                // Recolor the unique tree path between u and v, then add the
                // chord: the one cycle in the graph is monochromatic.
                let mut a = u;
                let mut b = v;
                let mut path_nodes = Vec::new();
                while a != b {
                    if a > b {
                        path_nodes.push(a);
                        a = parent[a];
                    } else {
                        path_nodes.push(b);
                        b = parent[b];
                    }
                }
                for &w in &path_nodes {
                    // Tree edge (parent[w], w) is at index w - 1.
                    labels[w - 1] = color;
                }
                edges.push((u.min(v), u.max(v)));
                labels.push(color);
            }
            graphs.push(Graph::new(vec![0; n], edges, Some(labels), class)?);
        }
    }
    GraphDataset::new(
        graphs,
        vec!["red_cyclic".into(), "green_cyclic".into(), "acyclic".into()],
        vec!["node".into()],
        vec!["red".into(), "green".into()],
    )
}

// ---------------------------------------------------------------------------
// Molecular multi-file format.
// ---------------------------------------------------------------------------

fn find_suffixed(dir: &Path, suffix: &str) -> Result<PathBuf, GraphError> {
    let mut hits: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| file_error(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(suffix))
        })
        .collect();
    hits.sort();
    match hits.len() {
        0 => Err(GraphError::Config(format!(
            "no file ending in {suffix} under {}",
            dir.display()
        ))),
        1 => Ok(hits.remove(0)),
        _ => Err(GraphError::Config(format!(
            "multiple files ending in {suffix} under {}",
            dir.display()
        ))),
    }
}

fn file_error(path: &Path, source: std::io::Error) -> GraphError {
    GraphError::Config(format!("cannot read {}: {source}", path.display()))
}

fn read_int_lines(path: &Path) -> Result<Vec<Vec<i64>>, GraphError> {
    let text = fs::read_to_string(path).map_err(|e| file_error(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<i64>, _> =
            line.split(',').map(|tok| tok.trim().parse::<i64>()).collect();
        match row {
            Ok(r) => rows.push(r),
            Err(e) => {
                return Err(GraphError::Parse {
                    line: lineno + 1,
                    message: format!("{} in {}", e, path.display()),
                })
            }
        }
    }
    Ok(rows)
}

fn scalar_rows(rows: Vec<Vec<i64>>, path: &Path) -> Result<Vec<i64>, GraphError> {
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() == 1 {
                Ok(r[0])
            } else {
                Err(GraphError::Parse {
                    line: i + 1,
                    message: format!("expected one integer per line in {}", path.display()),
                })
            }
        })
        .collect()
}

/// Map raw label values (arbitrary integers) to dense indices by ascending
/// value; returns the index vector and the sorted distinct values.
fn densify(raw: &[i64]) -> (Vec<usize>, Vec<i64>) {
    let mut distinct: Vec<i64> = raw.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let idx = raw
        .iter()
        .map(|v| distinct.binary_search(v).expect("value is in its own distinct set"))
        .collect();
    (idx, distinct)
}

/// Load a dataset in the public multi-file layout: `*_A.txt` (directed edge
/// pairs, 1-based global node ids), `*_graph_indicator.txt`,
/// `*_graph_labels.txt`, `*_node_labels.txt`, `*_edge_labels.txt`.
///
/// Each undirected edge is listed in both directions in `_A.txt` and is
/// stored once here. Disconnected graphs are reported through `log::warn`.
pub fn load_mutag(dir: &Path) -> Result<GraphDataset, GraphError> {
    let a_path = find_suffixed(dir, "_A.txt")?;
    let gi_path = find_suffixed(dir, "_graph_indicator.txt")?;
    let gl_path = find_suffixed(dir, "_graph_labels.txt")?;
    let nl_path = find_suffixed(dir, "_node_labels.txt")?;
    let el_path = find_suffixed(dir, "_edge_labels.txt")?;

    let node_graph = scalar_rows(read_int_lines(&gi_path)?, &gi_path)?;
    let graph_labels_raw = scalar_rows(read_int_lines(&gl_path)?, &gl_path)?;
    let node_labels_raw = scalar_rows(read_int_lines(&nl_path)?, &nl_path)?;
    let edge_rows = read_int_lines(&a_path)?;
    let edge_labels_raw = scalar_rows(read_int_lines(&el_path)?, &el_path)?;

    let n_nodes = node_graph.len();
    let n_graphs = graph_labels_raw.len();
    if node_labels_raw.len() != n_nodes {
        return Err(GraphError::Config(format!(
            "{} node labels for {} nodes",
            node_labels_raw.len(),
            n_nodes
        )));
    }
    if edge_rows.len() != edge_labels_raw.len() {
        return Err(GraphError::Config(format!(
            "{} edge rows but {} edge labels",
            edge_rows.len(),
            edge_labels_raw.len()
        )));
    }

    let (node_labels, _) = densify(&node_labels_raw);
    let (edge_labels, edge_distinct) = densify(&edge_labels_raw);
    let (class_per_graph, class_values) = densify(&graph_labels_raw);

    // Global node id (1-based) -> (graph index, local node index).
    let mut local_index = vec![(0usize, 0usize); n_nodes];
    let mut sizes = vec![0usize; n_graphs];
    for (i, &gid) in node_graph.iter().enumerate() {
        let gid = gid as usize;
        if gid == 0 || gid > n_graphs {
            return Err(GraphError::Parse {
                line: i + 1,
                message: format!("graph indicator {gid} out of range in {}", gi_path.display()),
            });
        }
        local_index[i] = (gid - 1, sizes[gid - 1]);
        sizes[gid - 1] += 1;
    }

    let mut per_graph_nodes: Vec<Vec<usize>> = sizes.iter().map(|&s| vec![0; s]).collect();
    for (i, &(g, l)) in local_index.iter().enumerate() {
        per_graph_nodes[g][l] = node_labels[i];
    }

    let mut per_graph_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_graphs];
    let mut per_graph_edge_labels: Vec<Vec<usize>> = vec![Vec::new(); n_graphs];
    for (row_no, row) in edge_rows.iter().enumerate() {
        if row.len() != 2 {
            return Err(GraphError::Parse {
                line: row_no + 1,
                message: format!("expected \"u, v\" in {}", a_path.display()),
            });
        }
        let (u, v) = (row[0] as usize, row[1] as usize);
        if u == 0 || v == 0 || u > n_nodes || v > n_nodes {
            return Err(GraphError::Parse {
                line: row_no + 1,
                message: format!("node id out of range in {}", a_path.display()),
            });
        }
        if u >= v {
            continue; // the (v, u) twin carries the same information
        }
        let (gu, lu) = local_index[u - 1];
        let (gv, lv) = local_index[v - 1];
        if gu != gv {
            return Err(GraphError::Parse {
                line: row_no + 1,
                message: format!("edge crosses graphs in {}", a_path.display()),
            });
        }
        per_graph_edges[gu].push((lu, lv));
        per_graph_edge_labels[gu].push(edge_labels[row_no]);
    }

    let mut graphs = Vec::with_capacity(n_graphs);
    let mut disconnected = Vec::new();
    for g in 0..n_graphs {
        let graph = Graph::new(
            per_graph_nodes[g].clone(),
            per_graph_edges[g].clone(),
            Some(per_graph_edge_labels[g].clone()),
            class_per_graph[g],
        )?;
        if !graph.is_connected() {
            disconnected.push(g);
        }
        graphs.push(graph);
    }
    if !disconnected.is_empty() {
        log::warn!(
            "{} of {} molecular graphs are disconnected: indices {:?}",
            disconnected.len(),
            n_graphs,
            disconnected
        );
    }

    let class_names = class_values.iter().map(|v| mutagen_class_name(*v, &class_values)).collect();
    let n_node_cats = node_labels.iter().max().map_or(1, |m| m + 1);
    let node_category_names = atom_names(n_node_cats);
    let edge_category_names = bond_names(edge_distinct.len());
    GraphDataset::new(graphs, class_names, node_category_names, edge_category_names)
}

fn mutagen_class_name(value: i64, all: &[i64]) -> String {
    if all == [-1, 1] {
        match value {
            -1 => "nonmutagen".into(),
            _ => "mutagen".into(),
        }
    } else {
        format!("label_{value}")
    }
}

fn atom_names(count: usize) -> Vec<String> {
    const MUTAG_ATOMS: [&str; 7] = ["C", "N", "O", "F", "I", "Cl", "Br"];
    if count == MUTAG_ATOMS.len() {
        MUTAG_ATOMS.iter().map(|s| s.to_string()).collect()
    } else {
        (0..count).map(|i| format!("atom_{i}")).collect()
    }
}

fn bond_names(count: usize) -> Vec<String> {
    const MUTAG_BONDS: [&str; 4] = ["aromatic", "single", "double", "triple"];
    if count == MUTAG_BONDS.len() {
        MUTAG_BONDS.iter().map(|s| s.to_string()).collect()
    } else {
        (0..count).map(|i| format!("bond_{i}")).collect()
    }
}

/// Seeded molecule-like surrogate with the same shape as the public
/// mutagenicity dataset: 188 graphs in two classes (63 / 125), 7 atom and 4
/// bond categories, chemistry-like degree statistics. Class 1 graphs carry
/// several fused ring systems (average degree slightly above 1 edge per
/// node); class 0 graphs are trees or single rings.
pub fn gen_molecular_dataset(
    cfg: &MolecularConfig,
    seed: u64,
) -> Result<GraphDataset, GraphError> {
    if cfg.graphs < 4 {
        return Err(GraphError::Config("need at least 4 molecular graphs".into()));
    }
    if cfg.max_pendants < cfg.min_pendants {
        return Err(GraphError::Config("max_pendants must be >= min_pendants".into()));
    }
    let class0 = (cfg.graphs * 63) / 188;
    let class0 = class0.clamp(2, cfg.graphs - 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(cfg.graphs);
    for i in 0..cfg.graphs {
        let class = usize::from(i >= class0);
        let rings = if class == 1 { rng.random_range(2..=4) } else { rng.random_range(0..=1) };
        let pendants = rng.random_range(cfg.min_pendants..=cfg.max_pendants);
        graphs.push(molecule(&mut rng, rings, pendants, class)?);
    }
    GraphDataset::new(
        graphs,
        vec!["nonmutagen".into(), "mutagen".into()],
        atom_names(7),
        bond_names(4),
    )
}

/// One molecule-like graph: `rings` hexagons chained by single bonds (or a
/// tree backbone when `rings` is 0), plus pendant decorations.
fn molecule(
    rng: &mut ChaCha8Rng,
    rings: usize,
    pendants: usize,
    class: usize,
) -> Result<Graph, GraphError> {
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut n = 0usize;
    if rings == 0 {
        // Small tree backbone.
        n = rng.random_range(6..=10);
        for v in 1..n {
            let u = rng.random_range(0..v);
            edges.push((u, v));
            labels.push(if rng.random_bool(0.15) { 2 } else { 1 });
        }
    } else {
        for r in 0..rings {
            let base = r * 6;
            for k in 0..6 {
                edges.push((base + k, base + (k + 1) % 6));
                labels.push(0); // aromatic ring bond
            }
            if r > 0 {
                // Link consecutive rings with a single bond.
                let a = (r - 1) * 6 + rng.random_range(0..6);
                let b = base + rng.random_range(0..6);
                edges.push((a, b));
                labels.push(1);
            }
            n = base + 6;
        }
    }
    let backbone = n;
    for _ in 0..pendants {
        let anchor = rng.random_range(0..backbone);
        edges.push((anchor, n));
        let label = if rng.random_bool(0.1) {
            2
        } else if rng.random_bool(0.02) {
            3
        } else {
            1
        };
        labels.push(label);
        n += 1;
    }
    let node_labels: Vec<usize> = (0..n)
        .map(|i| {
            if i < backbone {
                if rng.random_bool(0.85) {
                    0
                } else {
                    1
                }
            } else {
                // Pendant atoms carry the heteroatom variety.
                *[0usize, 1, 2, 2, 3, 4, 5, 6]
                    .choose(rng)
                    .expect("nonempty choice list")
            }
        })
        .collect();
    Graph::new(node_labels, edges, Some(labels), class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{average_degree, compute_class_stats};

    #[test]
    fn shape_dataset_is_deterministic_and_well_formed() {
        let cfg = ShapeConfig { graphs_per_class: 20, ..Default::default() };
        let a = gen_shape_dataset(&cfg, 7).unwrap();
        let b = gen_shape_dataset(&cfg, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 80);
        assert_eq!(a.class_count(), 4);
        for g in a.graphs() {
            assert!(g.is_connected());
        }
    }

    #[test]
    fn wheel_samples_have_hub_and_rim_cycle() {
        let cfg = ShapeConfig { graphs_per_class: 10, ..Default::default() };
        let ds = gen_shape_dataset(&cfg, 11).unwrap();
        for &i in &ds.indices_of_class(1) {
            let g = &ds.graphs()[i];
            let n = g.node_count();
            assert_eq!(g.edge_count(), 2 * (n - 1));
            let deg = g.degrees();
            assert_eq!(deg[0], n - 1, "hub connected to every rim node");
            for d in &deg[1..] {
                assert_eq!(*d, 3, "rim nodes touch the hub and two rim neighbors");
            }
        }
    }

    #[test]
    fn star_samples_have_expected_average_degree() {
        let cfg = ShapeConfig { graphs_per_class: 10, ..Default::default() };
        let ds = gen_shape_dataset(&cfg, 13).unwrap();
        for &i in &ds.indices_of_class(3) {
            let g = &ds.graphs()[i];
            let n = g.node_count() as f64;
            assert_eq!(g.edge_count(), g.node_count() - 1);
            assert!((average_degree(g) - (n - 1.0) / n).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_config_validation() {
        let bad = ShapeConfig { graphs_per_class: 0, ..Default::default() };
        assert!(gen_shape_dataset(&bad, 1).is_err());
        let bad = ShapeConfig { min_nodes: 9, max_nodes: 8, ..Default::default() };
        assert!(gen_shape_dataset(&bad, 1).is_err());
    }

    #[test]
    fn motif_metadata_induces_exactly_the_motif_edges() {
        let cfg = MotifConfig { graphs_per_class: 8, ..Default::default() };
        let ds = gen_motif_dataset(&cfg, 3).unwrap();
        for g in ds.graphs() {
            let motif = g.motif_nodes().expect("motif metadata present");
            let induced = g.induced_subgraph(motif).unwrap();
            let expected = motif_edges(g.class_label());
            assert_eq!(induced.edge_count(), expected.len());
            let got: HashSet<(usize, usize)> = induced.edges().iter().copied().collect();
            let want: HashSet<(usize, usize)> =
                expected.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
            assert_eq!(got, want, "class {}", g.class_label());
        }
    }

    #[test]
    fn motif_comp5_has_ten_internal_edges_and_bridges_counted() {
        let cfg = MotifConfig { graphs_per_class: 5, bridge_edges: 2, ..Default::default() };
        let ds = gen_motif_dataset(&cfg, 5).unwrap();
        for &i in &ds.indices_of_class(3) {
            let g = &ds.graphs()[i];
            let motif: HashSet<usize> = g.motif_nodes().unwrap().iter().copied().collect();
            let internal =
                g.edges().iter().filter(|(u, v)| motif.contains(u) && motif.contains(v)).count();
            let bridges = g
                .edges()
                .iter()
                .filter(|(u, v)| motif.contains(u) != motif.contains(v))
                .count();
            assert_eq!(internal, 10);
            assert_eq!(bridges, 2);
            assert!(g.is_connected());
        }
    }

    #[test]
    fn motif_dataset_density_tracks_config() {
        let cfg = MotifConfig { graphs_per_class: 30, ..Default::default() };
        let ds = gen_motif_dataset(&cfg, 9).unwrap();
        let stats = compute_class_stats(&ds, 0).unwrap();
        // Base contributes ~1.35 edges per node plus motif and bridge edges.
        assert!(
            (1.2..1.7).contains(&stats.degree_mean),
            "mean degree {}",
            stats.degree_mean
        );
    }

    #[test]
    fn cyclicity_acyclic_graphs_are_trees() {
        let cfg = CyclicityConfig { graphs_per_class: 15, ..Default::default() };
        let ds = gen_cyclicity_dataset(&cfg, 17).unwrap();
        for &i in &ds.indices_of_class(2) {
            let g = &ds.graphs()[i];
            assert!(g.is_connected());
            assert_eq!(g.edge_count(), g.node_count() - 1);
        }
    }

    #[test]
    fn cyclic_classes_contain_a_monochromatic_cycle() {
        let cfg = CyclicityConfig { graphs_per_class: 15, ..Default::default() };
        let ds = gen_cyclicity_dataset(&cfg, 19).unwrap();
        for class in 0..2 {
            for &i in &ds.indices_of_class(class) {
                let g = &ds.graphs()[i];
                // Tree + one chord: exactly one cycle.
                assert_eq!(g.edge_count(), g.node_count());
                // Union-find over edges of the class color must hit a cycle.
                let mut parent: Vec<usize> = (0..g.node_count()).collect();
                fn find(p: &mut [usize], mut x: usize) -> usize {
                    while p[x] != x {
                        p[x] = p[p[x]];
                        x = p[x];
                    }
                    x
                }
                let labels = g.edge_labels().unwrap();
                let mut cycle = false;
                for (e, &(u, v)) in g.edges().iter().enumerate() {
                    if labels[e] != class {
                        continue;
                    }
                    let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
                    if ru == rv {
                        cycle = true;
                        break;
                    }
                    parent[ru] = rv;
                }
                assert!(cycle, "class {class} graph {i} lacks a monochromatic cycle");
            }
        }
    }

    #[test]
    fn cyclicity_is_deterministic() {
        let cfg = CyclicityConfig { graphs_per_class: 5, ..Default::default() };
        assert_eq!(gen_cyclicity_dataset(&cfg, 23).unwrap(), gen_cyclicity_dataset(&cfg, 23).unwrap());
    }

    #[test]
    fn molecular_surrogate_matches_public_dataset_shape() {
        let ds = gen_molecular_dataset(&MolecularConfig::default(), 31).unwrap();
        assert_eq!(ds.len(), 188);
        assert_eq!(ds.indices_of_class(0).len(), 63);
        assert_eq!(ds.indices_of_class(1).len(), 125);
        assert_eq!(ds.node_category_names().len(), 7);
        assert_eq!(ds.edge_category_names().len(), 4);
        for g in ds.graphs() {
            assert!(g.is_connected());
        }
        let stats = compute_class_stats(&ds, 1).unwrap();
        assert!(
            (1.0..1.2).contains(&stats.degree_mean),
            "ring-rich class mean degree {}",
            stats.degree_mean
        );
        assert!(stats.degree_std < 0.05, "std {}", stats.degree_std);
        // The two classes must be separable by the 3-sigma band: a class-0
        // tree should fall below the class-1 band.
        let tree_degree = ds
            .indices_of_class(0)
            .iter()
            .map(|&i| average_degree(&ds.graphs()[i]))
            .fold(f64::INFINITY, f64::min);
        assert!(tree_degree < stats.degree_mean - 3.0 * stats.degree_std);
    }

    #[test]
    fn molecular_loader_round_trip_on_fixture() {
        // Two tiny graphs in the public multi-file layout: a triangle (class
        // -1) and a single edge (class 1). Directed edge rows list both
        // directions.
        let dir = tempfile::tempdir().unwrap();
        let p = |name: &str, body: &str| {
            std::fs::write(dir.path().join(format!("TEST_{name}.txt")), body).unwrap()
        };
        p("A", "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n");
        p("graph_indicator", "1\n1\n1\n2\n2\n");
        p("graph_labels", "-1\n1\n");
        p("node_labels", "0\n0\n1\n2\n0\n");
        p("edge_labels", "0\n0\n1\n1\n0\n0\n1\n1\n");
        let ds = load_mutag(dir.path()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.class_names(), &["nonmutagen".to_string(), "mutagen".to_string()]);
        let g0 = &ds.graphs()[0];
        assert_eq!(g0.node_count(), 3);
        assert_eq!(g0.edge_count(), 3);
        assert_eq!(g0.node_labels(), &[0, 0, 1]);
        assert_eq!(g0.class_label(), 0);
        let g1 = &ds.graphs()[1];
        assert_eq!(g1.node_count(), 2);
        assert_eq!(g1.edges(), &[(0, 1)]);
        assert_eq!(g1.class_label(), 1);
        // Canonical edge order (0,1), (0,2), (1,2); local edge (1,2) came
        // from global (2,3) with label 1, stored once.
        assert_eq!(g0.edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(g0.edge_labels().unwrap(), &[0, 0, 1]);
    }

    #[test]
    fn molecular_loader_reports_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_mutag(dir.path()).unwrap_err();
        assert!(err.to_string().contains("_A.txt"), "{err}");
    }

    #[test]
    fn molecular_loader_reports_malformed_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = |name: &str, body: &str| {
            std::fs::write(dir.path().join(format!("TEST_{name}.txt")), body).unwrap()
        };
        p("A", "1, oops\n");
        p("graph_indicator", "1\n");
        p("graph_labels", "1\n");
        p("node_labels", "0\n");
        p("edge_labels", "0\n");
        assert!(matches!(
            load_mutag(dir.path()),
            Err(GraphError::Parse { line: 1, .. })
        ));
    }
}
