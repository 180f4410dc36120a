//! Reporting helpers: 2D embedding projections, cluster statistics, score
//! tables, and DOT rendering of explanation graphs.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explainer::{select_explanations, ExplanationCandidate};
use crate::gnn::{class_mean_embedding, GnnClassifier, GnnError};
use crate::graph::{Graph, GraphDataset, GraphError};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid input: {0}")]
    Config(String),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

// ---------------------------------------------------------------------------
// Principal-component projection.
// ---------------------------------------------------------------------------

/// A fitted linear projection onto the top principal components of a point
/// cloud. Components are unit-length, mutually orthogonal, and ordered by
/// non-increasing explained variance; each component's largest-magnitude
/// entry is made positive so the fit is deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// `components[i]` is the i-th principal axis (length = input dim).
    pub components: Vec<Vec<f64>>,
    /// Population variance of the fitting data along each component.
    pub explained_variance: Vec<f64>,
}

/// Fit a PCA on `rows` (each a point of equal dimension).
pub fn fit_pca(rows: &[Vec<f64>], n_components: usize) -> Result<PcaProjection, ReportError> {
    if rows.len() < 2 {
        return Err(ReportError::Config(format!(
            "PCA needs at least 2 points, got {}",
            rows.len()
        )));
    }
    let dim = rows[0].len();
    if dim == 0 {
        return Err(ReportError::Config("PCA points must be non-empty".into()));
    }
    if n_components == 0 || n_components > dim {
        return Err(ReportError::Config(format!(
            "n_components must lie in 1..={dim}, got {n_components}"
        )));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(ReportError::Config(format!(
                "point {i} has dimension {} but point 0 has {dim}",
                r.len()
            )));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(ReportError::Config(format!("point {i} has a non-finite entry")));
        }
    }

    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, &v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }

    // Population covariance of the centered cloud.
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for r in rows {
        for a in 0..dim {
            let da = r[a] - mean[a];
            for b in a..dim {
                let v = da * (r[b] - mean[b]);
                cov[(a, b)] += v;
                if a != b {
                    cov[(b, a)] += v;
                }
            }
        }
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Vec::with_capacity(n_components);
    let mut explained_variance = Vec::with_capacity(n_components);
    for &col in order.iter().take(n_components) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        // Deterministic sign: the entry with the largest magnitude is positive.
        let lead = axis
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if lead < 0.0 {
            for v in &mut axis {
                *v = -*v;
            }
        }
        components.push(axis);
        // Numerical noise can push a zero eigenvalue into tiny negatives.
        explained_variance.push(eig.eigenvalues[col].max(0.0));
    }
    Ok(PcaProjection { mean, components, explained_variance })
}

impl PcaProjection {
    /// Coordinates of one point in component space.
    pub fn project(&self, point: &[f64]) -> Result<Vec<f64>, ReportError> {
        if point.len() != self.mean.len() {
            return Err(ReportError::Config(format!(
                "point has dimension {} but the projection was fitted on {}",
                point.len(),
                self.mean.len()
            )));
        }
        Ok(self
            .components
            .iter()
            .map(|axis| {
                axis.iter()
                    .zip(point.iter().zip(&self.mean))
                    .map(|(a, (x, m))| a * (x - m))
                    .sum()
            })
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Embedding report.
// ---------------------------------------------------------------------------

/// One projected embedding: a dataset graph, a pruned graph, a bare motif, or
/// an explanation, tagged by its group name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub group: String,
    pub class_label: usize,
    /// Position within its group.
    pub index: usize,
    pub x: f64,
    pub y: f64,
    pub node_count: usize,
}

/// 2D plot data: every graph of every group projected onto the top two
/// principal components of the *reference* graphs' embeddings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub rows: Vec<EmbeddingRow>,
    /// Variance captured by the two components, non-increasing.
    pub explained_variance: Vec<f64>,
}

/// Embed all graphs, fit the projection on the reference dataset only, and
/// project everything. `groups` entries are (name, graphs) — e.g. a pruned
/// dataset, bare motifs, or explanation graphs.
pub fn embedding_report(
    model: &GnnClassifier,
    reference: &GraphDataset,
    groups: &[(&str, &[Graph])],
) -> Result<EmbeddingReport, ReportError> {
    let reference_embeddings: Vec<Vec<f64>> = reference
        .graphs()
        .iter()
        .map(|g| model.embed(g))
        .collect::<Result<_, _>>()?;
    let pca = fit_pca(&reference_embeddings, 2)?;

    let mut rows = Vec::new();
    for (i, (g, emb)) in reference.graphs().iter().zip(&reference_embeddings).enumerate() {
        let xy = pca.project(emb)?;
        rows.push(EmbeddingRow {
            group: "reference".into(),
            class_label: g.class_label(),
            index: i,
            x: xy[0],
            y: xy[1],
            node_count: g.node_count(),
        });
    }
    for (name, graphs) in groups {
        for (i, g) in graphs.iter().enumerate() {
            let xy = pca.project(&model.embed(g)?)?;
            rows.push(EmbeddingRow {
                group: (*name).into(),
                class_label: g.class_label(),
                index: i,
                x: xy[0],
                y: xy[1],
                node_count: g.node_count(),
            });
        }
    }
    Ok(EmbeddingReport { rows, explained_variance: pca.explained_variance })
}

/// Euclidean distance, in the full embedding space, between a graph's
/// embedding and the centroid of one class of a dataset.
pub fn embedding_centroid_distance(
    model: &GnnClassifier,
    ds: &GraphDataset,
    class: usize,
    g: &Graph,
) -> Result<f64, ReportError> {
    let centroid = class_mean_embedding(model, ds, class)?;
    let emb = model.embed(g)?;
    Ok(emb
        .iter()
        .zip(&centroid)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

// ---------------------------------------------------------------------------
// Score table.
// ---------------------------------------------------------------------------

/// Mean validation score of the `n` best candidates (by the standard
/// ranking); `None` when there are no candidates.
pub fn mean_top_v(candidates: &[ExplanationCandidate], n: usize) -> Option<f64> {
    let top = select_explanations(candidates, n);
    if top.is_empty() {
        return None;
    }
    Some(top.iter().map(|c| c.scores.v).sum::<f64>() / top.len() as f64)
}

/// One line of an evaluation table: a class's candidate pool summarized by
/// its top-N mean validation score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreTableRow {
    pub dataset: String,
    pub class_label: usize,
    pub class_name: String,
    pub candidates: usize,
    pub mean_top_v: Option<f64>,
}

// ---------------------------------------------------------------------------
// DOT rendering.
// ---------------------------------------------------------------------------

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Render a graph in Graphviz DOT syntax (undirected). Node labels use the
/// dataset's category names when provided, likewise edge labels; unnamed
/// categories fall back to their numeric index.
pub fn to_dot(g: &Graph, node_names: &[String], edge_names: &[String]) -> String {
    let mut out = String::from("graph explanation {\n");
    out.push_str("  node [shape=circle];\n");
    for (i, &label) in g.node_labels().iter().enumerate() {
        let name = node_names
            .get(label)
            .map(|s| dot_escape(s))
            .unwrap_or_else(|| label.to_string());
        out.push_str(&format!("  n{i} [label=\"{name}\"];\n"));
    }
    for (k, &(u, v)) in g.edges().iter().enumerate() {
        match g.edge_labels().map(|l| l[k]) {
            Some(label) => {
                let name = edge_names
                    .get(label)
                    .map(|s| dot_escape(s))
                    .unwrap_or_else(|| label.to_string());
                out.push_str(&format!("  n{u} -- n{v} [label=\"{name}\"];\n"));
            }
            None => out.push_str(&format!("  n{u} -- n{v};\n")),
        }
    }
    out.push_str("}\n");
    out
}
