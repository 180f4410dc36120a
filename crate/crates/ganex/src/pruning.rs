//! Prediction-preserving random pruning.
//!
//! Repeatedly removes a random fraction of a graph's nodes (with their
//! incident edges, plus any nodes the removal isolated) and keeps the smaller
//! graph only when the frozen classifier's probability for the graph's class
//! does not drop. The result is an induced subgraph that the model considers
//! at least as strongly a member of its class — the minimal predictive
//! pattern, exposed by discarding everything the model never relied on.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{GnnClassifier, GnnError};
use crate::graph::{DatasetProvenance, Graph, GraphDataset, GraphError};
use crate::metrics::{granularity, MetricsError};

#[derive(Debug, Error)]
pub enum PruneError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Stopping rules and removal intensity for one pruning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneConfig {
    /// Fraction of the current node count removed per attempt (rounded up).
    pub prune_fraction: f64,
    /// Stop after this many accepted removals. Zero disables pruning.
    pub max_success: usize,
    /// Stop after this many rejected attempts. Zero disables pruning.
    pub max_fail: usize,
    /// Optional alternative stop rule: stop once the pruned graph's
    /// size-based granularity relative to the input exceeds this value.
    pub target_granularity: Option<f64>,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            prune_fraction: 0.1,
            max_success: 5,
            max_fail: 10,
            target_granularity: None,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<(), PruneError> {
        if !(self.prune_fraction.is_finite()
            && self.prune_fraction > 0.0
            && self.prune_fraction < 1.0)
        {
            return Err(PruneError::Config(format!(
                "prune_fraction must lie strictly between 0 and 1, got {}",
                self.prune_fraction
            )));
        }
        if let Some(k) = self.target_granularity {
            if !(k.is_finite() && (0.0..1.0).contains(&k)) {
                return Err(PruneError::Config(format!(
                    "target_granularity must lie in [0, 1), got {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Prune one graph under a frozen classifier.
///
/// Each attempt removes `⌈prune_fraction · n⌉` random nodes and then any
/// nodes the removal left without edges; the attempt is accepted iff the
/// model's probability for the graph's own class does not drop (non-strict).
/// Stops after `max_success` accepts, `max_fail` rejects, or — when
/// `target_granularity` is set — as soon as the accepted graph is small
/// enough. If an attempt would empty the graph entirely, the last accepted
/// graph is returned with a warning.
///
/// The result's target-class probability is never below the input's, and any
/// output that differs from the input has no isolated nodes.
pub fn prune_graph(
    g: &Graph,
    model: &GnnClassifier,
    cfg: &PruneConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Graph, PruneError> {
    cfg.validate()?;
    if g.node_count() < 2 {
        return Err(PruneError::Config(
            "pruning needs a graph with at least 2 nodes".into(),
        ));
    }
    let class = g.class_label();
    let original_size = g.node_count() as f64;
    let mut current = g.clone();
    let mut p_current = model.target_probability(&current, class)?;
    let mut successes = 0usize;
    let mut fails = 0usize;

    while successes < cfg.max_success && fails < cfg.max_fail {
        let n = current.node_count();
        if n <= 1 {
            break;
        }
        let remove = (cfg.prune_fraction * n as f64).ceil() as usize;
        if remove >= n {
            log::warn!(
                "pruning attempt would remove all {n} remaining nodes; keeping the last accepted graph"
            );
            break;
        }
        let removed = sample(rng, n, remove);
        let mut keep: Vec<usize> = (0..n).collect();
        let mut drop_mark = vec![false; n];
        for i in removed {
            drop_mark[i] = true;
        }
        keep.retain(|&i| !drop_mark[i]);
        let candidate = current.induced_subgraph(&keep)?;

        // Remove nodes the deletion disconnected from everything.
        let degrees = candidate.degrees();
        let connected: Vec<usize> =
            (0..candidate.node_count()).filter(|&i| degrees[i] > 0).collect();
        let candidate = if connected.is_empty() {
            log::warn!(
                "pruning attempt left no connected nodes; keeping the last accepted graph"
            );
            break;
        } else if connected.len() < candidate.node_count() {
            candidate.induced_subgraph(&connected)?
        } else {
            candidate
        };

        let p_candidate = model.target_probability(&candidate, class)?;
        if p_candidate >= p_current {
            current = candidate;
            p_current = p_candidate;
            successes += 1;
            if let Some(target) = cfg.target_granularity {
                if granularity(current.node_count() as f64, original_size)? > target {
                    break;
                }
            }
        } else {
            fails += 1;
        }
    }
    Ok(current)
}

/// Prune every graph of a dataset independently, each with its own RNG
/// stream derived from `rng`. Class labels, category vocabularies, and motif
/// annotations survive; the result carries provenance naming the source
/// dataset's content hash and the exact configuration.
pub fn prune_dataset(
    ds: &GraphDataset,
    model: &GnnClassifier,
    cfg: &PruneConfig,
    rng: &mut ChaCha8Rng,
) -> Result<GraphDataset, PruneError> {
    cfg.validate()?;
    let mut pruned = Vec::with_capacity(ds.len());
    for g in ds.graphs() {
        let per_graph_seed: u64 = rng.random();
        let mut grng = ChaCha8Rng::seed_from_u64(per_graph_seed);
        pruned.push(prune_graph(g, model, cfg, &mut grng)?);
    }
    let out = GraphDataset::new(
        pruned,
        ds.class_names().to_vec(),
        ds.node_category_names().to_vec(),
        ds.edge_category_names().to_vec(),
    )?;
    let config = serde_json::to_string(cfg)
        .map_err(|e| PruneError::Config(format!("config serialization failed: {e}")))?;
    Ok(out.with_provenance(DatasetProvenance { pruned_from: ds.content_hash(), config }))
}
