//! Message-passing graph classifier over dense relaxed inputs.
//!
//! The network is built from a [`BackboneArch`]: per-edge-channel message
//! passing (channel 0, "no edge", contributes nothing) followed by a
//! presence-masked global mean pooling. A node's presence is its clamped
//! degree `min(deg, 1)`, computed from the absence channel, so padded slots
//! of a dense batch are exactly invisible — predictions are independent of
//! `n_max` — and the same forward pass accepts relaxed generator samples.
//! The pooled vector is the graph embedding; a two-layer head turns it into
//! class probabilities. The backbone is shared with the critic used in
//! adversarial training.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{ArrayD, Axis, IxDyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{to_dense, Graph, GraphDataset, GraphError};
use crate::optim::{glorot_uniform, Adam};
use crate::tensor::{Tape, TensorId};

/// Keeps the pooling denominator finite for all-padding inputs; real nodes
/// contribute at least 1, so the perturbation is ~1e-9 relative.
const POOL_EPS: f64 = 1e-9;

const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("class {class} has no graphs")]
    EmptyClass { class: usize },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Nonlinearity applied after each message-passing layer and in the head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    LeakyRelu { slope: f64 },
}

impl Activation {
    fn apply(&self, t: &mut Tape, x: TensorId) -> TensorId {
        match *self {
            Activation::Tanh => t.tanh(x),
            Activation::LeakyRelu { slope } => t.leaky_relu(x, slope),
        }
    }
}

/// Message-passing stack shape: everything up to (and including) pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneArch {
    /// Node feature categories (input width).
    pub in_dim: usize,
    /// Edge channels including the absence channel 0.
    pub edge_channels: usize,
    pub hidden: usize,
    pub layers: usize,
    pub activation: Activation,
}

impl BackboneArch {
    /// Parameter names and shapes, in the order [`BackboneArch::forward`]
    /// consumes them.
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs = Vec::new();
        for l in 0..self.layers {
            let din = if l == 0 { self.in_dim } else { self.hidden };
            for c in 1..self.edge_channels {
                specs.push((format!("mp{l}.w{c}"), vec![din, self.hidden]));
            }
            specs.push((format!("mp{l}.self"), vec![din, self.hidden]));
            specs.push((format!("mp{l}.bias"), vec![self.hidden]));
        }
        specs
    }

    fn validate(&self) -> Result<(), GnnError> {
        if self.in_dim == 0 || self.hidden == 0 || self.layers == 0 || self.edge_channels < 2 {
            return Err(GnnError::Config(
                "backbone needs in_dim, hidden, layers >= 1 and edge_channels >= 2".into(),
            ));
        }
        Ok(())
    }

    /// Run the stack on a dense batch: `adj` is `[B, n, n, channels]`,
    /// `feat` is `[B, n, in_dim]`; returns the pooled `[B, hidden]`
    /// embedding. `ids` must follow [`BackboneArch::param_specs`].
    pub fn forward(
        &self,
        t: &mut Tape,
        ids: &[TensorId],
        adj: TensorId,
        feat: TensorId,
    ) -> TensorId {
        let ashape = t.shape(adj);
        let (b, n) = (ashape[0], ashape[1]);
        let mut h = feat;
        let mut k = 0;
        for l in 0..self.layers {
            let din = if l == 0 { self.in_dim } else { self.hidden };
            let mut acc: Option<TensorId> = None;
            for c in 1..self.edge_channels {
                let a_c = t.select(adj, 3, c);
                let m = t.batch_matmul(a_c, h);
                let m2 = t.reshape(m, &[b * n, din]);
                let mw = t.matmul(m2, ids[k]);
                k += 1;
                let mw = t.reshape(mw, &[b, n, self.hidden]);
                acc = Some(match acc {
                    None => mw,
                    Some(prev) => t.add(prev, mw),
                });
            }
            let h2 = t.reshape(h, &[b * n, din]);
            let sw = t.matmul(h2, ids[k]);
            k += 1;
            let sw = t.reshape(sw, &[b, n, self.hidden]);
            let pre = t.add(acc.expect("edge_channels >= 2"), sw);
            let pre = t.add_bias(pre, ids[k]);
            k += 1;
            h = self.activation.apply(t, pre);
        }

        // Presence mask m_i = min(deg_i, 1) = 1 - relu(1 - deg_i), with
        // deg_i read off the absence channel.
        let a0 = t.select(adj, 3, 0);
        let s0 = t.sum_axis(a0, 2);
        let neg_s0 = t.neg(s0);
        let deg = t.shift(neg_s0, n as f64);
        let neg_deg = t.neg(deg);
        let one_minus = t.shift(neg_deg, 1.0);
        let clipped = t.relu(one_minus);
        let neg_clip = t.neg(clipped);
        let mask = t.shift(neg_clip, 1.0); // [B, n]

        let mask3 = t.reshape(mask, &[b, n, 1]);
        let mask3 = t.broadcast_to(mask3, &[b, n, self.hidden]);
        let hm = t.mul(h, mask3);
        let summed = t.sum_axis(hm, 1); // [B, hidden]
        let count = t.sum_axis(mask, 1); // [B]
        let count = t.shift(count, POOL_EPS);
        let denom = t.reshape(count, &[b, 1]);
        let denom = t.broadcast_to(denom, &[b, self.hidden]);
        t.div(summed, denom)
    }
}

/// Full classifier shape: backbone plus a two-layer head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnnArch {
    pub backbone: BackboneArch,
    pub head_hidden: usize,
    pub n_classes: usize,
}

impl GnnArch {
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs = self.backbone.param_specs();
        specs.push(("head1.w".into(), vec![self.backbone.hidden, self.head_hidden]));
        specs.push(("head1.bias".into(), vec![self.head_hidden]));
        specs.push(("head2.w".into(), vec![self.head_hidden, self.n_classes]));
        specs.push(("head2.bias".into(), vec![self.n_classes]));
        specs
    }

    fn validate(&self) -> Result<(), GnnError> {
        self.backbone.validate()?;
        if self.head_hidden == 0 || self.n_classes == 0 {
            return Err(GnnError::Config("head_hidden and n_classes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Provenance stored inside a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainMeta {
    pub seed: u64,
    pub dataset_hash: String,
}

/// Tape node handles for one forward pass.
pub struct GnnForward {
    pub logits: TensorId,
    pub log_probs: TensorId,
    pub probs: TensorId,
    pub embedding: TensorId,
}

/// A trained (or freshly initialized) classifier. Immutable once trained;
/// evaluation from multiple threads is safe.
#[derive(Debug, Clone)]
pub struct GnnClassifier {
    arch: GnnArch,
    params: Vec<ArrayD<f64>>,
    train_meta: TrainMeta,
}

impl GnnClassifier {
    pub fn init(arch: GnnArch, seed: u64) -> Result<Self, GnnError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = arch
            .param_specs()
            .iter()
            .map(|(_, shape)| glorot_uniform(&mut rng, shape))
            .collect();
        Ok(GnnClassifier {
            arch,
            params,
            train_meta: TrainMeta { seed, dataset_hash: String::new() },
        })
    }

    pub fn arch(&self) -> &GnnArch {
        &self.arch
    }

    pub fn train_meta(&self) -> &TrainMeta {
        &self.train_meta
    }

    pub fn embedding_dim(&self) -> usize {
        self.arch.backbone.hidden
    }

    /// Insert every parameter as a tape leaf, in `param_specs` order.
    pub fn param_leaves(&self, t: &mut Tape) -> Vec<TensorId> {
        self.params.iter().map(|p| t.leaf(p.clone())).collect()
    }

    /// Raw parameter access for in-crate tests that need handcrafted models
    /// (e.g. a classifier whose output ignores its input).
    #[cfg(test)]
    pub(crate) fn params_mut(&mut self) -> &mut [ArrayD<f64>] {
        &mut self.params
    }

    /// Forward pass with externally supplied parameter leaves (training and
    /// any caller that needs gradients with respect to the parameters).
    pub fn forward_with(
        &self,
        t: &mut Tape,
        ids: &[TensorId],
        adj: TensorId,
        feat: TensorId,
    ) -> GnnForward {
        let n_backbone = self.arch.backbone.param_specs().len();
        let embedding = self.arch.backbone.forward(t, &ids[..n_backbone], adj, feat);
        let h1 = t.matmul(embedding, ids[n_backbone]);
        let h1 = t.add_bias(h1, ids[n_backbone + 1]);
        let h1 = self.arch.backbone.activation.apply(t, h1);
        let logits = t.matmul(h1, ids[n_backbone + 2]);
        let logits = t.add_bias(logits, ids[n_backbone + 3]);
        let log_probs = t.log_softmax_last(logits);
        let probs = t.exp(log_probs);
        GnnForward { logits, log_probs, probs, embedding }
    }

    /// Forward pass on frozen parameters.
    pub fn forward(&self, t: &mut Tape, adj: TensorId, feat: TensorId) -> GnnForward {
        let ids = self.param_leaves(t);
        self.forward_with(t, &ids, adj, feat)
    }

    /// Class probabilities for one discrete graph.
    pub fn predict_proba(&self, g: &Graph) -> Result<Vec<f64>, GnnError> {
        let (probs, _) = self.eval_graphs(std::slice::from_ref(g))?;
        Ok(probs.index_axis(Axis(0), 0).iter().copied().collect())
    }

    /// Pooled pre-head embedding for one discrete graph.
    pub fn embed(&self, g: &Graph) -> Result<Vec<f64>, GnnError> {
        let (_, emb) = self.eval_graphs(std::slice::from_ref(g))?;
        Ok(emb.index_axis(Axis(0), 0).iter().copied().collect())
    }

    /// Batched evaluation of discrete graphs: returns `[B, n_classes]`
    /// probabilities and `[B, hidden]` embeddings.
    pub fn eval_graphs(&self, graphs: &[Graph]) -> Result<(ArrayD<f64>, ArrayD<f64>), GnnError> {
        let b_total = graphs.len();
        let mut probs = ArrayD::zeros(IxDyn(&[b_total, self.arch.n_classes]));
        let mut embs = ArrayD::zeros(IxDyn(&[b_total, self.arch.backbone.hidden]));
        for (start, chunk) in graphs.chunks(32).enumerate().map(|(i, c)| (i * 32, c)) {
            let n_max = chunk.iter().map(Graph::node_count).max().unwrap_or(1);
            let (adj, feat) = pack_batch(
                chunk,
                n_max,
                self.arch.backbone.in_dim,
                self.arch.backbone.edge_channels,
            )?;
            let mut t = Tape::new();
            let adj = t.leaf(adj);
            let feat = t.leaf(feat);
            let out = self.forward(&mut t, adj, feat);
            for (k, _) in chunk.iter().enumerate() {
                for c in 0..self.arch.n_classes {
                    probs[IxDyn(&[start + k, c])] = t.value(out.probs)[IxDyn(&[k, c])];
                }
                for d in 0..self.arch.backbone.hidden {
                    embs[IxDyn(&[start + k, d])] = t.value(out.embedding)[IxDyn(&[k, d])];
                }
            }
        }
        Ok((probs, embs))
    }

    /// Probability of `class` for one graph.
    pub fn target_probability(&self, g: &Graph, class: usize) -> Result<f64, GnnError> {
        let p = self.predict_proba(g)?;
        p.get(class).copied().ok_or_else(|| {
            GnnError::Config(format!("class {class} out of range 0..{}", p.len()))
        })
    }
}

/// Mean embedding over all graphs of a class.
pub fn class_mean_embedding(
    model: &GnnClassifier,
    ds: &GraphDataset,
    class: usize,
) -> Result<Vec<f64>, GnnError> {
    let idx = ds.indices_of_class(class);
    if idx.is_empty() {
        return Err(GnnError::EmptyClass { class });
    }
    let graphs: Vec<Graph> = idx.iter().map(|&i| ds.graphs()[i].clone()).collect();
    let (_, embs) = model.eval_graphs(&graphs)?;
    let mean = embs.mean_axis(Axis(0)).expect("nonempty class");
    Ok(mean.iter().copied().collect())
}

/// Stack dense encodings of `graphs` into `[B, n_max, n_max, C]` adjacency
/// and `[B, n_max, F]` feature arrays.
pub fn pack_batch(
    graphs: &[Graph],
    n_max: usize,
    node_categories: usize,
    edge_channels: usize,
) -> Result<(ArrayD<f64>, ArrayD<f64>), GraphError> {
    let b = graphs.len();
    let mut adj = ArrayD::zeros(IxDyn(&[b, n_max, n_max, edge_channels]));
    let mut feat = ArrayD::zeros(IxDyn(&[b, n_max, node_categories]));
    for (k, g) in graphs.iter().enumerate() {
        let cg = to_dense(g, n_max, node_categories, edge_channels)?;
        adj.index_axis_mut(Axis(0), k).assign(cg.adjacency());
        feat.index_axis_mut(Axis(0), k).assign(cg.features());
    }
    Ok((adj, feat))
}

/// Hyperparameters for [`train_gnn`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnnTrainConfig {
    pub hidden: usize,
    pub layers: usize,
    pub head_hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub test_fraction: f64,
}

impl Default for GnnTrainConfig {
    fn default() -> Self {
        GnnTrainConfig {
            hidden: 24,
            layers: 3,
            head_hidden: 16,
            epochs: 30,
            batch_size: 32,
            learning_rate: 3e-3,
            test_fraction: 0.2,
        }
    }
}

/// Training trace and final quality numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub per_class_test_accuracy: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Train a classifier on a dataset with a seeded stratified split.
pub fn train_gnn(
    ds: &GraphDataset,
    cfg: &GnnTrainConfig,
    seed: u64,
) -> Result<(GnnClassifier, TrainReport), GnnError> {
    if ds.is_empty() {
        return Err(GnnError::Config("dataset is empty".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(GnnError::Config("batch_size and epochs must be positive".into()));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(GnnError::Config("learning_rate must be positive and finite".into()));
    }
    if !(0.0..1.0).contains(&cfg.test_fraction) {
        return Err(GnnError::Config("test_fraction must lie in [0, 1)".into()));
    }

    let mut warnings = Vec::new();
    if ds.class_count() == 1 {
        warnings.push("dataset has a single class; accuracy is trivially 1".into());
    }

    let arch = GnnArch {
        backbone: BackboneArch {
            in_dim: ds.node_categories(),
            edge_channels: ds.edge_channels(),
            hidden: cfg.hidden,
            layers: cfg.layers,
            activation: Activation::Tanh,
        },
        head_hidden: cfg.head_hidden,
        n_classes: ds.class_count(),
    };
    let mut model = GnnClassifier::init(arch, seed ^ 0x9E37_79B9_7F4A_7C15)?;
    model.train_meta = TrainMeta { seed, dataset_hash: ds.content_hash() };

    // Stratified split.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in 0..ds.class_count() {
        let mut idx = ds.indices_of_class(class);
        idx.shuffle(&mut rng);
        let n_test = ((idx.len() as f64 * cfg.test_fraction).round() as usize)
            .min(idx.len().saturating_sub(1));
        test_idx.extend_from_slice(&idx[..n_test]);
        train_idx.extend_from_slice(&idx[n_test..]);
    }
    if train_idx.is_empty() {
        return Err(GnnError::Config("no training graphs left after the split".into()));
    }

    let shapes: Vec<Vec<usize>> = model.params.iter().map(|p| p.shape().to_vec()).collect();
    let mut opt = Adam::new(cfg.learning_rate, &shapes);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let graphs: Vec<Graph> = chunk.iter().map(|&i| ds.graphs()[i].clone()).collect();
            let n_max = graphs.iter().map(Graph::node_count).max().unwrap_or(1);
            let (adj, feat) = pack_batch(
                &graphs,
                n_max,
                model.arch.backbone.in_dim,
                model.arch.backbone.edge_channels,
            )?;
            let bsz = graphs.len();

            let mut t = Tape::new();
            let adj = t.leaf(adj);
            let feat = t.leaf(feat);
            let ids = model.param_leaves(&mut t);
            let out = model.forward_with(&mut t, &ids, adj, feat);

            // Cross-entropy: mean over the batch of -log p[target].
            let mut onehot = ArrayD::zeros(IxDyn(&[bsz, model.arch.n_classes]));
            for (k, g) in graphs.iter().enumerate() {
                onehot[IxDyn(&[k, g.class_label()])] = 1.0;
            }
            let onehot = t.leaf(onehot);
            let picked = t.mul(out.log_probs, onehot);
            let total = t.sum_all(picked);
            let loss = t.scale(total, -1.0 / bsz as f64);

            let loss_value = t.scalar_value(loss);
            if !loss_value.is_finite() {
                return Err(GnnError::Diverged { epoch, loss: loss_value });
            }
            loss_sum += loss_value;
            batches += 1;

            let grads = t.grad(loss, &ids);
            let grad_values: Vec<ArrayD<f64>> =
                grads.iter().map(|&g| t.value(g).clone()).collect();
            opt.step(&mut model.params, &grad_values);
        }
        epoch_losses.push(loss_sum / batches.max(1) as f64);
    }

    let (train_accuracy, _) = evaluate_accuracy(&model, ds, &train_idx)?;
    let (test_accuracy, per_class_test_accuracy, missing) = if test_idx.is_empty() {
        warnings.push("test split is empty; reporting training accuracy".into());
        let (acc, per_class) = evaluate_accuracy(&model, ds, &train_idx)?;
        (acc, per_class, Vec::new())
    } else {
        let (acc, per_class) = evaluate_accuracy(&model, ds, &test_idx)?;
        let missing: Vec<usize> = (0..ds.class_count())
            .filter(|&c| !test_idx.iter().any(|&i| ds.graphs()[i].class_label() == c))
            .collect();
        (acc, per_class, missing)
    };
    for c in missing {
        warnings.push(format!("class {c} absent from the test split"));
    }

    let report = TrainReport {
        epoch_losses,
        train_accuracy,
        test_accuracy,
        per_class_test_accuracy,
        warnings,
    };
    Ok((model, report))
}

/// Overall and per-class accuracy over `indices` of `ds`. Classes absent
/// from the selection report accuracy 1.0 (vacuous).
pub fn evaluate_accuracy(
    model: &GnnClassifier,
    ds: &GraphDataset,
    indices: &[usize],
) -> Result<(f64, Vec<f64>), GnnError> {
    if indices.is_empty() {
        return Err(GnnError::Config("cannot evaluate on an empty selection".into()));
    }
    let graphs: Vec<Graph> = indices.iter().map(|&i| ds.graphs()[i].clone()).collect();
    let (probs, _) = model.eval_graphs(&graphs)?;
    let k = model.arch.n_classes;
    let mut correct = 0usize;
    let mut class_total = vec![0usize; k];
    let mut class_correct = vec![0usize; k];
    for (row, g) in graphs.iter().enumerate() {
        let mut best = 0usize;
        for c in 1..k {
            if probs[IxDyn(&[row, c])] > probs[IxDyn(&[row, best])] {
                best = c;
            }
        }
        class_total[g.class_label()] += 1;
        if best == g.class_label() {
            correct += 1;
            class_correct[g.class_label()] += 1;
        }
    }
    let per_class = (0..k)
        .map(|c| {
            if class_total[c] == 0 {
                1.0
            } else {
                class_correct[c] as f64 / class_total[c] as f64
            }
        })
        .collect();
    Ok((correct as f64 / graphs.len() as f64, per_class))
}

// ---------------------------------------------------------------------------
// Checkpoints.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    schema_version: u32,
    arch: GnnArch,
    params: Vec<ParamRecord>,
    train_meta: TrainMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ParamRecord {
    pub(crate) name: String,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
}

/// Flatten parameters into named records following `specs`.
pub(crate) fn params_to_records(
    specs: &[(String, Vec<usize>)],
    params: &[ArrayD<f64>],
) -> Vec<ParamRecord> {
    specs
        .iter()
        .zip(params)
        .map(|((name, shape), value)| ParamRecord {
            name: name.clone(),
            shape: shape.clone(),
            data: value.iter().copied().collect(),
        })
        .collect()
}

/// Rebuild parameter arrays from records, validating names and shapes
/// against `specs`.
pub(crate) fn records_to_params(
    specs: &[(String, Vec<usize>)],
    records: &[ParamRecord],
) -> Result<Vec<ArrayD<f64>>, String> {
    if specs.len() != records.len() {
        return Err(format!(
            "expected {} parameter arrays, found {}",
            specs.len(),
            records.len()
        ));
    }
    let mut params = Vec::with_capacity(specs.len());
    for ((name, shape), rec) in specs.iter().zip(records) {
        if rec.name != *name || rec.shape != *shape {
            return Err(format!(
                "parameter {} with shape {:?} does not match expected {} {:?}",
                rec.name, rec.shape, name, shape
            ));
        }
        let n: usize = shape.iter().product();
        if rec.data.len() != n {
            return Err(format!(
                "parameter {} has {} values for shape {:?}",
                rec.name,
                rec.data.len(),
                rec.shape
            ));
        }
        params.push(
            ArrayD::from_shape_vec(IxDyn(shape), rec.data.clone()).expect("length checked above"),
        );
    }
    Ok(params)
}

/// Write a model as a single JSON object with named flat parameter arrays.
pub fn save_checkpoint(path: &Path, model: &GnnClassifier) -> Result<(), GnnError> {
    let specs = model.arch.param_specs();
    let params = params_to_records(&specs, &model.params);
    let file = CheckpointFile {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        arch: model.arch.clone(),
        params,
        train_meta: model.train_meta.clone(),
    };
    let out = File::create(path)?;
    serde_json::to_writer(BufWriter::new(out), &file)
        .map_err(|e| GnnError::Checkpoint(e.to_string()))?;
    Ok(())
}

/// Load a model written by [`save_checkpoint`], validating names and shapes
/// against the declared architecture.
pub fn load_checkpoint(path: &Path) -> Result<GnnClassifier, GnnError> {
    let file = File::open(path)?;
    let ckpt: CheckpointFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| GnnError::Checkpoint(e.to_string()))?;
    if ckpt.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(GnnError::Checkpoint(format!(
            "unsupported schema version {}",
            ckpt.schema_version
        )));
    }
    ckpt.arch.validate()?;
    let specs = ckpt.arch.param_specs();
    let params = records_to_params(&specs, &ckpt.params).map_err(GnnError::Checkpoint)?;
    Ok(GnnClassifier { arch: ckpt.arch, params, train_meta: ckpt.train_meta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{gen_shape_dataset, ShapeConfig};
    use rand::Rng;

    fn tiny_model(in_dim: usize, channels: usize, classes: usize, seed: u64) -> GnnClassifier {
        let arch = GnnArch {
            backbone: BackboneArch {
                in_dim,
                edge_channels: channels,
                hidden: 6,
                layers: 2,
                activation: Activation::Tanh,
            },
            head_hidden: 5,
            n_classes: classes,
        };
        GnnClassifier::init(arch, seed).unwrap()
    }

    /// Random symmetric channel-normalized adjacency and feature tensors —
    /// strictly interior (nothing is one-hot).
    fn random_relaxed(
        rng: &mut ChaCha8Rng,
        b: usize,
        n: usize,
        channels: usize,
        in_dim: usize,
    ) -> (ArrayD<f64>, ArrayD<f64>) {
        let mut adj = ArrayD::zeros(IxDyn(&[b, n, n, channels]));
        for k in 0..b {
            for i in 0..n {
                for j in i..n {
                    let raw: Vec<f64> = (0..channels).map(|_| rng.random_range(0.1..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    for c in 0..channels {
                        adj[IxDyn(&[k, i, j, c])] = raw[c] / s;
                        adj[IxDyn(&[k, j, i, c])] = raw[c] / s;
                    }
                }
            }
        }
        let mut feat = ArrayD::zeros(IxDyn(&[b, n, in_dim]));
        for k in 0..b {
            for i in 0..n {
                let raw: Vec<f64> = (0..in_dim).map(|_| rng.random_range(0.1..1.0)).collect();
                let s: f64 = raw.iter().sum();
                for c in 0..in_dim {
                    feat[IxDyn(&[k, i, c])] = raw[c] / s;
                }
            }
        }
        (adj, feat)
    }

    #[test]
    fn probabilities_sum_to_one_on_relaxed_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = tiny_model(3, 3, 4, 2);
        let (adj, feat) = random_relaxed(&mut rng, 5, 6, 3, 3);
        let mut t = Tape::new();
        let adj = t.leaf(adj);
        let feat = t.leaf(feat);
        let out = model.forward(&mut t, adj, feat);
        for row in t.value(out.probs).rows() {
            let s: f64 = row.sum();
            assert!((s - 1.0).abs() < 1e-6, "row sum {s}");
        }
    }

    #[test]
    fn predictions_are_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = tiny_model(2, 3, 3, 4);
        for _ in 0..10 {
            let n = rng.random_range(3..9);
            let mut edges = Vec::new();
            let mut labels = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.random_bool(0.4) {
                        edges.push((u, v));
                        labels.push(rng.random_range(0..2));
                    }
                }
            }
            let nodes: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let g = Graph::new(nodes, edges, Some(labels), 0).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let pg = g.permuted(&perm).unwrap();
            let a = model.predict_proba(&g).unwrap();
            let b = model.predict_proba(&pg).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-5, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn predictions_are_padding_invariant() {
        let model = tiny_model(2, 3, 3, 11);
        let g = Graph::new(vec![0, 1, 0], vec![(0, 1), (1, 2)], Some(vec![0, 1]), 0).unwrap();
        let run = |n_max: usize| -> Vec<f64> {
            let (adj, feat) = pack_batch(std::slice::from_ref(&g), n_max, 2, 3).unwrap();
            let mut t = Tape::new();
            let adj = t.leaf(adj);
            let feat = t.leaf(feat);
            let out = model.forward(&mut t, adj, feat);
            t.value(out.probs).iter().copied().collect()
        };
        let small = run(3);
        let big = run(9);
        for (a, b) in small.iter().zip(&big) {
            assert!((a - b).abs() < 1e-12, "{small:?} vs {big:?}");
        }
    }

    #[test]
    fn class_probability_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let model = tiny_model(2, 3, 3, 5);
        let (adj0, feat0) = random_relaxed(&mut rng, 1, 4, 3, 2);

        let eval = |adj_arr: &ArrayD<f64>| -> f64 {
            let mut t = Tape::new();
            let adj = t.leaf(adj_arr.clone());
            let feat = t.leaf(feat0.clone());
            let out = model.forward(&mut t, adj, feat);
            t.value(out.probs)[IxDyn(&[0, 1])]
        };

        // Analytic gradient of p[class 1] with respect to all adjacency entries.
        let mut t = Tape::new();
        let adj = t.leaf(adj0.clone());
        let feat = t.leaf(feat0.clone());
        let out = model.forward(&mut t, adj, feat);
        let p1 = t.select(out.probs, 1, 1);
        let p1 = t.sum_all(p1); // batch of 1: scalar
        let grad = t.grad(p1, &[adj])[0];
        let grad = t.value(grad).clone();

        let mut probes = 0;
        for _ in 0..20 {
            let i = rng.random_range(0..4);
            let j = rng.random_range(0..4);
            let c = rng.random_range(0..3);
            let idx = IxDyn(&[0, i, j, c]);
            let eps = 1e-5;
            let mut hi = adj0.clone();
            hi[idx.clone()] += eps;
            let mut lo = adj0.clone();
            lo[idx.clone()] -= eps;
            let numeric = (eval(&hi) - eval(&lo)) / (2.0 * eps);
            let analytic = grad[idx];
            let denom = numeric.abs().max(analytic.abs()).max(1e-6);
            assert!(
                ((numeric - analytic) / denom).abs() < 1e-4,
                "entry ({i},{j},{c}): analytic {analytic} vs numeric {numeric}"
            );
            probes += 1;
        }
        assert_eq!(probes, 20);
    }

    #[test]
    fn training_separates_two_easy_classes() {
        // Wheels vs stars at small scale.
        let ds = gen_shape_dataset(
            &ShapeConfig { graphs_per_class: 25, min_nodes: 6, max_nodes: 12 },
            3,
        )
        .unwrap();
        let keep: Vec<Graph> = ds
            .graphs()
            .iter()
            .filter(|g| g.class_label() == 1 || g.class_label() == 3)
            .map(|g| {
                Graph::new(
                    g.node_labels().to_vec(),
                    g.edges().to_vec(),
                    None,
                    usize::from(g.class_label() == 3),
                )
                .unwrap()
            })
            .collect();
        let two = GraphDataset::new(
            keep,
            vec!["wheel".into(), "star".into()],
            vec!["node".into()],
            vec![],
        )
        .unwrap();
        let cfg = GnnTrainConfig {
            hidden: 10,
            layers: 2,
            head_hidden: 8,
            epochs: 25,
            batch_size: 16,
            ..Default::default()
        };
        let (model, report) = train_gnn(&two, &cfg, 17).unwrap();
        assert!(report.test_accuracy >= 0.9, "test accuracy {}", report.test_accuracy);
        assert!(report.epoch_losses.first().unwrap() > report.epoch_losses.last().unwrap());
        assert_eq!(model.train_meta().dataset_hash, two.content_hash());
    }

    #[test]
    fn single_class_dataset_trains_with_warning() {
        let g = Graph::new(vec![0, 0], vec![(0, 1)], None, 0).unwrap();
        let ds = GraphDataset::new(
            vec![g.clone(), g.clone(), g.clone(), g],
            vec!["only".into()],
            vec!["node".into()],
            vec![],
        )
        .unwrap();
        let cfg = GnnTrainConfig { epochs: 2, hidden: 4, layers: 1, head_hidden: 3, ..Default::default() };
        let (_, report) = train_gnn(&ds, &cfg, 5).unwrap();
        assert_eq!(report.test_accuracy, 1.0);
        assert!(report.warnings.iter().any(|w| w.contains("single class")));
    }

    #[test]
    fn class_mean_embedding_matches_naive_mean() {
        let ds = gen_shape_dataset(
            &ShapeConfig { graphs_per_class: 6, min_nodes: 6, max_nodes: 9 },
            21,
        )
        .unwrap();
        let model = tiny_model(1, 2, 4, 9);
        let mean = class_mean_embedding(&model, &ds, 2).unwrap();
        let idx = ds.indices_of_class(2);
        let mut naive = vec![0.0; model.embedding_dim()];
        for &i in &idx {
            let e = model.embed(&ds.graphs()[i]).unwrap();
            for (acc, v) in naive.iter_mut().zip(&e) {
                *acc += v;
            }
        }
        for v in &mut naive {
            *v /= idx.len() as f64;
        }
        for (a, b) in mean.iter().zip(&naive) {
            assert!((a - b).abs() < 1e-12);
        }
        // Single-graph class: the mean is that embedding.
        let one = GraphDataset::new(
            vec![ds.graphs()[0].clone()],
            ds.class_names().to_vec(),
            ds.node_category_names().to_vec(),
            vec![],
        )
        .unwrap();
        let lone_class = ds.graphs()[0].class_label();
        let m = class_mean_embedding(&model, &one, lone_class).unwrap();
        let e = model.embed(&ds.graphs()[0]).unwrap();
        assert_eq!(m, e);
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let model = tiny_model(2, 3, 3, 31);
        let g = Graph::new(vec![0, 1, 1], vec![(0, 1), (0, 2)], Some(vec![0, 1]), 0).unwrap();
        let before = model.predict_proba(&g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&path, &model).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let after = loaded.predict_proba(&g).unwrap();
        assert_eq!(before, after);
        assert_eq!(loaded.arch(), model.arch());
    }

    #[test]
    fn checkpoint_rejects_tampered_files() {
        let model = tiny_model(1, 2, 2, 37);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&path, &model).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        let unknown = text.replacen("\"schema_version\"", "\"zeppelin\":1,\"schema_version\"", 1);
        std::fs::write(&path, unknown).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(GnnError::Checkpoint(_))));

        let renamed = text.replacen("mp0.w1", "mp0.w9", 1);
        std::fs::write(&path, renamed).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(GnnError::Checkpoint(_))));
    }

    #[test]
    fn absurd_learning_rate_reports_divergence() {
        let ds = gen_shape_dataset(
            &ShapeConfig { graphs_per_class: 8, min_nodes: 6, max_nodes: 9 },
            41,
        )
        .unwrap();
        // Adam's sign-normalized steps survive merely huge rates, so push the
        // parameters to the float ceiling where matmul accumulation overflows.
        let cfg = GnnTrainConfig {
            learning_rate: 1e308,
            epochs: 5,
            hidden: 6,
            layers: 2,
            head_hidden: 4,
            ..Default::default()
        };
        match train_gnn(&ds, &cfg, 1) {
            Err(GnnError::Diverged { epoch, loss }) => {
                assert!(!loss.is_finite());
                assert!(epoch < 5);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
