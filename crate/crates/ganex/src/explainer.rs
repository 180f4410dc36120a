//! Adversarial generation of explanation graphs for a frozen classifier.
//!
//! A small MLP generator maps latent noise to adjacency-channel and
//! node-feature logits; Gumbel-Softmax sampling turns those into dense
//! relaxed graphs (optionally straight-through hard). A Wasserstein critic
//! with gradient penalty keeps samples close to the target class's real
//! graphs, while the frozen classifier's loss pushes them toward maximal
//! target-class probability. The two pressures are blended per iteration by
//! a sigmoid ramp `λ(t)`: early iterations are adversarial-dominant (learn
//! the data manifold), late iterations are classifier-dominant (sharpen the
//! explanation). Discrete candidates are harvested periodically, scored
//! with the explanation metrics, and filtered or ranked.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{ArrayD, Axis, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gnn::{
    params_to_records, records_to_params, Activation, BackboneArch, GnnClassifier, GnnError,
    GnnForward, TrainMeta,
};
use crate::graph::{from_dense, ContinuousGraph, Graph, GraphDataset, GraphError};
use crate::metrics::{
    score_candidate, score_filter, ExplanationScores, FilterConfig, MetricsError, ScoringContext,
};
use crate::optim::{glorot_uniform, Adam};
use crate::tensor::{Tape, TensorId};

const GAN_CHECKPOINT_SCHEMA_VERSION: u32 = 1;
const GEN_SEED_SALT: u64 = 0xA5A5_5A5A_0F0F_F0F0;
const CRITIC_SEED_SALT: u64 = 0x3C3C_C3C3_6969_9696;

#[derive(Debug, Error)]
pub enum ExplainerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric failure at iteration {iteration}: {message}")]
    Numeric { iteration: usize, message: String },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Generator and critic.
// ---------------------------------------------------------------------------

/// Shape of the latent-to-graph MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorArch {
    pub latent_dim: usize,
    pub hidden: usize,
    pub n_max: usize,
    /// Edge channels including the absence channel 0.
    pub edge_channels: usize,
    pub node_categories: usize,
}

impl GeneratorArch {
    fn validate(&self) -> Result<(), ExplainerError> {
        if self.latent_dim == 0
            || self.hidden == 0
            || self.n_max == 0
            || self.edge_channels < 2
            || self.node_categories == 0
        {
            return Err(ExplainerError::Config(
                "generator needs latent_dim, hidden, n_max, node_categories >= 1 and edge_channels >= 2"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// MLP that maps latent vectors to adjacency logits `[B, n, n, C]` and
/// feature logits `[B, n, F]`.
#[derive(Debug, Clone)]
pub struct Generator {
    arch: GeneratorArch,
    params: Vec<ArrayD<f64>>,
}

impl Generator {
    pub fn init(arch: GeneratorArch, seed: u64) -> Result<Self, ExplainerError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = arch
            .param_specs()
            .iter()
            .map(|(_, shape)| glorot_uniform(&mut rng, shape))
            .collect();
        Ok(Generator { arch, params })
    }

    pub fn arch(&self) -> &GeneratorArch {
        &self.arch
    }

    pub fn params(&self) -> &[ArrayD<f64>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ArrayD<f64>] {
        &mut self.params
    }

    pub fn param_leaves(&self, t: &mut Tape) -> Vec<TensorId> {
        self.params.iter().map(|p| t.leaf(p.clone())).collect()
    }

    /// `z` is `[B, latent_dim]`; returns `(adjacency logits, feature logits)`.
    pub fn forward(&self, t: &mut Tape, ids: &[TensorId], z: TensorId) -> (TensorId, TensorId) {
        let b = t.shape(z)[0];
        let GeneratorArch { n_max, edge_channels, node_categories, .. } = self.arch;
        let h = t.matmul(z, ids[0]);
        let h = t.add_bias(h, ids[1]);
        let h = t.leaky_relu(h, 0.2);
        let h = t.matmul(h, ids[2]);
        let h = t.add_bias(h, ids[3]);
        let h = t.leaky_relu(h, 0.2);
        let adj = t.matmul(h, ids[4]);
        let adj = t.add_bias(adj, ids[5]);
        let adj = t.reshape(adj, &[b, n_max, n_max, edge_channels]);
        let feat = t.matmul(h, ids[6]);
        let feat = t.add_bias(feat, ids[7]);
        let feat = t.reshape(feat, &[b, n_max, node_categories]);
        (adj, feat)
    }
}

impl GeneratorArch {
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        let adj_out = self.n_max * self.n_max * self.edge_channels;
        let feat_out = self.n_max * self.node_categories;
        vec![
            ("gen.fc1.w".into(), vec![self.latent_dim, self.hidden]),
            ("gen.fc1.bias".into(), vec![self.hidden]),
            ("gen.fc2.w".into(), vec![self.hidden, self.hidden]),
            ("gen.fc2.bias".into(), vec![self.hidden]),
            ("gen.adj.w".into(), vec![self.hidden, adj_out]),
            ("gen.adj.bias".into(), vec![adj_out]),
            ("gen.feat.w".into(), vec![self.hidden, feat_out]),
            ("gen.feat.bias".into(), vec![feat_out]),
        ]
    }
}

/// Critic: the shared message-passing backbone with a scalar output head.
/// The score is unbounded (Wasserstein critic, not a classifier).
#[derive(Debug, Clone)]
pub struct Critic {
    backbone: BackboneArch,
    params: Vec<ArrayD<f64>>,
}

impl Critic {
    pub fn init(backbone: BackboneArch, seed: u64) -> Result<Self, ExplainerError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params: Vec<ArrayD<f64>> = Self::param_specs_for(&backbone)
            .iter()
            .map(|(_, shape)| glorot_uniform(&mut rng, shape))
            .collect();
        if params.is_empty() {
            return Err(ExplainerError::Config("empty critic".into()));
        }
        Ok(Critic { backbone, params })
    }

    pub fn backbone(&self) -> &BackboneArch {
        &self.backbone
    }

    pub fn params(&self) -> &[ArrayD<f64>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ArrayD<f64>] {
        &mut self.params
    }

    fn param_specs_for(backbone: &BackboneArch) -> Vec<(String, Vec<usize>)> {
        let mut specs = backbone.param_specs();
        specs.push(("critic.out.w".into(), vec![backbone.hidden, 1]));
        specs.push(("critic.out.bias".into(), vec![1]));
        specs
    }

    pub fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        Self::param_specs_for(&self.backbone)
    }

    pub fn param_leaves(&self, t: &mut Tape) -> Vec<TensorId> {
        self.params.iter().map(|p| t.leaf(p.clone())).collect()
    }

    /// Scores for a dense batch, shape `[B]`.
    pub fn forward(
        &self,
        t: &mut Tape,
        ids: &[TensorId],
        adj: TensorId,
        feat: TensorId,
    ) -> TensorId {
        let n_backbone = self.backbone.param_specs().len();
        let emb = self.backbone.forward(t, &ids[..n_backbone], adj, feat);
        let out = t.matmul(emb, ids[n_backbone]);
        let out = t.add_bias(out, ids[n_backbone + 1]);
        let b = t.shape(out)[0];
        t.reshape(out, &[b])
    }
}

// ---------------------------------------------------------------------------
// Configuration.
// ---------------------------------------------------------------------------

/// Which classifier loss drives the generator in the late phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GnnLossKind {
    /// `−log p_target` on the relaxed/hard sample.
    CrossEntropy,
    /// Negative raw target logit; immune to softmax saturation.
    Logits,
}

/// All knobs of one adversarial explanation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainerConfig {
    /// Blend weight at the start of training.
    pub lambda_min: f64,
    /// Blend weight approached at the end of training.
    pub lambda_max: f64,
    /// Fraction of the run before the ramp midpoint region begins.
    pub p_ramp: f64,
    /// Steepness of the sigmoid ramp.
    pub k_sched: f64,
    /// Total generator iterations (T).
    pub iterations: usize,
    /// Gradient-penalty coefficient.
    pub alpha: f64,
    /// Gumbel-Softmax temperature.
    pub tau: f64,
    pub latent_dim: usize,
    pub batch_size: usize,
    pub gen_hidden: usize,
    pub critic_hidden: usize,
    pub critic_layers: usize,
    pub learning_rate: f64,
    /// Critic updates per generator update.
    pub critic_steps: usize,
    pub gnn_loss_kind: GnnLossKind,
    /// Harvest cadence in iterations.
    pub harvest_every: usize,
    /// Hard samples drawn per harvest.
    pub harvest_batch: usize,
    /// Generated graph capacity; `None` uses the largest target-class graph.
    pub n_max: Option<usize>,
    pub filter: FilterConfig,
    /// When false, candidates skip the filter and the final list is the
    /// overall top `top_n` by validation score.
    pub filtering_enabled: bool,
    pub top_n: usize,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        ExplainerConfig {
            lambda_min: 0.0,
            lambda_max: 0.6,
            p_ramp: 0.4,
            k_sched: 6.0,
            iterations: 3000,
            alpha: 10.0,
            tau: 1.0,
            latent_dim: 16,
            batch_size: 16,
            gen_hidden: 64,
            critic_hidden: 24,
            critic_layers: 2,
            learning_rate: 1e-3,
            critic_steps: 5,
            gnn_loss_kind: GnnLossKind::CrossEntropy,
            harvest_every: 50,
            harvest_batch: 64,
            n_max: None,
            filter: FilterConfig::default(),
            filtering_enabled: true,
            top_n: 10,
        }
    }
}

impl ExplainerConfig {
    pub fn validate(&self) -> Result<(), ExplainerError> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.lambda_min) || !unit.contains(&self.lambda_max) {
            return Err(ExplainerError::Config("lambda_min/lambda_max must lie in [0, 1]".into()));
        }
        if self.lambda_min > self.lambda_max {
            return Err(ExplainerError::Config("lambda_min must not exceed lambda_max".into()));
        }
        if !(0.0..1.0).contains(&self.p_ramp) {
            return Err(ExplainerError::Config("p_ramp must lie in [0, 1)".into()));
        }
        if !(self.k_sched.is_finite() && self.k_sched > 0.0) {
            return Err(ExplainerError::Config("k_sched must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(ExplainerError::Config("iterations must be positive".into()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(ExplainerError::Config("alpha must be >= 0".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(ExplainerError::Config("tau must be positive".into()));
        }
        if self.latent_dim == 0
            || self.batch_size == 0
            || self.gen_hidden == 0
            || self.critic_hidden == 0
            || self.critic_layers == 0
            || self.critic_steps == 0
            || self.harvest_every == 0
            || self.harvest_batch == 0
        {
            return Err(ExplainerError::Config(
                "latent_dim, batch_size, hidden sizes, critic steps and harvest settings must be positive"
                    .into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ExplainerError::Config("learning_rate must be positive".into()));
        }
        self.filter.validate().map_err(|e| ExplainerError::Config(e.to_string()))?;
        Ok(())
    }

    /// Stable fingerprint of the full configuration, recorded in manifests.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

// ---------------------------------------------------------------------------
// Sampling.
// ---------------------------------------------------------------------------

/// Standard-normal latent batch `[batch, dim]`.
pub fn sample_latent(batch: usize, dim: usize, rng: &mut ChaCha8Rng) -> ArrayD<f64> {
    ArrayD::from_shape_fn(IxDyn(&[batch, dim]), |_| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    })
}

fn gumbel(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random::<f64>().max(1e-300);
    -(-u.ln()).ln()
}

/// One-hot along the last axis at the running maximum.
fn one_hot_argmax_last(values: &ArrayD<f64>) -> ArrayD<f64> {
    let mut out = ArrayD::zeros(values.raw_dim());
    let last = Axis(values.ndim() - 1);
    ndarray::Zip::from(out.lanes_mut(last)).and(values.lanes(last)).for_each(|mut o, v| {
        let mut best = 0;
        for (c, &x) in v.iter().enumerate() {
            if x > v[best] {
                best = c;
            }
        }
        o[best] = 1.0;
    });
    out
}

fn straight_through(t: &mut Tape, soft: TensorId) -> TensorId {
    let hard = one_hot_argmax_last(t.value(soft));
    let delta = hard - t.value(soft);
    let delta = t.leaf(delta);
    t.add(delta, soft)
}

/// Relaxed (optionally straight-through hard) categorical sample along the
/// last axis: `softmax((logits + Gumbel noise) / τ)`. With `hard`, the
/// forward value is exactly one-hot while gradients follow the relaxed
/// distribution.
pub fn gumbel_softmax(
    t: &mut Tape,
    logits: TensorId,
    tau: f64,
    hard: bool,
    rng: &mut ChaCha8Rng,
) -> Result<TensorId, ExplainerError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(ExplainerError::Domain(format!("tau must be positive, got {tau}")));
    }
    let shape = t.shape(logits);
    let noise = ArrayD::from_shape_fn(IxDyn(&shape), |_| gumbel(rng));
    let noise = t.leaf(noise);
    let noisy = t.add(logits, noise);
    let scaled = t.scale(noisy, 1.0 / tau);
    let soft = t.softmax_last(scaled);
    Ok(if hard { straight_through(t, soft) } else { soft })
}

/// Pre-drawn Gumbel noise for one graph batch. Adjacency noise is mirrored
/// (`noise[k,i,j,·] == noise[k,j,i,·]`) so the sampled adjacency stays
/// exactly symmetric.
#[derive(Debug, Clone)]
pub struct SampleNoise {
    adj: ArrayD<f64>,
    feat: ArrayD<f64>,
}

impl SampleNoise {
    pub fn draw(
        rng: &mut ChaCha8Rng,
        batch: usize,
        n_max: usize,
        edge_channels: usize,
        node_categories: usize,
    ) -> Self {
        let mut adj = ArrayD::zeros(IxDyn(&[batch, n_max, n_max, edge_channels]));
        for k in 0..batch {
            for i in 0..n_max {
                for j in i..n_max {
                    for c in 0..edge_channels {
                        let g = gumbel(rng);
                        adj[IxDyn(&[k, i, j, c])] = g;
                        adj[IxDyn(&[k, j, i, c])] = g;
                    }
                }
            }
        }
        let feat = ArrayD::from_shape_fn(IxDyn(&[batch, n_max, node_categories]), |_| gumbel(rng));
        SampleNoise { adj, feat }
    }
}

/// Constant masks that force the diagonal of a sampled adjacency to the
/// absence channel: `adj ⊙ offdiag + diag_onehot`.
fn diagonal_masks(n: usize, channels: usize) -> (ArrayD<f64>, ArrayD<f64>) {
    let mut off = ArrayD::ones(IxDyn(&[1, n, n, channels]));
    let mut diag = ArrayD::zeros(IxDyn(&[1, n, n, channels]));
    for i in 0..n {
        for c in 0..channels {
            off[IxDyn(&[0, i, i, c])] = 0.0;
        }
        diag[IxDyn(&[0, i, i, 0])] = 1.0;
    }
    (off, diag)
}

/// Turn generator logits into dense graph tensors on the tape: symmetrize
/// adjacency logits, add the pre-drawn Gumbel noise, softmax per cell at
/// temperature `tau`, force the diagonal to "no edge", and optionally apply
/// the straight-through hard trick to both tensors.
pub fn sample_graph_tensors(
    t: &mut Tape,
    adj_logits: TensorId,
    feat_logits: TensorId,
    tau: f64,
    hard: bool,
    noise: &SampleNoise,
) -> Result<(TensorId, TensorId), ExplainerError> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(ExplainerError::Domain(format!("tau must be positive, got {tau}")));
    }
    let shape = t.shape(adj_logits);
    let (b, n, channels) = (shape[0], shape[1], shape[3]);
    if t.value(adj_logits).iter().any(|v| !v.is_finite())
        || t.value(feat_logits).iter().any(|v| !v.is_finite())
    {
        return Err(ExplainerError::Numeric {
            iteration: 0,
            message: "generator produced non-finite logits".into(),
        });
    }

    let transposed = t.permute_axes(adj_logits, &[0, 2, 1, 3]);
    let pair_sum = t.add(adj_logits, transposed);
    let sym = t.scale(pair_sum, 0.5);
    let adj_noise = t.leaf(noise.adj.clone());
    let noisy = t.add(sym, adj_noise);
    let scaled = t.scale(noisy, 1.0 / tau);
    let soft = t.softmax_last(scaled);
    let (off, diag) = diagonal_masks(n, channels);
    let off = t.leaf(off);
    let off = t.broadcast_to(off, &[b, n, n, channels]);
    let diag = t.leaf(diag);
    let diag = t.broadcast_to(diag, &[b, n, n, channels]);
    let masked = t.mul(soft, off);
    let adj_soft = t.add(masked, diag);
    let adj_out = if hard { straight_through(t, adj_soft) } else { adj_soft };

    let feat_noise = t.leaf(noise.feat.clone());
    let feat_noisy = t.add(feat_logits, feat_noise);
    let feat_scaled = t.scale(feat_noisy, 1.0 / tau);
    let feat_soft = t.softmax_last(feat_scaled);
    let feat_out = if hard { straight_through(t, feat_soft) } else { feat_soft };

    Ok((adj_out, feat_out))
}

/// Sample one relaxed graph and its hard decoding from single-sample logits
/// (`[n, n, C]` adjacency, `[n, F]` features).
pub fn discretize(
    adj_logits: &ArrayD<f64>,
    feat_logits: &ArrayD<f64>,
    tau: f64,
    class_label: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(ContinuousGraph, Graph), ExplainerError> {
    if adj_logits.ndim() != 3 || feat_logits.ndim() != 2 {
        return Err(ExplainerError::Domain(
            "expected [n, n, C] adjacency logits and [n, F] feature logits".into(),
        ));
    }
    let (n, channels) = (adj_logits.shape()[0], adj_logits.shape()[2]);
    let cats = feat_logits.shape()[1];

    let mut t = Tape::new();
    let batched_adj = adj_logits
        .clone()
        .into_shape_with_order(IxDyn(&[1, n, adj_logits.shape()[1], channels]))
        .map_err(|e| ExplainerError::Domain(e.to_string()))?;
    let batched_feat = feat_logits
        .clone()
        .into_shape_with_order(IxDyn(&[1, n, cats]))
        .map_err(|e| ExplainerError::Domain(e.to_string()))?;
    let al = t.leaf(batched_adj);
    let fl = t.leaf(batched_feat);
    let noise = SampleNoise::draw(rng, 1, n, channels, cats);
    let (adj_soft, feat_soft) = sample_graph_tensors(&mut t, al, fl, tau, false, &noise)?;

    let relaxed_adj = t.value(adj_soft).index_axis(Axis(0), 0).to_owned();
    let relaxed_feat = t.value(feat_soft).index_axis(Axis(0), 0).to_owned();
    let hard_adj = one_hot_argmax_last(&relaxed_adj.clone().into_dyn());
    let hard_feat = one_hot_argmax_last(&relaxed_feat.clone().into_dyn());

    let relaxed = ContinuousGraph::new(relaxed_adj.into_dyn(), relaxed_feat.into_dyn())?;
    let hard = ContinuousGraph::new(hard_adj, hard_feat)?;
    let graph = from_dense(&hard, class_label, None)?;
    Ok((relaxed, graph))
}

// ---------------------------------------------------------------------------
// Losses and schedule.
// ---------------------------------------------------------------------------

/// Generator's adversarial objective: the negative mean critic score.
pub fn gan_generator_loss(t: &mut Tape, critic_scores: TensorId) -> TensorId {
    let m = t.mean_all(critic_scores);
    t.scale(m, -1.0)
}

/// Classifier pressure on generated samples.
pub fn gnn_loss(t: &mut Tape, out: &GnnForward, target: usize, kind: GnnLossKind) -> TensorId {
    let col = match kind {
        GnnLossKind::CrossEntropy => t.select(out.log_probs, 1, target),
        GnnLossKind::Logits => t.select(out.logits, 1, target),
    };
    let m = t.mean_all(col);
    t.scale(m, -1.0)
}

/// `(1 − λ)·L_adv + λ·L_cls`.
pub fn combined_generator_loss(
    t: &mut Tape,
    l_gan: TensorId,
    l_gnn: TensorId,
    lambda: f64,
) -> Result<TensorId, ExplainerError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(ExplainerError::Domain(format!("lambda = {lambda} outside [0, 1]")));
    }
    let a = t.scale(l_gan, 1.0 - lambda);
    let b = t.scale(l_gnn, lambda);
    Ok(t.add(a, b))
}

fn sum_trailing(t: &mut Tape, x: TensorId, mut rank: usize) -> TensorId {
    let mut cur = x;
    while rank > 1 {
        cur = t.sum_axis(cur, rank - 1);
        rank -= 1;
    }
    cur
}

/// Mean squared deviation of the per-sample critic input-gradient norm from
/// 1, probed at per-sample random interpolates `x̂ = εx + (1−ε)x̃`. The norm
/// is Euclidean over each sample's concatenated adjacency and feature
/// gradients. The result is a tape node, so it can be differentiated again
/// with respect to the critic parameters.
pub fn gradient_penalty<F>(
    t: &mut Tape,
    real_adj: &ArrayD<f64>,
    real_feat: &ArrayD<f64>,
    fake_adj: &ArrayD<f64>,
    fake_feat: &ArrayD<f64>,
    rng: &mut ChaCha8Rng,
    mut critic: F,
) -> Result<TensorId, ExplainerError>
where
    F: FnMut(&mut Tape, TensorId, TensorId) -> TensorId,
{
    if real_adj.shape() != fake_adj.shape() || real_feat.shape() != fake_feat.shape() {
        return Err(ExplainerError::Domain(format!(
            "real and fake batch shapes differ: {:?}/{:?} vs {:?}/{:?}",
            real_adj.shape(),
            real_feat.shape(),
            fake_adj.shape(),
            fake_feat.shape()
        )));
    }
    let b = real_adj.shape()[0];
    let mut xa = real_adj.clone();
    let mut xf = real_feat.clone();
    for k in 0..b {
        let e: f64 = rng.random();
        xa.index_axis_mut(Axis(0), k)
            .zip_mut_with(&fake_adj.index_axis(Axis(0), k), |r, &f| *r = e * *r + (1.0 - e) * f);
        xf.index_axis_mut(Axis(0), k)
            .zip_mut_with(&fake_feat.index_axis(Axis(0), k), |r, &f| *r = e * *r + (1.0 - e) * f);
    }
    let adj_rank = xa.ndim();
    let feat_rank = xf.ndim();
    let xa = t.leaf(xa);
    let xf = t.leaf(xf);
    let scores = critic(t, xa, xf);
    // Sample k's score depends only on sample k's input, so the gradient of
    // the sum is the batch of per-sample gradients.
    let total = t.sum_all(scores);
    let grads = t.grad(total, &[xa, xf]);
    let ga2 = t.mul(grads[0], grads[0]);
    let gf2 = t.mul(grads[1], grads[1]);
    let sa = sum_trailing(t, ga2, adj_rank);
    let sf = sum_trailing(t, gf2, feat_rank);
    let sumsq = t.add(sa, sf);
    let sumsq = t.shift(sumsq, 1e-12);
    let norm = t.sqrt(sumsq);
    let centered = t.shift(norm, -1.0);
    let sq = t.mul(centered, centered);
    Ok(t.mean_all(sq))
}

/// Full critic objective `E[D(x̃)] − E[D(x)] + α·penalty`.
#[allow(clippy::too_many_arguments)]
pub fn discriminator_loss(
    t: &mut Tape,
    critic: &Critic,
    critic_ids: &[TensorId],
    real_adj: &ArrayD<f64>,
    real_feat: &ArrayD<f64>,
    fake_adj: &ArrayD<f64>,
    fake_feat: &ArrayD<f64>,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> Result<TensorId, ExplainerError> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(ExplainerError::Domain(format!("alpha must be >= 0, got {alpha}")));
    }
    let ra = t.leaf(real_adj.clone());
    let rf = t.leaf(real_feat.clone());
    let fa = t.leaf(fake_adj.clone());
    let ff = t.leaf(fake_feat.clone());
    let s_real = critic.forward(t, critic_ids, ra, rf);
    let s_fake = critic.forward(t, critic_ids, fa, ff);
    let m_real = t.mean_all(s_real);
    let m_fake = t.mean_all(s_fake);
    let neg_real = t.neg(m_real);
    let wasserstein = t.add(m_fake, neg_real);
    let penalty = gradient_penalty(t, real_adj, real_feat, fake_adj, fake_feat, rng, |t, a, f| {
        critic.forward(t, critic_ids, a, f)
    })?;
    let penalty = t.scale(penalty, alpha);
    let loss = t.add(wasserstein, penalty);
    let v = t.scalar_value(loss);
    if !v.is_finite() {
        return Err(ExplainerError::Numeric {
            iteration: 0,
            message: format!("critic loss is {v}"),
        });
    }
    Ok(loss)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Blend weight at iteration `t_iter`:
/// `λ_min + (λ_max − λ_min)·sigmoid(k·(2·((t/T − p)/(1 − p)) − 1))`.
pub fn lambda_schedule(t_iter: usize, cfg: &ExplainerConfig) -> Result<f64, ExplainerError> {
    if !(0.0..1.0).contains(&cfg.p_ramp) {
        return Err(ExplainerError::Config(format!(
            "p_ramp must lie in [0, 1), got {}",
            cfg.p_ramp
        )));
    }
    if cfg.iterations == 0 {
        return Err(ExplainerError::Config("iterations must be positive".into()));
    }
    if t_iter > cfg.iterations {
        return Err(ExplainerError::Domain(format!(
            "iteration {t_iter} beyond total {}",
            cfg.iterations
        )));
    }
    let progress = t_iter as f64 / cfg.iterations as f64;
    let ramped = (progress - cfg.p_ramp) / (1.0 - cfg.p_ramp);
    let arg = cfg.k_sched * (2.0 * ramped - 1.0);
    Ok(cfg.lambda_min + (cfg.lambda_max - cfg.lambda_min) * sigmoid(arg))
}

// ---------------------------------------------------------------------------
// Training.
// ---------------------------------------------------------------------------

/// One harvested explanation graph with its frozen-model scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplanationCandidate {
    pub graph: Graph,
    pub scores: ExplanationScores,
    pub iteration: usize,
    pub seed: u64,
}

/// One line of the run manifest, written at every harvest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub iteration: usize,
    pub lambda: f64,
    pub critic_loss: f64,
    pub gan_loss: f64,
    pub gnn_loss: f64,
    pub combined_loss: f64,
    /// Hard samples decoded at this harvest (before filtering).
    pub attempted: usize,
    /// Candidates retained at this harvest.
    pub kept: Vec<ExplanationCandidate>,
    pub seed: u64,
    pub config_hash: String,
}

/// Outcome of one adversarial run. A numeric abort is reported in-band via
/// `diverged` so the partial candidate list survives.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainerRun {
    pub candidates: Vec<ExplanationCandidate>,
    pub manifest: Vec<ManifestRecord>,
    /// Fraction of decoded hard samples that passed the filter.
    pub pass_rate: f64,
    /// True when harvesting happened but the pass rate stayed below 5%.
    pub degenerate: bool,
    /// Diagnostics when training aborted on a non-finite value.
    pub diverged: Option<String>,
    pub iterations_completed: usize,
    pub config_hash: String,
}

const DEGENERATE_PASS_RATE: f64 = 0.05;

struct GanState {
    gen: Generator,
    critic: Critic,
    gen_opt: Adam,
    critic_opt: Adam,
}

/// Train the GAN against `model` (frozen) on the `class` graphs of `ds`,
/// harvesting scored candidates every `cfg.harvest_every` iterations.
/// Deterministic for a fixed `(cfg, seed)`.
pub fn train_explainer(
    model: &GnnClassifier,
    ds: &GraphDataset,
    class: usize,
    cfg: &ExplainerConfig,
    seed: u64,
) -> Result<ExplainerRun, ExplainerError> {
    cfg.validate()?;
    if class >= ds.class_count() {
        return Err(ExplainerError::Config(format!(
            "class {class} out of range 0..{}",
            ds.class_count()
        )));
    }
    let ctx = ScoringContext::new(model, ds, class, cfg.filter.degree_sigma_multiplier)?;
    let class_idx = ds.indices_of_class(class);
    let class_max_n =
        class_idx.iter().map(|&i| ds.graphs()[i].node_count()).max().expect(">=2 graphs");
    let n_max = cfg.n_max.unwrap_or(class_max_n);
    if n_max < class_max_n {
        return Err(ExplainerError::Config(format!(
            "n_max = {n_max} is smaller than the largest class graph ({class_max_n} nodes)"
        )));
    }

    let in_dim = ds.node_categories();
    let channels = ds.edge_channels();
    let gen = Generator::init(
        GeneratorArch {
            latent_dim: cfg.latent_dim,
            hidden: cfg.gen_hidden,
            n_max,
            edge_channels: channels,
            node_categories: in_dim,
        },
        seed ^ GEN_SEED_SALT,
    )?;
    let critic = Critic::init(
        BackboneArch {
            in_dim,
            edge_channels: channels,
            hidden: cfg.critic_hidden,
            layers: cfg.critic_layers,
            activation: Activation::LeakyRelu { slope: 0.2 },
        },
        seed ^ CRITIC_SEED_SALT,
    )?;
    let gen_shapes: Vec<Vec<usize>> = gen.params.iter().map(|p| p.shape().to_vec()).collect();
    let critic_shapes: Vec<Vec<usize>> =
        critic.params.iter().map(|p| p.shape().to_vec()).collect();
    let mut state = GanState {
        gen,
        critic,
        gen_opt: Adam::new(cfg.learning_rate, &gen_shapes).with_betas(0.5, 0.9),
        critic_opt: Adam::new(cfg.learning_rate, &critic_shapes).with_betas(0.5, 0.9),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let config_hash = cfg.content_hash();
    let mut manifest: Vec<ManifestRecord> = Vec::new();
    let mut kept_all: Vec<ExplanationCandidate> = Vec::new();
    let (mut attempted_total, mut passed_total) = (0usize, 0usize);
    let mut diverged: Option<String> = None;
    let mut iterations_completed = 0usize;

    'training: for it in 0..cfg.iterations {
        let lambda = lambda_schedule(it, cfg)?;
        let hard = it as f64 / cfg.iterations as f64 >= (1.0 + cfg.p_ramp) / 2.0;

        let mut critic_loss_val = f64::NAN;
        for _ in 0..cfg.critic_steps {
            match critic_update(&mut state, ds, &class_idx, cfg, n_max, hard, &mut rng) {
                Ok(v) => critic_loss_val = v,
                Err(ExplainerError::Numeric { message, .. }) => {
                    diverged = Some(format!("iteration {it}: {message}"));
                    break 'training;
                }
                Err(other) => return Err(other),
            }
        }

        let gen_losses =
            match generator_update(&mut state, model, class, cfg, lambda, hard, &mut rng) {
                Ok(v) => v,
                Err(ExplainerError::Numeric { message, .. }) => {
                    diverged = Some(format!("iteration {it}: {message}"));
                    break 'training;
                }
                Err(other) => return Err(other),
            };
        iterations_completed = it + 1;

        if (it + 1) % cfg.harvest_every == 0 {
            let (scored, attempted) =
                harvest(&state.gen, model, &ctx, cfg, class, it, seed, &mut rng)?;
            attempted_total += attempted;
            let mut kept_now = Vec::new();
            for cand in scored {
                let passes = score_filter(&cand.graph, &cand.scores, &cfg.filter);
                if passes {
                    passed_total += 1;
                }
                if passes || !cfg.filtering_enabled {
                    kept_now.push(cand);
                }
            }
            manifest.push(ManifestRecord {
                iteration: it,
                lambda,
                critic_loss: critic_loss_val,
                gan_loss: gen_losses.0,
                gnn_loss: gen_losses.1,
                combined_loss: gen_losses.2,
                attempted,
                kept: kept_now.clone(),
                seed,
                config_hash: config_hash.clone(),
            });
            kept_all.extend(kept_now);
        }
    }

    let pass_rate =
        if attempted_total > 0 { passed_total as f64 / attempted_total as f64 } else { 0.0 };
    let degenerate = attempted_total > 0 && pass_rate < DEGENERATE_PASS_RATE;
    let candidates = if cfg.filtering_enabled {
        kept_all
    } else {
        select_explanations(&kept_all, cfg.top_n)
    };
    Ok(ExplainerRun {
        candidates,
        manifest,
        pass_rate,
        degenerate,
        diverged,
        iterations_completed,
        config_hash,
    })
}

/// Generate a fake batch (values only) from the current generator.
fn fake_batch_values(
    gen: &Generator,
    batch: usize,
    tau: f64,
    hard: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(ArrayD<f64>, ArrayD<f64>), ExplainerError> {
    let mut t = Tape::new();
    let z = t.leaf(sample_latent(batch, gen.arch.latent_dim, rng));
    let ids = gen.param_leaves(&mut t);
    let (al, fl) = gen.forward(&mut t, &ids, z);
    let noise =
        SampleNoise::draw(rng, batch, gen.arch.n_max, gen.arch.edge_channels, gen.arch.node_categories);
    let (a, f) = sample_graph_tensors(&mut t, al, fl, tau, hard, &noise)?;
    Ok((t.value(a).clone(), t.value(f).clone()))
}

#[allow(clippy::too_many_arguments)]
fn critic_update(
    state: &mut GanState,
    ds: &GraphDataset,
    class_idx: &[usize],
    cfg: &ExplainerConfig,
    n_max: usize,
    hard: bool,
    rng: &mut ChaCha8Rng,
) -> Result<f64, ExplainerError> {
    let (fake_adj, fake_feat) =
        fake_batch_values(&state.gen, cfg.batch_size, cfg.tau, hard, rng)?;
    let picks: Vec<Graph> = (0..cfg.batch_size)
        .map(|_| ds.graphs()[class_idx[rng.random_range(0..class_idx.len())]].clone())
        .collect();
    let (real_adj, real_feat) =
        crate::gnn::pack_batch(&picks, n_max, ds.node_categories(), ds.edge_channels())?;

    let mut t = Tape::new();
    let cids = state.critic.param_leaves(&mut t);
    let loss = discriminator_loss(
        &mut t,
        &state.critic,
        &cids,
        &real_adj,
        &real_feat,
        &fake_adj,
        &fake_feat,
        cfg.alpha,
        rng,
    )?;
    let v = t.scalar_value(loss);
    let grads = t.grad(loss, &cids);
    let grad_values: Vec<ArrayD<f64>> = grads.iter().map(|&g| t.value(g).clone()).collect();
    if grad_values.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
        return Err(ExplainerError::Numeric {
            iteration: 0,
            message: "non-finite critic gradient".into(),
        });
    }
    state.critic_opt.step(state.critic.params_mut(), &grad_values);
    Ok(v)
}

fn generator_update(
    state: &mut GanState,
    model: &GnnClassifier,
    class: usize,
    cfg: &ExplainerConfig,
    lambda: f64,
    hard: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64, f64), ExplainerError> {
    let mut t = Tape::new();
    let z = t.leaf(sample_latent(cfg.batch_size, cfg.latent_dim, rng));
    let gids = state.gen.param_leaves(&mut t);
    let (al, fl) = state.gen.forward(&mut t, &gids, z);
    let noise = SampleNoise::draw(
        rng,
        cfg.batch_size,
        state.gen.arch.n_max,
        state.gen.arch.edge_channels,
        state.gen.arch.node_categories,
    );
    let (adj, feat) = sample_graph_tensors(&mut t, al, fl, cfg.tau, hard, &noise)?;

    let cids = state.critic.param_leaves(&mut t);
    let scores = state.critic.forward(&mut t, &cids, adj, feat);
    let l_gan = gan_generator_loss(&mut t, scores);
    let mids = model.param_leaves(&mut t);
    let out = model.forward_with(&mut t, &mids, adj, feat);
    let l_gnn = gnn_loss(&mut t, &out, class, cfg.gnn_loss_kind);
    let loss = combined_generator_loss(&mut t, l_gan, l_gnn, lambda)?;

    let (gan_v, gnn_v, loss_v) =
        (t.scalar_value(l_gan), t.scalar_value(l_gnn), t.scalar_value(loss));
    if !loss_v.is_finite() {
        return Err(ExplainerError::Numeric {
            iteration: 0,
            message: format!("generator loss is {loss_v}"),
        });
    }
    let grads = t.grad(loss, &gids);
    let grad_values: Vec<ArrayD<f64>> = grads.iter().map(|&g| t.value(g).clone()).collect();
    if grad_values.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
        return Err(ExplainerError::Numeric {
            iteration: 0,
            message: "non-finite generator gradient".into(),
        });
    }
    state.gen_opt.step(state.gen.params_mut(), &grad_values);
    Ok((gan_v, gnn_v, loss_v))
}

/// Draw `cfg.harvest_batch` hard samples, decode them, and score the
/// decodable ones. Returns scored candidates plus the number of samples
/// attempted (decode failures from empty graphs count as attempts).
#[allow(clippy::too_many_arguments)]
fn harvest(
    gen: &Generator,
    model: &GnnClassifier,
    ctx: &ScoringContext,
    cfg: &ExplainerConfig,
    class: usize,
    iteration: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<ExplanationCandidate>, usize), ExplainerError> {
    let (adj, feat) = fake_batch_values(gen, cfg.harvest_batch, cfg.tau, true, rng)?;
    let mut out = Vec::new();
    for k in 0..cfg.harvest_batch {
        let a = adj.index_axis(Axis(0), k).to_owned();
        let f = feat.index_axis(Axis(0), k).to_owned();
        let cg = ContinuousGraph::new(a, f)?;
        match from_dense(&cg, class, None) {
            Ok(graph) => {
                let scores = score_candidate(model, &graph, ctx)?;
                out.push(ExplanationCandidate { graph, scores, iteration, seed });
            }
            Err(GraphError::EmptyGraph) => {} // a sample with no edges at all
            Err(other) => return Err(other.into()),
        }
    }
    Ok((out, cfg.harvest_batch))
}

/// Rank candidates by validation score (descending), breaking ties by
/// prediction probability (descending) then harvest iteration (ascending);
/// equal keys keep their original order. Returns at most `top_n`.
pub fn select_explanations(
    candidates: &[ExplanationCandidate],
    top_n: usize,
) -> Vec<ExplanationCandidate> {
    let mut ranked: Vec<ExplanationCandidate> = candidates.to_vec();
    ranked.sort_by(|a, b| {
        b.scores
            .v
            .partial_cmp(&a.scores.v)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.scores.p.partial_cmp(&a.scores.p).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.iteration.cmp(&b.iteration))
    });
    ranked.truncate(top_n);
    ranked
}

// ---------------------------------------------------------------------------
// GAN checkpointing (same named-flat-array format as classifier files).
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GanCheckpointFile {
    schema_version: u32,
    generator_arch: GeneratorArch,
    generator_params: Vec<crate::gnn::ParamRecord>,
    critic_arch: BackboneArch,
    critic_params: Vec<crate::gnn::ParamRecord>,
    meta: TrainMeta,
}

pub fn save_gan_checkpoint(
    path: &Path,
    gen: &Generator,
    critic: &Critic,
    meta: &TrainMeta,
) -> Result<(), ExplainerError> {
    let file = GanCheckpointFile {
        schema_version: GAN_CHECKPOINT_SCHEMA_VERSION,
        generator_arch: gen.arch.clone(),
        generator_params: params_to_records(&gen.arch.param_specs(), &gen.params),
        critic_arch: critic.backbone.clone(),
        critic_params: params_to_records(&critic.param_specs(), &critic.params),
        meta: meta.clone(),
    };
    let out = File::create(path)?;
    serde_json::to_writer(BufWriter::new(out), &file)
        .map_err(|e| ExplainerError::Checkpoint(e.to_string()))?;
    Ok(())
}

pub fn load_gan_checkpoint(path: &Path) -> Result<(Generator, Critic, TrainMeta), ExplainerError> {
    let file = File::open(path)?;
    let ckpt: GanCheckpointFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| ExplainerError::Checkpoint(e.to_string()))?;
    if ckpt.schema_version != GAN_CHECKPOINT_SCHEMA_VERSION {
        return Err(ExplainerError::Checkpoint(format!(
            "unsupported schema version {}",
            ckpt.schema_version
        )));
    }
    ckpt.generator_arch.validate()?;
    let gen_params = records_to_params(&ckpt.generator_arch.param_specs(), &ckpt.generator_params)
        .map_err(ExplainerError::Checkpoint)?;
    let critic_specs = Critic::param_specs_for(&ckpt.critic_arch);
    let critic_params = records_to_params(&critic_specs, &ckpt.critic_params)
        .map_err(ExplainerError::Checkpoint)?;
    Ok((
        Generator { arch: ckpt.generator_arch, params: gen_params },
        Critic { backbone: ckpt.critic_arch, params: critic_params },
        ckpt.meta,
    ))
}
