//! Explanation-quality scores and the accept/reject filter for candidates.
//!
//! A candidate explanation for a class is judged on three axes, each in
//! `[0, 1]`: the model's predicted probability `p` for the target class,
//! the cosine similarity `s` between the candidate's embedding and the
//! class-mean embedding, and a degree score `d` measuring how typical the
//! candidate's average degree is for the class. Their geometric mean is the
//! validation score `v = (s·p·d)^(1/3)` — low performance on any single
//! axis caps the overall score. Orthogonally, a hard validity check rejects
//! graphs whose average degree falls outside a `μ ± tσ` band around the
//! class statistics, and a granularity value `k = 1 − min(1, b/a)` reports
//! how much smaller than a typical class member the candidate is.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{class_mean_embedding, GnnClassifier, GnnError};
use crate::graph::{
    average_degree, compute_class_stats, ClassStats, Graph, GraphDataset, GraphError,
};

pub const DEFAULT_V_THRESHOLD: f64 = 0.7;
pub const DEFAULT_SIGMA_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// How typical an average degree `x` is for a class with degree statistics
/// `(mu, sigma)`: `exp(−(x−μ)² / (2σ²))`, which is 1 at the mean and decays
/// with distance measured in class standard deviations.
pub fn degree_score(x: f64, mu: f64, sigma: f64) -> Result<f64, MetricsError> {
    if !x.is_finite() || !mu.is_finite() || !sigma.is_finite() {
        return Err(MetricsError::Domain("degree_score requires finite inputs".into()));
    }
    if sigma < 0.0 {
        return Err(MetricsError::Domain(format!("negative sigma {sigma}")));
    }
    if sigma == 0.0 {
        log::warn!(
            "degenerate class statistics (sigma = 0); degree score is exact-match only"
        );
        return Ok(if x == mu { 1.0 } else { 0.0 });
    }
    let z = (x - mu) / sigma;
    Ok((-0.5 * z * z).exp())
}

/// Hard in-distribution test: is the graph's average degree inside the
/// closed band `[μ − tσ, μ + tσ]`?
pub fn validity_check(g: &Graph, stats: &ClassStats, t: f64) -> Result<bool, MetricsError> {
    if !t.is_finite() || t < 0.0 {
        return Err(MetricsError::Domain(format!("sigma multiplier must be >= 0, got {t}")));
    }
    let x = average_degree(g);
    let lo = stats.degree_mean - t * stats.degree_std;
    let hi = stats.degree_mean + t * stats.degree_std;
    Ok(x >= lo && x <= hi)
}

/// Cosine similarity clamped to `[0, 1]`; a zero vector scores 0 with a
/// warning (direction is undefined).
pub fn cosine_clamped(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::Domain(format!(
            "vector lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(MetricsError::Domain("empty vectors".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        log::warn!("zero-norm embedding; similarity defined as 0");
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

/// Similarity of a graph's embedding to a reference (class-mean) embedding.
pub fn embedding_similarity(
    model: &GnnClassifier,
    g: &Graph,
    class_mean: &[f64],
) -> Result<f64, MetricsError> {
    let e = model.embed(g)?;
    cosine_clamped(&e, class_mean)
}

/// Geometric mean of the three quality factors, `v = (s·p·d)^(1/3)`.
pub fn validation_score(s: f64, p: f64, d: f64) -> Result<f64, MetricsError> {
    for (name, value) in [("s", s), ("p", p), ("d", d)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(MetricsError::Domain(format!("{name} = {value} outside [0, 1]")));
        }
    }
    Ok((s * p * d).cbrt())
}

/// Granularity `k = 1 − min(1, b/a)` where `a` is the mean node count of the
/// class and `b` the node count of the explanation: 0 means "as large as a
/// typical class member", values near 1 mean a much smaller graph.
pub fn granularity(b: f64, a: f64) -> Result<f64, MetricsError> {
    if !a.is_finite() || !b.is_finite() || a <= 0.0 || b < 0.0 {
        return Err(MetricsError::Domain(format!(
            "granularity requires a > 0 and b >= 0, got a = {a}, b = {b}"
        )));
    }
    Ok(1.0 - (b / a).min(1.0))
}

/// Full set of quality measurements for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationScores {
    /// Predicted probability of the target class.
    pub p: f64,
    /// Embedding similarity to the class mean.
    pub s: f64,
    /// Degree-typicality score.
    pub d: f64,
    /// Validation score, the geometric mean of `s`, `p`, `d`.
    pub v: f64,
    /// Size-based granularity.
    pub granularity: f64,
    /// Average degree within the class band.
    pub valid: bool,
}

/// Acceptance rules applied by [`score_filter`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    /// Minimum validation score to accept.
    pub v_threshold: f64,
    /// Width of the average-degree band, in class standard deviations.
    pub degree_sigma_multiplier: f64,
    /// Optional cap on per-node degree; `None` disables the rule.
    pub max_node_degree: Option<usize>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            v_threshold: DEFAULT_V_THRESHOLD,
            degree_sigma_multiplier: DEFAULT_SIGMA_MULTIPLIER,
            max_node_degree: None,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !self.v_threshold.is_finite() || self.v_threshold < 0.0 {
            return Err(MetricsError::Domain("v_threshold must be >= 0".into()));
        }
        if !self.degree_sigma_multiplier.is_finite() || self.degree_sigma_multiplier < 0.0 {
            return Err(MetricsError::Domain("degree_sigma_multiplier must be >= 0".into()));
        }
        Ok(())
    }
}

/// Everything needed to score candidates against one class of one dataset,
/// computed once per run: class statistics, the class-mean embedding, and
/// the band width.
#[derive(Debug, Clone)]
pub struct ScoringContext {
    pub stats: ClassStats,
    pub class_mean: Vec<f64>,
    pub target_class: usize,
    pub sigma_multiplier: f64,
}

impl ScoringContext {
    pub fn new(
        model: &GnnClassifier,
        ds: &GraphDataset,
        target_class: usize,
        sigma_multiplier: f64,
    ) -> Result<Self, MetricsError> {
        if !sigma_multiplier.is_finite() || sigma_multiplier < 0.0 {
            return Err(MetricsError::Domain(format!(
                "sigma multiplier must be >= 0, got {sigma_multiplier}"
            )));
        }
        let stats = compute_class_stats(ds, target_class)?;
        let class_mean = class_mean_embedding(model, ds, target_class)?;
        Ok(ScoringContext { stats, class_mean, target_class, sigma_multiplier })
    }
}

/// Measure one candidate on every axis.
pub fn score_candidate(
    model: &GnnClassifier,
    g: &Graph,
    ctx: &ScoringContext,
) -> Result<ExplanationScores, MetricsError> {
    let p = model.target_probability(g, ctx.target_class)?;
    let s = embedding_similarity(model, g, &ctx.class_mean)?;
    let x = average_degree(g);
    let d = degree_score(x, ctx.stats.degree_mean, ctx.stats.degree_std)?;
    let v = validation_score(s, p, d)?;
    let k = granularity(g.node_count() as f64, ctx.stats.mean_node_count)?;
    let valid = validity_check(g, &ctx.stats, ctx.sigma_multiplier)?;
    Ok(ExplanationScores { p, s, d, v, granularity: k, valid })
}

/// Accept a candidate iff its degree is in-band, its validation score meets
/// the threshold, and (when the rule is enabled) no node exceeds the degree
/// cap.
pub fn score_filter(g: &Graph, scores: &ExplanationScores, cfg: &FilterConfig) -> bool {
    if !scores.valid || scores.v < cfg.v_threshold {
        return false;
    }
    if let Some(cap) = cfg.max_node_degree {
        if g.degrees().into_iter().max().unwrap_or(0) > cap {
            return false;
        }
    }
    true
}
