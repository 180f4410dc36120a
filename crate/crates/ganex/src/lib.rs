//! Graph-classification models and GAN-based model-level explanations.
//!
//! The crate covers the full pipeline: synthetic benchmark datasets and a
//! molecular-format loader ([`graph`]), a message-passing classifier
//! ([`gnn`]), candidate scoring ([`metrics`]), a generator/critic pair that
//! produces class explanations ([`explainer`]), prediction-preserving input
//! pruning ([`pruning`]), and reporting helpers ([`report`]). Everything is
//! deterministic given a seed and runs on the CPU in `f64`.

pub mod datasets;
pub mod explainer;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod optim;
pub mod pruning;
pub mod report;
pub mod tensor;
