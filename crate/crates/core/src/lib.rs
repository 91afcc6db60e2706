//! Local-overfitting analysis over checkpoint prediction logs.
//!
//! The crate is organised around [`predlog::PredictionLog`], the per-checkpoint
//! class-probability record produced by any training loop. On top of it:
//!
//! * [`forget_metrics`] measures how much of an evaluation set is forgotten
//!   between intermediate checkpoints and the final model.
//! * [`knowledge_fusion`] fits and applies a greedy, validation-driven convex
//!   combination of the final model with window-averaged earlier checkpoints.
//! * [`baselines`] holds the log-computable comparison methods.
//! * [`deep_linear`] simulates deep linear networks under gradient descent and
//!   checks their per-principal-component convergence law.
//! * [`spectral_overlap`] relates forgetting under principal-component
//!   truncation to forgetting along a training run.

pub mod baselines;
pub mod deep_linear;
pub mod forget_metrics;
pub mod knowledge_fusion;
pub mod predlog;
pub mod probs;
pub mod rng;
pub mod spectral_overlap;

pub use forget_metrics::{ExampleHistory, ForgetCurve};
pub use knowledge_fusion::{FusionPlan, FusionStep};
pub use predlog::{LogError, LogManifest, PredictionLog};
pub use probs::ProbMatrix;
