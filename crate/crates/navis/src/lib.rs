//! Node affinity forecasting on continuous-time dynamic graphs.
//!
//! The crate provides:
//!
//! - [`ctdg`]: the event-stream data model, CSV ingestion, period bucketing,
//!   link-to-affinity conversion, and chronological splitting.
//! - [`heuristics`]: Persistent Forecast, EMA, SMA, Historical Average and a
//!   per-node AR(1) baseline.
//! - [`ssm`]: a discrete linear state-space layer together with the exact
//!   parameterizations that reproduce each heuristic.
//! - [`model`]: the gated linear state-update model with a virtual global
//!   state, including its analytic backward pass.
//! - [`cells`]: reference RNN / LSTM / GRU cells used for range checks.
//! - [`loss`]: cross-entropy, a pairwise rank loss with margin
//!   regularization, their gradients, and NDCG@k.
//! - [`train`]: Adam, the batched training loop, evaluation, and the
//!   ablation harness.
//! - [`synth`]: a regime-switching synthetic benchmark generator.
//! - [`cli`]: the command-line entry point binding everything together.
//!
//! See the `examples/` directory for one runnable example per capability.

pub mod cells;
pub mod cli;
pub mod ctdg;
pub mod heuristics;
pub mod loss;
pub mod model;
pub mod ssm;
pub mod synth;
pub mod train;
