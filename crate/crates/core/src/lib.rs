//! Listwise learning to rank with Plackett-Luce policies.
//!
//! A bi-encoder scorer produces one score per candidate document. Those
//! scores parameterize a Plackett-Luce distribution over rankings, and the
//! scorer is trained by policy gradient to maximize the expected value of a
//! ranking metric such as nDCG@10.
//!
//! The crate is organized bottom-up:
//!
//! - [`metrics`]: ranking utilities (DCG, nDCG, MRR, AP, suffix nDCG).
//! - [`scoring`]: MLP bi-encoder with analytic backward pass and checkpoints.
//! - [`plackett_luce`]: log-probabilities, gradients, samplers, sort policy.
//! - [`estimator`]: REINFORCE, leave-one-out and position-wise estimators.
//! - [`oracle`]: exact enumeration over all rankings, for verification.
//! - [`data`]: corpus model, file formats, synthetic data, candidate pools.
//! - [`trainer`]: the training loop and Monte Carlo validation.
//! - [`eval`]: second-stage reranking and first-stage retrieval evaluation.
//!
//! Data-parallel sections (per-query work, repeated trials) run through
//! [`parallel::Executor`]. With the `parallel` feature disabled they run
//! sequentially; results are identical either way because every parallel
//! map is order-preserving and every reduction is sequential.

mod error;

pub mod data;
pub mod estimator;
pub mod eval;
pub mod metrics;
pub mod oracle;
pub mod parallel;
pub mod plackett_luce;
pub mod rng;
pub mod scoring;
pub mod trainer;
pub mod verify;

pub(crate) use error::ensure;
pub use error::{Error, Result};
