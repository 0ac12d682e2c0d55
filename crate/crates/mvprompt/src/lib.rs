//! Prompt-driven continual learning for multi-view data with missing views
//! and multi-label targets.
//!
//! The model is a frozen, randomly initialized pre-norm transformer over one
//! token per view. All adaptation flows through small trainable pieces:
//!
//! - a **missing-pattern prompt bank** ([`bank`]) holding one prompt per
//!   subset of observed views, stored either densely (2^n columns), per view
//!   (n columns summed), or as a tensor-train chain whose parameter count
//!   grows linearly in the view count;
//! - a **pattern contrastive loss** ([`contrastive`]) that pulls prompts of
//!   view-sharing patterns together and pushes disjoint ones apart;
//! - **per-session task prompts and heads** ([`model`], [`incremental`]):
//!   sessions arrive with disjoint class sets, each session trains its own
//!   prompt + sigmoid head while earlier pathways stay bit-frozen, and
//!   inference concatenates every pathway's class probabilities.
//!
//! Prompts are injected into the attention key/value streams of every layer
//! after the QKV projection; queries are never altered. Missing views reduce
//! to the encoder bias token and their raw features are never read.
//!
//! Everything numeric is plain `f64` on fixed iteration orders, so runs are
//! bit-reproducible given a seed: [`rng`] derives purpose-keyed streams from
//! one root seed, [`autodiff`] provides a small reverse-mode tape for the
//! transformer path, and the bank/contrastive gradients are written
//! analytically and cross-checked against finite differences ([`gradcheck`])
//! and a nested-loop tensor contraction oracle (see `bank` tests).
//!
//! The experiment surface is [`config::ExperimentConfig`] +
//! [`incremental::run_experiment`], with dataset/report/checkpoint formats
//! in [`data`], [`report`], and [`checkpoint`]. The `mvprompt` binary wraps
//! these as `gen-data`, `train`, `eval`, `params`, `gradcheck`, and `sweep`;
//! runnable walkthroughs live in the crate's `examples/` directory.

pub mod autodiff;
pub mod bank;
pub mod checkpoint;
pub mod config;
pub mod contrastive;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod incremental;
pub mod linalg;
pub mod model;
pub mod param;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
