//! Distance-based regularisation for fine-tuning neural networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense tensors, MARS / Frobenius / spectral norms and distances.
//! - [`nn`]: a small deterministic network engine with exact gradients.
//! - [`regularizers`]: norm-ball projections around reference weights and the
//!   matching penalties.
//! - [`optim`]: SGD / Adam and the projected or penalised training loop.
//! - [`bounds`]: per-layer statistics and the distance-based complexity measures.
//! - [`data`]: IDX loading, synthetic transfer tasks and batching.
//! - [`cli`]: config files, checkpoints and the experiment subcommands.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod data;
pub mod error;
pub mod heap;
pub mod linalg;
pub mod nn;
pub mod optim;
pub mod regularizers;

pub use error::{Error, Result};
