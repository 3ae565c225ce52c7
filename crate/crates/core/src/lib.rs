//! # structlab
//!
//! Desk-scale numerical laboratory for structure-centric multimodal
//! alignment:
//!
//! - [`prob`]: exact discrete MI over S → (X, Y) → (X_E, Y_E), the
//!   data-processing inequality and total-information invariance
//! - [`estimators`]: InfoNCE bound, KSG k-NN estimator, control-variate
//!   variance reduction
//! - [`losses`]: symmetric InfoNCE, consistency and local multi-positive
//!   losses with analytic gradients
//! - [`trainer`]: linear toy encoders on synthetic latent-variable data,
//!   gradient-cosine instrumentation and convergence detection
//! - [`text_filter`]: lexicon-based appearance-term removal and corpus stats
//! - [`edges`]: Sobel, Canny and LoG edge maps
//! - [`metrics`]: cosine similarity and Recall@K
//! - [`cli`]: the experiment commands behind the `structlab` binary

// `!(x > 0.0)` is the idiom used throughout to reject NaN along with the range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod edges;
pub mod embedding;
pub mod error;
pub mod estimators;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod numeric;
pub mod prob;
pub mod text_filter;
pub mod trainer;

pub use embedding::EmbeddingBatch;
pub use error::{Error, Result};
pub use numeric::Matrix;
