//! Reward models for text-to-image generation trained from coarse or
//! fine-grained feedback.
//!
//! * [`dataset`]: examples, binarised feedback, prompt-level splits, synthetic data.
//! * [`oracles`]: simulated attribute feedback (yes/no normalisation, alignment
//!   question categories, attribute agreement).
//! * [`targets`]: decision-tree targets and attribute/target correlation.
//! * [`model`]: the coarse MLP and the two-stage concept-bottleneck model.
//! * [`eval`]: ROC-AUC, annotation cost, learning-curve sweeps and reports.
//! * [`sxs`]: rejection-sampling pair selection and side-by-side annotation.
//!
//! Runnable walkthroughs live in `examples/`; `cargo run --example` lists them.

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod manifest;
pub mod model;
pub mod oracles;
pub mod rng;
pub mod sxs;
pub mod targets;
pub mod cli;

pub use error::{Error, Result};
