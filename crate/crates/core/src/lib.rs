//! Prototypical-network few-shot classification over frozen feature vectors.
//!
//! The crate is split along the pipeline:
//!
//! - [`prototype`]: class prototypes, distances, posteriors and the episodic loss.
//! - [`embed`]: embedding heads (identity, linear, MLP) with hand-derived gradients.
//! - [`episodes`]: seeded N-way K-shot episode sampling.
//! - [`data`]: datasets, the PFEB interchange format, PGM images, synthetic blobs.
//! - [`train`]: episodic meta-training with SGD or Adam.
//! - [`eval`]: episodic evaluation, confusion matrices and reports.
//! - [`cli`]: experiment configuration and the command-line runner.

pub mod cli;
pub mod data;
pub mod embed;
pub mod episodes;
pub mod error;
pub mod eval;
pub mod prototype;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
