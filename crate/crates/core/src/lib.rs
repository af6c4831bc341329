//! Implicit transferability modeling: rank pre-trained models for a
//! downstream task from their frozen embeddings.
//!
//! For each candidate model, a linear latent map is trained jointly with a
//! linear head while every mini-batch of embeddings is evolved in closed form
//! toward fixed, orthonormal pseudo-cluster centers. The best held-out
//! accuracy of the evolved embeddings is the model's transferability score;
//! scores are compared with measured performance through rank correlations.
//!
//! Modules:
//! - [`embedstore`]: datasets, the ITMF file format, splits, statistics and a
//!   synthetic benchmark with a linear-probe oracle.
//! - [`pseudocluster`]: target center generation and shifting.
//! - [`dva`]: the closed-form evolution, its gradient, and the explicit
//!   reference path.
//! - [`trainer`]: model state, AdamW, training and scoring.
//! - [`metrics`]: τ_w, τ, ρ, subset stability and latent-map similarity.
//! - [`pipeline`]: the per-model scoring pipeline.

pub mod dva;
pub mod embedstore;
pub mod error;
mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod pseudocluster;
pub mod rng;
pub mod trainer;

pub use error::{ItmError, Result};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}
