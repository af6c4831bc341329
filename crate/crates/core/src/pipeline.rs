//! split → statistics → centers → training, as one call per model.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::embedstore::{feature_stats, split, EmbeddingSet};
use crate::error::Result;
use crate::pseudocluster::{generate_centers, shift_centers, CenterScheme, PseudoClusters};
use crate::trainer::{init_state, train_itm_with_state, ItmModelState, ScoreReport, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train_fraction: f64,
    pub centers: CenterScheme,
    /// Width of the latent space; defaults to the class count.
    pub center_dim: Option<usize>,
    pub shift_centers: bool,
    /// z-score features with training-split statistics before training.
    pub standardize: bool,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            centers: CenterScheme::OneHot,
            center_dim: None,
            shift_centers: false,
            standardize: false,
            train: TrainConfig::default(),
        }
    }
}

/// Builds the pseudo-cluster centers for a training split. When shifting is
/// on, location and scale come from the initial latent embedding
/// f(E) = E·W_z⁽⁰⁾ + b_z of the training split, which lives in the same space
/// as the centers.
pub fn prepare_centers(train: &EmbeddingSet, cfg: &PipelineConfig) -> Result<PseudoClusters> {
    let classes = train.num_classes();
    let dim = cfg.center_dim.unwrap_or(classes);
    let centers = generate_centers(classes, dim, cfg.centers, cfg.train.seed)?;
    if !cfg.shift_centers {
        return Ok(centers);
    }
    let state = init_state(train.dim(), dim, classes, cfg.train.seed);
    let theta = state.condition(train.features());
    let mu = theta.mean_axis(Axis(0)).expect("non-empty split");
    let sigma = theta.var_axis(Axis(0), 0.0).mapv(f64::sqrt);
    shift_centers(&centers, mu.view(), sigma.view())
}

/// Scores one model's embeddings end to end.
pub fn score_embedding_set(set: &EmbeddingSet, cfg: &PipelineConfig) -> Result<(ScoreReport, ItmModelState)> {
    let (mut train, mut eval) = split(set, cfg.train_fraction, cfg.train.seed)?;
    if cfg.standardize {
        let stats = feature_stats(&train)?;
        train = train.standardized(&stats)?;
        eval = eval.standardized(&stats)?;
    }
    let centers = prepare_centers(&train, cfg)?;
    let (mut report, state) = train_itm_with_state(&train, &eval, &centers, &cfg.train)?;
    report.name = set.name().to_string();
    report.config = serde_json::to_value(cfg)?;
    Ok((report, state))
}
