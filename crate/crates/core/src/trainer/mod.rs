//! ITM training: a linear latent map f(E) = E·W_z + b_z produces the batch
//! condition Θ, DVA evolves Θ toward the pseudo-cluster targets, and a linear
//! head h(E⁽ⁿ⁾) = E⁽ⁿ⁾·W_h + b_h is trained with cross-entropy. The best
//! evaluation accuracy seen during training is the transferability score.

mod adamw;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dva::{self, DvaConfig, EvolutionCache, ExplicitCache, GramSpaceCache, PcLoss, WgInit};
use crate::embedstore::{feature_stats, EmbeddingSet};
use crate::error::{ItmError, Result};
use crate::pseudocluster::PseudoClusters;
use crate::rng;

pub use adamw::{adamw_step, AdamMoments, AdamWConfig};

/// How the evaluation split is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum EvalMode {
    /// Evolve each evaluation batch toward the centers of its own labels, then
    /// classify with the head.
    #[default]
    #[serde(rename = "evolved")]
    EvolvedWithLabels,
    /// Classify h(f(E)) directly, without evolution.
    #[serde(rename = "static")]
    StaticLogits,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::EvolvedWithLabels => "evolved",
            EvalMode::StaticLogits => "static",
        })
    }
}

impl FromStr for EvalMode {
    type Err = ItmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "evolved" => Ok(EvalMode::EvolvedWithLabels),
            "static" => Ok(EvalMode::StaticLogits),
            other => Err(ItmError::Argument(format!("unknown eval mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub eval_every: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dva: DvaConfig,
    pub seed: u64,
    pub eval_mode: EvalMode,
    /// Include the bias b_z in the latent map.
    pub latent_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            eval_every: 100,
            lr: 5e-3,
            weight_decay: 0.01,
            dva: DvaConfig::default(),
            seed: 0,
            eval_mode: EvalMode::EvolvedWithLabels,
            latent_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.dva.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ItmError::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(ItmError::Config(format!("weight decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.eval_every == 0 || self.eval_every > self.iterations {
            return Err(ItmError::Config(format!(
                "eval_every = {} gives no evaluation within {} iterations",
                self.eval_every, self.iterations
            )));
        }
        Ok(())
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Learnable parameters of f and h plus their optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ItmModelState {
    pub w_z: Array2<f64>,
    pub b_z: Array1<f64>,
    pub w_h: Array2<f64>,
    pub b_h: Array1<f64>,
    pub moments: [AdamMoments; 4],
    pub step_count: u64,
}

/// Gradients with the same layout as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_z: Array2<f64>,
    pub b_z: Array1<f64>,
    pub w_h: Array2<f64>,
    pub b_h: Array1<f64>,
}

/// Weights uniform in ±1/√fan_in, biases and moments zero.
pub fn init_state(d: usize, d_c: usize, classes: usize, seed: u64) -> ItmModelState {
    let mut rng = rng::seeded(seed, rng::stream::INIT);
    let mut uniform = |rows: usize, cols: usize| {
        let bound = 1.0 / (rows as f64).sqrt();
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
    };
    let w_z = uniform(d, d_c);
    let w_h = uniform(d_c, classes);
    ItmModelState {
        moments: [
            AdamMoments::zeros(d * d_c),
            AdamMoments::zeros(d_c),
            AdamMoments::zeros(d_c * classes),
            AdamMoments::zeros(classes),
        ],
        w_z,
        b_z: Array1::zeros(d_c),
        w_h,
        b_h: Array1::zeros(classes),
        step_count: 0,
    }
}

impl ItmModelState {
    pub fn latent_dim(&self) -> usize {
        self.w_z.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.w_h.ncols()
    }

    /// Θ = E·W_z + b_z.
    pub fn condition(&self, features: ArrayView2<f64>) -> Array2<f64> {
        features.dot(&self.w_z) + &self.b_z
    }

    pub fn head(&self, evolved: ArrayView2<f64>) -> Array2<f64> {
        evolved.dot(&self.w_h) + &self.b_h
    }

    pub fn is_finite(&self) -> bool {
        [&self.w_z, &self.w_h].iter().all(|a| a.iter().all(|v| v.is_finite()))
            && [&self.b_z, &self.b_h].iter().all(|a| a.iter().all(|v| v.is_finite()))
    }

    /// Applies one AdamW step to every parameter.
    pub fn apply(&mut self, grads: &Gradients, cfg: &AdamWConfig, update_latent_bias: bool) {
        self.step_count += 1;
        let step = self.step_count;
        let [m_wz, m_bz, m_wh, m_bh] = &mut self.moments;
        adamw_step(slice_mut(&mut self.w_z), slice(&grads.w_z), m_wz, step, cfg);
        if update_latent_bias {
            adamw_step(self.b_z.as_slice_mut().expect("contiguous"), grads.b_z.as_slice().expect("contiguous"), m_bz, step, cfg);
        }
        adamw_step(slice_mut(&mut self.w_h), slice(&grads.w_h), m_wh, step, cfg);
        adamw_step(self.b_h.as_slice_mut().expect("contiguous"), grads.b_h.as_slice().expect("contiguous"), m_bh, step, cfg);
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are kept in standard layout")
}

fn slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are kept in standard layout")
}

/// The per-batch evolution, whichever route produced it.
#[derive(Debug, Clone)]
pub enum EvolutionTrace {
    ClosedForm(EvolutionCache),
    GramSpace(GramSpaceCache),
    Explicit(ExplicitCache),
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub features: Array2<f64>,
    pub labels: Vec<u32>,
    pub evolved: Array2<f64>,
    pub probabilities: Array2<f64>,
    pub trace: EvolutionTrace,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Array2<f64>,
    pub loss: f64,
    pub cache: ForwardCache,
}

/// Evolves Θ toward the targets with `n` steps of the configured inner loss.
/// MSE uses the closed-form recurrence (in the Gram space when the batch is
/// taller than it is wide); MAE and CE run the explicit inner optimization
/// from the identity map.
pub fn evolve(theta: ArrayView2<f64>, targets: ArrayView2<f64>, dva: &DvaConfig, n: usize) -> Result<(Array2<f64>, EvolutionTrace)> {
    match dva.pc_loss {
        PcLoss::Mse if theta.ncols() < theta.nrows() => {
            let (state, cache) = dva::evolve_gram_space(theta, targets, dva.eta, n)?;
            Ok((state, EvolutionTrace::GramSpace(cache)))
        }
        PcLoss::Mse => {
            let (state, cache) = dva::evolve_closed_form(theta, targets, dva.eta, n)?;
            Ok((state, EvolutionTrace::ClosedForm(cache)))
        }
        loss => {
            let (state, cache) = dva::evolve_explicit_with_cache(theta, targets, dva.eta, n, loss, WgInit::Identity)?;
            Ok((state, EvolutionTrace::Explicit(cache)))
        }
    }
}

fn spectral_bound(theta: ArrayView2<f64>, eta: f64) -> f64 {
    let gram = theta.t().dot(&theta) / theta.nrows().max(1) as f64;
    eta * crate::linalg::lambda_max_sym(gram.view())
}

/// Mean softmax cross-entropy; fills `logits` with the probabilities.
fn softmax_cross_entropy(logits: &mut Array2<f64>, labels: &[u32]) -> f64 {
    let mut total = 0.0;
    for (mut row, &y) in logits.rows_mut().into_iter().zip(labels) {
        let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let shifted_y = row[y as usize] - m;
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        total += z.ln() - shifted_y;
        row /= z;
    }
    total / labels.len().max(1) as f64
}

/// Θ = f(E), E⁽ⁿ⁾ = evolve(Θ, Ê), logits = h(E⁽ⁿ⁾), loss = mean CE.
pub fn forward_batch(
    state: &ItmModelState,
    features: ArrayView2<f64>,
    labels: &[u32],
    centers: &PseudoClusters,
    dva: &DvaConfig,
    n: usize,
) -> Result<ForwardOutput> {
    if features.nrows() != labels.len() {
        return Err(ItmError::Argument(format!(
            "{} feature rows for {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if labels.iter().any(|&y| y as usize >= state.num_classes()) {
        return Err(ItmError::Validation("batch label outside the head's classes".into()));
    }
    let theta = state.condition(features);
    let targets = centers.targets_for(labels)?;
    let (evolved, trace) = evolve(theta.view(), targets.view(), dva, n)?;
    let logits = state.head(evolved.view());
    let mut probabilities = logits.clone();
    let loss = softmax_cross_entropy(&mut probabilities, labels);
    if !loss.is_finite() {
        return Err(ItmError::Numeric {
            iteration: 0,
            eta: dva.eta,
            spectral_bound: spectral_bound(theta.view(), dva.eta),
        });
    }
    Ok(ForwardOutput {
        logits,
        loss,
        cache: ForwardCache {
            features: features.to_owned(),
            labels: labels.to_vec(),
            evolved,
            probabilities,
            trace,
        },
    })
}

/// Gradient of the mean cross-entropy with respect to all parameters.
pub fn backward_batch(state: &ItmModelState, cache: &ForwardCache, dva: &DvaConfig) -> Result<Gradients> {
    let b = cache.labels.len().max(1) as f64;
    let mut grad_logits = cache.probabilities.clone();
    for (mut row, &y) in grad_logits.rows_mut().into_iter().zip(&cache.labels) {
        row[y as usize] -= 1.0;
    }
    grad_logits /= b;
    let w_h = cache.evolved.t().dot(&grad_logits);
    let b_h = grad_logits.sum_axis(Axis(0));
    let grad_evolved = grad_logits.dot(&state.w_h.t());
    let grad_theta = match &cache.trace {
        EvolutionTrace::ClosedForm(c) => dva::evolve_backward(c, grad_evolved.view(), dva.grad_through_c)?,
        EvolutionTrace::GramSpace(c) => dva::gram_space_backward(c, grad_evolved.view(), dva.grad_through_c)?,
        EvolutionTrace::Explicit(c) => dva::explicit_backward(c, grad_evolved.view())?,
    };
    Ok(Gradients {
        w_z: cache.features.t().dot(&grad_theta),
        b_z: grad_theta.sum_axis(Axis(0)),
        w_h,
        b_h,
    })
}

fn argmax_accuracy(logits: &Array2<f64>, labels: &[u32]) -> usize {
    logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| crate::argmax(row.iter().copied()) == y as usize)
        .count()
}

/// Exact fraction of evaluation samples classified correctly. Evolved mode
/// walks the set in order in chunks of the configured batch size.
pub fn evaluate_score(
    state: &ItmModelState,
    eval: &EmbeddingSet,
    centers: &PseudoClusters,
    dva: &DvaConfig,
    mode: EvalMode,
    n: usize,
) -> Result<f64> {
    if eval.is_empty() {
        return Err(ItmError::Argument("evaluation set is empty".into()));
    }
    let features = eval.features();
    let labels = eval.labels();
    let correct = match mode {
        EvalMode::StaticLogits => {
            let logits = state.head(state.condition(features).view());
            argmax_accuracy(&logits, labels)
        }
        EvalMode::EvolvedWithLabels => {
            let mut correct = 0;
            let b = dva.batch_size;
            for start in (0..eval.len()).step_by(b) {
                let end = (start + b).min(eval.len());
                let chunk = features.slice(ndarray::s![start..end, ..]);
                let theta = state.condition(chunk);
                let targets = centers.targets_for(&labels[start..end])?;
                let (evolved, _) = evolve(theta.view(), targets.view(), dva, n)?;
                correct += argmax_accuracy(&state.head(evolved.view()), &labels[start..end]);
            }
            correct
        }
    };
    Ok(correct as f64 / eval.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub iter: usize,
    pub score: f64,
    /// Mean training loss over the iterations since the previous evaluation.
    pub loss: f64,
}

/// Result of scoring one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub name: String,
    pub best_score: f64,
    pub n_used: usize,
    pub history: Vec<HistoryPoint>,
    pub config: serde_json::Value,
}

fn check_compatible(train: &EmbeddingSet, eval: &EmbeddingSet, centers: &PseudoClusters) -> Result<()> {
    if train.dim() != eval.dim() || train.num_classes() != eval.num_classes() {
        return Err(ItmError::Argument(format!(
            "train (d={}, C={}) and eval (d={}, C={}) disagree",
            train.dim(),
            train.num_classes(),
            eval.dim(),
            eval.num_classes()
        )));
    }
    if centers.num_classes() != train.num_classes() {
        return Err(ItmError::Argument(format!(
            "{} pseudo-cluster centers for {} classes",
            centers.num_classes(),
            train.num_classes()
        )));
    }
    Ok(())
}

/// Iteration count the configuration implies for this training split.
pub fn resolve_iterations(train: &EmbeddingSet, cfg: &TrainConfig) -> Result<usize> {
    match cfg.dva.n_mode {
        dva::IterationMode::Fixed { n } => Ok(n),
        _ => cfg.dva.resolve_n(feature_stats(train)?.dispersion),
    }
}

/// Mini-batches of shuffled indices, reshuffled every epoch. When the split
/// holds at least one full batch, the epoch's ragged tail is dropped so that
/// every batch has exactly `batch_size` rows.
struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
    rng: rand_chacha::ChaCha8Rng,
}

impl BatchSampler {
    fn new(len: usize, batch: usize, seed: u64) -> Self {
        let mut sampler = Self {
            order: (0..len).collect(),
            cursor: 0,
            batch: batch.min(len),
            rng: rng::seeded(seed, rng::stream::BATCHES),
        };
        sampler.order.shuffle(&mut sampler.rng);
        sampler
    }

    fn next_batch(&mut self) -> &[usize] {
        if self.cursor + self.batch > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let out = &self.order[self.cursor..self.cursor + self.batch];
        self.cursor += self.batch;
        out
    }
}

/// Trains f and h and returns the report together with the final state.
pub fn train_itm_with_state(
    train: &EmbeddingSet,
    eval: &EmbeddingSet,
    centers: &PseudoClusters,
    cfg: &TrainConfig,
) -> Result<(ScoreReport, ItmModelState)> {
    cfg.validate()?;
    check_compatible(train, eval, centers)?;
    let n = resolve_iterations(train, cfg)?;
    let mut state = init_state(train.dim(), centers.dim(), train.num_classes(), cfg.seed);
    let adam = cfg.adamw();
    let mut sampler = BatchSampler::new(train.len(), cfg.dva.batch_size, cfg.seed);
    let features = train.features();
    let mut history = Vec::with_capacity(cfg.iterations / cfg.eval_every);
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;

    for iter in 1..=cfg.iterations {
        let idx = sampler.next_batch().to_vec();
        let batch_x = features.select(Axis(0), &idx);
        let batch_y: Vec<u32> = idx.iter().map(|&i| train.labels()[i]).collect();
        let out = forward_batch(&state, batch_x.view(), &batch_y, centers, &cfg.dva, n).map_err(|e| match e {
            ItmError::Numeric { eta, spectral_bound, .. } => ItmError::Numeric {
                iteration: iter,
                eta,
                spectral_bound,
            },
            other => other,
        })?;
        let grads = backward_batch(&state, &out.cache, &cfg.dva)?;
        state.apply(&grads, &adam, cfg.latent_bias);
        if !state.is_finite() {
            return Err(ItmError::Numeric {
                iteration: iter,
                eta: cfg.dva.eta,
                spectral_bound: spectral_bound(state.condition(batch_x.view()).view(), cfg.dva.eta),
            });
        }
        loss_sum += out.loss;
        loss_count += 1;

        if iter % cfg.eval_every == 0 {
            let score = evaluate_score(&state, eval, centers, &cfg.dva, cfg.eval_mode, n)?;
            log::debug!("iter {iter}: score {score:.4}, loss {:.5}", loss_sum / loss_count as f64);
            history.push(HistoryPoint {
                iter,
                score,
                loss: loss_sum / loss_count as f64,
            });
            loss_sum = 0.0;
            loss_count = 0;
        }
    }

    let best_score = history.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
    let report = ScoreReport {
        name: train.name().to_string(),
        best_score,
        n_used: n,
        history,
        config: serde_json::to_value(cfg)?,
    };
    Ok((report, state))
}

/// Trains f and h on `train`, scoring on `eval` every `eval_every`
/// iterations; the best score is the transferability estimate.
pub fn train_itm(train: &EmbeddingSet, eval: &EmbeddingSet, centers: &PseudoClusters, cfg: &TrainConfig) -> Result<ScoreReport> {
    train_itm_with_state(train, eval, centers, cfg).map(|(r, _)| r)
}
