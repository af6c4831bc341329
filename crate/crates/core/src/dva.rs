//! Divide-and-conquer variational approximation.
//!
//! Within a batch, a linear map W_g trained by plain gradient descent on the
//! MSE between `Θ·W_g` and the pseudo-cluster targets Ê moves the batch
//! embedding along
//!
//! ```text
//! E⁽ᵏ⁺¹⁾ = (I − ηC)·E⁽ᵏ⁾ + ηC·Ê,   C = (1/B)·Θ·Θᵀ,   E⁽⁰⁾ = Θ
//! ```
//!
//! so the trained map never has to be materialized. [`evolve_closed_form`]
//! runs that recurrence and [`evolve_backward`] differentiates it exactly.
//! [`evolve_explicit`] runs the inner gradient descent literally (for MSE,
//! MAE or cross-entropy) and is both the reference for the recurrence and the
//! route used for the non-MSE losses.
//!
//! `C·X` is always evaluated as `(1/B)·Θ·(Θᵀ·X)`, which costs O(B·d_c²)
//! instead of O(B²·d_c); the B×B matrix itself is only built on request.
//! [`evolve_gram_space`] goes further and runs the whole recurrence on
//! d_c×d_c projections, which is what training uses when d_c < B.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ItmError, Result};
use crate::{linalg, rng};

/// Loss minimized by the inner (per-batch) optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PcLoss {
    #[default]
    Mse,
    Mae,
    Ce,
}

impl fmt::Display for PcLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PcLoss::Mse => "mse",
            PcLoss::Mae => "mae",
            PcLoss::Ce => "ce",
        })
    }
}

impl FromStr for PcLoss {
    type Err = ItmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(PcLoss::Mse),
            "mae" => Ok(PcLoss::Mae),
            "ce" => Ok(PcLoss::Ce),
            other => Err(ItmError::Argument(format!("unknown inner loss {other:?}"))),
        }
    }
}

/// How many recurrence steps to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum IterationMode {
    Fixed { n: usize },
    /// Derived from the class dispersion of the training features, see
    /// [`adaptive_n`].
    Adaptive { eta0: f64, n_b: usize, dis_b: f64 },
}

impl Default for IterationMode {
    fn default() -> Self {
        IterationMode::Adaptive {
            eta0: 0.01,
            n_b: 20,
            dis_b: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DvaConfig {
    pub eta: f64,
    pub n_mode: IterationMode,
    pub batch_size: usize,
    pub pc_loss: PcLoss,
    /// Differentiate through the dependence of C on Θ (closed-form route).
    pub grad_through_c: bool,
}

impl Default for DvaConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            n_mode: IterationMode::default(),
            batch_size: 256,
            pc_loss: PcLoss::Mse,
            grad_through_c: true,
        }
    }
}

impl DvaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(ItmError::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if self.batch_size == 0 {
            return Err(ItmError::Config("batch size must be at least 1".into()));
        }
        if let IterationMode::Adaptive { eta0, dis_b, .. } = self.n_mode {
            if !(eta0 > 0.0 && eta0 < 1.0) {
                return Err(ItmError::Config(format!("eta0 must lie in (0, 1), got {eta0}")));
            }
            if !(dis_b > 0.0 && dis_b.is_finite()) {
                return Err(ItmError::Config(format!("dis_b must be positive, got {dis_b}")));
            }
        }
        Ok(())
    }

    /// Iteration count for a training split with the given dispersion.
    pub fn resolve_n(&self, dispersion: f64) -> Result<usize> {
        match self.n_mode {
            IterationMode::Fixed { n } => Ok(n),
            IterationMode::Adaptive { eta0, n_b, dis_b } => adaptive_n(dispersion, eta0, n_b, dis_b),
        }
    }
}

/// C = (1/B)·Θ·Θᵀ.
pub fn mixing_matrix(theta: ArrayView2<f64>) -> Array2<f64> {
    let b = theta.nrows().max(1) as f64;
    theta.dot(&theta.t()) / b
}

/// Everything the backward pass needs from one closed-form evolution.
#[derive(Debug, Clone)]
pub struct EvolutionCache {
    pub theta: Array2<f64>,
    pub targets: Array2<f64>,
    /// E⁽⁰⁾ … E⁽ⁿ⁾; `intermediates[0] == theta`.
    pub intermediates: Vec<Array2<f64>>,
    pub eta: f64,
    /// (1/B)·Θᵀ·Θ (d_c×d_c); shares its nonzero spectrum with C.
    gram: Array2<f64>,
    /// η·λ_max(C).
    spectral_bound: f64,
}

impl EvolutionCache {
    /// The B×B mixing matrix C.
    pub fn mixing(&self) -> Array2<f64> {
        mixing_matrix(self.theta.view())
    }

    pub fn steps(&self) -> usize {
        self.intermediates.len() - 1
    }

    /// η·λ_max(C).
    pub fn spectral_bound(&self) -> f64 {
        self.spectral_bound
    }

    /// Set when η·λ_max(C) > 2, i.e. the recurrence amplifies some direction.
    pub fn divergence_warning(&self) -> Option<f64> {
        (self.spectral_bound > 2.0).then_some(self.spectral_bound)
    }

    pub fn gram(&self) -> &Array2<f64> {
        &self.gram
    }
}

fn check_same_shape(a: ArrayView2<f64>, b: ArrayView2<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(ItmError::Argument(format!(
            "{what}: shape {:?} does not match {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Runs n steps of E ← E − η·C·(E − Ê) starting from Θ.
pub fn evolve_closed_form(
    theta: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    eta: f64,
    n: usize,
) -> Result<(Array2<f64>, EvolutionCache)> {
    check_same_shape(theta, targets, "evolution targets")?;
    let b = theta.nrows().max(1) as f64;
    let gram = theta.t().dot(&theta) / b;
    let spectral_bound = eta * linalg::lambda_max_sym(gram.view()).max(0.0);
    let step = eta / b;

    let mut intermediates = Vec::with_capacity(n + 1);
    let mut state = theta.to_owned();
    for _ in 0..n {
        let residual = &state - &targets;
        let pull = theta.dot(&theta.t().dot(&residual));
        let next = &state - &(pull * step);
        intermediates.push(std::mem::replace(&mut state, next));
    }
    intermediates.push(state.clone());

    let cache = EvolutionCache {
        theta: theta.to_owned(),
        targets: targets.to_owned(),
        intermediates,
        eta,
        gram,
        spectral_bound,
    };
    if let Some(bound) = cache.divergence_warning() {
        log::warn!("recurrence is expansive: eta * lambda_max(C) = {bound:.3} > 2");
    }
    Ok((state, cache))
}

/// Gradient of a scalar loss with respect to Θ, given its gradient with
/// respect to the final state E⁽ⁿ⁾.
///
/// With `grad_through_c`, each step also contributes through C(Θ):
/// ∂/∂Θ of −(η/B)·tr(Gᵀ·Θ·Θᵀ·D) is −(η/B)·(G·Dᵀ·Θ + D·Gᵀ·Θ), where
/// D = E⁽ᵏ⁾ − Ê and G = ∂L/∂E⁽ᵏ⁺¹⁾.
pub fn evolve_backward(
    cache: &EvolutionCache,
    grad_state: ArrayView2<f64>,
    grad_through_c: bool,
) -> Result<Array2<f64>> {
    check_same_shape(cache.theta.view(), grad_state, "state gradient")?;
    let theta = cache.theta.view();
    let step = cache.eta / theta.nrows().max(1) as f64;
    let mut grad = grad_state.to_owned();
    let mut through_c = Array2::<f64>::zeros(theta.dim());
    for k in (0..cache.steps()).rev() {
        if grad_through_c {
            let residual = &cache.intermediates[k] - &cache.targets;
            let a = grad.dot(&residual.t().dot(&theta));
            let b = residual.dot(&grad.t().dot(&theta));
            through_c.scaled_add(-step, &(a + b));
        }
        let pull = theta.dot(&theta.t().dot(&grad));
        grad.scaled_add(-step, &pull);
    }
    Ok(grad + through_c)
}

/// Trajectory of the recurrence kept in the d_c×d_c Gram space.
///
/// With D⁽ᵏ⁾ = E⁽ᵏ⁾ − Ê and M⁽ᵏ⁾ = Θᵀ·D⁽ᵏ⁾, the recurrence gives
/// M⁽ᵏ⁺¹⁾ = (I − η·ΘᵀΘ/B)·M⁽ᵏ⁾ and D⁽ⁿ⁾ = D⁽⁰⁾ − (η/B)·Θ·Σₖ M⁽ᵏ⁾, so each step
/// costs O(d_c³) instead of O(B·d_c²). The backward pass reduces the same
/// way. Same arithmetic as [`evolve_closed_form`] up to rounding.
#[derive(Debug, Clone)]
pub struct GramSpaceCache {
    pub theta: Array2<f64>,
    pub targets: Array2<f64>,
    pub eta: f64,
    /// I − η·ΘᵀΘ/B.
    contraction: Array2<f64>,
    /// M⁽⁰⁾ … M⁽ⁿ⁻¹⁾.
    projections: Vec<Array2<f64>>,
    spectral_bound: f64,
}

impl GramSpaceCache {
    pub fn steps(&self) -> usize {
        self.projections.len()
    }

    pub fn spectral_bound(&self) -> f64 {
        self.spectral_bound
    }
}

/// Same map as [`evolve_closed_form`], evaluated in the Gram space.
pub fn evolve_gram_space(
    theta: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    eta: f64,
    n: usize,
) -> Result<(Array2<f64>, GramSpaceCache)> {
    check_same_shape(theta, targets, "evolution targets")?;
    let b = theta.nrows().max(1) as f64;
    let d_c = theta.ncols();
    let gram = theta.t().dot(&theta) / b;
    let spectral_bound = eta * linalg::lambda_max_sym(gram.view()).max(0.0);
    let contraction = Array2::<f64>::eye(d_c) - &(gram * eta);

    let offset = &theta - &targets;
    let mut projections = Vec::with_capacity(n);
    let mut total = Array2::<f64>::zeros((d_c, d_c));
    if n > 0 {
        let mut m = theta.t().dot(&offset);
        for k in 0..n {
            total += &m;
            let next = if k + 1 < n { Some(contraction.dot(&m)) } else { None };
            projections.push(m);
            match next {
                Some(v) => m = v,
                None => break,
            }
        }
    }
    let state = &targets + &offset - &(theta.dot(&total) * (eta / b));
    if spectral_bound > 2.0 {
        log::warn!("recurrence is expansive: eta * lambda_max(C) = {spectral_bound:.3} > 2");
    }
    Ok((
        state,
        GramSpaceCache {
            theta: theta.to_owned(),
            targets: targets.to_owned(),
            eta,
            contraction,
            projections,
            spectral_bound,
        },
    ))
}

/// Gradient with respect to Θ for [`evolve_gram_space`]; equals
/// [`evolve_backward`] up to rounding.
///
/// Writing G⁽ᵏ⁾ for ∂L/∂E⁽ᵏ⁾ and H⁽ᵏ⁾ = Θᵀ·G⁽ᵏ⁾, the adjoint recurrence is
/// H⁽ᵏ⁾ = (I − η·ΘᵀΘ/B)·H⁽ᵏ⁺¹⁾ and G⁽ᵏ⁾ = G⁽ᵏ⁺¹⁾ − (η/B)·Θ·H⁽ᵏ⁺¹⁾; the
/// per-step C terms G⁽ᵏ⁺¹⁾·M⁽ᵏ⁾ᵀ + D⁽ᵏ⁾·H⁽ᵏ⁺¹⁾ᵀ are summed through
/// d_c×d_c accumulators.
pub fn gram_space_backward(
    cache: &GramSpaceCache,
    grad_state: ArrayView2<f64>,
    grad_through_c: bool,
) -> Result<Array2<f64>> {
    check_same_shape(cache.theta.view(), grad_state, "state gradient")?;
    let theta = cache.theta.view();
    let d_c = theta.ncols();
    let n = cache.steps();
    let s = cache.eta / theta.nrows().max(1) as f64;
    if n == 0 {
        return Ok(grad_state.to_owned());
    }
    let zeros = || Array2::<f64>::zeros((d_c, d_c));

    // prefix[k] = Σ_{j<k} M⁽ʲ⁾
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(zeros());
    for m in &cache.projections {
        let next = prefix.last().expect("seeded") + m;
        prefix.push(next);
    }

    let mut h = theta.t().dot(&grad_state); // H⁽ⁿ⁾
    let mut sum_h = zeros(); // Σ_{j=1..n} H⁽ʲ⁾
    let mut later_h = zeros(); // Q⁽ᵏ⁺¹⁾ = Σ_{j=k+2..n} H⁽ʲ⁾
    let mut s1 = zeros(); // Σ_k Q⁽ᵏ⁺¹⁾·M⁽ᵏ⁾ᵀ
    let mut s2 = zeros(); // Σ_k P⁽ᵏ⁾·H⁽ᵏ⁺¹⁾ᵀ
    for k in (0..n).rev() {
        // h holds H⁽ᵏ⁺¹⁾
        sum_h += &h;
        if grad_through_c {
            s1 += &later_h.dot(&cache.projections[k].t());
            s2 += &prefix[k].dot(&h.t());
        }
        later_h += &h;
        if k > 0 {
            h = cache.contraction.dot(&h);
        }
    }

    let mut grad = grad_state.to_owned() - &(theta.dot(&sum_h) * s);
    if grad_through_c {
        let offset = &theta - &cache.targets;
        let mut inner = grad_state.dot(&prefix[n].t()) + offset.dot(&sum_h.t());
        inner.scaled_add(-s, &theta.dot(&(s1 + s2)));
        grad.scaled_add(-s, &inner);
    }
    Ok(grad)
}

/// Initial value of the inner map W_g.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WgInit {
    Identity,
    /// Uniform(−1/√d_in, 1/√d_in) entries.
    Random(u64),
}

/// Trajectory of one explicit inner optimization.
#[derive(Debug, Clone)]
pub struct ExplicitCache {
    pub theta: Array2<f64>,
    pub targets: Array2<f64>,
    /// W_g⁽⁰⁾ … W_g⁽ⁿ⁾.
    pub weights: Vec<Array2<f64>>,
    pub eta: f64,
    pub loss: PcLoss,
}

fn require_one_hot(targets: ArrayView2<f64>) -> Result<()> {
    let ok = targets.rows().into_iter().all(|row| {
        row.iter().filter(|&&v| v == 1.0).count() == 1 && row.iter().all(|&v| v == 0.0 || v == 1.0)
    });
    if ok {
        Ok(())
    } else {
        Err(ItmError::Config(
            "cross-entropy inner loss needs unshifted one-hot centers (a class per target row)".into(),
        ))
    }
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
}

/// ∂L_pc/∂Z · B, for Z = Θ·W_g.
fn inner_residual(z: &Array2<f64>, targets: ArrayView2<f64>, loss: PcLoss) -> Array2<f64> {
    match loss {
        PcLoss::Mse => z - &targets,
        // subgradient of |x| at 0 is taken as 0
        PcLoss::Mae => (z - &targets).mapv(|v| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 }),
        PcLoss::Ce => {
            let mut p = z.clone();
            softmax_rows(&mut p);
            p - targets
        }
    }
}

/// Runs n gradient-descent steps W ← W − η·∇L_pc(Θ·W, Ê) and returns the
/// whole trajectory.
pub fn evolve_explicit_with_cache(
    theta: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    eta: f64,
    n: usize,
    loss: PcLoss,
    init: WgInit,
) -> Result<(Array2<f64>, ExplicitCache)> {
    if theta.nrows() != targets.nrows() {
        return Err(ItmError::Argument(format!(
            "{} condition rows for {} target rows",
            theta.nrows(),
            targets.nrows()
        )));
    }
    if loss == PcLoss::Ce {
        require_one_hot(targets)?;
    }
    let (d_in, d_c) = (theta.ncols(), targets.ncols());
    let w0 = match init {
        WgInit::Identity => {
            if d_in != d_c {
                return Err(ItmError::Argument(format!(
                    "identity W_g needs equal widths, got {d_in} -> {d_c}"
                )));
            }
            Array2::eye(d_c)
        }
        WgInit::Random(seed) => {
            let mut rng = rng::seeded(seed, rng::stream::EXPLICIT_INIT);
            let bound = 1.0 / (d_in as f64).sqrt();
            Array2::from_shape_simple_fn((d_in, d_c), || rng.random_range(-bound..=bound))
        }
    };
    let step = eta / theta.nrows().max(1) as f64;
    let mut weights = Vec::with_capacity(n + 1);
    let mut w = w0;
    for _ in 0..n {
        let z = theta.dot(&w);
        let r = inner_residual(&z, targets, loss);
        let next = &w - &(theta.t().dot(&r) * step);
        weights.push(std::mem::replace(&mut w, next));
    }
    let state = theta.dot(&w);
    weights.push(w);
    Ok((
        state,
        ExplicitCache {
            theta: theta.to_owned(),
            targets: targets.to_owned(),
            weights,
            eta,
            loss,
        },
    ))
}

/// Explicit inner optimization; see [`evolve_explicit_with_cache`].
pub fn evolve_explicit(
    theta: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    eta: f64,
    n: usize,
    loss: PcLoss,
    init: WgInit,
) -> Result<Array2<f64>> {
    evolve_explicit_with_cache(theta, targets, eta, n, loss, init).map(|(s, _)| s)
}

/// Exact gradient with respect to Θ through the unrolled inner optimization.
/// The MAE residual is piecewise constant, so only its direct Θᵀ factor
/// carries gradient.
pub fn explicit_backward(cache: &ExplicitCache, grad_state: ArrayView2<f64>) -> Result<Array2<f64>> {
    let theta = cache.theta.view();
    let d_c = cache.targets.ncols();
    if grad_state.dim() != (theta.nrows(), d_c) {
        return Err(ItmError::Argument(format!(
            "state gradient shape {:?} does not match {:?}",
            grad_state.dim(),
            (theta.nrows(), d_c)
        )));
    }
    let step = cache.eta / theta.nrows().max(1) as f64;
    let last = cache.weights.last().expect("at least W_g(0)");
    let mut grad_theta = grad_state.dot(&last.t());
    let mut grad_w = theta.t().dot(&grad_state);
    for k in (0..cache.weights.len() - 1).rev() {
        let w = &cache.weights[k];
        let z = theta.dot(w);
        let residual = inner_residual(&z, cache.targets.view(), cache.loss);
        grad_theta.scaled_add(-step, &residual.dot(&grad_w.t()));
        let grad_residual = theta.dot(&grad_w) * (-step);
        let grad_z = match cache.loss {
            PcLoss::Mse => grad_residual,
            PcLoss::Mae => Array2::zeros(z.dim()),
            PcLoss::Ce => {
                let mut p = z;
                softmax_rows(&mut p);
                let inner = (&p * &grad_residual).sum_axis(Axis(1)).insert_axis(Axis(1));
                &p * &(grad_residual - &inner)
            }
        };
        grad_theta += &grad_z.dot(&w.t());
        grad_w += &theta.t().dot(&grad_z);
    }
    Ok(grad_theta)
}

/// n = max(0, ⌈log_{1−η₀}(dis_b / dispersion)⌉ + n_b).
///
/// A logarithm within 1e−9 of an integer is snapped to it before the ceiling,
/// so exact powers of the base give their exponent.
pub fn adaptive_n(dispersion: f64, eta0: f64, n_b: usize, dis_b: f64) -> Result<usize> {
    if !(dispersion > 0.0 && dispersion.is_finite()) {
        return Err(ItmError::Argument(format!(
            "dispersion must be positive and finite, got {dispersion}"
        )));
    }
    if !(eta0 > 0.0 && eta0 < 1.0) || dis_b.is_nan() || dis_b <= 0.0 {
        return Err(ItmError::Argument(format!(
            "need 0 < eta0 < 1 and dis_b > 0, got eta0 = {eta0}, dis_b = {dis_b}"
        )));
    }
    let log = (dis_b / dispersion).ln() / (1.0 - eta0).ln();
    let nearest = log.round();
    let snapped = if (log - nearest).abs() <= 1e-9 { nearest } else { log };
    let n = snapped.ceil() + n_b as f64;
    Ok(if n <= 0.0 { 0 } else { n as usize })
}
