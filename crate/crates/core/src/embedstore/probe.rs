//! Multinomial logistic regression fitted to convergence with L-BFGS. This is
//! the ground-truth stand-in for fine-tuned accuracy on synthetic models.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{feature_stats, EmbeddingSet, FeatureStats};
use crate::error::{ItmError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    /// L2 penalty on the weights (not the bias). Keeps the optimum finite on
    /// separable data.
    pub l2: f64,
    /// Convergence threshold on the max-abs gradient entry.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            tolerance: 1e-6,
            max_iterations: 5000,
        }
    }
}

/// A fitted probe. Inputs are standardized with the training statistics.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    stats: FeatureStats,
    weights: Array2<f64>,
    bias: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl LinearProbe {
    pub fn fit(train: &EmbeddingSet, cfg: &ProbeConfig) -> Result<Self> {
        let stats = feature_stats(train)?;
        let x = train.standardized(&stats)?.features().to_owned();
        let (n, d) = x.dim();
        let c = train.num_classes();
        let labels = train.labels();
        let l2 = cfg.l2;

        let objective = |theta: &[f64], grad: &mut [f64]| -> f64 {
            let w = ArrayView2::from_shape((d, c), &theta[..d * c]).expect("shape");
            let b = &theta[d * c..];
            let mut logits = x.dot(&w);
            for mut row in logits.rows_mut() {
                for (v, bj) in row.iter_mut().zip(b) {
                    *v += bj;
                }
            }
            let mut loss = 0.0;
            for (mut row, &y) in logits.rows_mut().into_iter().zip(labels) {
                let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
                row.mapv_inplace(|v| (v - m).exp());
                let z = row.sum();
                loss += z.ln() + m - (row[y as usize].ln() + m);
                row /= z;
                row[y as usize] -= 1.0;
            }
            logits /= n as f64;
            let gw = x.t().dot(&logits) + &w * l2;
            let gb = logits.sum_axis(Axis(0));
            grad[..d * c].copy_from_slice(gw.as_slice().expect("standard layout"));
            grad[d * c..].copy_from_slice(gb.as_slice().expect("contiguous"));
            loss / n as f64 + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
        };

        let mut theta = vec![0.0; d * c + c];
        let outcome = lbfgs(&mut theta, objective, cfg.tolerance, cfg.max_iterations)?;
        if !outcome.converged {
            log::warn!(
                "linear probe stopped after {} iterations without reaching tolerance {}",
                outcome.iterations,
                cfg.tolerance
            );
        }
        let weights = Array2::from_shape_vec((d, c), theta[..d * c].to_vec()).expect("shape");
        let bias = Array1::from(theta[d * c..].to_vec());
        Ok(Self {
            stats,
            weights,
            bias,
            iterations: outcome.iterations,
            converged: outcome.converged,
        })
    }

    pub fn predict(&self, set: &EmbeddingSet) -> Result<Vec<usize>> {
        let x = set.standardized(&self.stats)?;
        let logits = x.features().dot(&self.weights) + &self.bias;
        Ok(logits.rows().into_iter().map(|r| crate::argmax(r.iter().copied())).collect())
    }

    pub fn accuracy(&self, set: &EmbeddingSet) -> Result<f64> {
        let pred = self.predict(set)?;
        let correct = pred
            .iter()
            .zip(set.labels())
            .filter(|(p, &y)| **p == y as usize)
            .count();
        Ok(correct as f64 / set.len() as f64)
    }
}

struct LbfgsOutcome {
    iterations: usize,
    converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn lbfgs<F>(x: &mut [f64], mut f: F, tol: f64, max_iter: usize) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    const MEMORY: usize = 10;
    let dim = x.len();
    let mut g = vec![0.0; dim];
    let mut fx = f(x, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut trial = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];

    for iter in 0..max_iter {
        let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if gmax <= tol {
            return Ok(LbfgsOutcome {
                iterations: iter,
                converged: true,
            });
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = vec![0.0; s_hist.len()];
        for i in (0..s_hist.len()).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alphas[i] = rho * dot(&s_hist[i], &q);
            for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
                *qj -= alphas[i] * yj;
            }
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..s_hist.len() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &q);
            for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
                *qj += (alphas[i] - beta) * sj;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
            s_hist.clear();
            y_hist.clear();
        }

        // Armijo backtracking
        let mut step = if s_hist.is_empty() {
            1.0 / g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0)
        } else {
            1.0
        };
        let mut f_new;
        loop {
            for ((t, xi), di) in trial.iter_mut().zip(x.iter()).zip(&dir) {
                *t = xi + step * di;
            }
            f_new = f(&trial, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                // No further decrease is representable; treat as converged
                // at machine precision.
                return Ok(LbfgsOutcome {
                    iterations: iter,
                    converged: gmax <= tol.max(1e-8),
                });
            }
        }
        if !f_new.is_finite() {
            return Err(ItmError::Validation("probe objective became non-finite".into()));
        }
        let s: Vec<f64> = trial.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-12 {
            if s_hist.len() == MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        x.copy_from_slice(&trial);
        g.copy_from_slice(&g_new);
        fx = f_new;
    }
    Ok(LbfgsOutcome {
        iterations: max_iter,
        converged: false,
    })
}
