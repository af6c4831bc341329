//! Rank correlations between predicted transferability scores and measured
//! downstream performance.
//!
//! Ranks run in descending order: rank 1 is the highest value. Tied values
//! share the average of the ranks they span, and a tied pair contributes
//! sign(0) = 0.

mod similarity;
mod stability;

use serde::{Deserialize, Serialize};

use crate::error::{ItmError, Result};

pub use similarity::{left_singular_similarity, wz_similarity, wz_similarity_matrices};
pub use stability::{binomial, stability_subsample, StabilityResult, SubsetMode, EXHAUSTIVE_LIMIT};

/// A correlation value plus whether an input was constant, in which case the
/// value is 0 by convention rather than measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub value: f64,
    pub degenerate: bool,
}

fn check_pair(truth: &[f64], predicted: &[f64]) -> Result<()> {
    if truth.len() != predicted.len() {
        return Err(ItmError::Argument(format!(
            "{} ground-truth values for {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.len() < 2 {
        return Err(ItmError::Argument("rank correlation needs at least 2 models".into()));
    }
    if truth.iter().chain(predicted).any(|v| !v.is_finite()) {
        return Err(ItmError::Argument("rank correlation inputs must be finite".into()));
    }
    Ok(())
}

fn is_constant(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] == w[1])
}

/// Descending average ranks: the largest value gets 1, ties share the mean
/// of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn sign(v: f64) -> i64 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Weighted Kendall's τ with pair weight 1/(G_i + G_j), G the ground-truth
/// ranks.
///
/// Ranks are multiples of ½, so every weight is 2/k for an integer k. Signed
/// and total weights are accumulated per k and combined over a common
/// denominator in exact integer arithmetic, which makes the result
/// independent of input order and the correctly rounded value of the
/// rational whenever the reduced fraction fits in 53 bits.
pub fn weighted_kendall_tau(truth: &[f64], predicted: &[f64]) -> Result<Correlation> {
    check_pair(truth, predicted)?;
    if is_constant(truth) || is_constant(predicted) {
        return Ok(Correlation {
            value: 0.0,
            degenerate: true,
        });
    }
    let g = average_ranks(truth);
    let p = average_ranks(predicted);
    let m = truth.len();
    let max_k = 4 * m;
    let mut signed = vec![0i64; max_k + 1];
    let mut count = vec![0i64; max_k + 1];
    for i in 0..m {
        for j in (i + 1)..m {
            let k = (2.0 * (g[i] + g[j])).round() as usize;
            signed[k] += sign((g[i] - g[j]) * (p[i] - p[j]));
            count[k] += 1;
        }
    }
    Ok(Correlation {
        value: combine_by_denominator(&signed, &count),
        degenerate: false,
    })
}

/// Σ_k signed[k]/k ÷ Σ_k count[k]/k.
fn combine_by_denominator(signed: &[i64], count: &[i64]) -> f64 {
    let exact = || -> Option<f64> {
        let mut lcm: u128 = 1;
        for (k, &c) in count.iter().enumerate() {
            if c > 0 {
                let k = k as u128;
                lcm = (lcm / gcd(lcm, k)).checked_mul(k)?;
            }
        }
        let mut num: i128 = 0;
        let mut den: i128 = 0;
        for (k, (&s, &c)) in signed.iter().zip(count).enumerate() {
            if c > 0 {
                let scale = i128::try_from(lcm / k as u128).ok()?;
                num = num.checked_add((s as i128).checked_mul(scale)?)?;
                den = den.checked_add((c as i128).checked_mul(scale)?)?;
            }
        }
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()).max(1) as i128;
        Some((num / g) as f64 / (den / g) as f64)
    };
    exact().unwrap_or_else(|| {
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, (&s, &c)) in signed.iter().zip(count).enumerate() {
            if c > 0 {
                num += s as f64 / k as f64;
                den += c as f64 / k as f64;
            }
        }
        num / den
    })
}

/// Kendall's τ-a on average ranks: (concordant − discordant) / (M(M−1)/2).
pub fn kendall_tau(truth: &[f64], predicted: &[f64]) -> Result<Correlation> {
    check_pair(truth, predicted)?;
    if is_constant(truth) || is_constant(predicted) {
        return Ok(Correlation {
            value: 0.0,
            degenerate: true,
        });
    }
    let m = truth.len();
    let mut net = 0i64;
    for i in 0..m {
        for j in (i + 1)..m {
            net += sign((truth[i] - truth[j]) * (predicted[i] - predicted[j]));
        }
    }
    let pairs = (m * (m - 1) / 2) as f64;
    Ok(Correlation {
        value: net as f64 / pairs,
        degenerate: false,
    })
}

/// Spearman's ρ: Pearson correlation of the average-rank vectors.
pub fn spearman_rho(truth: &[f64], predicted: &[f64]) -> Result<Correlation> {
    check_pair(truth, predicted)?;
    let a = average_ranks(truth);
    let b = average_ranks(predicted);
    let m = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / m;
    let mean_b = b.iter().sum::<f64>() / m;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Ok(Correlation {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Correlation {
        value: (cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Predicted vs. measured scores for a set of models and their agreement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResult {
    pub model_names: Vec<String>,
    pub truth: Vec<f64>,
    pub predicted: Vec<f64>,
    pub tau_w: f64,
    pub tau: f64,
    pub rho: f64,
    pub degenerate: bool,
}

impl RankResult {
    pub fn compute(model_names: Vec<String>, truth: Vec<f64>, predicted: Vec<f64>) -> Result<Self> {
        if model_names.len() != truth.len() {
            return Err(ItmError::Argument(format!(
                "{} names for {} values",
                model_names.len(),
                truth.len()
            )));
        }
        let tau_w = weighted_kendall_tau(&truth, &predicted)?;
        let tau = kendall_tau(&truth, &predicted)?;
        let rho = spearman_rho(&truth, &predicted)?;
        Ok(Self {
            model_names,
            truth,
            predicted,
            tau_w: tau_w.value,
            tau: tau.value,
            rho: rho.value,
            degenerate: tau_w.degenerate || tau.degenerate || rho.degenerate,
        })
    }
}
