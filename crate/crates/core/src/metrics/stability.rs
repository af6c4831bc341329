use rand::Rng;
use rayon::prelude::*;

use super::weighted_kendall_tau;
use crate::error::{ItmError, Result};
use crate::rng;

/// Largest number of subsets enumerated in exhaustive mode.
pub const EXHAUSTIVE_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetMode {
    /// Every k-subset of the pool, in lexicographic order.
    Exhaustive,
    /// `count` uniformly random k-subsets (possibly repeating).
    Sampled { count: usize, seed: u64 },
}

/// τ_w of every method on every evaluated subset. `subsets[s]` lists pool
/// indices in increasing order; `methods[m].1[s]` is method m's τ_w on it.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityResult {
    pub subsets: Vec<Vec<usize>>,
    pub methods: Vec<(String, Vec<f64>)>,
}

/// C(n, k), or `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

fn lexicographic_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // rightmost position that can still advance
        let Some(pos) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return out;
        };
        idx[pos] += 1;
        for i in (pos + 1)..k {
            idx[i] = idx[i - 1] + 1;
        }
    }
}

fn sampled_subsets(n: usize, k: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = rng::seeded(seed, rng::stream::SUBSETS);
    (0..count)
        .map(|_| {
            let mut pool: Vec<usize> = (0..n).collect();
            for i in 0..k {
                let j = rng.random_range(i..n);
                pool.swap(i, j);
            }
            let mut pick = pool[..k].to_vec();
            pick.sort_unstable();
            pick
        })
        .collect()
}

/// Evaluates τ_w against `truth` on k-model subsets of the pool for every
/// method. All methods see the same subsets.
pub fn stability_subsample(
    truth: &[f64],
    predicted: &[(String, Vec<f64>)],
    k: usize,
    mode: SubsetMode,
) -> Result<StabilityResult> {
    let n = truth.len();
    if k > n {
        return Err(ItmError::Argument(format!("subset size {k} exceeds pool size {n}")));
    }
    if k < 2 {
        return Err(ItmError::Argument(format!("subset size must be at least 2, got {k}")));
    }
    for (name, values) in predicted {
        if values.len() != n {
            return Err(ItmError::Argument(format!(
                "method {name:?} has {} scores for a pool of {n}",
                values.len()
            )));
        }
    }
    let subsets = match mode {
        SubsetMode::Exhaustive => {
            let total = binomial(n, k).unwrap_or(u64::MAX);
            if total > EXHAUSTIVE_LIMIT {
                return Err(ItmError::Argument(format!(
                    "C({n}, {k}) = {total} subsets exceeds the exhaustive limit of {EXHAUSTIVE_LIMIT}"
                )));
            }
            lexicographic_subsets(n, k)
        }
        SubsetMode::Sampled { count, seed } => sampled_subsets(n, k, count, seed),
    };
    let methods = predicted
        .iter()
        .map(|(name, values)| {
            let taus = subsets
                .par_iter()
                .map(|subset| {
                    let t: Vec<f64> = subset.iter().map(|&i| truth[i]).collect();
                    let p: Vec<f64> = subset.iter().map(|&i| values[i]).collect();
                    weighted_kendall_tau(&t, &p).map(|c| c.value)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((name.clone(), taus))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityResult { subsets, methods })
}
