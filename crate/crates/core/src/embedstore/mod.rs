//! Embedding datasets: validated feature/label containers, the ITMF file
//! format, stratified splitting, distribution statistics and the synthetic
//! benchmark generator.

mod itmf;
mod manifest;
mod probe;
mod synth;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::error::{ItmError, Result};
use crate::rng;

pub use itmf::{load_embedding_set, read_itmf, save_embedding_set, write_itmf, ITMF_MAGIC, ITMF_VERSION};
pub use manifest::{Manifest, ManifestEntry};
pub use probe::{LinearProbe, ProbeConfig};
pub use synth::{synth_generate, SynthModel, SynthSpec};

/// A feature matrix (N×d) with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    name: String,
    features: Array2<f64>,
    labels: Vec<u32>,
    num_classes: usize,
}

impl EmbeddingSet {
    /// Builds a set and checks every invariant: labels in range, every class
    /// present, N ≥ C ≥ 2, all features finite.
    pub fn new(
        name: impl Into<String>,
        features: Array2<f64>,
        labels: Vec<u32>,
        num_classes: usize,
    ) -> Result<Self> {
        let set = Self::new_unchecked_classes(name, features, labels, num_classes)?;
        let mut seen = vec![false; num_classes];
        for &y in &set.labels {
            seen[y as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(ItmError::Validation(format!(
                "class {missing} of {num_classes} has no samples"
            )));
        }
        Ok(set)
    }

    /// Same as [`EmbeddingSet::new`] but tolerates absent classes. Used for the
    /// halves of a split, where a rare class may land entirely on one side.
    fn new_unchecked_classes(
        name: impl Into<String>,
        features: Array2<f64>,
        labels: Vec<u32>,
        num_classes: usize,
    ) -> Result<Self> {
        let (n, _) = features.dim();
        if num_classes < 2 {
            return Err(ItmError::Validation(format!(
                "num_classes must be at least 2, got {num_classes}"
            )));
        }
        if labels.len() != n {
            return Err(ItmError::Validation(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if let Some((i, &y)) = labels
            .iter()
            .enumerate()
            .find(|(_, &y)| y as usize >= num_classes)
        {
            return Err(ItmError::Validation(format!(
                "label {y} at row {i} is not below num_classes {num_classes}"
            )));
        }
        if let Some(((r, c), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(ItmError::Validation(format!(
                "non-finite feature {v} at row {r}, column {c}"
            )));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            num_classes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<EmbeddingSet> {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new_unchecked_classes(self.name.clone(), features, labels, self.num_classes)
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y as usize] += 1;
        }
        counts
    }

    /// Applies z-scoring with the given statistics (sigma = 0 treated as 1).
    pub fn standardized(&self, stats: &FeatureStats) -> Result<EmbeddingSet> {
        if stats.mu.len() != self.dim() {
            return Err(ItmError::Argument(format!(
                "statistics of width {} for features of width {}",
                stats.mu.len(),
                self.dim()
            )));
        }
        let features = standardize(self.features.view(), &stats.mu, &stats.sigma);
        Self::new_unchecked_classes(self.name.clone(), features, self.labels.clone(), self.num_classes)
    }
}

/// Per-dimension location/scale of a feature set plus the class dispersion
/// used to pick the adaptive iteration count.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mu: Array1<f64>,
    pub sigma: Array1<f64>,
    pub dispersion: f64,
}

fn standardize(features: ArrayView2<f64>, mu: &Array1<f64>, sigma: &Array1<f64>) -> Array2<f64> {
    let scale = sigma.mapv(|s| if s == 0.0 { 1.0 } else { s });
    let mut out = features.to_owned();
    for mut row in out.rows_mut() {
        row -= mu;
        row /= &scale;
    }
    out
}

/// Population mean/standard deviation per dimension and the mean Euclidean
/// distance of each standardized sample to its class mean.
pub fn feature_stats(set: &EmbeddingSet) -> Result<FeatureStats> {
    let n = set.len();
    if n < 2 {
        return Err(ItmError::Argument(format!(
            "feature statistics need at least 2 samples, got {n}"
        )));
    }
    let x = set.features();
    let mu = x.mean_axis(Axis(0)).expect("n >= 2");
    let sigma = x.var_axis(Axis(0), 0.0).mapv(f64::sqrt);
    let z = standardize(x, &mu, &sigma);

    let c = set.num_classes();
    let d = set.dim();
    let mut class_sum = Array2::<f64>::zeros((c, d));
    let mut class_n = vec![0usize; c];
    for (row, &y) in z.rows().into_iter().zip(set.labels()) {
        let mut acc = class_sum.row_mut(y as usize);
        acc += &row;
        class_n[y as usize] += 1;
    }
    for (mut row, &cnt) in class_sum.rows_mut().into_iter().zip(&class_n) {
        if cnt > 0 {
            row /= cnt as f64;
        }
    }
    let total: f64 = z
        .rows()
        .into_iter()
        .zip(set.labels())
        .map(|(row, &y)| {
            row.iter()
                .zip(class_sum.row(y as usize))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(FeatureStats {
        mu,
        sigma,
        dispersion: total / n as f64,
    })
}

/// Stratified random split into (train, eval).
///
/// The train size is `round(fraction · N)`; per-class quotas follow the
/// largest-remainder rule, after which any class with at least two samples is
/// adjusted to appear on both sides. Rows keep their original relative order
/// within each half.
pub fn split(set: &EmbeddingSet, train_fraction: f64, seed: u64) -> Result<(EmbeddingSet, EmbeddingSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ItmError::Argument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = set.len();
    let total_train = (train_fraction * n as f64).round() as usize;
    if total_train == 0 || total_train >= n {
        return Err(ItmError::Argument(format!(
            "train fraction {train_fraction} on {n} samples leaves an empty split"
        )));
    }

    let counts = set.class_counts();
    let quotas = allocate_quotas(&counts, train_fraction, total_train);

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); set.num_classes()];
    for (i, &y) in set.labels().iter().enumerate() {
        by_class[y as usize].push(i);
    }
    let mut rng = rng::seeded(seed, rng::stream::SPLIT);
    let mut train_idx = Vec::with_capacity(total_train);
    let mut eval_idx = Vec::with_capacity(n - total_train);
    for (members, &quota) in by_class.iter_mut().zip(&quotas) {
        members.shuffle(&mut rng);
        train_idx.extend_from_slice(&members[..quota]);
        eval_idx.extend_from_slice(&members[quota..]);
    }
    train_idx.sort_unstable();
    eval_idx.sort_unstable();
    Ok((set.select(&train_idx)?, set.select(&eval_idx)?))
}

fn allocate_quotas(counts: &[usize], fraction: f64, total: usize) -> Vec<usize> {
    let exact: Vec<f64> = counts.iter().map(|&c| c as f64 * fraction).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut remaining = total.saturating_sub(assigned);
    for &c in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if quotas[c] < counts[c] {
            quotas[c] += 1;
            remaining -= 1;
        }
    }

    // Make every class with ≥ 2 samples appear on both sides, trading one
    // slot with the class that has the most room.
    for c in 0..counts.len() {
        if counts[c] < 2 {
            continue;
        }
        if quotas[c] == 0 {
            if let Some(donor) = (0..counts.len())
                .filter(|&o| o != c && quotas[o] >= 2)
                .max_by_key(|&o| (quotas[o], std::cmp::Reverse(o)))
            {
                quotas[donor] -= 1;
                quotas[c] += 1;
            }
        } else if quotas[c] == counts[c] {
            if let Some(taker) = (0..counts.len())
                .filter(|&o| o != c && counts[o] - quotas[o] >= 2)
                .max_by_key(|&o| (counts[o] - quotas[o], std::cmp::Reverse(o)))
            {
                quotas[taker] += 1;
                quotas[c] -= 1;
            }
        }
    }
    quotas
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn balanced(n_per_class: usize, classes: usize) -> EmbeddingSet {
        let n = n_per_class * classes;
        let features = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let labels = (0..n).map(|i| (i % classes) as u32).collect();
        EmbeddingSet::new("b", features, labels, classes).unwrap()
    }

    #[test]
    fn rejects_out_of_range_label() {
        let err = EmbeddingSet::new("x", array![[0.0], [1.0], [2.0]], vec![0, 1, 5], 3).unwrap_err();
        assert!(matches!(err, ItmError::Validation(_)));
    }

    #[test]
    fn rejects_missing_class_and_nonfinite() {
        assert!(EmbeddingSet::new("x", array![[0.0], [1.0]], vec![0, 0], 2).is_err());
        assert!(EmbeddingSet::new("x", array![[f64::NAN], [1.0]], vec![0, 1], 2).is_err());
    }

    #[test]
    fn split_cardinality_and_determinism() {
        let set = balanced(5, 2);
        let (tr, ev) = split(&set, 0.8, 7).unwrap();
        assert_eq!((tr.len(), ev.len()), (8, 2));
        let (tr2, ev2) = split(&set, 0.8, 7).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(ev, ev2);
        // disjoint and exhaustive: the feature rows are unique, so compare them
        let mut rows: Vec<f64> = tr.features().column(0).iter().chain(ev.features().column(0)).copied().collect();
        rows.sort_by(f64::total_cmp);
        rows.dedup();
        assert_eq!(rows.len(), 10);
    }

    #[test]
    fn split_is_stratified() {
        let set = balanced(20, 5);
        let (tr, ev) = split(&set, 0.8, 3).unwrap();
        assert_eq!(tr.class_counts(), vec![16; 5]);
        assert_eq!(ev.class_counts(), vec![4; 5]);
    }

    #[test]
    fn split_keeps_rare_classes_on_both_sides() {
        // 2 samples of class 1 among 20: 0.8·2 = 1.6 rounds both into train.
        let mut labels = vec![0u32; 18];
        labels.extend([1, 1]);
        let set = EmbeddingSet::new("r", Array2::zeros((20, 1)), labels, 2).unwrap();
        let (tr, ev) = split(&set, 0.8, 1).unwrap();
        assert_eq!(tr.len(), 16);
        assert!(tr.class_counts()[1] >= 1 && ev.class_counts()[1] >= 1);
    }

    #[test]
    fn split_rejects_empty_side() {
        let set = balanced(2, 2);
        assert!(matches!(split(&set, 0.01, 0), Err(ItmError::Argument(_))));
        assert!(matches!(split(&set, 1.0, 0), Err(ItmError::Argument(_))));
    }

    #[test]
    fn stats_two_point_example() {
        let set = EmbeddingSet::new("s", array![[0.0, 0.0], [2.0, 2.0], [5.0, 5.0]], vec![0, 0, 1], 2).unwrap();
        // only the first two rows share a class; check the hand example on them
        let two = EmbeddingSet::new_unchecked_classes("s", array![[0.0, 0.0], [2.0, 2.0]], vec![0, 0], 2).unwrap();
        let st = feature_stats(&two).unwrap();
        assert_eq!(st.mu.to_vec(), vec![1.0, 1.0]);
        assert_eq!(st.sigma.to_vec(), vec![1.0, 1.0]);
        assert!((st.dispersion - 2f64.sqrt()).abs() < 1e-15);
        assert!(feature_stats(&set).unwrap().dispersion > 0.0);
    }

    #[test]
    fn stats_identical_samples_have_zero_dispersion() {
        let set = EmbeddingSet::new("s", Array2::from_elem((4, 3), 2.5), vec![0, 1, 0, 1], 2).unwrap();
        let st = feature_stats(&set).unwrap();
        assert_eq!(st.dispersion, 0.0);
        assert_eq!(st.sigma.to_vec(), vec![0.0; 3]);
    }

    #[test]
    fn stats_need_two_samples() {
        let one = EmbeddingSet::new_unchecked_classes("s", array![[1.0]], vec![0], 2).unwrap();
        assert!(matches!(feature_stats(&one), Err(ItmError::Argument(_))));
    }

    #[test]
    fn standardizing_twice_keeps_dispersion() {
        let set = EmbeddingSet::new(
            "s",
            array![[1.0, 10.0], [2.0, 30.0], [4.0, 20.0], [0.5, -3.0]],
            vec![0, 1, 0, 1],
            2,
        )
        .unwrap();
        let st = feature_stats(&set).unwrap();
        let z = set.standardized(&st).unwrap();
        let st2 = feature_stats(&z).unwrap();
        assert!((st.dispersion - st2.dispersion).abs() < 1e-12);
    }
}
