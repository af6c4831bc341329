use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EmbeddingSet, LinearProbe, ProbeConfig};
use crate::error::{ItmError, Result};
use crate::rng;

/// Parameters of the synthetic model zoo: each "model" is a Gaussian mixture
/// whose class centers sit on a sphere; a larger radius means a more
/// transferable model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_models: usize,
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub separability_range: (f64, f64),
    pub noise_sigma: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_models: 8,
            num_classes: 10,
            dim: 64,
            samples_per_class: 200,
            separability_range: (0.5, 10.0),
            noise_sigma: 3.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let (low, high) = self.separability_range;
        if self.num_models == 0 || self.dim == 0 || self.samples_per_class == 0 {
            return Err(ItmError::Argument("synthetic counts must be at least 1".into()));
        }
        if self.num_classes < 2 {
            return Err(ItmError::Argument("synthetic sets need at least 2 classes".into()));
        }
        if !(low.is_finite() && high.is_finite() && 0.0 <= low && low <= high) {
            return Err(ItmError::Argument(format!(
                "separability range [{low}, {high}] must satisfy 0 <= low <= high"
            )));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(ItmError::Argument(format!(
                "noise sigma must be positive, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// One generated model together with its oracle accuracy.
#[derive(Debug, Clone)]
pub struct SynthModel {
    pub set: EmbeddingSet,
    /// Radius of the class-center sphere.
    pub separability: f64,
    /// Held-out accuracy of a converged linear probe.
    pub oracle_accuracy: f64,
}

/// Generates `spec.num_models` synthetic embedding sets.
///
/// Radii are stratified over the separability range (model m draws uniformly
/// from the m-th of `num_models` equal sub-intervals), so models spread across
/// the whole range. Features are rounded to f32 so the in-memory set equals
/// what an ITMF file stores. The oracle probe trains on the emitted set and is
/// scored on an independent draw of the same size.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<Vec<SynthModel>> {
    spec.validate()?;
    let (low, high) = spec.separability_range;
    let width = (spec.num_models.to_string()).len().max(2);
    (0..spec.num_models)
        .map(|m| {
            let mut rng = rng::seeded_indexed(seed, rng::stream::SYNTH, m as u64);
            let u: f64 = rng.random();
            let radius = low + (high - low) * (m as f64 + u) / spec.num_models as f64;
            let centers = sphere_centers(&mut rng, spec.num_classes, spec.dim, radius);
            let name = format!("synth_{m:0width$}");
            let set = draw(&mut rng, &name, &centers, spec)?;
            let held_out = draw(&mut rng, &name, &centers, spec)?;
            let probe = LinearProbe::fit(&set, &ProbeConfig::default())?;
            let oracle_accuracy = probe.accuracy(&held_out)?;
            Ok(SynthModel {
                set,
                separability: radius,
                oracle_accuracy,
            })
        })
        .collect()
}

fn sphere_centers<R: Rng>(rng: &mut R, classes: usize, dim: usize, radius: f64) -> Array2<f64> {
    let mut centers = Array2::<f64>::zeros((classes, dim));
    for mut row in centers.rows_mut() {
        loop {
            row.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
            let norm = row.dot(&row).sqrt();
            if norm > 1e-12 {
                row.mapv_inplace(|v| v * radius / norm);
                break;
            }
        }
    }
    centers
}

fn draw<R: Rng>(rng: &mut R, name: &str, centers: &Array2<f64>, spec: &SynthSpec) -> Result<EmbeddingSet> {
    let n = spec.num_classes * spec.samples_per_class;
    let mut features = Array2::<f64>::zeros((n, spec.dim));
    let mut labels = Vec::with_capacity(n);
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        let class = i / spec.samples_per_class;
        labels.push(class as u32);
        for (v, c) in row.iter_mut().zip(centers.row(class)) {
            let noise: f64 = StandardNormal.sample(rng);
            *v = (c + spec.noise_sigma * noise) as f32 as f64;
        }
    }
    EmbeddingSet::new(name, features, labels, spec.num_classes)
}
