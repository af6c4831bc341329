#![allow(dead_code)]

use itm_core::embedstore::EmbeddingSet;
use itm_core::rng;
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn uniform(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::seeded(seed, 1000);
    Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.0..1.0))
}

/// Haar-ish orthogonal matrix: Q of the QR of a Gaussian matrix.
pub fn orthogonal(n: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::seeded(seed, 1001);
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| r.sample(StandardNormal));
    let q = g.qr().q();
    Array2::from_shape_fn((n, n), |(i, j)| q[(i, j)])
}

pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng::seeded(seed, 1002));
    p
}

pub fn permute_rows(a: &Array2<f64>, p: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn(a.dim(), |(i, j)| a[(p[i], j)])
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Gaussian clusters around `radius`-scaled one-hot directions, `per_class`
/// samples each, labels in blocks.
pub fn clustered_set(classes: usize, dim: usize, per_class: usize, radius: f64, noise: f64, seed: u64) -> EmbeddingSet {
    let mut r = rng::seeded(seed, 1003);
    let n = classes * per_class;
    let mut features = Array2::<f64>::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i / per_class;
        labels.push(c as u32);
        for j in 0..dim {
            let center = if j == c % dim { radius } else { 0.0 };
            let z: f64 = r.sample(StandardNormal);
            features[(i, j)] = center + noise * z;
        }
    }
    EmbeddingSet::new("clusters", features, labels, classes).unwrap()
}
