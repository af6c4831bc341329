//! Pseudo-cluster centers: one fixed, mutually orthonormal target vector per
//! class. The evolved batch embedding is pulled toward the center of each
//! sample's class.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ItmError, Result};
use crate::linalg;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum CenterScheme {
    #[default]
    #[serde(rename = "onehot")]
    OneHot,
    #[serde(rename = "random")]
    RandomOrtho,
    #[serde(rename = "pca")]
    PcaOrtho,
    #[serde(rename = "laplacian")]
    LaplacianOrtho,
}

impl CenterScheme {
    pub const ALL: [CenterScheme; 4] = [
        CenterScheme::OneHot,
        CenterScheme::RandomOrtho,
        CenterScheme::PcaOrtho,
        CenterScheme::LaplacianOrtho,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CenterScheme::OneHot => "onehot",
            CenterScheme::RandomOrtho => "random",
            CenterScheme::PcaOrtho => "pca",
            CenterScheme::LaplacianOrtho => "laplacian",
        }
    }
}

impl fmt::Display for CenterScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CenterScheme {
    type Err = ItmError;

    fn from_str(s: &str) -> Result<Self> {
        CenterScheme::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ItmError::Argument(format!("unknown center scheme {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoClusters {
    centers: Array2<f64>,
    scheme: CenterScheme,
    shifted: bool,
}

impl PseudoClusters {
    /// Wraps an explicit center matrix (one row per class). The rows are
    /// taken as given; callers that need orthonormality should use
    /// [`generate_centers`].
    pub fn from_matrix(centers: Array2<f64>, scheme: CenterScheme) -> Result<Self> {
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(ItmError::Validation("center matrix has non-finite entries".into()));
        }
        Ok(Self {
            centers,
            scheme,
            shifted: false,
        })
    }

    pub fn centers(&self) -> &Array2<f64> {
        &self.centers
    }

    pub fn scheme(&self) -> CenterScheme {
        self.scheme
    }

    pub fn is_shifted(&self) -> bool {
        self.shifted
    }

    pub fn num_classes(&self) -> usize {
        self.centers.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centers.ncols()
    }

    /// Rows of the center matrix gathered by label: row j is the center of
    /// `labels[j]`.
    pub fn targets_for(&self, labels: &[u32]) -> Result<Array2<f64>> {
        let c = self.num_classes();
        if let Some(&bad) = labels.iter().find(|&&y| y as usize >= c) {
            return Err(ItmError::Validation(format!(
                "label {bad} has no pseudo-cluster center (C = {c})"
            )));
        }
        let idx: Vec<usize> = labels.iter().map(|&y| y as usize).collect();
        Ok(self.centers.select(Axis(0), &idx))
    }
}

/// Size of the random sample behind the PCA and Laplacian schemes.
fn sample_size(classes: usize) -> usize {
    4 * classes
}

pub fn generate_centers(
    num_classes: usize,
    dim: usize,
    scheme: CenterScheme,
    seed: u64,
) -> Result<PseudoClusters> {
    if num_classes == 0 || dim < num_classes {
        return Err(ItmError::Argument(format!(
            "center width {dim} must be at least the class count {num_classes}"
        )));
    }
    let mut rng = rng::seeded(seed, rng::stream::CENTERS);
    let mut normal = |rows: usize| {
        Array2::from_shape_simple_fn((rows, dim), || StandardNormal.sample(&mut rng))
    };
    let centers = match scheme {
        CenterScheme::OneHot => Array2::eye(dim).slice_move(ndarray::s![..num_classes, ..]),
        CenterScheme::RandomOrtho => linalg::orthonormalize_rows(normal(num_classes).view()),
        CenterScheme::PcaOrtho => {
            let sample = normal(sample_size(num_classes));
            let mean = sample.mean_axis(Axis(0)).expect("non-empty sample");
            let centered = &sample - &mean;
            let cov = centered.t().dot(&centered) / (sample.nrows() - 1) as f64;
            let (_, vectors) = linalg::symmetric_eigen_desc(cov.view());
            let top = vectors.slice(ndarray::s![.., ..num_classes]).t().to_owned();
            linalg::orthonormalize_rows(top.view())
        }
        CenterScheme::LaplacianOrtho => {
            let sample = normal(sample_size(num_classes));
            let embedding = laplacian_eigenvectors(&sample, num_classes);
            // Each center is the sample combined with one Laplacian eigenvector
            // as weights, which carries the graph's smooth modes into R^dim.
            let raw = embedding.t().dot(&sample);
            linalg::orthonormalize_rows(raw.view())
        }
    };
    Ok(PseudoClusters {
        centers,
        scheme,
        shifted: false,
    })
}

/// First `count` nontrivial eigenvectors (columns, ascending eigenvalue) of
/// the symmetric normalized Laplacian of a Gaussian-weighted kNN graph.
fn laplacian_eigenvectors(points: &Array2<f64>, count: usize) -> Array2<f64> {
    let m = points.nrows();
    let k = 10.min(m - 1);
    let mut dist = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        for j in (i + 1)..m {
            let diff = &points.row(i) - &points.row(j);
            let d = diff.dot(&diff).sqrt();
            dist[[i, j]] = d;
            dist[[j, i]] = d;
        }
    }
    let mut pairwise: Vec<f64> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .map(|(i, j)| dist[[i, j]])
        .collect();
    pairwise.sort_by(f64::total_cmp);
    let bandwidth = median_sorted(&pairwise).max(f64::MIN_POSITIVE);

    let mut weights = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        let mut order: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dist[[i, a]].total_cmp(&dist[[i, b]]).then(a.cmp(&b)));
        for &j in &order[..k] {
            let w = (-dist[[i, j]].powi(2) / (2.0 * bandwidth * bandwidth)).exp();
            weights[[i, j]] = w;
            weights[[j, i]] = w;
        }
    }
    let degree: Array1<f64> = weights.sum_axis(Axis(1));
    let inv_sqrt = degree.mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
    let mut lap = Array2::<f64>::eye(m);
    for i in 0..m {
        for j in 0..m {
            lap[[i, j]] -= inv_sqrt[i] * weights[[i, j]] * inv_sqrt[j];
        }
    }
    // Largest eigenvalues of (2I − L) are the smallest of L.
    let flipped = Array2::<f64>::eye(m) * 2.0 - &lap;
    let (_, vectors) = linalg::symmetric_eigen_desc(flipped.view());
    vectors.slice(ndarray::s![.., 1..=count]).to_owned()
}

fn median_sorted(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Moves centers to the feature location and scales them by the mean
/// per-dimension standard deviation: c′ = μ + mean(σ)·c.
pub fn shift_centers(
    clusters: &PseudoClusters,
    mu: ArrayView1<f64>,
    sigma: ArrayView1<f64>,
) -> Result<PseudoClusters> {
    if clusters.shifted {
        return Err(ItmError::State("centers are already shifted".into()));
    }
    let dim = clusters.dim();
    if mu.len() != dim || sigma.len() != dim {
        return Err(ItmError::Argument(format!(
            "shift statistics of width {}/{} for centers of width {dim}",
            mu.len(),
            sigma.len()
        )));
    }
    if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) || sigma.iter().any(|&s| s < 0.0) {
        return Err(ItmError::Argument("shift statistics must be finite with sigma >= 0".into()));
    }
    let scale = sigma.mean().unwrap_or(0.0);
    let centers = &clusters.centers * scale + mu;
    Ok(PseudoClusters {
        centers,
        scheme: clusters.scheme,
        shifted: true,
    })
}
