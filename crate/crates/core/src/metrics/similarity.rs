use ndarray::{Array2, ArrayView2};

use crate::error::{ItmError, Result};
use crate::linalg;
use crate::trainer::ItmModelState;

/// Mean absolute cosine between index-matched top-k left singular vectors
/// (descending singular value) of two latent maps.
pub fn left_singular_similarity(a: ArrayView2<f64>, b: ArrayView2<f64>, top_k: usize) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(ItmError::Argument(format!(
            "latent maps of shape {:?} and {:?} cannot be compared",
            a.dim(),
            b.dim()
        )));
    }
    let limit = a.nrows().min(a.ncols());
    if top_k == 0 || top_k > limit {
        return Err(ItmError::Argument(format!("top_k must lie in 1..={limit}, got {top_k}")));
    }
    let (_, ua) = linalg::left_singular_vectors(a);
    let (_, ub) = linalg::left_singular_vectors(b);
    let total: f64 = (0..top_k).map(|i| ua.column(i).dot(&ub.column(i)).abs()).sum();
    Ok(total / top_k as f64)
}

/// Pairwise [`left_singular_similarity`] matrix; symmetric with unit diagonal.
pub fn wz_similarity_matrices(maps: &[ArrayView2<f64>], top_k: usize) -> Result<Array2<f64>> {
    let m = maps.len();
    let mut out = Array2::<f64>::eye(m);
    for i in 0..m {
        for j in (i + 1)..m {
            let s = left_singular_similarity(maps[i], maps[j], top_k)?;
            out[[i, j]] = s;
            out[[j, i]] = s;
        }
    }
    if let Some(first) = maps.first() {
        // shape errors on a single map still have to surface
        if maps.iter().any(|w| w.dim() != first.dim()) {
            return Err(ItmError::Argument("latent maps differ in shape".into()));
        }
    }
    Ok(out)
}

/// Similarity of the trained latent maps W_z of several models.
pub fn wz_similarity(states: &[ItmModelState], top_k: usize) -> Result<Array2<f64>> {
    let views: Vec<ArrayView2<f64>> = states.iter().map(|s| s.w_z.view()).collect();
    wz_similarity_matrices(&views, top_k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn self_similarity_is_one() {
        let a = array![[1.0, 0.2], [0.3, -2.0], [0.5, 0.5]];
        assert!((left_singular_similarity(a.view(), a.view(), 2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shape_and_topk_errors() {
        let a = array![[1.0, 0.0], [0.0, 1.0]];
        let b = array![[1.0, 0.0, 0.0]];
        assert!(left_singular_similarity(a.view(), b.view(), 1).is_err());
        assert!(left_singular_similarity(a.view(), a.view(), 3).is_err());
        assert!(wz_similarity_matrices(&[a.view(), b.view()], 1).is_err());
    }
}
