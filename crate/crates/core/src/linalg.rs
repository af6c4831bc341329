//! Thin bridge to `nalgebra` for the decompositions the crate needs.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2};

pub(crate) fn to_na(a: ArrayView2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Orthonormalizes the rows of `a` (r×c, r ≤ c) by a QR factorization of
/// `aᵀ` with the diagonal of R forced positive, which makes the result unique.
pub(crate) fn orthonormalize_rows(a: ArrayView2<f64>) -> Array2<f64> {
    let (rows, cols) = a.dim();
    debug_assert!(rows <= cols);
    let qr = to_na(a.t()).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..rows {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = from_na(&q.transpose());
    // One re-orthogonalization pass (modified Gram-Schmidt) tightens the
    // orthonormality residual to a few ulps.
    for i in 0..rows {
        for k in 0..i {
            let dot: f64 = (0..cols).map(|j| out[[i, j]] * out[[k, j]]).sum();
            for j in 0..cols {
                out[[i, j]] -= dot * out[[k, j]];
            }
        }
        let norm: f64 = out.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        out.row_mut(i).mapv_inplace(|v| v / norm);
    }
    out
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order. Column i of the returned matrix is the i-th eigenvector,
/// sign-normalized so its largest-magnitude entry is positive.
pub(crate) fn symmetric_eigen_desc(a: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let eig = SymmetricEigen::new(to_na(a));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0_f64, |best, v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[[i, dst]] = sign * col[i];
        }
    }
    (values, vectors)
}

/// Largest eigenvalue of a symmetric matrix.
pub(crate) fn lambda_max_sym(a: ArrayView2<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(to_na(a))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Left singular vectors of `a` (as columns) ordered by descending singular
/// value.
pub(crate) fn left_singular_vectors(a: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let svd = to_na(a).svd(true, false);
    let u = svd.u.expect("requested U");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .total_cmp(&svd.singular_values[i])
            .then(i.cmp(&j))
    });
    let values = Array1::from_iter(order.iter().map(|&i| svd.singular_values[i]));
    let mut vectors = Array2::zeros((u.nrows(), k));
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..u.nrows() {
            vectors[[i, dst]] = u[(i, src)];
        }
    }
    (values, vectors)
}
