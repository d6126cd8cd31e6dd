use nalgebra::DMatrix;
use ndarray::Array2;

use crate::error::{EsmdaError, Result};

/// Pseudo-inverse of a symmetric matrix by truncated spectral decomposition.
///
/// Keeps the smallest leading set of singular values (eigenvalue magnitudes,
/// sorted descending) whose cumulative sum reaches `energy` times the total;
/// singular values below `1e-14 * sigma_max` are treated as numerical zeros.
/// An all-zero matrix maps to the zero pseudo-inverse.
///
/// Returns the pseudo-inverse and the retained rank.
pub fn tsvd_pinv(c: &Array2<f64>, energy: f64) -> Result<(Array2<f64>, usize)> {
    let n = c.nrows();
    if c.ncols() != n {
        return Err(EsmdaError::Shape(format!("matrix must be square, got {}x{}", n, c.ncols())));
    }
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(EsmdaError::Config(format!("energy must be in (0, 1], got {energy}")));
    }
    let mut sym = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            // Symmetrize against roundoff in the Gram assembly.
            sym[(i, j)] = 0.5 * (c[[i, j]] + c[[j, i]]);
        }
    }
    let eig = sym.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .partial_cmp(&eig.eigenvalues[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let total: f64 = eig.eigenvalues.iter().map(|l| l.abs()).sum();
    if total == 0.0 {
        return Ok((Array2::zeros((n, n)), 0));
    }
    let sigma_max = eig.eigenvalues[order[0]].abs();
    let mut cum = 0.0;
    let mut rank = 0;
    for &idx in &order {
        let sigma = eig.eigenvalues[idx].abs();
        if sigma <= 1e-14 * sigma_max {
            break;
        }
        cum += sigma;
        rank += 1;
        if cum >= energy * total {
            break;
        }
    }

    let mut pinv = Array2::<f64>::zeros((n, n));
    for &idx in order.iter().take(rank) {
        let lambda = eig.eigenvalues[idx];
        let q = eig.eigenvectors.column(idx);
        let w = 1.0 / lambda;
        for i in 0..n {
            let qi = q[i] * w;
            for j in 0..n {
                pinv[[i, j]] += qi * q[j];
            }
        }
    }
    Ok((pinv, rank))
}
