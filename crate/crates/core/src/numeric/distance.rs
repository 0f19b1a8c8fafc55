use super::Matrix;
use crate::error::{Error, Result};

/// `||d||^beta`.
#[inline]
pub fn pow_norm(diff_sq: f64, beta: f64) -> f64 {
    if beta == 2.0 {
        diff_sq
    } else if beta == 1.0 {
        libm::sqrt(diff_sq)
    } else if diff_sq == 0.0 {
        0.0
    } else {
        libm::pow(diff_sq, 0.5 * beta)
    }
}

/// Scale `s` such that `d/dd ||d||^beta = s * d`, i.e. `beta ||d||^(beta-2)`.
///
/// Returns 0 at `d = 0` (a valid subgradient for `beta <= 2`).
#[inline]
pub fn pow_norm_grad_scale(diff_sq: f64, beta: f64) -> f64 {
    if beta == 2.0 {
        2.0
    } else if diff_sq == 0.0 {
        0.0
    } else if beta == 1.0 {
        1.0 / libm::sqrt(diff_sq)
    } else {
        beta * libm::pow(diff_sq, 0.5 * beta - 1.0)
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Matrix of `||x_i - y_j||^beta`.
pub fn pairwise_distances(x: &Matrix, y: &Matrix, beta: f64) -> Result<Matrix> {
    if x.cols() != y.cols() {
        return Err(Error::shape(
            "pairwise_distances",
            x.cols(),
            y.cols(),
        ));
    }
    if !(beta > 0.0 && beta <= 2.0) {
        return Err(Error::invalid("beta must lie in (0, 2]"));
    }
    let mut out = Matrix::zeros(x.rows(), y.rows());
    for (i, xi) in x.row_iter().enumerate() {
        let row = out.row_mut(i);
        for (j, yj) in y.row_iter().enumerate() {
            row[j] = pow_norm(sq_dist(xi, yj), beta);
        }
    }
    Ok(out)
}
