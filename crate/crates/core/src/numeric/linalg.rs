//! Small dense factorizations used by the simulator, baselines and the
//! verification scenarios. Sizes here are tiny (a handful of rows), so the
//! routines favour clarity over blocking.

use alloc::vec::Vec;

use super::{Matrix, SeededRng};
use crate::error::{Error, Result};

fn require_square(m: &Matrix, op: &'static str) -> Result<usize> {
    if m.rows() != m.cols() {
        return Err(Error::shape(op, "square matrix", alloc::format!("{}x{}", m.rows(), m.cols())));
    }
    Ok(m.rows())
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inverse(m: &Matrix) -> Result<Matrix> {
    let n = require_square(m, "inverse")?;
    let mut a = m.clone();
    let mut inv = Matrix::identity(n);
    let scale = m.as_slice().iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a.get(i, col).abs().total_cmp(&a.get(j, col).abs()))
            .unwrap();
        if a.get(pivot, col).abs() <= 1e-13 * scale {
            return Err(Error::Singular("inverse"));
        }
        if pivot != col {
            for c in 0..n {
                let (x, y) = (a.get(col, c), a.get(pivot, c));
                a.set(col, c, y);
                a.set(pivot, c, x);
                let (x, y) = (inv.get(col, c), inv.get(pivot, c));
                inv.set(col, c, y);
                inv.set(pivot, c, x);
            }
        }
        let p = a.get(col, col);
        for c in 0..n {
            a.set(col, c, a.get(col, c) / p);
            inv.set(col, c, inv.get(col, c) / p);
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a.get(r, col);
            if f == 0.0 {
                continue;
            }
            for c in 0..n {
                a.set(r, c, a.get(r, c) - f * a.get(col, c));
                inv.set(r, c, inv.get(r, c) - f * inv.get(col, c));
            }
        }
    }
    Ok(inv)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues (descending) and a matrix whose columns are the
/// matching orthonormal eigenvectors.
pub fn symmetric_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = require_square(m, "symmetric_eigen")?;
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j) * a.get(i, j))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a.get(k, p), a.get(k, q));
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (a.get(p, k), a.get(q, k));
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, new, v.get(k, old));
        }
    }
    Ok((values, vectors))
}

fn spectral_map(m: &Matrix, op: &'static str, f: impl Fn(f64) -> f64) -> Result<Matrix> {
    let n = require_square(m, op)?;
    if m.max_abs_diff(&m.transpose()) > 1e-10 * (1.0 + m.as_slice().iter().fold(0.0f64, |s, v| s.max(v.abs()))) {
        return Err(Error::invalid("matrix is not symmetric"));
    }
    let (vals, vecs) = symmetric_eigen(m)?;
    if vals.iter().any(|&l| l <= 0.0) {
        return Err(Error::Singular(op));
    }
    let mut out = Matrix::zeros(n, n);
    for (k, &l) in vals.iter().enumerate() {
        let fl = f(l);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, out.get(i, j) + fl * vecs.get(i, k) * vecs.get(j, k));
            }
        }
    }
    Ok(out)
}

/// Symmetric square root of a positive definite matrix.
pub fn spd_sqrt(m: &Matrix) -> Result<Matrix> {
    spectral_map(m, "spd_sqrt", libm::sqrt)
}

/// Symmetric inverse square root of a positive definite matrix.
pub fn spd_inv_sqrt(m: &Matrix) -> Result<Matrix> {
    spectral_map(m, "spd_inv_sqrt", |l| 1.0 / libm::sqrt(l))
}

/// Moore-Penrose pseudo-inverse, computed from the eigen-decomposition of
/// `A^T A`. Singular values below `1e-10 * max` are treated as zero.
pub fn pinv(a: &Matrix) -> Result<Matrix> {
    let at = a.transpose();
    let ata = at.matmul(a)?;
    let (vals, vecs) = symmetric_eigen(&ata)?;
    let n = ata.rows();
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    let mut inv = Matrix::zeros(n, n);
    for (k, &l) in vals.iter().enumerate() {
        if l <= 1e-20 * top.max(1e-300) || l <= 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                inv.set(i, j, inv.get(i, j) + vecs.get(i, k) * vecs.get(j, k) / l);
            }
        }
    }
    inv.matmul(&at)
}

/// Minimum-norm least-squares solution of `A X = B`.
pub fn lstsq(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::shape("lstsq", a.rows(), b.rows()));
    }
    pinv(a)?.matmul(b)
}

/// Numerical rank from the singular values (relative tolerance `1e-10`).
pub fn rank(a: &Matrix) -> usize {
    let small = if a.rows() <= a.cols() {
        a.matmul(&a.transpose())
    } else {
        a.transpose().matmul(a)
    }
    .expect("shapes agree by construction");
    let (vals, _) = symmetric_eigen(&small).expect("square by construction");
    let top = vals.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    vals.iter().filter(|&&l| l > 1e-20 * top).count()
}

/// Spectral radius estimate by power iteration.
///
/// The estimate is the geometric mean growth rate `||B^k v||^(1/k)` over the
/// second half of `max_iter` iterations, which also converges when the
/// dominant eigenvalues form a complex pair. Nilpotent matrices return 0.
pub fn spectral_radius(b: &Matrix, max_iter: usize, tol: f64) -> Result<f64> {
    let n = require_square(b, "spectral_radius")?;
    if n == 0 {
        return Ok(0.0);
    }
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 1.0 / (i as f64 + 2.0)).collect();
    let norm = |x: &[f64]| libm::sqrt(x.iter().map(|a| a * a).sum());
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let half = max_iter / 2;
    let mut log_sum = 0.0;
    let mut counted = 0usize;
    let mut prev = f64::NAN;
    for it in 0..max_iter {
        let w = b.matvec(&v)?;
        let g = norm(&w);
        if g == 0.0 {
            return Ok(0.0);
        }
        v = w.into_iter().map(|x| x / g).collect();
        if it >= half {
            log_sum += libm::log(g);
            counted += 1;
        } else if (g - prev).abs() < tol * g.max(1.0) {
            // Converged to a real dominant eigenvalue.
            return Ok(g);
        }
        prev = g;
    }
    Ok(libm::exp(log_sum / counted.max(1) as f64))
}

/// Random orthogonal matrix (Gram-Schmidt on a Gaussian matrix).
pub fn random_orthogonal(n: usize, rng: &mut SeededRng) -> Matrix {
    loop {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut ok = true;
        for _ in 0..n {
            let mut c: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            for prev in &cols {
                let d: f64 = c.iter().zip(prev).map(|(a, b)| a * b).sum();
                c.iter_mut().zip(prev).for_each(|(a, b)| *a -= d * b);
            }
            let nrm = libm::sqrt(c.iter().map(|a| a * a).sum::<f64>());
            if nrm < 1e-8 {
                ok = false;
                break;
            }
            c.iter_mut().for_each(|a| *a /= nrm);
            cols.push(c);
        }
        if ok {
            let mut o = Matrix::zeros(n, n);
            for (j, c) in cols.iter().enumerate() {
                for i in 0..n {
                    o.set(i, j, c[i]);
                }
            }
            return o;
        }
    }
}

/// Random symmetric positive definite matrix `Q diag(l) Q^T` with eigenvalues
/// drawn uniformly from `[lo, hi]`.
pub fn random_spd(n: usize, lo: f64, hi: f64, rng: &mut SeededRng) -> Matrix {
    let q = random_orthogonal(n, rng);
    let l: Vec<f64> = (0..n).map(|_| rng.uniform_in(lo, hi)).collect();
    let mut out = Matrix::zeros(n, n);
    for (k, lk) in l.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, out.get(i, j) + lk * q.get(i, k) * q.get(j, k));
            }
        }
    }
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (out.get(i, j) + out.get(j, i));
            out.set(i, j, s);
            out.set(j, i, s);
        }
    }
    out
}

pub fn outer(a: &[f64], b: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(a.len(), b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            m.set(i, j, x * y);
        }
    }
    m
}
