//! Scoring rules and two-sample distances: energy score, CRPS, energy
//! distance, MMD with Gaussian or distance kernels, and mean difference.
//!
//! `energy_score` uses the unbiased U-statistic for its within-sample term;
//! `energy_distance` and `mmd_squared` are V-statistics (diagonals included),
//! which makes `ED = 2 MMD^2` hold exactly under the distance kernel.

use alloc::vec::Vec;
use core::ops::Deref;

use crate::error::{Error, Result};
use crate::numeric::{pow_norm, Matrix};

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Non-empty sample of finite points, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet(Matrix);

impl SampleSet {
    pub fn new(points: Matrix) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::invalid("empty sample set"));
        }
        if !points.is_finite() {
            return Err(Error::NonFinite("SampleSet"));
        }
        Ok(Self(points))
    }

    pub fn points(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }
}

impl Deref for SampleSet {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    /// `exp(-||x - y||^2 / (2 bandwidth^2))`
    Gaussian { bandwidth: f64 },
    /// `(||x||^beta + ||y||^beta - ||x - y||^beta) / 2`
    Distance { beta: f64 },
}

impl KernelSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { bandwidth } if !(bandwidth > 0.0) => {
                Err(Error::invalid("Gaussian bandwidth must be positive"))
            }
            KernelSpec::Distance { beta } if !(beta > 0.0 && beta <= 2.0) => {
                Err(Error::invalid("distance-kernel beta must lie in (0, 2]"))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Gaussian { bandwidth } => {
                libm::exp(-sq_dist(x, y) / (2.0 * bandwidth * bandwidth))
            }
            KernelSpec::Distance { beta } => distance_kernel(x, y, beta),
        }
    }
}

fn check_beta_open(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 2.0 {
        Ok(())
    } else {
        Err(Error::invalid("beta must lie in (0, 2)"))
    }
}

fn check_beta_closed(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 2.0 {
        Ok(())
    } else {
        Err(Error::invalid("beta must lie in (0, 2]"))
    }
}

fn check_dims(x: &Matrix, y: &Matrix, op: &'static str) -> Result<()> {
    if x.cols() != y.cols() {
        return Err(Error::shape(op, x.cols(), y.cols()));
    }
    Ok(())
}

/// Sum of `||x_i - x_j||^beta` over unordered pairs `i < j`.
fn within_pair_sum(x: &Matrix, beta: f64) -> f64 {
    let n = x.rows();
    let mut total = 0.0;
    for i in 0..n {
        let xi = x.row(i);
        let mut row = 0.0;
        for j in i + 1..n {
            row += pow_norm(sq_dist(xi, x.row(j)), beta);
        }
        total += row;
    }
    total
}

fn cross_sum(x: &Matrix, y: &Matrix, beta: f64) -> f64 {
    let mut total = 0.0;
    for xi in x.row_iter() {
        let mut row = 0.0;
        for yj in y.row_iter() {
            row += pow_norm(sq_dist(xi, yj), beta);
        }
        total += row;
    }
    total
}

/// Energy score `ES_beta(P, x)` of the sample `P` at the observation `x`.
///
/// Within-sample term is the U-statistic `1/(2m(m-1)) sum_{i != j}`, taken as 0
/// when `m = 1`.
pub fn energy_score(p: &SampleSet, x: &[f64], beta: f64) -> Result<f64> {
    check_beta_open(beta)?;
    if x.len() != p.dim() {
        return Err(Error::shape("energy_score", p.dim(), x.len()));
    }
    let m = p.rows() as f64;
    let within = if p.rows() > 1 {
        within_pair_sum(p, beta) / (m * (m - 1.0))
    } else {
        0.0
    };
    let cross: f64 = p.row_iter().map(|xi| pow_norm(sq_dist(xi, x), beta)).sum::<f64>() / m;
    Ok(within - cross)
}

/// Mean energy score of `p` over every row of `obs`.
pub fn mean_energy_score(p: &SampleSet, obs: &Matrix, beta: f64) -> Result<f64> {
    check_beta_open(beta)?;
    check_dims(p, obs, "mean_energy_score")?;
    let m = p.rows() as f64;
    let within = if p.rows() > 1 {
        within_pair_sum(p, beta) / (m * (m - 1.0))
    } else {
        0.0
    };
    let cross = cross_sum(p, obs, beta) / (m * obs.rows() as f64);
    Ok(within - cross)
}

/// V-statistic energy distance
/// `2 E||X - Y||^beta - E||X - X'||^beta - E||Y - Y'||^beta`.
pub fn energy_distance(x: &SampleSet, y: &SampleSet, beta: f64) -> Result<f64> {
    check_beta_closed(beta)?;
    check_dims(x, y, "energy_distance")?;
    let (n, m) = (x.rows() as f64, y.rows() as f64);
    let xy = cross_sum(x, y, beta) / (n * m);
    let xx = 2.0 * within_pair_sum(x, beta) / (n * n);
    let yy = 2.0 * within_pair_sum(y, beta) / (m * m);
    Ok(2.0 * xy - xx - yy)
}

/// Distance-induced kernel `(||x||^beta + ||y||^beta - ||x - y||^beta) / 2`.
pub fn distance_kernel(x: &[f64], y: &[f64], beta: f64) -> f64 {
    0.5 * (pow_norm(sq_norm(x), beta) + pow_norm(sq_norm(y), beta) - pow_norm(sq_dist(x, y), beta))
}

fn kernel_mean(x: &Matrix, y: &Matrix, k: &KernelSpec) -> f64 {
    let mut total = 0.0;
    for xi in x.row_iter() {
        for yj in y.row_iter() {
            total += k.eval(xi, yj);
        }
    }
    total / (x.rows() as f64 * y.rows() as f64)
}

fn kernel_self_mean(x: &Matrix, k: &KernelSpec) -> f64 {
    let n = x.rows();
    let mut off = 0.0;
    let mut diag = 0.0;
    for i in 0..n {
        let xi = x.row(i);
        diag += k.eval(xi, xi);
        for j in i + 1..n {
            off += k.eval(xi, x.row(j));
        }
    }
    (diag + 2.0 * off) / (n as f64 * n as f64)
}

/// V-statistic `MMD^2 = mean k(X,X) - 2 mean k(X,Y) + mean k(Y,Y)`.
pub fn mmd_squared(x: &SampleSet, y: &SampleSet, kernel: KernelSpec) -> Result<f64> {
    kernel.validate()?;
    check_dims(x, y, "mmd_squared")?;
    Ok(kernel_self_mean(x, &kernel) - 2.0 * kernel_mean(x, y, &kernel) + kernel_self_mean(y, &kernel))
}

/// Median of the pairwise Euclidean distances over the pooled sample.
///
/// Falls back to the smallest positive distance when the median is zero, and
/// to 1 when all points coincide.
pub fn median_heuristic(x: &Matrix, y: &Matrix) -> Result<f64> {
    check_dims(x, y, "median_heuristic")?;
    let pooled: Vec<&[f64]> = x.row_iter().chain(y.row_iter()).collect();
    if pooled.len() < 2 {
        return Err(Error::invalid("median heuristic needs at least two points"));
    }
    let mut d = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(sq_dist(pooled[i], pooled[j]));
        }
    }
    let len = d.len();
    let mid = len / 2;
    let (_, upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let median_sq = if len % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (a, b) = (libm::sqrt(lower), libm::sqrt(upper));
        return Ok(finish_median(0.5 * (a + b), &d));
    };
    Ok(finish_median(libm::sqrt(median_sq), &d))
}

fn finish_median(median: f64, sq: &[f64]) -> f64 {
    if median > 0.0 {
        return median;
    }
    sq.iter()
        .copied()
        .filter(|&v| v > 0.0)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
        .map_or(1.0, libm::sqrt)
}

/// MMD^2 with a Gaussian kernel whose bandwidth comes from the median heuristic.
pub fn mmd_squared_median(x: &SampleSet, y: &SampleSet) -> Result<f64> {
    let bandwidth = median_heuristic(x, y)?;
    mmd_squared(x, y, KernelSpec::Gaussian { bandwidth })
}

/// Continuous ranked probability score of a 1-D sample.
pub fn crps(p: &SampleSet, x: f64) -> Result<f64> {
    if p.dim() != 1 {
        return Err(Error::shape("crps", 1, p.dim()));
    }
    energy_score(p, &[x], 1.0)
}

/// `||mean(X) - mean(Y)||_2`.
pub fn mean_difference(x: &Matrix, y: &Matrix) -> Result<f64> {
    check_dims(x, y, "mean_difference")?;
    let (mx, my) = (x.column_means(), y.column_means());
    Ok(libm::sqrt(sq_dist(&mx, &my)))
}
