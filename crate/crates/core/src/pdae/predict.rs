//! Test-time prediction as a mixture of transported source domains.

use alloc::format;
use alloc::vec::Vec;

use super::PdaeModel;
use crate::error::{Error, Result};
use crate::genmodel::{Domain, PerturbationLabel};
use crate::metrics::{mmd_squared_median, SampleSet};
use crate::numeric::{Matrix, SeededRng};

const SUM_TOL: f64 = 1e-9;

/// Mixture weights over source domains: non-negative and summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionWeights(Vec<f64>);

impl PredictionWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("prediction weights are empty"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("prediction weights must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if sum == 0.0 {
            return Err(Error::invalid("prediction weights are all zero"));
        }
        if libm::fabs(sum - 1.0) > SUM_TOL {
            return Err(Error::invalid(format!("prediction weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    /// Rescales arbitrary non-negative weights to sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::invalid("prediction weights are all zero or non-finite"));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::normalized(alloc::vec![1.0; n])
    }

    pub fn one_hot(n: usize, e: usize) -> Result<Self> {
        if e >= n {
            return Err(Error::invalid(format!("domain {e} out of range for {n} domains")));
        }
        let mut w = alloc::vec![0.0; n];
        w[e] = 1.0;
        Self::new(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn transported(
    model: &PdaeModel,
    domain: &Domain,
    target: &PerturbationLabel,
    rng: &mut SeededRng,
) -> Result<Matrix> {
    let z = model.encode(&domain.x)?;
    let z = model.transport(&z, &domain.label, target)?;
    model.decode(&z, rng)
}

/// Predicted sample for `a_test`: every source domain with positive weight
/// is encoded, shifted to `a_test` and decoded; `n_out` rows (default: the
/// largest source size) are then drawn by picking a domain with probability
/// `omega_e` and a row uniformly within it.
pub fn predict(
    model: &PdaeModel,
    domains: &[Domain],
    a_test: &PerturbationLabel,
    weights: &PredictionWeights,
    n_out: Option<usize>,
    rng: &mut SeededRng,
) -> Result<SampleSet> {
    if weights.len() != domains.len() {
        return Err(Error::shape("predict (weights)", domains.len(), weights.len()));
    }
    model.check_label(a_test.as_slice())?;
    if domains.iter().any(Domain::is_empty) {
        return Err(Error::invalid("predict: empty source domain"));
    }
    let n_out = n_out.unwrap_or_else(|| domains.iter().map(Domain::len).max().unwrap_or(0));
    if n_out == 0 {
        return Err(Error::invalid("predict: output size must be positive"));
    }
    let w = weights.as_slice();
    let mut decoded = Vec::with_capacity(domains.len());
    for (d, &we) in domains.iter().zip(w) {
        decoded.push(if we > 0.0 {
            Some(transported(model, d, a_test, rng)?)
        } else {
            None
        });
    }
    let mut cdf = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for we in w {
        acc += we;
        cdf.push(acc);
    }
    let mut out = Matrix::zeros(n_out, model.observed_dim());
    for r in 0..n_out {
        let u = rng.uniform() * acc;
        let mut e = cdf.partition_point(|&c| c <= u).min(w.len() - 1);
        while w[e] == 0.0 {
            // only reachable through rounding at the upper end
            e -= 1;
        }
        let src = decoded[e].as_ref().expect("positive weight domains are decoded");
        out.row_mut(r).copy_from_slice(src.row(rng.index(src.rows())));
    }
    SampleSet::new(out)
}

/// `(M+1) x (M+1)` matrix whose `(e, h)` entry is the Gaussian-kernel MMD²
/// (median-heuristic bandwidth) between domain `e` transported to `h` and the
/// observations of domain `h`.
pub fn goodness_of_fit(model: &PdaeModel, domains: &[Domain], rng: &mut SeededRng) -> Result<Matrix> {
    let n = domains.len();
    for d in domains {
        if d.len() < 2 {
            return Err(Error::invalid("goodness_of_fit needs at least 2 points per domain"));
        }
    }
    let real: Vec<SampleSet> = domains
        .iter()
        .map(|d| SampleSet::new(d.x.clone()))
        .collect::<Result<_>>()?;
    let mut out = Matrix::zeros(n, n);
    for (e, src) in domains.iter().enumerate() {
        for (h, tgt) in domains.iter().enumerate() {
            let synth = SampleSet::new(transported(model, src, &tgt.label, rng)?)?;
            out.set(e, h, mmd_squared_median(&synth, &real[h])?);
        }
    }
    Ok(out)
}
