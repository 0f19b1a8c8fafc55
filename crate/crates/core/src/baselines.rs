//! Comparison methods: pooling all training data, pooling the single
//! perturbations involved in a combination, and linear regression of domain
//! means on labels.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::genmodel::{Domain, PerturbationLabel};
use crate::metrics::SampleSet;
use crate::numeric::{linalg, Matrix};

/// Affine map `a -> intercept + coef a` from labels to observation means.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanModel {
    pub intercept: Vec<f64>,
    /// `d_X x K`.
    pub coef: Matrix,
}

fn nonempty(domains: &[&Domain]) -> Result<SampleSet> {
    let blocks: Vec<&Matrix> = domains.iter().filter(|d| !d.is_empty()).map(|d| &d.x).collect();
    if blocks.is_empty() {
        return Err(Error::invalid("no observations to pool"));
    }
    SampleSet::new(Matrix::vstack(&blocks)?)
}

/// Every training observation, in domain order.
pub fn pool_all(domains: &[Domain]) -> Result<SampleSet> {
    nonempty(&domains.iter().collect::<Vec<_>>())
}

/// Pools the single-perturbation domains whose active coordinate is nonzero
/// in `a_test`. Falls back to [`pool_all`] when none qualify.
pub fn pseudobulk(domains: &[Domain], a_test: &PerturbationLabel) -> Result<SampleSet> {
    let involved: Vec<&Domain> = domains
        .iter()
        .filter(|d| {
            let a = d.label.as_slice();
            if a.len() != a_test.len() {
                return false;
            }
            let mut active = a.iter().enumerate().filter(|(_, v)| **v != 0.0);
            match (active.next(), active.next()) {
                (Some((k, _)), None) => a_test.as_slice()[k] != 0.0,
                _ => false,
            }
        })
        .collect();
    if involved.is_empty() {
        return pool_all(domains);
    }
    nonempty(&involved)
}

/// Least-squares fit of domain means on labels with an intercept. A
/// rank-deficient design gets the minimum-norm solution.
pub fn fit_mean_model(domains: &[Domain]) -> Result<MeanModel> {
    if domains.len() < 2 {
        return Err(Error::invalid("fitting a mean model needs at least 2 domains"));
    }
    let k = domains[0].label.len();
    let d_x = domains[0].x.cols();
    let mut design = Matrix::zeros(domains.len(), k + 1);
    let mut targets = Matrix::zeros(domains.len(), d_x);
    for (e, d) in domains.iter().enumerate() {
        if d.label.len() != k {
            return Err(Error::shape("fit_mean_model (label)", k, d.label.len()));
        }
        if d.x.cols() != d_x {
            return Err(Error::shape("fit_mean_model (observations)", d_x, d.x.cols()));
        }
        if d.is_empty() {
            return Err(Error::invalid(format!("domain {e} is empty")));
        }
        let row = design.row_mut(e);
        row[0] = 1.0;
        row[1..].copy_from_slice(d.label.as_slice());
        targets.row_mut(e).copy_from_slice(&d.x.column_means());
    }
    // beta: (K+1) x d_X, first row the intercept
    let beta = linalg::lstsq(&design, &targets)?;
    let intercept = beta.row(0).to_vec();
    let mut coef = Matrix::zeros(d_x, k);
    for j in 0..k {
        for i in 0..d_x {
            coef.set(i, j, beta.get(j + 1, i));
        }
    }
    Ok(MeanModel { intercept, coef })
}

/// `intercept + coef a_test`.
pub fn predict_mean(model: &MeanModel, a_test: &PerturbationLabel) -> Result<Vec<f64>> {
    let shift = model.coef.matvec(a_test.as_slice())?;
    Ok(model.intercept.iter().zip(&shift).map(|(c, s)| c + s).collect())
}

/// Translates the reference sample so that its mean equals `predicted_mean`.
pub fn mean_shift_distribution(reference: &SampleSet, predicted_mean: &[f64]) -> Result<SampleSet> {
    if predicted_mean.len() != reference.dim() {
        return Err(Error::shape(
            "mean_shift_distribution",
            reference.dim(),
            predicted_mean.len(),
        ));
    }
    let mu = reference.column_means();
    let delta: Vec<f64> = predicted_mean.iter().zip(&mu).map(|(p, m)| p - m).collect();
    let mut out = reference.points().clone();
    out.add_row_vector(&delta)?;
    SampleSet::new(out)
}
