//! Minibatch training loop with one Adam optimiser per parameter group.

use alloc::format;
use alloc::vec::Vec;

use super::loss::{perturbation_loss, prior_loss, reconstruction_loss, sparsity_penalty};
use super::{DomainBatch, PdaeModel};
use crate::error::{Error, Result};
use crate::genmodel::Domain;
use crate::numeric::{AdamState, Matrix, SeededRng};

/// Loss weights, learning rates and loop sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda_rec: f64,
    pub lambda_prior: f64,
    pub lambda_sparsity: f64,
    pub lr_encoder: f64,
    pub lr_decoder: f64,
    pub lr_w: f64,
    /// Total batch size, split evenly across domains.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Pure perturbation-loss training with learning rate 0.005.
    fn default() -> Self {
        Self {
            lambda_rec: 0.0,
            lambda_prior: 0.0,
            lambda_sparsity: 0.0,
            lr_encoder: 0.005,
            lr_decoder: 0.005,
            lr_w: 0.005,
            batch_size: 1024,
            epochs: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_rec", self.lambda_rec),
            ("lambda_prior", self.lambda_prior),
            ("lambda_sparsity", self.lambda_sparsity),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("lr_encoder", self.lr_encoder),
            ("lr_decoder", self.lr_decoder),
            ("lr_w", self.lr_w),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.batch_size < 4 {
            return Err(Error::invalid(format!(
                "batch_size must be at least 4, got {}",
                self.batch_size
            )));
        }
        Ok(())
    }

    /// Points drawn from each domain per step.
    pub fn per_domain(&self, num_domains: usize) -> Result<usize> {
        let per = self.batch_size / num_domains.max(1);
        if per < 2 {
            return Err(Error::invalid(format!(
                "batch_size {} leaves fewer than 2 points for each of {num_domains} domains",
                self.batch_size
            )));
        }
        Ok(per)
    }
}

/// Adam state for encoder, decoder and `W_hat`.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerStates {
    pub encoder: AdamState,
    pub decoder: AdamState,
    pub w_hat: AdamState,
}

impl OptimizerStates {
    pub fn new(model: &PdaeModel) -> Self {
        Self {
            encoder: AdamState::new(model.encoder.num_params()),
            decoder: AdamState::new(model.decoder.num_params()),
            w_hat: AdamState::new(model.w_hat.as_slice().len()),
        }
    }
}

/// Loss components of one step. Disabled terms are `None`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub perturbation: f64,
    pub reconstruction: Option<f64>,
    pub prior: Option<f64>,
    pub sparsity: Option<f64>,
}

/// Per-epoch averages of the step losses.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub perturbation: f64,
    pub reconstruction: Option<f64>,
    pub prior: Option<f64>,
    pub sparsity: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn perturbation(&self) -> Vec<f64> {
        self.epochs.iter().map(|r| r.perturbation).collect()
    }
}

fn non_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(what))
    }
}

fn axpy(out: &mut [f64], alpha: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// One optimisation step on a minibatch spanning at least two domains.
///
/// The decoder follows `pert + lambda_rec * rec`, the encoder
/// `pert + lambda_prior * prior` and `W_hat`
/// `pert + lambda_prior * prior + lambda_sparsity * sparsity`. Nothing is
/// updated if any loss or gradient is non-finite.
pub fn train_step(
    model: &mut PdaeModel,
    batches: &[DomainBatch],
    config: &TrainConfig,
    states: &mut OptimizerStates,
    rng: &mut SeededRng,
) -> Result<StepLosses> {
    if batches.len() < 2 {
        return Err(Error::invalid(format!(
            "a training step needs at least 2 domains, got {}",
            batches.len()
        )));
    }
    let pert = perturbation_loss(model, batches, rng)?;
    let mut losses = StepLosses {
        perturbation: non_finite("perturbation loss", pert.value)?,
        reconstruction: None,
        prior: None,
        sparsity: None,
    };
    let mut grads = pert.grads;

    if config.lambda_rec > 0.0 {
        let blocks: Vec<&Matrix> = batches.iter().map(|b| &b.x).collect();
        let rec = reconstruction_loss(model, &Matrix::vstack(&blocks)?, rng)?;
        losses.reconstruction = Some(non_finite("reconstruction loss", rec.value)?);
        axpy(&mut grads.decoder, config.lambda_rec, &rec.grads.decoder);
    }
    if config.lambda_prior > 0.0 {
        let prior = prior_loss(model, batches, rng)?;
        losses.prior = Some(non_finite("prior loss", prior.value)?);
        axpy(&mut grads.encoder, config.lambda_prior, &prior.grads.encoder);
        axpy(&mut grads.w_hat, config.lambda_prior, &prior.grads.w_hat);
    }
    if config.lambda_sparsity > 0.0 {
        let (value, g) = sparsity_penalty(&model.w_hat);
        losses.sparsity = Some(non_finite("sparsity penalty", value)?);
        axpy(&mut grads.w_hat, config.lambda_sparsity, &g);
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }

    states
        .decoder
        .step(model.decoder.params_mut(), &grads.decoder, config.lr_decoder)?;
    states
        .encoder
        .step(model.encoder.params_mut(), &grads.encoder, config.lr_encoder)?;
    states
        .w_hat
        .step(model.w_hat.as_mut_slice(), &grads.w_hat, config.lr_w)?;
    Ok(losses)
}

/// Index sets for one epoch: `out[step][domain]` lists `per_domain` row
/// indices. Each domain is shuffled once and read cyclically, so the number
/// of steps is set by the largest domain and smaller domains wrap around.
pub fn sample_minibatches(
    sizes: &[usize],
    per_domain: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Vec<Vec<usize>>>> {
    if sizes.iter().any(|&n| n == 0) {
        return Err(Error::invalid("every domain needs at least one point"));
    }
    if per_domain == 0 {
        return Err(Error::invalid("per-domain batch size must be positive"));
    }
    let largest = sizes.iter().copied().max().unwrap_or(0);
    let steps = largest.div_ceil(per_domain);
    let perms: Vec<Vec<usize>> = sizes
        .iter()
        .map(|&n| {
            let mut p: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut p);
            p
        })
        .collect();
    Ok((0..steps)
        .map(|s| {
            perms
                .iter()
                .map(|p| (0..per_domain).map(|j| p[(s * per_domain + j) % p.len()]).collect())
                .collect()
        })
        .collect())
}

/// Trains for `config.epochs` epochs. Deterministic given the seed.
pub fn train(
    model: PdaeModel,
    domains: &[Domain],
    config: &TrainConfig,
) -> Result<(PdaeModel, TrainHistory)> {
    train_with_callback(model, domains, config, |_, _| {})
}

/// [`train`] with a hook called after every epoch.
pub fn train_with_callback<F>(
    mut model: PdaeModel,
    domains: &[Domain],
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<(PdaeModel, TrainHistory)>
where
    F: FnMut(&EpochRecord, &PdaeModel),
{
    config.validate()?;
    if domains.len() < 2 {
        return Err(Error::invalid("training needs at least 2 domains"));
    }
    for (e, d) in domains.iter().enumerate() {
        if d.is_empty() {
            return Err(Error::invalid(format!("domain {e} is empty")));
        }
        if d.x.cols() != model.observed_dim() {
            return Err(Error::shape("train", model.observed_dim(), d.x.cols()));
        }
        model.check_label(d.label.as_slice())?;
    }
    let per_domain = config.per_domain(domains.len())?;
    let sizes: Vec<usize> = domains.iter().map(Domain::len).collect();
    let root = SeededRng::new(config.seed);
    let mut batch_rng = root.fork(0);
    let mut loss_rng = root.fork(1);
    let mut states = OptimizerStates::new(&model);
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        let plan = sample_minibatches(&sizes, per_domain, &mut batch_rng)?;
        let steps = plan.len() as f64;
        let mut sums = [0.0; 4];
        let mut last = None;
        for idx in &plan {
            let batches: Vec<DomainBatch> = domains
                .iter()
                .zip(idx)
                .map(|(d, i)| DomainBatch {
                    label: d.label.clone(),
                    x: d.x.select_rows(i),
                })
                .collect();
            let l = train_step(&mut model, &batches, config, &mut states, &mut loss_rng)?;
            sums[0] += l.perturbation;
            sums[1] += l.reconstruction.unwrap_or(0.0);
            sums[2] += l.prior.unwrap_or(0.0);
            sums[3] += l.sparsity.unwrap_or(0.0);
            last = Some(l);
        }
        let last = last.expect("at least one step per epoch");
        let avg = |s: f64, on: Option<f64>| on.map(|_| s / steps);
        let record = EpochRecord {
            epoch,
            perturbation: sums[0] / steps,
            reconstruction: avg(sums[1], last.reconstruction),
            prior: avg(sums[2], last.prior),
            sparsity: avg(sums[3], last.sparsity),
        };
        on_epoch(&record, &model);
        history.epochs.push(record);
    }
    Ok((model, history))
}
