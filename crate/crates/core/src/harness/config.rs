use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::genmodel::{planar_training_labels, planar_w, GroundTruthModel, MixingSpec, PerturbationLabel};
use crate::numeric::Matrix;
use crate::pdae::{Architecture, TrainConfig};

/// Everything needed to regenerate data, train, and evaluate one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Ground-truth perturbation matrix, `d_Z x K`.
    pub w: Matrix,
    pub base_std: f64,
    pub mixing: MixingSpec,
    /// Pure-noise observation columns appended after the signal.
    pub noise_dims: usize,
    pub noise_std: f64,
    /// Training labels; the first one is the reference condition.
    pub training_labels: Vec<PerturbationLabel>,
    pub n_per_domain: usize,
    /// Size of each ground-truth test sample and of every method's prediction.
    pub n_test: usize,
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub sweep_noise_stds: Vec<f64>,
    pub sweep_noise_dims: usize,
    pub seeds: Vec<u64>,
    /// Seed of the test-label suite, shared by all data seeds.
    pub suite_seed: u64,
    /// Labels drawn per (kind, setting) pair.
    pub draws_per_setting: usize,
}

impl ExperimentConfig {
    /// Laptop-sized version of the planar experiment: 4096 points per domain,
    /// 500 epochs with batch 1024, two seeds.
    pub fn desk() -> Self {
        Self {
            w: planar_w(),
            base_std: 0.25,
            mixing: MixingSpec::ComplexExp,
            noise_dims: 0,
            noise_std: 0.0,
            training_labels: planar_training_labels(),
            n_per_domain: 4096,
            n_test: 2048,
            architecture: Architecture {
                noise_dim: 0,
                ..Architecture::default()
            },
            train: TrainConfig {
                batch_size: 1024,
                epochs: 500,
                ..TrainConfig::default()
            },
            sweep_noise_stds: vec![0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 10.0],
            sweep_noise_dims: 8,
            seeds: vec![0, 1],
            suite_seed: 7,
            draws_per_setting: 2,
        }
    }

    /// Full-size planar experiment: 2^14 points per domain, 2000 epochs with
    /// batch 2^12, five seeds.
    pub fn paper() -> Self {
        let desk = Self::desk();
        Self {
            n_per_domain: 1 << 14,
            n_test: 4096,
            train: TrainConfig {
                batch_size: 1 << 12,
                epochs: 2000,
                ..desk.train.clone()
            },
            seeds: vec![0, 1, 2, 3, 4],
            ..desk
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn num_perturbations(&self) -> usize {
        self.w.cols()
    }

    pub fn num_domains(&self) -> usize {
        self.training_labels.len()
    }

    pub fn observed_dim(&self) -> usize {
        self.mixing.signal_dim(self.latent_dim()) + self.noise_dims
    }

    pub fn ground_truth(&self) -> Result<GroundTruthModel> {
        GroundTruthModel::new(
            self.w.clone(),
            vec![0.0; self.latent_dim()],
            self.base_std,
            self.mixing.clone(),
            self.noise_dims,
            self.noise_std,
        )
    }

    /// Same experiment with `sigma` noise in `sweep_noise_dims` extra columns,
    /// and a decoder noise input of the same width.
    pub fn with_observation_noise(&self, sigma: f64) -> Self {
        let mut c = self.clone();
        c.noise_dims = self.sweep_noise_dims;
        c.noise_std = sigma;
        c.architecture.noise_dim = self.sweep_noise_dims;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_perturbations();
        if self.training_labels.len() < 2 {
            return Err(Error::invalid("need a reference label and at least one perturbation"));
        }
        if let Some(bad) = self.training_labels.iter().find(|a| a.len() != k) {
            return Err(Error::shape("training label", format!("length {k}"), format!("length {}", bad.len())));
        }
        if self.n_per_domain < 2 {
            return Err(Error::invalid("n_per_domain must be at least 2"));
        }
        if self.n_test < 2 {
            return Err(Error::invalid("n_test must be at least 2"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("no seeds given"));
        }
        if self.draws_per_setting == 0 {
            return Err(Error::invalid("draws_per_setting must be positive"));
        }
        if self.architecture.latent_dim == 0 {
            return Err(Error::invalid("architecture latent_dim must be positive"));
        }
        if self.sweep_noise_stds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("sweep noise levels must be finite and non-negative"));
        }
        self.train.validate()?;
        self.train.per_domain(self.num_domains())?;
        self.ground_truth().map(|_| ())
    }
}
