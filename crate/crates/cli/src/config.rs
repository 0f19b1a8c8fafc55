//! TOML experiment configuration. Every key is optional and overrides the
//! preset selected with `--scale`; unknown keys are rejected.

use std::path::Path;

use pdae_core::genmodel::{MixingSpec, PerturbationLabel};
use pdae_core::harness::ExperimentConfig;
use pdae_core::Matrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    pub fn preset(self) -> ExperimentConfig {
        match self {
            Scale::Desk => ExperimentConfig::desk(),
            Scale::Paper => ExperimentConfig::paper(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub data: Option<DataSection>,
    pub model: Option<ModelSection>,
    pub train: Option<TrainSection>,
    pub experiment: Option<ExperimentSection>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Rows of the `d_Z x K` perturbation matrix.
    pub w: Option<Vec<Vec<f64>>>,
    pub base_std: Option<f64>,
    /// `complex_exp`, `identity` or `affine`.
    pub mixing: Option<String>,
    pub mixing_matrix: Option<Vec<Vec<f64>>>,
    pub mixing_offset: Option<Vec<f64>>,
    pub noise_dims: Option<usize>,
    pub noise_std: Option<f64>,
    pub training_labels: Option<Vec<Vec<f64>>>,
    pub n_per_domain: Option<usize>,
    pub n_test: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Option<Vec<usize>>,
    pub latent_dim: Option<usize>,
    pub noise_dim: Option<usize>,
    pub noise_std: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lambda_rec: Option<f64>,
    pub lambda_prior: Option<f64>,
    pub lambda_sparsity: Option<f64>,
    pub lr_encoder: Option<f64>,
    pub lr_decoder: Option<f64>,
    pub lr_w: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub seeds: Option<Vec<u64>>,
    pub suite_seed: Option<u64>,
    pub draws_per_setting: Option<usize>,
    pub sweep_noise_stds: Option<Vec<f64>>,
    pub sweep_noise_dims: Option<usize>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> CliResult<Matrix> {
    Matrix::from_rows(rows).map_err(|e| CliError::usage(format!("config key `{what}`: {e}")))
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(<[f64]>::to_vec).collect()
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::usage(format!("invalid config: {e}")))
    }

    /// Fully populated file describing `cfg`.
    pub fn from_experiment(cfg: &ExperimentConfig) -> Self {
        let (mixing, mixing_matrix, mixing_offset) = match &cfg.mixing {
            MixingSpec::ComplexExp => ("complex_exp", None, None),
            MixingSpec::Identity | MixingSpec::LinearSem { .. } => ("identity", None, None),
            MixingSpec::Affine { matrix, offset } => ("affine", Some(rows_of(matrix)), Some(offset.clone())),
        };
        ConfigFile {
            data: Some(DataSection {
                w: Some(rows_of(&cfg.w)),
                base_std: Some(cfg.base_std),
                mixing: Some(mixing.to_string()),
                mixing_matrix,
                mixing_offset,
                noise_dims: Some(cfg.noise_dims),
                noise_std: Some(cfg.noise_std),
                training_labels: Some(cfg.training_labels.iter().map(|a| a.as_slice().to_vec()).collect()),
                n_per_domain: Some(cfg.n_per_domain),
                n_test: Some(cfg.n_test),
            }),
            model: Some(ModelSection {
                hidden: Some(cfg.architecture.hidden.clone()),
                latent_dim: Some(cfg.architecture.latent_dim),
                noise_dim: Some(cfg.architecture.noise_dim),
                noise_std: Some(cfg.architecture.noise_std),
                beta: Some(cfg.architecture.beta),
            }),
            train: Some(TrainSection {
                lambda_rec: Some(cfg.train.lambda_rec),
                lambda_prior: Some(cfg.train.lambda_prior),
                lambda_sparsity: Some(cfg.train.lambda_sparsity),
                lr_encoder: Some(cfg.train.lr_encoder),
                lr_decoder: Some(cfg.train.lr_decoder),
                lr_w: Some(cfg.train.lr_w),
                batch_size: Some(cfg.train.batch_size),
                epochs: Some(cfg.train.epochs),
            }),
            experiment: Some(ExperimentSection {
                seeds: Some(cfg.seeds.clone()),
                suite_seed: Some(cfg.suite_seed),
                draws_per_setting: Some(cfg.draws_per_setting),
                sweep_noise_stds: Some(cfg.sweep_noise_stds.clone()),
                sweep_noise_dims: Some(cfg.sweep_noise_dims),
            }),
        }
    }

    /// Overrides the fields of `base` that this file sets.
    pub fn apply(&self, base: &mut ExperimentConfig) -> CliResult<()> {
        if let Some(d) = &self.data {
            if let Some(w) = &d.w {
                base.w = matrix(w, "data.w")?;
            }
            set(&mut base.base_std, d.base_std);
            set(&mut base.noise_dims, d.noise_dims);
            set(&mut base.noise_std, d.noise_std);
            set(&mut base.n_per_domain, d.n_per_domain);
            set(&mut base.n_test, d.n_test);
            if let Some(labels) = &d.training_labels {
                base.training_labels = labels
                    .iter()
                    .map(|a| PerturbationLabel::new(a.clone()))
                    .collect::<Result<_, _>>()?;
            }
            match d.mixing.as_deref() {
                None => {
                    if d.mixing_matrix.is_some() || d.mixing_offset.is_some() {
                        return Err(CliError::usage(
                            "config keys `data.mixing_matrix`/`data.mixing_offset` need `data.mixing = \"affine\"`",
                        ));
                    }
                }
                Some("complex_exp") => base.mixing = MixingSpec::ComplexExp,
                Some("identity") => base.mixing = MixingSpec::Identity,
                Some("affine") => {
                    let m = d
                        .mixing_matrix
                        .as_ref()
                        .ok_or_else(|| CliError::usage("config key `data.mixing_matrix` is required for affine mixing"))?;
                    let rows = m.len();
                    base.mixing = MixingSpec::Affine {
                        matrix: matrix(m, "data.mixing_matrix")?,
                        offset: d.mixing_offset.clone().unwrap_or_else(|| vec![0.0; rows]),
                    };
                }
                Some(other) => {
                    return Err(CliError::usage(format!(
                        "config key `data.mixing`: unknown mixing `{other}` (expected complex_exp, identity or affine)"
                    )))
                }
            }
        }
        // Decoder noise width follows the generator's noise width unless set.
        let model_noise = self.model.as_ref().and_then(|m| m.noise_dim);
        if let (Some(d), None) = (self.data.as_ref().and_then(|d| d.noise_dims), model_noise) {
            base.architecture.noise_dim = d;
        }
        if let Some(m) = &self.model {
            let a = &mut base.architecture;
            set(&mut a.hidden, m.hidden.clone());
            set(&mut a.latent_dim, m.latent_dim);
            set(&mut a.noise_dim, m.noise_dim);
            set(&mut a.noise_std, m.noise_std);
            set(&mut a.beta, m.beta);
        }
        if let Some(t) = &self.train {
            let c = &mut base.train;
            set(&mut c.lambda_rec, t.lambda_rec);
            set(&mut c.lambda_prior, t.lambda_prior);
            set(&mut c.lambda_sparsity, t.lambda_sparsity);
            set(&mut c.lr_encoder, t.lr_encoder);
            set(&mut c.lr_decoder, t.lr_decoder);
            set(&mut c.lr_w, t.lr_w);
            set(&mut c.batch_size, t.batch_size);
            set(&mut c.epochs, t.epochs);
        }
        if let Some(e) = &self.experiment {
            set(&mut base.seeds, e.seeds.clone());
            set(&mut base.suite_seed, e.suite_seed);
            set(&mut base.draws_per_setting, e.draws_per_setting);
            set(&mut base.sweep_noise_stds, e.sweep_noise_stds.clone());
            set(&mut base.sweep_noise_dims, e.sweep_noise_dims);
        }
        Ok(())
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Preset for `scale`, overridden by the file at `path` and by `seed`.
pub fn load_config(path: Option<&Path>, scale: Scale, seed: Option<u64>) -> CliResult<ExperimentConfig> {
    let mut cfg = scale.preset();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        ConfigFile::parse(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
            .apply(&mut cfg)?;
    }
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    cfg.validate()?;
    Ok(cfg)
}

/// SHA-256 of the fully resolved configuration, as lowercase hex.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let text = serde_json::to_string(&ConfigFile::from_experiment(cfg)).expect("config serialises");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let err = ConfigFile::parse("[train]\nepochz = 3\n").unwrap_err().to_string();
        assert!(err.contains("epochz"), "{err}");
        let err = ConfigFile::parse("[trian]\n").unwrap_err().to_string();
        assert!(err.contains("trian"), "{err}");
    }

    #[test]
    fn round_trip_through_file() {
        let cfg = ExperimentConfig::paper();
        let text = toml::to_string(&ConfigFile::from_experiment(&cfg)).unwrap();
        let mut back = ExperimentConfig::desk();
        ConfigFile::parse(&text).unwrap().apply(&mut back).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(config_hash(&back), config_hash(&cfg));
        assert_ne!(config_hash(&cfg), config_hash(&ExperimentConfig::desk()));
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = ExperimentConfig::desk();
        ConfigFile::parse("[data]\nnoise_dims = 8\nnoise_std = 0.5\n[train]\nepochs = 3\n")
            .unwrap()
            .apply(&mut cfg)
            .unwrap();
        assert_eq!((cfg.noise_dims, cfg.noise_std, cfg.train.epochs), (8, 0.5, 3));
        assert_eq!(cfg.observed_dim(), 10);
        assert_eq!(cfg.architecture.noise_dim, 8);
    }
}
