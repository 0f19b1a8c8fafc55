//! Versioned JSON checkpoints of trained models.

use std::path::Path;

use pdae_core::numeric::{Activation, Mlp};
use pdae_core::pdae::{EpochRecord, PdaeModel, TrainHistory};
use pdae_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::data::{read_json, write_json};
use crate::error::{CliError, CliResult};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub observed: usize,
    pub latent: usize,
    pub perturbations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkState {
    /// Layer widths, input first.
    pub dims: Vec<usize>,
    pub activation: String,
    /// Per layer: row-major `d_in x d_out` weight, then the bias.
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub dim: usize,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryEntry {
    pub epoch: usize,
    pub perturbation: f64,
    pub reconstruction: Option<f64>,
    pub prior: Option<f64>,
    pub sparsity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub dims: Dims,
    pub encoder: NetworkState,
    pub decoder: NetworkState,
    /// Rows of the `d_Z x K` perturbation matrix.
    pub w_hat: Vec<Vec<f64>>,
    pub noise: NoiseSpec,
    pub beta: f64,
    pub history: Vec<HistoryEntry>,
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Tanh => "tanh",
        Activation::Identity => "identity",
    }
}

fn network(m: &Mlp) -> NetworkState {
    NetworkState {
        dims: m.dims().to_vec(),
        activation: activation_name(m.activation()).to_string(),
        params: m.params().to_vec(),
    }
}

fn restore(net: &NetworkState, which: &str) -> CliResult<Mlp> {
    let act = match net.activation.as_str() {
        "tanh" => Activation::Tanh,
        "identity" => Activation::Identity,
        other => {
            return Err(CliError::usage(format!(
                "checkpoint field `{which}.activation`: unknown activation `{other}`"
            )))
        }
    };
    Mlp::from_params(&net.dims, act, net.params.clone())
        .map_err(|e| CliError::usage(format!("checkpoint field `{which}`: {e}")))
}

impl Checkpoint {
    pub fn new(model: &PdaeModel, history: &TrainHistory) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            dims: Dims {
                observed: model.observed_dim(),
                latent: model.latent_dim(),
                perturbations: model.num_perturbations(),
            },
            encoder: network(&model.encoder),
            decoder: network(&model.decoder),
            w_hat: model.w_hat.row_iter().map(<[f64]>::to_vec).collect(),
            noise: NoiseSpec {
                dim: model.noise_dim,
                std: model.noise_std,
            },
            beta: model.beta,
            history: history
                .epochs
                .iter()
                .map(|r| HistoryEntry {
                    epoch: r.epoch,
                    perturbation: r.perturbation,
                    reconstruction: r.reconstruction,
                    prior: r.prior,
                    sparsity: r.sparsity,
                })
                .collect(),
        }
    }

    pub fn model(&self) -> CliResult<PdaeModel> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(CliError::usage(format!(
                "checkpoint field `format_version`: unsupported version {}",
                self.format_version
            )));
        }
        let encoder = restore(&self.encoder, "encoder")?;
        let decoder = restore(&self.decoder, "decoder")?;
        let w_hat = Matrix::from_rows(&self.w_hat)
            .map_err(|e| CliError::usage(format!("checkpoint field `w_hat`: {e}")))?;
        let model = PdaeModel::new(encoder, decoder, w_hat, self.noise.dim, self.noise.std, self.beta)
            .map_err(|e| CliError::usage(format!("checkpoint: {e}")))?;
        let dims = Dims {
            observed: model.observed_dim(),
            latent: model.latent_dim(),
            perturbations: model.num_perturbations(),
        };
        if dims != self.dims {
            return Err(CliError::usage(format!(
                "checkpoint field `dims`: {:?} disagrees with the stored networks {dims:?}",
                self.dims
            )));
        }
        Ok(model)
    }

    pub fn history(&self) -> TrainHistory {
        TrainHistory {
            epochs: self
                .history
                .iter()
                .map(|h| EpochRecord {
                    epoch: h.epoch,
                    perturbation: h.perturbation,
                    reconstruction: h.reconstruction,
                    prior: h.prior,
                    sparsity: h.sparsity,
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        read_json(path)
    }
}
