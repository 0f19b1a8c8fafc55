use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::genmodel::PerturbationLabel;
use crate::numeric::{gaussian_sample, Activation, Matrix, Mlp, SeededRng};

/// Layer widths and noise settings used to build a fresh [`PdaeModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    /// Hidden widths shared by encoder and decoder.
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    /// Width of the decoder's noise input.
    pub noise_dim: usize,
    pub noise_std: f64,
    /// Energy-score exponent.
    pub beta: f64,
}

impl Default for Architecture {
    /// Four hidden layers of 64 units, two latents, two noise inputs with
    /// std 0.1 and `beta = 1`.
    fn default() -> Self {
        Self {
            hidden: vec![64; 4],
            latent_dim: 2,
            noise_dim: 2,
            noise_std: 0.1,
            beta: 1.0,
        }
    }
}

/// Encoder `g: R^{d_X} -> R^{d_Z}`, perturbation matrix `W_hat` (`d_Z x K`) and
/// decoder `f: R^{d_Z + d_eps} -> R^{d_X}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PdaeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub w_hat: Matrix,
    pub noise_dim: usize,
    pub noise_std: f64,
    pub beta: f64,
}

impl PdaeModel {
    pub fn new(
        encoder: Mlp,
        decoder: Mlp,
        w_hat: Matrix,
        noise_dim: usize,
        noise_std: f64,
        beta: f64,
    ) -> Result<Self> {
        let d_z = encoder.output_dim();
        if w_hat.rows() != d_z {
            return Err(Error::shape("PdaeModel (W_hat rows)", d_z, w_hat.rows()));
        }
        if decoder.input_dim() != d_z + noise_dim {
            return Err(Error::shape(
                "PdaeModel (decoder input)",
                format!("{} = d_Z + noise_dim", d_z + noise_dim),
                decoder.input_dim(),
            ));
        }
        if decoder.output_dim() != encoder.input_dim() {
            return Err(Error::shape(
                "PdaeModel (decoder output)",
                encoder.input_dim(),
                decoder.output_dim(),
            ));
        }
        if !(beta > 0.0 && beta < 2.0) {
            return Err(Error::invalid("beta must lie in (0, 2)"));
        }
        if !(noise_std >= 0.0) {
            return Err(Error::invalid("model noise std must be non-negative"));
        }
        Ok(Self {
            encoder,
            decoder,
            w_hat,
            noise_dim,
            noise_std,
            beta,
        })
    }

    /// Randomly initialised model for `obs_dim` observations and
    /// `num_perturbations` elementary perturbations.
    pub fn init(
        obs_dim: usize,
        num_perturbations: usize,
        arch: &Architecture,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let mut enc_dims = vec![obs_dim];
        enc_dims.extend_from_slice(&arch.hidden);
        enc_dims.push(arch.latent_dim);
        let mut dec_dims = vec![arch.latent_dim + arch.noise_dim];
        dec_dims.extend(arch.hidden.iter().rev());
        dec_dims.push(obs_dim);
        let encoder = Mlp::init(&enc_dims, Activation::Tanh, rng)?;
        let decoder = Mlp::init(&dec_dims, Activation::Tanh, rng)?;
        let bound = 1.0 / libm::sqrt(num_perturbations.max(1) as f64);
        let w: Vec<f64> = (0..arch.latent_dim * num_perturbations)
            .map(|_| rng.uniform_in(-bound, bound))
            .collect();
        let w_hat = Matrix::from_vec(arch.latent_dim, num_perturbations, w)?;
        Self::new(encoder, decoder, w_hat, arch.noise_dim, arch.noise_std, arch.beta)
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn observed_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn num_perturbations(&self) -> usize {
        self.w_hat.cols()
    }

    pub(crate) fn check_label(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.num_perturbations() {
            return Err(Error::shape(
                "perturbation label",
                format!("length {}", self.num_perturbations()),
                format!("length {}", a.len()),
            ));
        }
        Ok(())
    }

    /// Latent shift `W_hat (a_tgt - a_src)`.
    pub fn shift(&self, a_src: &[f64], a_tgt: &[f64]) -> Result<Vec<f64>> {
        self.check_label(a_src)?;
        self.check_label(a_tgt)?;
        let delta: Vec<f64> = a_tgt.iter().zip(a_src).map(|(t, s)| t - s).collect();
        self.w_hat.matvec(&delta)
    }

    /// Encoded perturbed latents, one row per observation.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        self.encoder.forward(x)
    }

    /// Moves encodings from condition `a_src` to `a_tgt`.
    pub fn transport(
        &self,
        z: &Matrix,
        a_src: &PerturbationLabel,
        a_tgt: &PerturbationLabel,
    ) -> Result<Matrix> {
        if z.cols() != self.latent_dim() {
            return Err(Error::shape("transport", self.latent_dim(), z.cols()));
        }
        let shift = self.shift(a_src.as_slice(), a_tgt.as_slice())?;
        let mut out = z.clone();
        out.add_row_vector(&shift)?;
        Ok(out)
    }

    /// One fresh decoder-noise draw per row.
    pub fn sample_noise(&self, n: usize, rng: &mut SeededRng) -> Matrix {
        gaussian_sample(rng, &vec![0.0; self.noise_dim], self.noise_std, n)
    }

    /// Decodes with an explicit noise matrix (`n x noise_dim`).
    pub fn decode_with_noise(&self, z: &Matrix, noise: &Matrix) -> Result<Matrix> {
        if z.cols() != self.latent_dim() {
            return Err(Error::shape("decode", self.latent_dim(), z.cols()));
        }
        if noise.shape() != (z.rows(), self.noise_dim) {
            return Err(Error::shape(
                "decode (noise)",
                format!("{}x{}", z.rows(), self.noise_dim),
                format!("{}x{}", noise.rows(), noise.cols()),
            ));
        }
        if self.noise_dim == 0 {
            return self.decoder.forward(z);
        }
        self.decoder.forward(&z.hstack(noise)?)
    }

    /// Stochastic decoding with fresh noise.
    pub fn decode(&self, z: &Matrix, rng: &mut SeededRng) -> Result<Matrix> {
        let noise = self.sample_noise(z.rows(), rng);
        self.decode_with_noise(z, &noise)
    }
}
