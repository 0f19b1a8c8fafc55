//! Training losses with analytic gradients.
//!
//! Every loss builds its forward pass from MLP traces, computes the gradient
//! of the energy terms with respect to the network outputs in closed form,
//! and backpropagates through the traces. Norm terms use the subgradient 0 at
//! an exactly-zero difference.

use alloc::vec;
use alloc::vec::Vec;

use super::PdaeModel;
use crate::error::{Error, Result};
use crate::genmodel::PerturbationLabel;
use crate::numeric::{gaussian_sample, pow_norm, pow_norm_grad_scale, Matrix, SeededRng};

/// Observations from one training condition.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBatch {
    pub label: PerturbationLabel,
    pub x: Matrix,
}

/// Gradients for every trainable group, laid out like the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub encoder: Vec<f64>,
    pub decoder: Vec<f64>,
    /// Row-major `d_Z x K`.
    pub w_hat: Vec<f64>,
}

impl Gradients {
    pub fn zeros(model: &PdaeModel) -> Self {
        Self {
            encoder: vec![0.0; model.encoder.num_params()],
            decoder: vec![0.0; model.decoder.num_params()],
            w_hat: vec![0.0; model.w_hat.as_slice().len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .chain(&self.w_hat)
            .all(|g| g.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .chain(&self.w_hat)
            .fold(0.0, |m, g| f64::max(m, libm::fabs(*g)))
    }
}

/// Loss value together with its gradients.
#[derive(Clone, Debug)]
pub struct LossEval {
    pub value: f64,
    pub grads: Gradients,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Adds `scale * (a - b)` into `out`.
#[inline]
fn add_scaled_diff(out: &mut [f64], a: &[f64], b: &[f64], scale: f64) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o += scale * (x - y);
    }
}

/// Negative expected energy score of the synthetic sample `s` against the
/// observations `obs`, `cross - within`, scaled by `weight`. The gradient with
/// respect to each synthetic row is accumulated into `d_s`.
///
/// `cross = mean_{j,i} ||s_j - o_i||^beta`,
/// `within = 1/(m(m-1)) sum_{j<j'} ||s_j - s_j'||^beta`.
fn neg_energy_score_with_grad(
    s: &[&[f64]],
    obs: &[&[f64]],
    beta: f64,
    weight: f64,
    d_s: &mut [Vec<f64>],
) -> f64 {
    let m = s.len() as f64;
    let n = obs.len() as f64;
    let cross_w = weight / (m * n);
    let within_w = weight / (m * (m - 1.0));
    let mut cross = 0.0;
    let mut within = 0.0;
    for (j, sj) in s.iter().enumerate() {
        for oi in obs {
            let d2 = sq_dist(sj, oi);
            cross += pow_norm(d2, beta);
            let g = pow_norm_grad_scale(d2, beta);
            if g != 0.0 {
                add_scaled_diff(&mut d_s[j], sj, oi, cross_w * g);
            }
        }
        for jp in j + 1..s.len() {
            let sk = s[jp];
            let d2 = sq_dist(sj, sk);
            within += pow_norm(d2, beta);
            let g = pow_norm_grad_scale(d2, beta) * within_w;
            if g != 0.0 {
                for (k, (a, b)) in sj.iter().zip(sk.iter()).enumerate() {
                    let v = g * (a - b);
                    d_s[j][k] -= v;
                    d_s[jp][k] += v;
                }
            }
        }
    }
    weight * (cross / (m * n) - within / (m * (m - 1.0)))
}

fn check_batches(model: &PdaeModel, batches: &[DomainBatch], min_rows: usize) -> Result<()> {
    if batches.is_empty() {
        return Err(Error::invalid("no domain batches"));
    }
    for (e, b) in batches.iter().enumerate() {
        model.check_label(b.label.as_slice())?;
        if b.x.cols() != model.observed_dim() {
            return Err(Error::shape("domain batch", model.observed_dim(), b.x.cols()));
        }
        if b.x.rows() < min_rows {
            return Err(Error::invalid(alloc::format!(
                "domain batch {e} has {} rows, need at least {min_rows}",
                b.x.rows()
            )));
        }
    }
    Ok(())
}

fn rows_to_matrix(rows: &[Vec<f64>], cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows.len(), cols);
    for (r, v) in rows.iter().enumerate() {
        m.row_mut(r).copy_from_slice(v);
    }
    m
}

/// Perturbation loss: for every ordered pair of domains `(e, h)`, including
/// `e = h`, the synthetic sample obtained by encoding `X_e`, shifting by
/// `W_hat (a_h - a_e)` and decoding with one noise draw is scored against
/// every real `x_h` with the negative energy score. The pair losses are
/// averaged over the `(M+1)^2` pairs.
pub fn perturbation_loss(
    model: &PdaeModel,
    batches: &[DomainBatch],
    rng: &mut SeededRng,
) -> Result<LossEval> {
    check_batches(model, batches, 2)?;
    let d_z = model.latent_dim();
    let d_x = model.observed_dim();
    let k = model.num_perturbations();
    let n_dom = batches.len();

    let blocks: Vec<&Matrix> = batches.iter().map(|b| &b.x).collect();
    let x_all = Matrix::vstack(&blocks)?;
    let enc_trace = model.encoder.forward_traced(&x_all)?;
    let z_all = enc_trace.output();
    let mut offsets = Vec::with_capacity(n_dom + 1);
    offsets.push(0);
    for b in batches {
        offsets.push(offsets.last().unwrap() + b.x.rows());
    }

    // Decoder input: pair (e, h) block = Z_e + shift(e -> h), then noise.
    let pair_rows: usize = (0..n_dom).map(|e| batches[e].x.rows() * n_dom).sum();
    let mut dec_in = Matrix::zeros(pair_rows, d_z + model.noise_dim);
    let noise = model.sample_noise(pair_rows, rng);
    let mut r = 0;
    for e in 0..n_dom {
        for h in 0..n_dom {
            let shift = model.shift(batches[e].label.as_slice(), batches[h].label.as_slice())?;
            for i in offsets[e]..offsets[e + 1] {
                let row = dec_in.row_mut(r);
                for ((o, z), s) in row[..d_z].iter_mut().zip(z_all.row(i)).zip(&shift) {
                    *o = z + s;
                }
                row[d_z..].copy_from_slice(noise.row(r));
                r += 1;
            }
        }
    }
    let dec_trace = model.decoder.forward_traced(&dec_in)?;
    let x_hat = dec_trace.output();

    let pair_weight = 1.0 / (n_dom * n_dom) as f64;
    let mut value = 0.0;
    let mut d_xhat = Matrix::zeros(pair_rows, d_x);
    let mut start = 0;
    for e in 0..n_dom {
        let m_e = batches[e].x.rows();
        for h in 0..n_dom {
            let synth: Vec<&[f64]> = (start..start + m_e).map(|j| x_hat.row(j)).collect();
            let obs: Vec<&[f64]> = batches[h].x.row_iter().collect();
            let mut d_s = vec![vec![0.0; d_x]; m_e];
            value += neg_energy_score_with_grad(&synth, &obs, model.beta, pair_weight, &mut d_s);
            for (j, g) in d_s.iter().enumerate() {
                d_xhat.row_mut(start + j).copy_from_slice(g);
            }
            start += m_e;
        }
    }

    let mut grads = Gradients::zeros(model);
    let d_in = model
        .decoder
        .backward(&dec_trace, &d_xhat, &mut grads.decoder, true)?
        .expect("input gradient requested");

    let mut d_z_all = Matrix::zeros(z_all.rows(), d_z);
    let mut r = 0;
    for e in 0..n_dom {
        for h in 0..n_dom {
            let delta = batches[h].label.diff(&batches[e].label);
            let mut col_sum = vec![0.0; d_z];
            for i in offsets[e]..offsets[e + 1] {
                let g = &d_in.row(r)[..d_z];
                for (acc, v) in d_z_all.row_mut(i).iter_mut().zip(g) {
                    *acc += v;
                }
                for (c, v) in col_sum.iter_mut().zip(g) {
                    *c += v;
                }
                r += 1;
            }
            for (i, c) in col_sum.iter().enumerate() {
                for (kk, dk) in delta.iter().enumerate() {
                    grads.w_hat[i * k + kk] += c * dk;
                }
            }
        }
    }
    model
        .encoder
        .backward(&enc_trace, &d_z_all, &mut grads.encoder, false)?;
    Ok(LossEval { value, grads })
}

/// Conditional reconstruction loss: two independent decodings `x_hat`,
/// `x_hat'` of each encoding, scored with
/// `(||x - x_hat||^b + ||x - x_hat'||^b - ||x_hat - x_hat'||^b) / 2`,
/// averaged over rows. Only the decoder receives gradients.
pub fn reconstruction_loss(model: &PdaeModel, x: &Matrix, rng: &mut SeededRng) -> Result<LossEval> {
    if x.rows() == 0 {
        return Err(Error::invalid("empty reconstruction batch"));
    }
    let n = x.rows();
    let d_x = model.observed_dim();
    let z = model.encode(x)?;
    let noise = model.sample_noise(2 * n, rng);
    let z2 = Matrix::vstack(&[&z, &z])?;
    let dec_in = if model.noise_dim == 0 { z2 } else { z2.hstack(&noise)? };
    let trace = model.decoder.forward_traced(&dec_in)?;
    let out = trace.output();
    let beta = model.beta;
    let w = 1.0 / (2.0 * n as f64);
    let mut value = 0.0;
    let mut d_out = Matrix::zeros(2 * n, d_x);
    for i in 0..n {
        let (xi, a, b) = (x.row(i), out.row(i), out.row(n + i));
        let (da, db, dab) = (sq_dist(a, xi), sq_dist(b, xi), sq_dist(a, b));
        value += w * (pow_norm(da, beta) + pow_norm(db, beta) - pow_norm(dab, beta));
        let (ga, gb, gab) = (
            w * pow_norm_grad_scale(da, beta),
            w * pow_norm_grad_scale(db, beta),
            w * pow_norm_grad_scale(dab, beta),
        );
        let mut ra = vec![0.0; d_x];
        let mut rb = vec![0.0; d_x];
        add_scaled_diff(&mut ra, a, xi, ga);
        add_scaled_diff(&mut ra, a, b, -gab);
        add_scaled_diff(&mut rb, b, xi, gb);
        add_scaled_diff(&mut rb, b, a, -gab);
        d_out.row_mut(i).copy_from_slice(&ra);
        d_out.row_mut(n + i).copy_from_slice(&rb);
    }
    let mut grads = Gradients::zeros(model);
    model.decoder.backward(&trace, &d_out, &mut grads.decoder, false)?;
    Ok(LossEval { value, grads })
}

/// Prior loss: the estimated basal states `g(x) - W_hat a`, pooled over all
/// batches, scored against fresh `N(0, I)` draws `xi` with
/// `1/B^2 sum_{i,j} ||xi_i - z_j||^b - 1/(B(B-1)) sum_{j<j'} ||z_j - z_j'||^b`.
pub fn prior_loss(model: &PdaeModel, batches: &[DomainBatch], rng: &mut SeededRng) -> Result<LossEval> {
    check_batches(model, batches, 0)?;
    let blocks: Vec<&Matrix> = batches.iter().map(|b| &b.x).collect();
    let x_all = Matrix::vstack(&blocks)?;
    let n = x_all.rows();
    if n < 2 {
        return Err(Error::invalid("prior loss needs at least two points"));
    }
    let d_z = model.latent_dim();
    let k = model.num_perturbations();
    let trace = model.encoder.forward_traced(&x_all)?;
    let mut base = trace.output().clone();
    let mut labels: Vec<&[f64]> = Vec::with_capacity(n);
    let mut r = 0;
    for b in batches {
        let shift = model.w_hat.matvec(b.label.as_slice())?;
        for _ in 0..b.x.rows() {
            for (z, s) in base.row_mut(r).iter_mut().zip(&shift) {
                *z -= s;
            }
            labels.push(b.label.as_slice());
            r += 1;
        }
    }
    let xi = gaussian_sample(rng, &vec![0.0; d_z], 1.0, n);
    let synth: Vec<&[f64]> = base.row_iter().collect();
    let obs: Vec<&[f64]> = xi.row_iter().collect();
    let mut d_base = vec![vec![0.0; d_z]; n];
    let value = neg_energy_score_with_grad(&synth, &obs, model.beta, 1.0, &mut d_base);

    let mut grads = Gradients::zeros(model);
    let d_base = rows_to_matrix(&d_base, d_z);
    for (j, g) in d_base.row_iter().enumerate() {
        for (i, gi) in g.iter().enumerate() {
            for (kk, a) in labels[j].iter().enumerate() {
                grads.w_hat[i * k + kk] -= gi * a;
            }
        }
    }
    model.encoder.backward(&trace, &d_base, &mut grads.encoder, false)?;
    Ok(LossEval { value, grads })
}

/// Group-sparsity penalty `sum_k ||W_hat[:, k]||_2` and its gradient
/// (row-major, zero for all-zero columns).
pub fn sparsity_penalty(w_hat: &Matrix) -> (f64, Vec<f64>) {
    let (d, k) = w_hat.shape();
    let mut grad = vec![0.0; d * k];
    let mut value = 0.0;
    for c in 0..k {
        let norm = libm::sqrt((0..d).map(|r| w_hat.get(r, c) * w_hat.get(r, c)).sum());
        value += norm;
        if norm > 0.0 {
            for r in 0..d {
                grad[r * k + c] = w_hat.get(r, c) / norm;
            }
        }
    }
    (value, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{Activation, Mlp};

    #[test]
    fn sparsity_cases() {
        assert_eq!(sparsity_penalty(&Matrix::zeros(2, 3)).0, 0.0);
        let w = Matrix::from_rows(&[[3.0], [4.0]]).unwrap();
        let (v, g) = sparsity_penalty(&w);
        assert_eq!(v, 5.0);
        assert_eq!(g, vec![0.6, 0.8]);
    }

    fn identity_world(d: usize) -> PdaeModel {
        let enc = Mlp::affine(&Matrix::identity(d), &vec![0.0; d]).unwrap();
        let dec = Mlp::affine(&Matrix::identity(d), &vec![0.0; d]).unwrap();
        PdaeModel::new(enc, dec, Matrix::zeros(d, 1), 0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn perfect_autoencoder_has_zero_reconstruction_loss() {
        let m = identity_world(2);
        let x = gaussian_sample(&mut SeededRng::new(0), &[1.0, -1.0], 1.0, 20);
        let l = reconstruction_loss(&m, &x, &mut SeededRng::new(1)).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.grads.encoder.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn collapsed_decoder_reconstruction() {
        let mut m = identity_world(2);
        m.decoder = Mlp::zeros(&[2, 2], Activation::Identity).unwrap();
        let n = m.decoder.num_params();
        m.decoder.params_mut()[n - 2..].copy_from_slice(&[0.5, 1.5]);
        let x = gaussian_sample(&mut SeededRng::new(0), &[1.0, -1.0], 1.0, 30);
        let l = reconstruction_loss(&m, &x, &mut SeededRng::new(1)).unwrap();
        let expect: f64 = x
            .row_iter()
            .map(|r| ((r[0] - 0.5).powi(2) + (r[1] - 1.5).powi(2)).sqrt())
            .sum::<f64>()
            / 30.0;
        assert!((l.value - expect).abs() < 1e-12);
    }

    #[test]
    fn prior_loss_with_collapsed_basal_states() {
        // encoder == W_hat a  => every basal state is 0
        let mut m = identity_world(2);
        m.encoder = Mlp::zeros(&[2, 2], Activation::Identity).unwrap();
        let batch = DomainBatch {
            label: PerturbationLabel::from(&[0.0][..]),
            x: gaussian_sample(&mut SeededRng::new(0), &[0.0, 0.0], 1.0, 16),
        };
        let l = prior_loss(&m, core::slice::from_ref(&batch), &mut SeededRng::new(4)).unwrap();
        let xi = gaussian_sample(&mut SeededRng::new(4), &[0.0, 0.0], 1.0, 16);
        let expect = xi.row_iter().map(|r| (r[0] * r[0] + r[1] * r[1]).sqrt()).sum::<f64>() / 16.0;
        assert!((l.value - expect).abs() < 1e-12);
    }

    #[test]
    fn too_small_batches_rejected() {
        let m = identity_world(2);
        let b = DomainBatch {
            label: PerturbationLabel::from(&[0.0][..]),
            x: Matrix::zeros(1, 2),
        };
        assert!(perturbation_loss(&m, &[b], &mut SeededRng::new(0)).is_err());
    }
}
