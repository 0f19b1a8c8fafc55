//! Analytic gradients against central finite differences.

use pdae_core::genmodel::PerturbationLabel;
use pdae_core::numeric::{gaussian_sample, Activation, Mlp};
use pdae_core::pdae::{
    perturbation_loss, prior_loss, reconstruction_loss, sparsity_penalty, Architecture, DomainBatch, Gradients,
    LossEval, PdaeModel,
};
use pdae_core::{Matrix, Result, SeededRng};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

/// `||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8)`.
fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(1e-8)
}

fn central<F: FnMut(&[f64]) -> f64>(x: &[f64], mut f: F) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + STEP;
            let up = f(&p);
            p[i] = orig - STEP;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
enum Group {
    Encoder,
    Decoder,
    WHat,
}

fn params(model: &PdaeModel, g: Group) -> Vec<f64> {
    match g {
        Group::Encoder => model.encoder.params().to_vec(),
        Group::Decoder => model.decoder.params().to_vec(),
        Group::WHat => model.w_hat.as_slice().to_vec(),
    }
}

fn with_params(model: &PdaeModel, g: Group, p: &[f64]) -> PdaeModel {
    let mut m = model.clone();
    match g {
        Group::Encoder => m.encoder.params_mut().copy_from_slice(p),
        Group::Decoder => m.decoder.params_mut().copy_from_slice(p),
        Group::WHat => m.w_hat.as_mut_slice().copy_from_slice(p),
    }
    m
}

fn analytic(grads: &Gradients, g: Group) -> &[f64] {
    match g {
        Group::Encoder => &grads.encoder,
        Group::Decoder => &grads.decoder,
        Group::WHat => &grads.w_hat,
    }
}

/// Checks the listed groups of a seeded stochastic loss; the loss seed is
/// fixed so the same noise is replayed at each perturbed parameter vector.
fn check_loss<L>(name: &str, model: &PdaeModel, groups: &[Group], loss_seed: u64, loss: L)
where
    L: Fn(&PdaeModel, &mut SeededRng) -> Result<LossEval>,
{
    let eval = loss(model, &mut SeededRng::new(loss_seed)).unwrap();
    for &g in groups {
        let x = params(model, g);
        let fd = central(&x, |p| loss(&with_params(model, g, p), &mut SeededRng::new(loss_seed)).unwrap().value);
        let err = rel_error(analytic(&eval.grads, g), &fd);
        assert!(err < TOL, "{name} {g:?}: relative error {err:e}");
    }
}

const ALL: [Group; 3] = [Group::Encoder, Group::Decoder, Group::WHat];

struct Toy {
    model: PdaeModel,
    batches: Vec<DomainBatch>,
}

fn toy(seed: u64) -> Toy {
    let mut rng = SeededRng::new(seed);
    let d_x = 2 + (seed % 3) as usize;
    let k = 2 + (seed % 2) as usize;
    let arch = Architecture {
        hidden: vec![5, 4],
        latent_dim: 2,
        noise_dim: (seed % 3) as usize,
        noise_std: 0.3,
        beta: [1.0, 0.7, 1.5][(seed % 3) as usize],
    };
    let mut model = PdaeModel::init(d_x, k, &arch, &mut rng).unwrap();
    for w in model.w_hat.as_mut_slice() {
        *w = rng.uniform_in(-1.0, 1.0);
    }
    let batches = (0..3)
        .map(|e| {
            let mut label = vec![0.0; k];
            if e > 0 {
                label[e - 1] = rng.uniform_in(0.5, 1.5);
            }
            DomainBatch {
                label: PerturbationLabel::new(label).unwrap(),
                x: gaussian_sample(&mut rng, &vec![e as f64 * 0.5; d_x], 1.0, 3 + e),
            }
        })
        .collect();
    Toy { model, batches }
}

#[test]
fn perturbation_loss_gradients_match_finite_differences() {
    for seed in 0..20 {
        let t = toy(seed);
        check_loss("perturbation", &t.model, &ALL, 100 + seed, |m, r| perturbation_loss(m, &t.batches, r));
    }
}

#[test]
fn reconstruction_loss_gradients_match_finite_differences() {
    for seed in 0..20 {
        let t = toy(seed);
        let x = t.batches[1].x.clone();
        // the encoder is held fixed for this term
        check_loss("reconstruction", &t.model, &[Group::Decoder], 200 + seed, |m, r| reconstruction_loss(m, &x, r));
    }
}

#[test]
fn reconstruction_loss_only_moves_the_decoder() {
    let t = toy(3);
    let l = reconstruction_loss(&t.model, &t.batches[0].x, &mut SeededRng::new(0)).unwrap();
    assert!(l.grads.encoder.iter().all(|&g| g == 0.0));
    assert!(l.grads.w_hat.iter().all(|&g| g == 0.0));
    assert!(l.grads.decoder.iter().any(|&g| g != 0.0));
}

#[test]
fn prior_loss_gradients_match_finite_differences() {
    for seed in 0..20 {
        let t = toy(seed);
        check_loss("prior", &t.model, &ALL, 300 + seed, |m, r| prior_loss(m, &t.batches, r));
    }
}

#[test]
fn sparsity_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = SeededRng::new(400 + seed);
        let (d, k) = (2 + (seed % 3) as usize, 1 + (seed % 4) as usize);
        let data: Vec<f64> = (0..d * k).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        let w = Matrix::from_vec(d, k, data.clone()).unwrap();
        let (_, grad) = sparsity_penalty(&w);
        let fd = central(&data, |p| sparsity_penalty(&Matrix::from_vec(d, k, p.to_vec()).unwrap()).0);
        let err = rel_error(&grad, &fd);
        assert!(err < TOL, "sparsity seed {seed}: relative error {err:e}");
    }
}

/// Energy score of the network outputs against fixed observations, with the
/// gradient pushed through `Mlp::backward`.
fn mlp_energy_loss(net: &Mlp, input: &Matrix, obs: &Matrix) -> (f64, Vec<f64>) {
    let trace = net.forward_traced(input).unwrap();
    let out = trace.output();
    let (m, n) = (out.rows(), obs.rows());
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let mut value = 0.0;
    let mut d_out = Matrix::zeros(m, out.cols());
    for i in 0..m {
        for j in 0..n {
            let (a, b) = (out.row(i), obs.row(j));
            let r = dist(a, b);
            value += r / (m * n) as f64;
            for c in 0..a.len() {
                let g = (a[c] - b[c]) / (r * (m * n) as f64);
                d_out.set(i, c, d_out.get(i, c) + g);
            }
        }
        for j in 0..m {
            if i == j {
                continue;
            }
            let (a, b) = (out.row(i), out.row(j));
            let r = dist(a, b);
            let w = 0.5 / (m * (m - 1)) as f64;
            value -= w * r;
            // both orderings of the pair contribute to row i
            for c in 0..a.len() {
                let g = 2.0 * w * (a[c] - b[c]) / r;
                d_out.set(i, c, d_out.get(i, c) - g);
            }
        }
    }
    let mut grads = vec![0.0; net.num_params()];
    net.backward(&trace, &d_out, &mut grads, false).unwrap();
    (value, grads)
}

#[test]
fn mlp_energy_score_gradients_match_finite_differences() {
    for seed in 0..50 {
        let mut rng = SeededRng::new(500 + seed);
        let dims = [2, 3 + (seed % 3) as usize, 2];
        let net = Mlp::init(&dims, Activation::Tanh, &mut rng).unwrap();
        let input = gaussian_sample(&mut rng, &[0.0, 0.0], 1.0, 8);
        let obs = gaussian_sample(&mut rng, &[0.5, -0.5], 1.0, 8);
        let (_, grads) = mlp_energy_loss(&net, &input, &obs);
        let fd = central(net.params(), |p| {
            let n = Mlp::from_params(&dims, Activation::Tanh, p.to_vec()).unwrap();
            mlp_energy_loss(&n, &input, &obs).0
        });
        let err = rel_error(&grads, &fd);
        assert!(err < TOL, "mlp seed {seed}: relative error {err:e}");
    }
}
