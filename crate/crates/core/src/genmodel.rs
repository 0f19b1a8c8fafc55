//! Ground-truth data-generating process: Gaussian basal latents shifted by
//! `W a`, pushed through a mixing function, with optional appended noise
//! columns. Also the linear-SEM shift-intervention construction.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numeric::linalg::{inverse, spectral_radius};
use crate::numeric::{gaussian_sample, Matrix, SeededRng};

/// Perturbation label `a`: one dose per elementary perturbation.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationLabel(Vec<f64>);

impl PerturbationLabel {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("PerturbationLabel"));
        }
        Ok(Self(values))
    }

    pub fn zeros(k: usize) -> Self {
        Self(alloc::vec![0.0; k])
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

    /// `self - other`, elementwise.
    pub fn diff(&self, other: &PerturbationLabel) -> Vec<f64> {
        self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()
    }
}

impl From<&[f64]> for PerturbationLabel {
    fn from(v: &[f64]) -> Self {
        Self(v.to_vec())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MixingSpec {
    /// `(z1, z2) -> e^{z1} (cos z2, sin z2)`; needs two latents.
    ComplexExp,
    Identity,
    /// `z -> M z + b` with `M` of shape `d_signal x d_Z`.
    Affine { matrix: Matrix, offset: Vec<f64> },
    /// Linear SEM with weighted adjacency `B`. Latents pass through unchanged;
    /// the SEM structure enters through [`sample_sem_intervention`].
    LinearSem { adjacency: Matrix },
}

impl MixingSpec {
    /// Output width for `latent_dim` inputs.
    pub fn signal_dim(&self, latent_dim: usize) -> usize {
        match self {
            MixingSpec::ComplexExp => 2,
            MixingSpec::Identity | MixingSpec::LinearSem { .. } => latent_dim,
            MixingSpec::Affine { matrix, .. } => matrix.rows(),
        }
    }

    fn check(&self, latent_dim: usize) -> Result<()> {
        match self {
            MixingSpec::ComplexExp if latent_dim != 2 => Err(Error::shape(
                "mix (ComplexExp)",
                "2 latent dimensions",
                latent_dim,
            )),
            MixingSpec::Affine { matrix, offset } => {
                if matrix.cols() != latent_dim || offset.len() != matrix.rows() {
                    Err(Error::shape(
                        "mix (Affine)",
                        format!("{}x{} matrix with offset {}", matrix.rows(), latent_dim, matrix.rows()),
                        format!("{}x{} matrix with offset {}", matrix.rows(), matrix.cols(), offset.len()),
                    ))
                } else {
                    Ok(())
                }
            }
            MixingSpec::LinearSem { adjacency } => {
                if adjacency.shape() != (latent_dim, latent_dim) {
                    return Err(Error::shape("mix (LinearSem)", latent_dim, adjacency.rows()));
                }
                let rho = spectral_radius(adjacency, SPECTRAL_ITERS, SPECTRAL_TOL)?;
                if rho >= 1.0 {
                    return Err(Error::UnstableSem(rho));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

const SPECTRAL_ITERS: usize = 200;
const SPECTRAL_TOL: f64 = 1e-8;
const SEM_MAX_SWEEPS: usize = 100_000;

/// The simulator's `(P_Z, W, f, noise)` tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthModel {
    /// Perturbation matrix, `d_Z x K`.
    pub w: Matrix,
    pub base_mean: Vec<f64>,
    pub base_std: f64,
    pub mixing: MixingSpec,
    pub noise_dims: usize,
    pub noise_std: f64,
}

impl GroundTruthModel {
    pub fn new(
        w: Matrix,
        base_mean: Vec<f64>,
        base_std: f64,
        mixing: MixingSpec,
        noise_dims: usize,
        noise_std: f64,
    ) -> Result<Self> {
        if !(base_std >= 0.0) || !(noise_std >= 0.0) {
            return Err(Error::invalid("standard deviations must be non-negative"));
        }
        if base_mean.len() != w.rows() {
            return Err(Error::shape("GroundTruthModel", w.rows(), base_mean.len()));
        }
        mixing.check(w.rows())?;
        Ok(Self {
            w,
            base_mean,
            base_std,
            mixing,
            noise_dims,
            noise_std,
        })
    }

    /// The 2D setup: `w1 = (1,0)`, `w2 = (0,1)`, `w3 = (1,1)`, zero-mean
    /// isotropic base with std 0.25, complex-exponential mixing.
    pub fn planar(noise_dims: usize, noise_std: f64) -> Self {
        Self::new(
            planar_w(),
            alloc::vec![0.0, 0.0],
            0.25,
            MixingSpec::ComplexExp,
            noise_dims,
            noise_std,
        )
        .expect("valid by construction")
    }

    pub fn latent_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn num_perturbations(&self) -> usize {
        self.w.cols()
    }

    pub fn observed_dim(&self) -> usize {
        self.mixing.signal_dim(self.latent_dim()) + self.noise_dims
    }

    /// Mean of the perturbed latents, `base_mean + W a`.
    pub fn latent_mean(&self, a: &PerturbationLabel) -> Result<Vec<f64>> {
        self.check_label(a)?;
        let shift = self.w.matvec(a.as_slice())?;
        Ok(self.base_mean.iter().zip(shift).map(|(m, s)| m + s).collect())
    }

    fn check_label(&self, a: &PerturbationLabel) -> Result<()> {
        if a.len() != self.num_perturbations() {
            return Err(Error::shape(
                "perturbation label",
                format!("length {}", self.num_perturbations()),
                format!("length {}", a.len()),
            ));
        }
        Ok(())
    }
}

/// `W` of the planar setup (columns `w1`, `w2`, `w3`).
pub fn planar_w() -> Matrix {
    Matrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]).expect("static shape")
}

/// The four training labels of the planar setup: control and the three singles.
pub fn planar_training_labels() -> Vec<PerturbationLabel> {
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        .iter()
        .map(|a| PerturbationLabel::from(&a[..]))
        .collect()
}

/// One experimental condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub label: PerturbationLabel,
    pub x: Matrix,
    /// Ground-truth perturbed latents, kept for diagnostics only.
    pub z_pert: Option<Matrix>,
}

impl Domain {
    pub fn new(label: PerturbationLabel, x: Matrix, z_pert: Option<Matrix>) -> Result<Self> {
        if let Some(z) = &z_pert {
            if z.rows() != x.rows() {
                return Err(Error::shape("Domain", x.rows(), z.rows()));
            }
        }
        Ok(Self { label, x, z_pert })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }
}

/// Rows i.i.d. from `N(base_mean + W a, base_std^2 I)`.
pub fn sample_latents(
    model: &GroundTruthModel,
    a: &PerturbationLabel,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Matrix> {
    let mean = model.latent_mean(a)?;
    Ok(gaussian_sample(rng, &mean, model.base_std, n))
}

/// Applies the deterministic mixing function row-wise.
pub fn mix(spec: &MixingSpec, z: &Matrix) -> Result<Matrix> {
    spec.check(z.cols())?;
    match spec {
        MixingSpec::ComplexExp => {
            let mut out = Matrix::zeros(z.rows(), 2);
            for (r, row) in z.row_iter().enumerate() {
                let radius = libm::exp(row[0]);
                let o = out.row_mut(r);
                o[0] = radius * libm::cos(row[1]);
                o[1] = radius * libm::sin(row[1]);
            }
            Ok(out)
        }
        MixingSpec::Identity | MixingSpec::LinearSem { .. } => Ok(z.clone()),
        MixingSpec::Affine { matrix, offset } => {
            let mut out = z.matmul(&matrix.transpose())?;
            out.add_row_vector(offset)?;
            Ok(out)
        }
    }
}

/// Inverse of the complex exponential on the strip `z2 in (-pi, pi]`.
pub fn complex_exp_inverse(x: &Matrix) -> Result<Matrix> {
    if x.cols() != 2 {
        return Err(Error::shape("complex_exp_inverse", 2, x.cols()));
    }
    let mut out = Matrix::zeros(x.rows(), 2);
    for (r, row) in x.row_iter().enumerate() {
        let o = out.row_mut(r);
        o[0] = libm::log(libm::hypot(row[0], row[1]));
        o[1] = libm::atan2(row[1], row[0]);
    }
    Ok(out)
}

/// Samples a domain: latents, mixed signal, then `noise_dims` columns of
/// `N(0, noise_std^2)` appended after the signal columns.
pub fn generate_domain(
    model: &GroundTruthModel,
    a: &PerturbationLabel,
    n: usize,
    rng: &mut SeededRng,
) -> Result<Domain> {
    if n == 0 {
        return Err(Error::invalid("a domain needs at least one observation"));
    }
    let z = sample_latents(model, a, n, rng)?;
    let signal = mix(&model.mixing, &z)?;
    let x = if model.noise_dims == 0 {
        signal
    } else {
        let zeros = alloc::vec![0.0; model.noise_dims];
        let noise = gaussian_sample(rng, &zeros, model.noise_std, n);
        signal.hstack(&noise)?
    };
    Domain::new(a.clone(), x, Some(z))
}

/// Mean-shift matrix `W = (I - B^T)^{-1}` equivalent to shift interventions in
/// the linear SEM `Z := B^T Z + eta`.
pub fn sem_to_meanshift(adjacency: &Matrix) -> Result<Matrix> {
    let d = adjacency.rows();
    if adjacency.cols() != d {
        return Err(Error::shape("sem_to_meanshift", "square adjacency", adjacency.cols()));
    }
    let rho = spectral_radius(adjacency, SPECTRAL_ITERS, SPECTRAL_TOL)?;
    if rho >= 1.0 {
        return Err(Error::UnstableSem(rho));
    }
    inverse(&Matrix::identity(d).sub(&adjacency.transpose())?)
}

/// Draws from the shift-intervened SEM `Z := B^T Z + eta + a`,
/// `eta ~ N(0, noise_std^2 I)`. Each row is the fixed point of the structural
/// equations, found by iterating them; no matrix inverse is formed.
pub fn sample_sem_intervention(
    adjacency: &Matrix,
    noise_std: f64,
    a: &[f64],
    n: usize,
    rng: &mut SeededRng,
) -> Result<Matrix> {
    let d = adjacency.rows();
    if adjacency.cols() != d {
        return Err(Error::shape("sample_sem_intervention", "square adjacency", adjacency.cols()));
    }
    if a.len() != d {
        return Err(Error::shape("sample_sem_intervention", d, a.len()));
    }
    let rho = spectral_radius(adjacency, SPECTRAL_ITERS, SPECTRAL_TOL)?;
    if rho >= 1.0 {
        return Err(Error::UnstableSem(rho));
    }
    let bt = adjacency.transpose();
    let zeros = alloc::vec![0.0; d];
    let eta = gaussian_sample(rng, &zeros, noise_std, n);
    let mut out = Matrix::zeros(n, d);
    for (r, e) in eta.row_iter().enumerate() {
        let exo: Vec<f64> = e.iter().zip(a).map(|(x, s)| x + s).collect();
        let mut z = exo.clone();
        for _ in 0..SEM_MAX_SWEEPS {
            let next: Vec<f64> = bt
                .matvec(&z)?
                .iter()
                .zip(&exo)
                .map(|(bz, u)| bz + u)
                .collect();
            let scale = next.iter().fold(1.0, |m: f64, v| m.max(libm::fabs(*v)));
            let change = next
                .iter()
                .zip(&z)
                .fold(0.0, |m: f64, (p, q)| m.max(libm::fabs(p - q)));
            z = next;
            if change <= 1e-15 * scale {
                break;
            }
        }
        out.row_mut(r).copy_from_slice(&z);
    }
    Ok(out)
}
