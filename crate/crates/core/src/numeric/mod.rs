//! Dense linear algebra, seeded randomness, MLPs and Adam.

mod adam;
mod distance;
pub mod linalg;
mod matrix;
mod mlp;
mod rng;

pub use adam::{AdamConfig, AdamState};
pub use distance::{pairwise_distances, pow_norm, pow_norm_grad_scale};
pub use matrix::Matrix;
pub use mlp::{Activation, LayerView, Mlp, MlpTrace};
pub use rng::{gaussian_sample, SeededRng};
