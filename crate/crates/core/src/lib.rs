//! Latent mean-shift perturbation models, energy-score metrics and the
//! perturbation distribution autoencoder (PDAE).
//!
//! The crate is `no_std` compatible (it needs `alloc`). The default `std`
//! feature only enables runtime CPU feature detection in the matrix kernels.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod baselines;
pub mod error;
pub mod genmodel;
pub mod harness;
pub mod metrics;
pub mod numeric;
pub mod pdae;

pub use error::{Error, Result};
pub use numeric::{Matrix, SeededRng};
