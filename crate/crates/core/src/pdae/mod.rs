//! Perturbation distribution autoencoder: encoder, perturbation matrix and
//! stochastic decoder, the four training losses, the training loop and
//! test-time prediction.

mod loss;
mod model;
mod predict;
mod train;

pub use loss::{
    perturbation_loss, prior_loss, reconstruction_loss, sparsity_penalty, DomainBatch, Gradients,
    LossEval,
};
pub use model::{Architecture, PdaeModel};
pub use predict::{goodness_of_fit, predict, PredictionWeights};
pub use train::{
    sample_minibatches, train, train_step, train_with_callback, EpochRecord, OptimizerStates,
    StepLosses, TrainConfig, TrainHistory,
};
