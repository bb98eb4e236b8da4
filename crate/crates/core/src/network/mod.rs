//! Convolutional encoders mapping images to latent-factor prior means, with
//! exact backpropagation and regularized regression training.

mod gradcheck;
mod layers;
mod model;
mod train;

pub use gradcheck::{grad_check_report, GradCheckReport, grad_check, grad_check_against, GRAD_CHECK_FLOOR, GRAD_CHECK_STEP};
pub use layers::{LayerSpec, Shape};
pub use model::{
    bundle_images, encoder_forward, item_cnn_forward, user_cnn_forward, Architecture,
    EncoderParams, Head, LatentNetwork, ParamGrads,
};
pub use train::{
    backward, regression_loss, train_epochs, LossTrace, OptimizerConfig, OptimizerState,
};
