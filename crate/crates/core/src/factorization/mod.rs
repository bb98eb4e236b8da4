//! Block coordinate descent over user factors, item factors and the two
//! encoders, with closed-form factor updates.

mod checkpoint;
mod engine;
mod hyper;
mod latent;
mod objective;
mod update;

pub use checkpoint::{Checkpoint, ColdInputs};
pub use engine::{
    joint_loss, prior_means, train, IterationRecord, TrainReport, Trainer, TrainingData,
};
pub use hyper::{Hyperparams, ModelKind, NoiseVariances};
pub use latent::LatentMatrix;
pub use objective::{joint_loss_terms, pmf_loss, LossBreakdown};
pub use update::{update_item_factors, update_user_factors};
