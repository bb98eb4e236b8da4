//! Hybrid recommender engine built on probabilistic matrix factorization with
//! convolutional image encoders as priors on the latent factors.
//!
//! Three model variants share one block coordinate-descent driver:
//!
//! * [`ModelKind::Pmf`]: plain PMF, zero prior means on both sides.
//! * [`ModelKind::IsfmfItem`]: an item-side encoder supplies the prior mean of
//!   every item factor.
//! * [`ModelKind::BiIsfmf`]: encoders on both sides; the user-side network
//!   reads a fixed-size bundle of images of items the user rated.
//!
//! The `parallel` feature (on by default) runs per-column solves, batch
//! forward passes, grid cells and sweep repeats on rayon. Without it the same
//! code paths run sequentially and produce bit-identical results.

pub mod data;
pub mod error;
pub mod eval;
pub mod factorization;
pub mod network;
pub mod parallel;

pub use error::{Error, Result};
pub use factorization::{Checkpoint, Hyperparams, ModelKind};
