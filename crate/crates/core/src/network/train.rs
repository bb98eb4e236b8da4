use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{LatentNetwork, ParamGrads};
use crate::data::ImageTensor;
use crate::error::{Error, Result};
use crate::parallel;

/// Samples per gradient-accumulation chunk. Chunks are reduced in index order,
/// so gradients do not depend on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 16,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Minibatch SGD with momentum. The velocity persists across calls to
/// [`train_epochs`].
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub seed: u64,
    pub epochs_run: u64,
    velocity: Option<ParamGrads>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(OptimizerState {
            config,
            seed,
            epochs_run: 0,
            velocity: None,
        })
    }
}

/// Regression loss before training and after each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub initial: f64,
    pub epochs: Vec<f64>,
}

impl LossTrace {
    /// Fraction of epochs that ended below the preceding value.
    pub fn decrease_ratio(&self) -> f64 {
        if self.epochs.is_empty() {
            return 1.0;
        }
        let mut prev = self.initial;
        let mut down = 0;
        for &l in &self.epochs {
            if l < prev {
                down += 1;
            }
            prev = l;
        }
        down as f64 / self.epochs.len() as f64
    }

    /// (decreasing epochs, total epochs)
    pub fn decrease_counts(&self) -> (usize, usize) {
        let mut prev = self.initial;
        let mut down = 0;
        for &l in &self.epochs {
            if l < prev {
                down += 1;
            }
            prev = l;
        }
        (down, self.epochs.len())
    }
}

fn check_lengths(inputs: &[Vec<&ImageTensor>], targets: &[Vec<f64>], k: usize) -> Result<()> {
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    if let Some(t) = targets.iter().find(|t| t.len() != k) {
        return Err(Error::DimensionMismatch(format!(
            "target of length {}, network emits {k}",
            t.len()
        )));
    }
    Ok(())
}

/// `(lambda_target / 2) * sum ||target - net(input)||^2 + (lambda_weight / 2) * ||w||^2`.
pub fn regression_loss(
    net: &LatentNetwork,
    inputs: &[Vec<&ImageTensor>],
    targets: &[Vec<f64>],
    lambda_target: f64,
    lambda_weight: f64,
) -> Result<f64> {
    check_lengths(inputs, targets, net.latent_dim())?;
    let residuals = parallel::map_indexed(inputs.len(), |s| -> Result<f64> {
        let out = net.forward(&inputs[s])?;
        Ok(out
            .iter()
            .zip(&targets[s])
            .map(|(o, t)| (t - o) * (t - o))
            .sum())
    });
    let mut fit = 0.0;
    for r in residuals {
        fit += r?;
    }
    Ok(0.5 * lambda_target * fit + 0.5 * lambda_weight * net.weight_sq_norm())
}

/// Exact gradient of [`regression_loss`] with respect to every weight.
pub fn backward(
    net: &LatentNetwork,
    inputs: &[Vec<&ImageTensor>],
    targets: &[Vec<f64>],
    lambda_target: f64,
    lambda_weight: f64,
) -> Result<ParamGrads> {
    check_lengths(inputs, targets, net.latent_dim())?;
    let n_chunks = inputs.len().div_ceil(GRAD_CHUNK);
    let partials = parallel::map_indexed(n_chunks, |c| -> Result<ParamGrads> {
        let mut g = net.zero_grads();
        let end = ((c + 1) * GRAD_CHUNK).min(inputs.len());
        for s in c * GRAD_CHUNK..end {
            let target = &targets[s];
            net.forward_backward(
                &inputs[s],
                |out| {
                    out.iter()
                        .zip(target)
                        .map(|(o, t)| lambda_target * (o - t))
                        .collect()
                },
                &mut g,
            )?;
        }
        Ok(g)
    });
    let mut total = net.zero_grads();
    for p in partials {
        total.add_assign(&p?);
    }
    for (t, g) in total.tensors.iter_mut().enumerate() {
        for (gi, w) in g.iter_mut().zip(net.tensor(t)) {
            *gi += lambda_weight * w;
        }
    }
    Ok(total)
}

/// Runs `epochs` passes of minibatch SGD with momentum on the regression
/// loss and returns the full loss after each epoch.
///
/// Steps follow the gradient of the loss divided by `lambda_target * n`,
/// which has the same minimizer and keeps the step size independent of the
/// regularization scale.
pub fn train_epochs(
    net: &mut LatentNetwork,
    inputs: &[Vec<&ImageTensor>],
    targets: &[Vec<f64>],
    lambda_target: f64,
    lambda_weight: f64,
    opt: &mut OptimizerState,
    epochs: usize,
) -> Result<LossTrace> {
    if epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be at least 1".into()));
    }
    if lambda_target.is_nan() || lambda_target <= 0.0 {
        return Err(Error::InvalidConfig("lambda_target must be positive".into()));
    }
    let n = inputs.len();
    let initial = regression_loss(net, inputs, targets, lambda_target, lambda_weight)?;
    let mut trace = LossTrace {
        initial,
        epochs: Vec::with_capacity(epochs),
    };
    if n == 0 {
        trace.epochs.resize(epochs, initial);
        return Ok(trace);
    }
    let prior_scale = lambda_weight / (lambda_target * n as f64);
    let OptimizerConfig {
        learning_rate,
        momentum,
        batch_size,
    } = opt.config;

    for _ in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
        rng.set_stream(opt.epochs_run);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);

        for batch in order.chunks(batch_size) {
            let b_inputs: Vec<Vec<&ImageTensor>> = batch.iter().map(|&s| inputs[s].clone()).collect();
            let b_targets: Vec<Vec<f64>> = batch.iter().map(|&s| targets[s].clone()).collect();
            let grads = backward(net, &b_inputs, &b_targets, 1.0 / batch.len() as f64, prior_scale)?;
            let velocity = opt.velocity.get_or_insert_with(|| net.zero_grads());
            for (t, (v, g)) in velocity.tensors.iter_mut().zip(&grads.tensors).enumerate() {
                let w = net.tensor_mut(t);
                for ((vi, gi), wi) in v.iter_mut().zip(g).zip(w.iter_mut()) {
                    *vi = momentum * *vi - learning_rate * gi;
                    *wi += *vi;
                }
            }
        }
        opt.epochs_run += 1;

        let loss = regression_loss(net, inputs, targets, lambda_target, lambda_weight)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "regression loss became {loss} after epoch {}; the learning rate {} is likely too high",
                opt.epochs_run, learning_rate
            )));
        }
        trace.epochs.push(loss);
    }
    Ok(trace)
}
