use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{LatentNetwork, ParamGrads};
use super::train::backward;
use crate::data::ImageTensor;
use crate::error::{Error, Result};

/// Central-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-4;

/// Gradients smaller than this are compared in absolute rather than relative
/// terms: the finite-difference quotient carries rounding noise of roughly
/// `eps * |loss| / h`.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Weights compared against central differences.
    pub checked: usize,
    /// Candidates passed over because `w - h` and `w + h` fall in different
    /// ReLU or max-pool regimes, where the difference quotient is no oracle.
    pub skipped_kinks: usize,
}

/// Largest relative error between [`backward`] and central differences over
/// up to `per_tensor` seeded weights from every parameter tensor.
#[allow(clippy::too_many_arguments)]
pub fn grad_check(
    net: &LatentNetwork,
    inputs: &[Vec<&ImageTensor>],
    targets: &[Vec<f64>],
    lambda_target: f64,
    lambda_weight: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<f64> {
    let analytic = backward(net, inputs, targets, lambda_target, lambda_weight)?;
    let report = grad_check_report(
        net,
        inputs,
        targets,
        lambda_target,
        lambda_weight,
        &analytic,
        per_tensor,
        seed,
    )?;
    Ok(report.max_rel_error)
}

/// As [`grad_check`], with a caller-supplied gradient.
#[allow(clippy::too_many_arguments)]
pub fn grad_check_against(
    net: &LatentNetwork,
    inputs: &[Vec<&ImageTensor>],
    targets: &[Vec<f64>],
    lambda_target: f64,
    lambda_weight: f64,
    analytic: &ParamGrads,
    per_tensor: usize,
    seed: u64,
) -> Result<f64> {
    grad_check_report(
        net,
        inputs,
        targets,
        lambda_target,
        lambda_weight,
        analytic,
        per_tensor,
        seed,
    )
    .map(|r| r.max_rel_error)
}

fn loss_and_pattern(
    net: &LatentNetwork,
    inputs: &[Vec<&ImageTensor>],
    targets: &[Vec<f64>],
    lambda_target: f64,
    lambda_weight: f64,
) -> Result<(f64, Vec<usize>)> {
    let mut fit = 0.0;
    let mut pattern = Vec::new();
    for (imgs, target) in inputs.iter().zip(targets) {
        let (out, p) = net.forward_pattern(imgs)?;
        fit += out
            .iter()
            .zip(target)
            .map(|(o, t)| (t - o) * (t - o))
            .sum::<f64>();
        pattern.extend(p);
    }
    Ok((
        0.5 * lambda_target * fit + 0.5 * lambda_weight * net.weight_sq_norm(),
        pattern,
    ))
}

/// Full result of a gradient check against `analytic`.
#[allow(clippy::too_many_arguments)]
pub fn grad_check_report(
    net: &LatentNetwork,
    inputs: &[Vec<&ImageTensor>],
    targets: &[Vec<f64>],
    lambda_target: f64,
    lambda_weight: f64,
    analytic: &ParamGrads,
    per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if inputs.len() != targets.len() || analytic.tensors.len() != net.num_tensors() {
        return Err(Error::DimensionMismatch("gradient check inputs disagree".into()));
    }
    let (_, base) = loss_and_pattern(net, inputs, targets, lambda_target, lambda_weight)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    for t in 0..net.num_tensors() {
        let mut order: Vec<usize> = (0..net.tensor(t).len()).collect();
        order.shuffle(&mut rng);
        let mut done = 0;
        for idx in order {
            if done == per_tensor {
                break;
            }
            let orig = net.tensor(t)[idx];
            probe.tensor_mut(t)[idx] = orig + GRAD_CHECK_STEP;
            let (plus, p_plus) =
                loss_and_pattern(&probe, inputs, targets, lambda_target, lambda_weight)?;
            probe.tensor_mut(t)[idx] = orig - GRAD_CHECK_STEP;
            let (minus, p_minus) =
                loss_and_pattern(&probe, inputs, targets, lambda_target, lambda_weight)?;
            probe.tensor_mut(t)[idx] = orig;
            if p_plus != base || p_minus != base {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
            let a = analytic.tensors[t][idx];
            let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            report.max_rel_error = report.max_rel_error.max((a - numeric).abs() / denom);
            report.checked += 1;
            done += 1;
        }
    }
    Ok(report)
}
