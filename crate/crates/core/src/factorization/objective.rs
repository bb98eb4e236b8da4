use serde::{Deserialize, Serialize};

use super::hyper::Hyperparams;
use super::latent::{dot, LatentMatrix};
use crate::data::SparseRatings;
use crate::error::{Error, Result};

/// The joint objective split into its terms (unscaled sums).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `sum (r_ij - u_i.v_j)^2 / 2` over observed entries.
    pub fit: f64,
    /// `sum ||u_i - mean_i||^2`
    pub user_prior: f64,
    /// `sum ||v_j - mean_j||^2`
    pub item_prior: f64,
    /// `||W_user||^2`
    pub user_weights: f64,
    /// `||W_item||^2`
    pub item_weights: f64,
    pub total: f64,
}

fn check_dims(u: &LatentMatrix, v: &LatentMatrix, train: &SparseRatings) -> Result<()> {
    if u.dim() != v.dim() || u.cols() != train.num_users() || v.cols() != train.num_items() {
        return Err(Error::DimensionMismatch(format!(
            "U is {}x{}, V is {}x{}, ratings are {}x{}",
            u.dim(),
            u.cols(),
            v.dim(),
            v.cols(),
            train.num_users(),
            train.num_items()
        )));
    }
    Ok(())
}

fn fit_term(u: &LatentMatrix, v: &LatentMatrix, train: &SparseRatings) -> f64 {
    let mut fit = 0.0;
    for i in 0..train.num_users() {
        let ui = u.col(i);
        let (items, values) = train.user_row(i);
        for (&j, &r) in items.iter().zip(values) {
            let e = r - dot(ui, v.col(j));
            fit += e * e;
        }
    }
    0.5 * fit
}

fn prior_term(x: &LatentMatrix, mean: Option<&LatentMatrix>) -> f64 {
    let mut s = 0.0;
    for c in 0..x.cols() {
        let col = x.col(c);
        match mean {
            Some(m) => {
                for (a, b) in col.iter().zip(m.col(c)) {
                    s += (a - b) * (a - b);
                }
            }
            None => {
                for a in col {
                    s += a * a;
                }
            }
        }
    }
    s
}

/// `sum I_ij/2 (r_ij - u_i.v_j)^2 + lambda_u/2 sum ||u_i||^2 + lambda_v/2 sum ||v_j||^2`.
pub fn pmf_loss(
    u: &LatentMatrix,
    v: &LatentMatrix,
    train: &SparseRatings,
    lambda_u: f64,
    lambda_v: f64,
) -> Result<f64> {
    check_dims(u, v, train)?;
    Ok(fit_term(u, v, train)
        + 0.5 * lambda_u * prior_term(u, None)
        + 0.5 * lambda_v * prior_term(v, None))
}

/// Joint MAP objective given precomputed prior means (`None` = zero mean) and
/// squared weight norms of the two encoders.
#[allow(clippy::too_many_arguments)]
pub fn joint_loss_terms(
    u: &LatentMatrix,
    v: &LatentMatrix,
    train: &SparseRatings,
    user_means: Option<&LatentMatrix>,
    item_means: Option<&LatentMatrix>,
    user_weight_sq: f64,
    item_weight_sq: f64,
    hyper: &Hyperparams,
) -> Result<LossBreakdown> {
    check_dims(u, v, train)?;
    for (m, x, side) in [(user_means, u, "user"), (item_means, v, "item")] {
        if let Some(m) = m {
            if (m.dim(), m.cols()) != (x.dim(), x.cols()) {
                return Err(Error::DimensionMismatch(format!(
                    "{side} prior means are {}x{}, factors {}x{}",
                    m.dim(),
                    m.cols(),
                    x.dim(),
                    x.cols()
                )));
            }
        }
    }
    let fit = fit_term(u, v, train);
    let user_prior = prior_term(u, user_means);
    let item_prior = prior_term(v, item_means);
    let total = fit
        + 0.5 * hyper.lambda_u * user_prior
        + 0.5 * hyper.lambda_v * item_prior
        + 0.5 * hyper.lambda_w_user * user_weight_sq
        + 0.5 * hyper.lambda_w_item * item_weight_sq;
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("joint loss evaluated to {total}")));
    }
    Ok(LossBreakdown {
        fit,
        user_prior,
        item_prior,
        user_weights: user_weight_sq,
        item_weights: item_weight_sq,
        total,
    })
}
