use serde::{Deserialize, Serialize};

use crate::data::{ImageStore, RatingsDataset};
use crate::error::{Error, Result};
use crate::factorization::{Checkpoint, ColdInputs};

/// `sqrt(sum (actual - predicted)^2 / count)` over `(predicted, actual)` pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("rmse of an empty list".into()));
    }
    let sse: f64 = pairs.iter().map(|(p, a)| (a - p) * (a - p)).sum();
    Ok((sse / pairs.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// RMSE over every test pair.
    pub rmse: f64,
    /// Pairs whose user and item both had training ratings.
    pub rmse_warm: Option<f64>,
    /// Pairs involving an unseen user or item.
    pub rmse_cold: Option<f64>,
    pub n_pairs: usize,
    pub n_warm: usize,
    pub n_cold: usize,
    /// Cold pairs the model could not score, predicted by the training mean.
    pub n_fallback: usize,
    pub mean_residual: f64,
    pub max_abs_residual: f64,
    /// `(predicted, actual)` in test order.
    #[serde(skip)]
    pub pairs: Vec<(f64, f64)>,
}

/// Scores `test` with the checkpoint. Cold items are encoded from `images`
/// when the model has an item encoder; anything else that cannot be scored
/// falls back to the training mean.
pub fn evaluate(
    ckpt: &Checkpoint,
    test: &RatingsDataset,
    images: Option<&ImageStore>,
) -> Result<EvalReport> {
    if test.num_users() != ckpt.num_users() || test.num_items() != ckpt.num_items() {
        return Err(Error::DimensionMismatch(format!(
            "test set is {}x{}, checkpoint {}x{}",
            test.num_users(),
            test.num_items(),
            ckpt.num_users(),
            ckpt.num_items()
        )));
    }
    if test.is_empty() {
        return Err(Error::EmptyDataset("test set has no ratings".into()));
    }
    let item_images = images.map(|s| s.aligned(test));

    let mut pairs = Vec::with_capacity(test.len());
    let mut warm = Vec::new();
    let mut cold = Vec::new();
    let mut n_fallback = 0;
    for r in test.ratings() {
        let is_cold = ckpt.is_cold_user(r.user) || ckpt.is_cold_item(r.item);
        let inputs = ColdInputs {
            item_image: item_images
                .as_ref()
                .and_then(|imgs| imgs[r.item].as_deref()),
            user_images: None,
        };
        let pred = match ckpt.predict_with(r.user, r.item, &inputs) {
            Ok(p) => p,
            Err(Error::ColdWithoutImage(_)) => {
                n_fallback += 1;
                ckpt.train_mean
            }
            Err(e) => return Err(e),
        };
        if !pred.is_finite() {
            return Err(Error::NonFinite(format!(
                "prediction for ({}, {}) is {pred}",
                r.user, r.item
            )));
        }
        pairs.push((pred, r.value));
        if is_cold {
            cold.push((pred, r.value));
        } else {
            warm.push((pred, r.value));
        }
    }
    let residuals = pairs.iter().map(|(p, a)| a - p);
    let mean_residual = residuals.clone().sum::<f64>() / pairs.len() as f64;
    let max_abs_residual = residuals.fold(0.0, |m: f64, e| m.max(e.abs()));
    Ok(EvalReport {
        rmse: rmse(&pairs)?,
        rmse_warm: rmse(&warm).ok(),
        rmse_cold: rmse(&cold).ok(),
        n_pairs: pairs.len(),
        n_warm: warm.len(),
        n_cold: cold.len(),
        n_fallback,
        mean_residual,
        max_abs_residual,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_values() {
        assert_eq!(rmse(&[(1.0, 1.0), (2.5, 2.5)]).unwrap(), 0.0);
        assert_eq!(rmse(&[(3.0, 4.0)]).unwrap(), 1.0);
        let r = rmse(&[(1.0, 2.0), (3.0, 5.0)]).unwrap();
        assert!((r - (2.5f64).sqrt()).abs() < 1e-15);
        assert!((r - 1.5811).abs() < 1e-4);
        assert!(rmse(&[]).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant_and_homogeneous(
            pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40),
            c in -4.0f64..4.0,
            rot in 0usize..40,
        ) {
            let base = rmse(&pairs).unwrap();
            let mut shuffled = pairs.clone();
            let len = shuffled.len();
            shuffled.rotate_left(rot % len);
            shuffled.reverse();
            prop_assert!((rmse(&shuffled).unwrap() - base).abs() <= 1e-12 * (1.0 + base));
            let scaled: Vec<_> = pairs.iter().map(|&(p, a)| (c * p, c * a)).collect();
            prop_assert!((rmse(&scaled).unwrap() - c.abs() * base).abs() <= 1e-12 * (1.0 + base));
        }
    }
}
