use nalgebra::{Cholesky, DMatrix, DVector};

use super::latent::LatentMatrix;
use crate::data::SparseRatings;
use crate::error::{Error, Result};
use crate::parallel;

/// Exact minimizer of the joint objective over every user factor with V and
/// the prior means fixed:
/// `u_i = (V I_i V^T + lambda_u I)^-1 (V R_i + lambda_u mean_i)`.
pub fn update_user_factors(
    v: &LatentMatrix,
    train: &SparseRatings,
    user_means: Option<&LatentMatrix>,
    lambda_u: f64,
) -> Result<LatentMatrix> {
    if v.cols() != train.num_items() {
        return Err(Error::DimensionMismatch(format!(
            "V has {} columns for {} items",
            v.cols(),
            train.num_items()
        )));
    }
    solve_block(v, train.num_users(), |i| train.user_row(i), user_means, lambda_u)
}

/// Mirror of [`update_user_factors`] for the item side.
pub fn update_item_factors(
    u: &LatentMatrix,
    train: &SparseRatings,
    item_means: Option<&LatentMatrix>,
    lambda_v: f64,
) -> Result<LatentMatrix> {
    if u.cols() != train.num_users() {
        return Err(Error::DimensionMismatch(format!(
            "U has {} columns for {} users",
            u.cols(),
            train.num_users()
        )));
    }
    solve_block(u, train.num_items(), |j| train.item_col(j), item_means, lambda_v)
}

fn solve_block<'a, F>(
    other: &LatentMatrix,
    n: usize,
    entries: F,
    means: Option<&LatentMatrix>,
    lambda: f64,
) -> Result<LatentMatrix>
where
    F: Fn(usize) -> (&'a [usize], &'a [f64]) + Sync + Send,
{
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::InvalidConfig(format!("lambda must be positive, got {lambda}")));
    }
    let k = other.dim();
    if let Some(m) = means {
        if (m.dim(), m.cols()) != (k, n) {
            return Err(Error::DimensionMismatch(format!(
                "prior means are {}x{}, expected {k}x{n}",
                m.dim(),
                m.cols()
            )));
        }
    }
    let columns = parallel::map_indexed(n, |i| -> Result<Vec<f64>> {
        let (idx, values) = entries(i);
        let mean = means.map(|m| m.col(i));
        if idx.is_empty() {
            // (lambda I)^-1 (lambda mean) = mean
            return Ok(mean.map_or_else(|| vec![0.0; k], <[f64]>::to_vec));
        }
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut b = DVector::<f64>::zeros(k);
        if let Some(m) = mean {
            for (bd, md) in b.iter_mut().zip(m) {
                *bd = lambda * md;
            }
        }
        for (&j, &r) in idx.iter().zip(values) {
            let x = other.col(j);
            for c in 0..k {
                let xc = x[c];
                b[c] += r * xc;
                for d in c..k {
                    a[(d, c)] += x[d] * xc;
                }
            }
        }
        for c in 0..k {
            a[(c, c)] += lambda;
            for d in c + 1..k {
                a[(c, d)] = a[(d, c)];
            }
        }
        let chol = Cholesky::new(a).ok_or_else(|| {
            Error::Factorization(format!("system for column {i} is not positive definite"))
        })?;
        Ok(chol.solve(&b).as_slice().to_vec())
    });
    let mut data = Vec::with_capacity(k * n);
    for c in columns {
        data.extend(c?);
    }
    let out = LatentMatrix::from_vec(k, n, data)?;
    if !out.is_finite() {
        return Err(Error::NonFinite("factor update produced non-finite values".into()));
    }
    Ok(out)
}
