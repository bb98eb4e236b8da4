use serde::{Deserialize, Serialize};

use super::metrics::evaluate;
use super::protocol::{prepare_split, Protocol};
use crate::data::{ImageStore, RatingsDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::factorization::{train, Hyperparams, ModelKind};
use crate::network::Architecture;
use crate::parallel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub images_per_user: usize,
    pub rmses: Vec<f64>,
    pub mean: f64,
    /// Sample variance; zero for a single repeat.
    pub variance: f64,
}

/// Test RMSE of Bi-ISFMF per bundle size over seeded repeats. Repeat `r` uses
/// seed `split.seed + r` for the split, the bundles and the model, so bundle
/// sizes are compared on identical splits.
#[allow(clippy::too_many_arguments)]
pub fn image_count_sweep(
    ds: &RatingsDataset,
    images: &ImageStore,
    image_counts: &[usize],
    repeats: usize,
    split: &SplitSpec,
    protocol: &Protocol,
    hyper: &Hyperparams,
    arch: &Architecture,
) -> Result<Vec<SweepPoint>> {
    if image_counts.is_empty() || repeats == 0 {
        return Err(Error::InvalidConfig("sweep needs image counts and repeats".into()));
    }
    let jobs: Vec<(usize, usize)> = image_counts
        .iter()
        .flat_map(|&p| (0..repeats).map(move |r| (p, r)))
        .collect();
    let results = parallel::map_slice(&jobs, |&(p, r)| -> Result<f64> {
        let seed = split.seed.wrapping_add(r as u64);
        let spec = SplitSpec { seed, ..*split };
        let proto = Protocol {
            images_per_user: p,
            ..*protocol
        };
        let prepared = prepare_split(ds, Some(images), &spec, &proto)?;
        let h = Hyperparams {
            seed,
            ..hyper.clone()
        };
        let data = prepared.training_data(Some(images))?;
        let (ckpt, _) = train(ModelKind::BiIsfmf, &data, &h, arch, p)?;
        Ok(evaluate(&ckpt, &prepared.test, Some(images))?.rmse)
    });
    let mut results = results.into_iter();
    image_counts
        .iter()
        .map(|&p| {
            let rmses = results.by_ref().take(repeats).collect::<Result<Vec<f64>>>()?;
            let n = rmses.len() as f64;
            let mean = rmses.iter().sum::<f64>() / n;
            let variance = if rmses.len() < 2 {
                0.0
            } else {
                rmses.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
            };
            Ok(SweepPoint {
                images_per_user: p,
                rmses,
                mean,
                variance,
            })
        })
        .collect()
}
