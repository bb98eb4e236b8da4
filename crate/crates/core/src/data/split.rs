use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ratings::{Rating, RatingsDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            validation_fraction: 0.1,
            test_fraction: 0.1,
            seed: 1,
        }
    }
}

impl SplitSpec {
    pub fn new(train: f64, validation: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec {
            train_fraction: train,
            validation_fraction: validation,
            test_fraction: test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `train` for training, the remainder shared evenly by validation and test.
    pub fn with_train_fraction(train: f64, seed: u64) -> Result<Self> {
        let rest = (1.0 - train) / 2.0;
        Self::new(train, rest, 1.0 - train - rest, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let f = [self.train_fraction, self.validation_fraction, self.test_fraction];
        if f.iter().any(|x| !x.is_finite() || *x < 0.0) || self.train_fraction <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "split fractions must be non-negative with a positive train share, got {f:?}"
            )));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "split fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Seeded random partition of the rating triplets. All three parts share the
/// input's index space.
pub fn split_dataset(
    ds: &RatingsDataset,
    spec: &SplitSpec,
) -> Result<(RatingsDataset, RatingsDataset, RatingsDataset)> {
    spec.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset("cannot split an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let parts = partition(ds.ratings(), spec, &mut rng);
    Ok((
        ds.with_ratings(parts.0),
        ds.with_ratings(parts.1),
        ds.with_ratings(parts.2),
    ))
}

/// Holds out a random `cold_item_fraction` of the rated items entirely: all of
/// their ratings go to the test part. The remaining ratings are split by `spec`.
pub fn split_cold_items(
    ds: &RatingsDataset,
    spec: &SplitSpec,
    cold_item_fraction: f64,
) -> Result<(RatingsDataset, RatingsDataset, RatingsDataset)> {
    spec.validate()?;
    if !(0.0..1.0).contains(&cold_item_fraction) {
        return Err(Error::InvalidConfig(format!(
            "cold item fraction {cold_item_fraction} must lie in [0, 1)"
        )));
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset("cannot split an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let counts = ds.item_counts();
    let mut rated: Vec<usize> = (0..ds.num_items()).filter(|&j| counts[j] > 0).collect();
    rated.shuffle(&mut rng);
    let n_cold = (rated.len() as f64 * cold_item_fraction).round() as usize;
    let mut cold = vec![false; ds.num_items()];
    for &j in &rated[..n_cold] {
        cold[j] = true;
    }
    let (cold_ratings, warm): (Vec<Rating>, Vec<Rating>) =
        ds.ratings().iter().partition(|r| cold[r.item]);
    let (train, validation, mut test) = partition(&warm, spec, &mut rng);
    test.extend(cold_ratings);
    test.sort_by_key(|r| (r.user, r.item));
    Ok((
        ds.with_ratings(train),
        ds.with_ratings(validation),
        ds.with_ratings(test),
    ))
}

fn partition(
    ratings: &[Rating],
    spec: &SplitSpec,
    rng: &mut ChaCha8Rng,
) -> (Vec<Rating>, Vec<Rating>, Vec<Rating>) {
    let n = ratings.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = ((n as f64 * spec.train_fraction).round() as usize).min(n);
    let n_val = ((n as f64 * spec.validation_fraction).round() as usize).min(n - n_train);

    let pick = |idx: &[usize]| {
        let mut v: Vec<Rating> = idx.iter().map(|&t| ratings[t]).collect();
        v.sort_by_key(|r| (r.user, r.item));
        v
    };
    let train = pick(&order[..n_train]);
    let validation = pick(&order[n_train..n_train + n_val]);
    let test = pick(&order[n_train + n_val..]);

    for (name, frac, part) in [
        ("validation", spec.validation_fraction, &validation),
        ("test", spec.test_fraction, &test),
    ] {
        if frac > 0.0 && part.is_empty() && n >= 10 {
            log::warn!("{name} split received no ratings (fraction {frac}, {n} ratings)");
        }
    }
    (train, validation, test)
}
