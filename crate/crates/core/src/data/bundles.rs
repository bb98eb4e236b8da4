use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::images::ImageStore;
use super::ratings::RatingsDataset;
use crate::error::{Error, Result};

/// A fixed-length list of item-image references feeding the user-side encoder.
///
/// Slots beyond the user's distinct imaged items repeat the sampled ones in
/// order; `real[s]` is false for those padded slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserImageBundle {
    pub user: usize,
    pub items: Vec<usize>,
    pub real: Vec<bool>,
}

impl UserImageBundle {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Samples up to `slots` distinct imaged items from each user's training
/// ratings. Users without training ratings get `None`.
pub fn build_user_bundles(
    train: &RatingsDataset,
    images: &ImageStore,
    slots: usize,
    seed: u64,
) -> Result<Vec<Option<UserImageBundle>>> {
    if slots == 0 {
        return Err(Error::InvalidConfig("images per user must be at least 1".into()));
    }
    let mut rated: Vec<Vec<usize>> = vec![Vec::new(); train.num_users()];
    for r in train.ratings() {
        rated[r.user].push(r.item);
    }
    let item_ids = train.item_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rated
        .into_iter()
        .enumerate()
        .map(|(user, mut items)| {
            if items.is_empty() {
                return Ok(None);
            }
            items.sort_unstable();
            items.retain(|&j| images.contains(&item_ids[j]));
            if items.is_empty() {
                return Err(Error::MissingBundle(train.user_ids()[user].clone()));
            }
            let take = slots.min(items.len());
            let (chosen, _) = items.partial_shuffle(&mut rng, take);
            let chosen = chosen.to_vec();
            Ok(Some(UserImageBundle {
                user,
                items: (0..slots).map(|s| chosen[s % take]).collect(),
                real: (0..slots).map(|s| s < take).collect(),
            }))
        })
        .collect()
}
