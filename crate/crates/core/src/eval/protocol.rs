use serde::{Deserialize, Serialize};

use crate::data::{
    build_user_bundles, split_cold_items, split_dataset, ImageStore, RatingsDataset, SplitSpec,
    UserImageBundle,
};
use crate::error::Result;
use crate::factorization::TrainingData;

/// Splitting and bundling choices shared by grid search, comparison and sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    /// Share of rated items whose ratings all go to the test split.
    pub cold_item_fraction: f64,
    pub images_per_user: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            cold_item_fraction: 0.0,
            images_per_user: 4,
        }
    }
}

/// Train/validation/test parts over one index space plus user bundles drawn
/// from the training part.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub train: RatingsDataset,
    pub validation: RatingsDataset,
    pub test: RatingsDataset,
    pub bundles: Vec<Option<UserImageBundle>>,
    pub images_per_user: usize,
}

impl PreparedSplit {
    pub fn training_data<'a>(&'a self, images: Option<&ImageStore>) -> Result<TrainingData<'a>> {
        match images {
            Some(store) => TrainingData::with_images(&self.train, store, self.bundles.clone()),
            None => Ok(TrainingData::ratings_only(&self.train)),
        }
    }
}

pub fn prepare_split(
    ds: &RatingsDataset,
    images: Option<&ImageStore>,
    spec: &SplitSpec,
    protocol: &Protocol,
) -> Result<PreparedSplit> {
    let (train, validation, test) = if protocol.cold_item_fraction > 0.0 {
        split_cold_items(ds, spec, protocol.cold_item_fraction)?
    } else {
        split_dataset(ds, spec)?
    };
    let bundles = match images {
        Some(store) => build_user_bundles(&train, store, protocol.images_per_user, spec.seed)?,
        None => vec![None; train.num_users()],
    };
    Ok(PreparedSplit {
        train,
        validation,
        test,
        bundles,
        images_per_user: protocol.images_per_user,
    })
}
