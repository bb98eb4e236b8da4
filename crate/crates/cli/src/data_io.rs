//! Dataset loading for the commands: CSV or packed ratings, item images.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use bimf::data::{
    filter_dataset, load_available_images, load_images, load_ratings, read_packed, ImageStore,
    Rating, RatingScale, RatingsDataset,
};
use bimf::factorization::Checkpoint;

use crate::config::RunConfig;
use crate::failure::Failure;

pub fn is_packed(path: &Path) -> bool {
    let mut magic = [0u8; 4];
    std::fs::File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .is_ok()
        && &magic == b"BIDS"
}

/// Ratings and images of a run. A CSV is filtered like `ingest` when images
/// are given; a packed dataset is taken as is.
pub fn load_run_data(cfg: &RunConfig) -> Result<(RatingsDataset, Option<ImageStore>), Failure> {
    let size = cfg.image_size();
    if is_packed(&cfg.ratings) {
        let ds = read_packed(&cfg.ratings)?;
        let images = match &cfg.images {
            Some(dir) => Some(load_images(dir, &ds, size)?),
            None => None,
        };
        return Ok((ds, images));
    }
    let raw = load_ratings(&cfg.ratings, cfg.rating_scale)?;
    match &cfg.images {
        Some(dir) => {
            let store = load_available_images(dir, &raw, size)?;
            let ds = filter_dataset(&raw, &store, cfg.min_ratings)?;
            Ok((ds, Some(store)))
        }
        None => Ok((raw, None)),
    }
}

/// Loads test ratings in the checkpoint's index space. CSV rows are mapped
/// through the checkpoint's ids; a packed file must carry the same ids.
pub fn load_for_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<RatingsDataset, Failure> {
    if is_packed(path) {
        let ds = read_packed(path)?;
        if ds.user_ids() != ckpt.user_ids.as_slice() || ds.item_ids() != ckpt.item_ids.as_slice() {
            return Err(Failure::input(format!(
                "{} was not split from the checkpoint's dataset",
                path.display()
            )));
        }
        return Ok(ds);
    }
    let raw = load_ratings(path, ckpt.scale)?;
    let users: HashMap<&str, usize> =
        ckpt.user_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let items: HashMap<&str, usize> =
        ckpt.item_ids.iter().enumerate().map(|(j, s)| (s.as_str(), j)).collect();
    let mut ratings = Vec::with_capacity(raw.len());
    for r in raw.ratings() {
        let uid = &raw.user_ids()[r.user];
        let iid = &raw.item_ids()[r.item];
        let user = *users
            .get(uid.as_str())
            .ok_or_else(|| Failure::input(format!("user {uid:?} is unknown to the checkpoint")))?;
        let item = *items
            .get(iid.as_str())
            .ok_or_else(|| Failure::input(format!("item {iid:?} is unknown to the checkpoint")))?;
        ratings.push(Rating { user, item, value: r.value });
    }
    Ok(RatingsDataset::new(ckpt.user_ids.clone(), ckpt.item_ids.clone(), ratings, ckpt.scale)?)
}

/// Images for the checkpoint's items, sized for its item encoder. `None`
/// when the model has no item encoder.
pub fn checkpoint_images(dir: &Path, ckpt: &Checkpoint) -> Result<Option<ImageStore>, Failure> {
    let Some(net) = &ckpt.item_net else { return Ok(None) };
    let shape = net.encoder.architecture().input;
    let ds = RatingsDataset::new(
        ckpt.user_ids.clone(),
        ckpt.item_ids.clone(),
        vec![],
        RatingScale::default(),
    )?;
    Ok(Some(load_available_images(dir, &ds, (shape.height, shape.width))?))
}
