//! Rating datasets, item images, per-user image bundles and synthetic data.

mod bundles;
mod images;
mod packed;
mod ratings;
mod sparse;
mod split;
pub mod synthetic;

pub use bundles::{build_user_bundles, UserImageBundle};
pub use images::{load_available_images, load_images, resize_bilinear, ImageStore, ImageTensor};
pub use packed::{read_packed, sidecar_path, write_packed};
pub use ratings::{filter_dataset, load_ratings, DatasetStats, Rating, RatingScale, RatingsDataset};
pub use sparse::SparseRatings;
pub use split::{split_cold_items, split_dataset, SplitSpec};
pub use synthetic::{generate_synthetic, GroundTruth, SyntheticConfig, SyntheticLayout};
