//! RMSE evaluation, hyperparameter grid search, model comparison tables and
//! the image-count sweep.

mod compare;
mod grid;
mod metrics;
mod protocol;
mod sweep;

pub use compare::{compare_models, ComparisonRow, ComparisonTable, Improvement};
pub use grid::{grid_search, GridCell, GridResult, GridSpec};
pub use metrics::{evaluate, rmse, EvalReport};
pub use protocol::{prepare_split, PreparedSplit, Protocol};
pub use sweep::{image_count_sweep, SweepPoint};
