use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::images::ImageStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl RatingScale {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::InvalidConfig(format!(
                "rating scale [{min}, {max}] must be finite with min < max"
            )));
        }
        Ok(RatingScale { min, max })
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale { min: 1.0, max: 5.0 }
    }
}

/// One observed rating, addressed by 0-based contiguous indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

/// Sparse user-item ratings over a fixed index space.
///
/// `user_ids[i]` and `item_ids[j]` map the contiguous indices back to the
/// external identifiers. Splits share the index space of their parent, so a
/// dataset may contain users or items with no ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsDataset {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    ratings: Vec<Rating>,
    scale: RatingScale,
}

impl RatingsDataset {
    pub fn new(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        ratings: Vec<Rating>,
        scale: RatingScale,
    ) -> Result<Self> {
        let (n, m) = (user_ids.len(), item_ids.len());
        let mut seen = std::collections::HashSet::with_capacity(ratings.len());
        for r in &ratings {
            if r.user >= n || r.item >= m {
                return Err(Error::InvalidInput(format!(
                    "rating ({}, {}) outside index space {n}x{m}",
                    r.user, r.item
                )));
            }
            if !scale.contains(r.value) {
                return Err(Error::RatingOutOfScale {
                    value: r.value,
                    min: scale.min,
                    max: scale.max,
                    line: 0,
                });
            }
            if !seen.insert((r.user, r.item)) {
                return Err(Error::DuplicateRating {
                    user: user_ids[r.user].clone(),
                    item: item_ids[r.item].clone(),
                    line: 0,
                });
            }
        }
        Ok(RatingsDataset {
            user_ids,
            item_ids,
            ratings,
            scale,
        })
    }

    /// Builds a dataset whose external ids are the decimal indices.
    pub fn from_triplets(
        num_users: usize,
        num_items: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        scale: RatingScale,
    ) -> Result<Self> {
        let ratings = triplets
            .into_iter()
            .map(|(user, item, value)| Rating { user, item, value })
            .collect();
        Self::new(
            (0..num_users).map(|i| i.to_string()).collect(),
            (0..num_items).map(|j| j.to_string()).collect(),
            ratings,
            scale,
        )
    }

    /// A dataset over the same index space holding a different rating subset.
    pub(crate) fn with_ratings(&self, ratings: Vec<Rating>) -> Self {
        RatingsDataset {
            user_ids: self.user_ids.clone(),
            item_ids: self.item_ids.clone(),
            ratings,
            scale: self.scale,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    /// Fraction of the N x M matrix that is observed.
    pub fn density(&self) -> f64 {
        let cells = self.num_users() as f64 * self.num_items() as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.len() as f64 / cells
        }
    }

    pub fn mean_rating(&self) -> Option<f64> {
        if self.ratings.is_empty() {
            return None;
        }
        Some(self.ratings.iter().map(|r| r.value).sum::<f64>() / self.len() as f64)
    }

    pub fn user_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.num_users()];
        for r in &self.ratings {
            counts[r.user] += 1;
        }
        counts
    }

    pub fn item_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.num_items()];
        for r in &self.ratings {
            counts[r.item] += 1;
        }
        counts
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            users: self.num_users(),
            items: self.num_items(),
            ratings: self.len(),
            density: self.density(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub density: f64,
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>8} {:>8} {:>10} {:>10}", "Users", "Items", "Ratings", "Density")?;
        write!(
            f,
            "{:>8} {:>8} {:>10} {:>9.4}%",
            self.users,
            self.items,
            self.ratings,
            self.density * 100.0
        )
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    user_id: String,
    item_id: String,
    rating: f64,
}

/// Reads a headered `user_id,item_id,rating` CSV file.
///
/// Indices are assigned in order of first appearance.
pub fn load_ratings(path: impl AsRef<Path>, scale: RatingScale) -> Result<RatingsDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ratings(file, scale)
}

pub(crate) fn read_ratings(reader: impl std::io::Read, scale: RatingScale) -> Result<RatingsDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut ratings = Vec::new();
    let mut seen = std::collections::HashSet::new();

    for row in rdr.deserialize::<CsvRow>() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        // header is line 1
        let line = ratings.len() as u64 + 2;
        if !row.rating.is_finite() || !scale.contains(row.rating) {
            return Err(Error::RatingOutOfScale {
                value: row.rating,
                min: scale.min,
                max: scale.max,
                line,
            });
        }
        let user = *user_index.entry(row.user_id.clone()).or_insert_with(|| {
            user_ids.push(row.user_id.clone());
            user_ids.len() - 1
        });
        let item = *item_index.entry(row.item_id.clone()).or_insert_with(|| {
            item_ids.push(row.item_id.clone());
            item_ids.len() - 1
        });
        if !seen.insert((user, item)) {
            return Err(Error::DuplicateRating {
                user: row.user_id,
                item: row.item_id,
                line,
            });
        }
        ratings.push(Rating {
            user,
            item,
            value: row.rating,
        });
    }
    if ratings.is_empty() {
        return Err(Error::EmptyDataset("no ratings in file".into()));
    }
    Ok(RatingsDataset {
        user_ids,
        item_ids,
        ratings,
        scale,
    })
}

/// Drops imageless items and users with fewer than `min_ratings` ratings,
/// repeating until neither rule removes anything, then re-compacts indices.
pub fn filter_dataset(
    ds: &RatingsDataset,
    images: &ImageStore,
    min_ratings: usize,
) -> Result<RatingsDataset> {
    if min_ratings == 0 {
        return Err(Error::InvalidConfig("min_ratings must be at least 1".into()));
    }
    let imaged: Vec<bool> = ds.item_ids.iter().map(|id| images.contains(id)).collect();
    let mut alive: Vec<Rating> = ds.ratings.clone();
    loop {
        let before = alive.len();
        alive.retain(|r| imaged[r.item]);
        let mut per_user = vec![0usize; ds.num_users()];
        for r in &alive {
            per_user[r.user] += 1;
        }
        alive.retain(|r| per_user[r.user] >= min_ratings);
        if alive.len() == before {
            break;
        }
    }
    if alive.is_empty() {
        return Err(Error::EmptyDataset("every rating was filtered away".into()));
    }

    let mut user_map = vec![usize::MAX; ds.num_users()];
    let mut item_map = vec![usize::MAX; ds.num_items()];
    for r in &alive {
        user_map[r.user] = 0;
        item_map[r.item] = 0;
    }
    let user_ids = compact(&mut user_map, &ds.user_ids);
    let item_ids = compact(&mut item_map, &ds.item_ids);
    let ratings = alive
        .into_iter()
        .map(|r| Rating {
            user: user_map[r.user],
            item: item_map[r.item],
            value: r.value,
        })
        .collect();
    Ok(RatingsDataset {
        user_ids,
        item_ids,
        ratings,
        scale: ds.scale,
    })
}

// Entries marked 0 are kept and renumbered in their original order.
fn compact(map: &mut [usize], ids: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for (old, slot) in map.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = out.len();
            out.push(ids[old].clone());
        }
    }
    out
}
