//! Planted low-rank ratings with item images that encode the item factors.
//!
//! Each item factor coordinate `v*[d]` in [-1, 1] is drawn as a filled square
//! at a fixed position (cell `d` of a near-square grid), in channel `d % 3`,
//! with intensity `(v*[d] + 1) / 2` quantized to 8 bits. The encoding is
//! inverted by [`SyntheticLayout::decode`].
//!
//! User factors mix a "taste" component, the scaled sum of the factors of the
//! items the user rated, with independent Gaussian noise. The taste share
//! makes the user-side image bundles informative about `u*`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::images::{ImageStore, ImageTensor};
use super::ratings::{Rating, RatingScale, RatingsDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub latent_dim: usize,
    pub observed_fraction: f64,
    pub noise_sigma: f64,
    pub scale: RatingScale,
    pub image_height: usize,
    pub image_width: usize,
    /// Share of each user factor explained by the items they rated, in [0, 1].
    pub user_taste: f64,
    /// Affine map from `u*.v*` to the rating scale; derived from the scale when absent.
    pub rating_gain: Option<f64>,
    pub rating_offset: Option<f64>,
    pub min_user_ratings: usize,
    pub max_retries: usize,
    /// Skip the clamp to the rating scale (diagnostics only).
    pub unclamped: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_users: 200,
            num_items: 150,
            latent_dim: 5,
            observed_fraction: 0.05,
            noise_sigma: 0.2,
            scale: RatingScale::default(),
            image_height: 60,
            image_width: 60,
            user_taste: 0.8,
            rating_gain: None,
            rating_offset: None,
            min_user_ratings: 2,
            max_retries: 100,
            unclamped: false,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_users < 2 {
            return bad("synthetic data needs at least 2 users");
        }
        if self.num_items < self.min_user_ratings.max(1) {
            return bad("fewer items than the minimum ratings per user");
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive");
        }
        if !(self.observed_fraction > 0.0 && self.observed_fraction <= 1.0) {
            return bad("observed_fraction must lie in (0, 1]");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.user_taste) {
            return bad("user_taste must lie in [0, 1]");
        }
        RatingScale::new(self.scale.min, self.scale.max)?;
        SyntheticLayout::new(self.latent_dim, self.image_height, self.image_width)?;
        Ok(())
    }

    pub fn gain(&self) -> f64 {
        self.rating_gain.unwrap_or_else(|| {
            // u*.v* has variance about k/3; map +-2 sd onto the scale.
            let sd = (self.latent_dim as f64 / 3.0).sqrt();
            (self.scale.max - self.scale.min) / (4.0 * sd)
        })
    }

    pub fn offset(&self) -> f64 {
        self.rating_offset
            .unwrap_or((self.scale.min + self.scale.max) / 2.0)
    }
}

/// Cell geometry of the factor-to-image encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticLayout {
    latent_dim: usize,
    height: usize,
    width: usize,
    grid_rows: usize,
    grid_cols: usize,
}

impl SyntheticLayout {
    pub fn new(latent_dim: usize, height: usize, width: usize) -> Result<Self> {
        let grid_cols = (latent_dim as f64).sqrt().ceil() as usize;
        let grid_rows = latent_dim.div_ceil(grid_cols);
        if height / grid_rows < 3 || width / grid_cols < 3 {
            return Err(Error::InvalidConfig(format!(
                "a {height}x{width} image cannot hold {latent_dim} factor cells"
            )));
        }
        Ok(SyntheticLayout {
            latent_dim,
            height,
            width,
            grid_rows,
            grid_cols,
        })
    }

    // (top, left, side) of the square for coordinate d
    fn square(&self, d: usize) -> (usize, usize, usize) {
        let (ch, cw) = (self.height / self.grid_rows, self.width / self.grid_cols);
        let side = (ch.min(cw) / 2).max(1);
        let (row, col) = (d / self.grid_cols, d % self.grid_cols);
        (row * ch + (ch - side) / 2, col * cw + (cw - side) / 2, side)
    }

    pub fn render(&self, factors: &[f64]) -> ImageTensor {
        assert_eq!(factors.len(), self.latent_dim);
        let (h, w) = (self.height, self.width);
        let mut pixels = vec![0.0; 3 * h * w];
        for (d, &v) in factors.iter().enumerate() {
            let level = (((v.clamp(-1.0, 1.0) + 1.0) / 2.0) * 255.0).round() / 255.0;
            let (top, left, side) = self.square(d);
            let c = d % 3;
            for y in top..top + side {
                for x in left..left + side {
                    pixels[(c * h + y) * w + x] = level;
                }
            }
        }
        ImageTensor::new(h, w, 3, pixels).expect("rendered image")
    }

    /// Recovers the factor vector from the centre pixel of each square.
    pub fn decode(&self, img: &ImageTensor) -> Vec<f64> {
        (0..self.latent_dim)
            .map(|d| {
                let (top, left, side) = self.square(d);
                img.get(d % 3, top + side / 2, left + side / 2) * 2.0 - 1.0
            })
            .collect()
    }

    /// Width of one intensity quantization step in factor units.
    pub fn quantization_step() -> f64 {
        2.0 / 255.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub user_factors: Vec<Vec<f64>>,
    pub item_factors: Vec<Vec<f64>>,
    pub gain: f64,
    pub offset: f64,
    /// `offset + gain * u*.v* + noise` per rating, before the clamp, in
    /// the dataset's triplet order.
    pub unclamped: Vec<f64>,
}

pub fn generate_synthetic(
    cfg: &SyntheticConfig,
    seed: u64,
) -> Result<(RatingsDataset, ImageStore, GroundTruth)> {
    cfg.validate()?;
    let layout = SyntheticLayout::new(cfg.latent_dim, cfg.image_height, cfg.image_width)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m, k) = (cfg.num_users, cfg.num_items, cfg.latent_dim);

    let unit = Uniform::new_inclusive(-1.0, 1.0).expect("uniform");
    let item_factors: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..k).map(|_| unit.sample(&mut rng)).collect())
        .collect();

    let mut observed: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut attempt = 0;
        loop {
            let row: Vec<usize> = (0..m)
                .filter(|_| rng.random::<f64>() < cfg.observed_fraction)
                .collect();
            if row.len() >= cfg.min_user_ratings.max(1) {
                observed.push(row);
                break;
            }
            attempt += 1;
            if attempt > cfg.max_retries {
                return Err(Error::InvalidConfig(format!(
                    "user {i} drew fewer than {} ratings after {} retries; raise observed_fraction",
                    cfg.min_user_ratings, cfg.max_retries
                )));
            }
        }
    }

    let normal = Normal::new(0.0, 1.0).expect("normal");
    let taste = cfg.user_taste;
    let user_factors: Vec<Vec<f64>> = observed
        .iter()
        .map(|items| {
            let norm = (3.0 / items.len() as f64).sqrt();
            (0..k)
                .map(|d| {
                    let sum: f64 = items.iter().map(|&j| item_factors[j][d]).sum();
                    taste * norm * sum + (1.0 - taste * taste).sqrt() * normal.sample(&mut rng)
                })
                .collect()
        })
        .collect();

    let (gain, offset) = (cfg.gain(), cfg.offset());
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("noise");
    let mut ratings = Vec::new();
    let mut unclamped = Vec::new();
    let mut scale = cfg.scale;
    if cfg.unclamped {
        scale = RatingScale {
            min: f64::MIN,
            max: f64::MAX,
        };
    }
    for (i, items) in observed.iter().enumerate() {
        for &j in items {
            let dot: f64 = user_factors[i].iter().zip(&item_factors[j]).map(|(a, b)| a * b).sum();
            let eps = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let raw = offset + gain * dot + eps;
            unclamped.push(raw);
            ratings.push(Rating {
                user: i,
                item: j,
                value: scale.clamp(raw),
            });
        }
    }

    let user_ids = (0..n).map(|i| format!("u{i}")).collect();
    let item_ids: Vec<String> = (0..m).map(|j| format!("i{j}")).collect();
    let ds = RatingsDataset::new(user_ids, item_ids.clone(), ratings, scale)?;

    let mut store = ImageStore::new(cfg.image_height, cfg.image_width, 3);
    for (id, v) in item_ids.into_iter().zip(&item_factors) {
        store.insert(id, layout.render(v))?;
    }
    Ok((
        ds,
        store,
        GroundTruth {
            user_factors,
            item_factors,
            gain,
            offset,
            unclamped,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            num_users: 20,
            num_items: 15,
            latent_dim: 3,
            observed_fraction: 0.4,
            image_height: 12,
            image_width: 12,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn noiseless_full_observation_is_low_rank() {
        let cfg = SyntheticConfig {
            observed_fraction: 1.0,
            noise_sigma: 0.0,
            unclamped: true,
            ..small()
        };
        let (ds, _, gt) = generate_synthetic(&cfg, 5).unwrap();
        assert_eq!(ds.len(), 20 * 15);
        let mut mat = DMatrix::zeros(20, 15);
        for (r, raw) in ds.ratings().iter().zip(&gt.unclamped) {
            mat[(r.user, r.item)] = (raw - gt.offset) / gt.gain;
            assert_eq!(r.value, *raw);
        }
        let sv = mat.singular_values();
        let rank = sv.iter().filter(|&&s| s > 1e-9 * sv[0]).count();
        assert!(rank <= 3, "rank {rank}");
    }

    #[test]
    fn noiseless_ratings_follow_ground_truth() {
        let cfg = SyntheticConfig { noise_sigma: 0.0, ..small() };
        let (ds, _, gt) = generate_synthetic(&cfg, 2).unwrap();
        for (r, raw) in ds.ratings().iter().zip(&gt.unclamped) {
            let dot: f64 = gt.user_factors[r.user]
                .iter()
                .zip(&gt.item_factors[r.item])
                .map(|(a, b)| a * b)
                .sum();
            assert_eq!(gt.offset + gt.gain * dot, *raw);
            assert_eq!(r.value, ds.scale().clamp(*raw));
        }
    }

    #[test]
    fn identical_factors_render_identically() {
        let layout = SyntheticLayout::new(5, 20, 20).unwrap();
        let v = [0.3, -0.7, 1.0, -1.0, 0.0];
        assert_eq!(layout.render(&v), layout.render(&v));
    }

    #[test]
    fn decoding_recovers_factors() {
        let (_, store, gt) = generate_synthetic(&small(), 3).unwrap();
        let layout = SyntheticLayout::new(3, 12, 12).unwrap();
        for (j, v) in gt.item_factors.iter().enumerate() {
            let img = store.get(&format!("i{j}")).unwrap();
            for (a, b) in layout.decode(img).iter().zip(v) {
                assert!((a - b).abs() <= SyntheticLayout::quantization_step());
            }
        }
    }

    #[test]
    fn every_user_has_two_ratings() {
        let (ds, _, _) = generate_synthetic(&small(), 8).unwrap();
        assert!(ds.user_counts().iter().all(|&c| c >= 2));
    }

    #[test]
    fn impossible_density_errors() {
        let cfg = SyntheticConfig {
            observed_fraction: 1e-6,
            max_retries: 3,
            ..small()
        };
        assert!(matches!(generate_synthetic(&cfg, 1), Err(Error::InvalidConfig(_))));
        let one_user = SyntheticConfig { num_users: 1, ..small() };
        assert!(generate_synthetic(&one_user, 1).is_err());
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate_synthetic(&small(), 4).unwrap();
        let b = generate_synthetic(&small(), 4).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.2, b.2);
    }
}
