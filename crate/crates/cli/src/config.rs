//! Run configuration shared by `train`, `grid`, `compare` and `sweep`.

use std::path::{Path, PathBuf};

use bimf::data::{RatingScale, SplitSpec, SyntheticConfig};
use bimf::eval::{GridSpec, Protocol};
use bimf::factorization::{Hyperparams, ModelKind};
use bimf::network::Architecture;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.8, validation: 0.1, test: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub kinds: Vec<ModelKind>,
    pub train_fractions: Vec<f64>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            kinds: vec![ModelKind::Pmf, ModelKind::IsfmfItem, ModelKind::BiIsfmf],
            train_fractions: vec![0.5, 0.6, 0.7, 0.8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub image_counts: Vec<usize>,
    pub repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { image_counts: vec![1, 2, 3, 4, 5], repeats: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Ratings CSV (`user,item,rating`) or a packed dataset from `ingest`.
    pub ratings: PathBuf,
    /// Directory of `<item_id>.png` files.
    pub images: Option<PathBuf>,
    pub rating_scale: RatingScale,
    /// Applied when `ratings` is a CSV and images are given.
    pub min_ratings: usize,
    pub model: ModelKind,
    pub hyper: Hyperparams,
    pub split: SplitFractions,
    pub cold_item_fraction: f64,
    pub images_per_user: usize,
    pub architecture: Architecture,
    pub grid: GridSpec,
    pub compare: CompareConfig,
    pub sweep: SweepConfig,
    pub output_dir: PathBuf,
    /// Seeds the split, the bundles and the model.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            ratings: PathBuf::from("ratings.csv"),
            images: None,
            rating_scale: RatingScale::default(),
            min_ratings: 2,
            model: ModelKind::BiIsfmf,
            hyper: Hyperparams::default(),
            split: SplitFractions::default(),
            cold_item_fraction: 0.0,
            images_per_user: 4,
            architecture: Architecture::default(),
            grid: GridSpec::default(),
            compare: CompareConfig::default(),
            sweep: SweepConfig::default(),
            output_dir: PathBuf::from("runs/default"),
            seed: 1,
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::input(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    crate::failure::write(path, text)
}

impl RunConfig {
    /// Reads, resolves relative paths against the file's directory, applies
    /// the seed override and validates.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self, Failure> {
        let mut cfg: RunConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = base.canonicalize().unwrap_or_else(|_| base.to_path_buf());
        cfg.ratings = resolve(&base, &cfg.ratings);
        cfg.images = cfg.images.as_deref().map(|p| resolve(&base, p));
        cfg.output_dir = resolve(&base, &cfg.output_dir);
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.hyper.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        RatingScale::new(self.rating_scale.min, self.rating_scale.max)?;
        self.hyper.validate()?;
        self.split_spec()?;
        if self.min_ratings == 0 {
            return Err(Failure::input("min_ratings must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.cold_item_fraction) {
            return Err(Failure::input("cold_item_fraction must lie in [0, 1)"));
        }
        if self.images_per_user == 0 {
            return Err(Failure::input("images_per_user must be at least 1"));
        }
        self.architecture.feature_dim()?;
        self.grid.cells()?;
        if self.compare.kinds.len() < 2 || self.compare.train_fractions.is_empty() {
            return Err(Failure::input("compare needs two model kinds and a training fraction"));
        }
        if self.sweep.image_counts.contains(&0) || self.sweep.repeats == 0 {
            return Err(Failure::input("sweep image counts and repeats must be positive"));
        }
        if self.model.uses_item_encoder() && self.images.is_none() {
            return Err(Failure::input(format!("{} needs an images directory", self.model)));
        }
        Ok(())
    }

    pub fn split_spec(&self) -> Result<SplitSpec, Failure> {
        let s = &self.split;
        Ok(SplitSpec::new(s.train, s.validation, s.test, self.seed)?)
    }

    pub fn protocol(&self) -> Protocol {
        Protocol {
            cold_item_fraction: self.cold_item_fraction,
            images_per_user: self.images_per_user,
        }
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.architecture.input.height, self.architecture.input.width)
    }
}

/// Input of `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub synthetic: SyntheticConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { seed: 1, synthetic: SyntheticConfig::default() }
    }
}
