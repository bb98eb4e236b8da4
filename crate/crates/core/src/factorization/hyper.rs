use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::OptimizerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Zero prior means on both sides.
    Pmf,
    /// Item-side encoder only.
    IsfmfItem,
    /// Encoders on both sides.
    BiIsfmf,
}

impl ModelKind {
    pub fn uses_item_encoder(self) -> bool {
        matches!(self, ModelKind::IsfmfItem | ModelKind::BiIsfmf)
    }

    pub fn uses_user_encoder(self) -> bool {
        matches!(self, ModelKind::BiIsfmf)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Pmf => "PMF",
            ModelKind::IsfmfItem => "ISFMF",
            ModelKind::BiIsfmf => "Bi-ISFMF",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            ModelKind::Pmf => 0,
            ModelKind::IsfmfItem => 1,
            ModelKind::BiIsfmf => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ModelKind::Pmf),
            1 => Some(ModelKind::IsfmfItem),
            2 => Some(ModelKind::BiIsfmf),
            _ => None,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Variances of the generative model. Only their ratios enter the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseVariances {
    pub rating: f64,
    pub user: f64,
    pub item: f64,
    pub user_weights: f64,
    pub item_weights: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub k: usize,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub lambda_w_user: f64,
    pub lambda_w_item: f64,
    pub outer_max_iters: usize,
    /// Stop once `|previous - current| < rel_tol * |previous|` for the joint loss.
    pub rel_tol: f64,
    pub cnn_epochs_per_iter: usize,
    pub seed: u64,
    pub factor_init_std: f64,
    pub weight_init_std: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            k: 50,
            lambda_u: 1.0,
            lambda_v: 1.0,
            lambda_w_user: 0.1,
            lambda_w_item: 0.1,
            outer_max_iters: 50,
            rel_tol: 1e-5,
            cnn_epochs_per_iter: 5,
            seed: 1,
            factor_init_std: 0.1,
            weight_init_std: 0.05,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl Hyperparams {
    /// Sets every lambda to the ratio of the rating variance to the matching
    /// prior variance.
    pub fn with_variances(mut self, var: NoiseVariances) -> Result<Self> {
        let all = [var.rating, var.user, var.item, var.user_weights, var.item_weights];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("variances must be positive and finite".into()));
        }
        self.lambda_u = var.rating / var.user;
        self.lambda_v = var.rating / var.item;
        self.lambda_w_user = var.rating / var.user_weights;
        self.lambda_w_item = var.rating / var.item_weights;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.k == 0 {
            return bad("latent dimension k must be positive".into());
        }
        for (name, v) in [
            ("lambda_u", self.lambda_u),
            ("lambda_v", self.lambda_v),
            ("lambda_w_user", self.lambda_w_user),
            ("lambda_w_item", self.lambda_w_item),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return bad(format!("rel_tol must be positive, got {}", self.rel_tol));
        }
        if self.outer_max_iters == 0 {
            return bad("outer_max_iters must be at least 1".into());
        }
        if !(self.factor_init_std > 0.0 && self.weight_init_std > 0.0) {
            return bad("initialization scales must be positive".into());
        }
        self.optimizer.validate()
    }
}
