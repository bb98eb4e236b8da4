use std::fmt;

use serde::{Deserialize, Serialize};

use super::grid::{grid_search, GridSpec};
use super::metrics::evaluate;
use super::protocol::{prepare_split, Protocol};
use crate::data::{ImageStore, RatingsDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::factorization::{train, Hyperparams, ModelKind};
use crate::network::Architecture;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: ModelKind,
    pub train_fraction: f64,
    pub rmse_warm: Option<f64>,
    pub rmse_cold: Option<f64>,
    pub rmse_all: f64,
    pub lambda_u: f64,
    pub lambda_v: f64,
    /// Set on the row of the model being compared against the baselines.
    pub imp_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub train_fraction: f64,
    pub ours: ModelKind,
    pub baseline: ModelKind,
    pub ours_rmse: f64,
    pub baseline_rmse: f64,
    pub imp_pct: f64,
}

/// Test RMSE per model and training fraction, with the improvement of the
/// compared model over the best remaining one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub improvements: Vec<Improvement>,
}

/// `(baseline - ours) / baseline * 100`.
pub fn improvement_pct(baseline: f64, ours: f64) -> f64 {
    (baseline - ours) / baseline * 100.0
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,train_fraction,rmse_warm,rmse_cold,rmse_all,imp_pct\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{}\n",
                r.model.name(),
                r.train_fraction,
                opt(r.rmse_warm),
                opt(r.rmse_cold),
                r.rmse_all,
                r.imp_pct.map(|v| format!("{v:.2}")).unwrap_or_default()
            ));
        }
        out
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut fractions: Vec<f64> = self.rows.iter().map(|r| r.train_fraction).collect();
        fractions.dedup();
        let mut models: Vec<ModelKind> = Vec::new();
        for r in &self.rows {
            if !models.contains(&r.model) {
                models.push(r.model);
            }
        }
        write!(f, "{:<10}", "Model")?;
        for fr in &fractions {
            write!(f, " {:>8}", format!("{:.0}", fr * 100.0))?;
        }
        writeln!(f)?;
        for m in &models {
            write!(f, "{:<10}", m.name())?;
            for fr in &fractions {
                let cell = self
                    .rows
                    .iter()
                    .find(|r| r.model == *m && r.train_fraction == *fr)
                    .map(|r| format!("{:.3}", r.rmse_all))
                    .unwrap_or_default();
                write!(f, " {cell:>8}")?;
            }
            writeln!(f)?;
        }
        write!(f, "{:<10}", "imp")?;
        for fr in &fractions {
            let cell = self
                .improvements
                .iter()
                .find(|i| i.train_fraction == *fr)
                .map(|i| format!("{:.2}%", i.imp_pct))
                .unwrap_or_default();
            write!(f, " {cell:>8}")?;
        }
        Ok(())
    }
}

/// For each training fraction: re-split, grid-search every model on the
/// validation part, score the selected model on the test part and tabulate.
///
/// The compared model is Bi-ISFMF when listed, otherwise the last entry of
/// `kinds`; its baseline is the best of the other entries.
#[allow(clippy::too_many_arguments)]
pub fn compare_models(
    ds: &RatingsDataset,
    images: Option<&ImageStore>,
    kinds: &[ModelKind],
    fractions: &[f64],
    protocol: &Protocol,
    hyper: &Hyperparams,
    arch: &Architecture,
    grid: &GridSpec,
) -> Result<ComparisonTable> {
    if kinds.len() < 2 {
        return Err(Error::InvalidConfig("comparison needs at least two models".into()));
    }
    if fractions.is_empty() {
        return Err(Error::InvalidConfig("no training fractions given".into()));
    }
    let ours_pos = kinds
        .iter()
        .position(|&k| k == ModelKind::BiIsfmf)
        .unwrap_or(kinds.len() - 1);

    let mut table = ComparisonTable {
        rows: Vec::new(),
        improvements: Vec::new(),
    };
    for &fraction in fractions {
        let spec = SplitSpec::with_train_fraction(fraction, hyper.seed)?;
        let split = prepare_split(ds, images, &spec, protocol)?;
        let mut rows = Vec::with_capacity(kinds.len());
        for &kind in kinds {
            let side = if kind == ModelKind::Pmf { None } else { images };
            let chosen = grid_search(kind, &split, side, grid, hyper, arch)?.best;
            let tuned = Hyperparams {
                lambda_u: chosen.lambda_u,
                lambda_v: chosen.lambda_v,
                ..hyper.clone()
            };
            let data = split.training_data(side)?;
            let (ckpt, _) = train(kind, &data, &tuned, arch, split.images_per_user)?;
            let report = evaluate(&ckpt, &split.test, side)?;
            rows.push(ComparisonRow {
                model: kind,
                train_fraction: fraction,
                rmse_warm: report.rmse_warm,
                rmse_cold: report.rmse_cold,
                rmse_all: report.rmse,
                lambda_u: chosen.lambda_u,
                lambda_v: chosen.lambda_v,
                imp_pct: None,
            });
        }
        let (base_pos, base) = rows
            .iter()
            .enumerate()
            .filter(|(p, _)| *p != ours_pos)
            .min_by(|a, b| a.1.rmse_all.total_cmp(&b.1.rmse_all))
            .expect("at least one baseline");
        let imp = Improvement {
            train_fraction: fraction,
            ours: kinds[ours_pos],
            baseline: kinds[base_pos],
            ours_rmse: rows[ours_pos].rmse_all,
            baseline_rmse: base.rmse_all,
            imp_pct: improvement_pct(base.rmse_all, rows[ours_pos].rmse_all),
        };
        rows[ours_pos].imp_pct = Some(imp.imp_pct);
        table.improvements.push(imp);
        table.rows.extend(rows);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_formula_on_published_cells() {
        // ISFMF 1.162 vs Bi-ISFMF 1.080 at Clothes/70
        assert_eq!(format!("{:.2}", improvement_pct(1.162, 1.080)), "7.06");
        assert_eq!(format!("{:.1}", improvement_pct(1.646, 1.080)), "34.4");
        assert_eq!(improvement_pct(1.3, 1.3), 0.0);
    }
}
