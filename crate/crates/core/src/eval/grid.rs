use serde::{Deserialize, Serialize};

use super::metrics::evaluate;
use super::protocol::PreparedSplit;
use crate::data::ImageStore;
use crate::error::{Error, Result};
use crate::factorization::{train, Hyperparams, ModelKind};
use crate::network::Architecture;
use crate::parallel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lambda_u: Vec<f64>,
    pub lambda_v: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        let values = vec![0.01, 0.1, 1.0, 10.0, 100.0];
        GridSpec {
            lambda_u: values.clone(),
            lambda_v: values,
        }
    }
}

impl GridSpec {
    /// Sorted, de-duplicated cells in lexicographic (lambda_u, lambda_v) order.
    pub fn cells(&self) -> Result<Vec<(f64, f64)>> {
        let uniq = |v: &[f64], name: &str| -> Result<Vec<f64>> {
            if v.is_empty() {
                return Err(Error::InvalidConfig(format!("grid for {name} is empty")));
            }
            if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidConfig(format!("grid for {name} has non-positive values")));
            }
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            Ok(v)
        };
        let us = uniq(&self.lambda_u, "lambda_u")?;
        let vs = uniq(&self.lambda_v, "lambda_v")?;
        Ok(us
            .iter()
            .flat_map(|&lu| vs.iter().map(move |&lv| (lu, lv)))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub lambda_u: f64,
    pub lambda_v: f64,
    /// Validation RMSE; infinite when training diverged.
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: GridCell,
    pub table: Vec<GridCell>,
}

/// Trains one model per grid cell on the training part and picks the cell
/// with the lowest validation RMSE (ties go to the lexicographically smaller
/// cell).
pub fn grid_search(
    kind: ModelKind,
    split: &PreparedSplit,
    images: Option<&ImageStore>,
    grid: &GridSpec,
    hyper_base: &Hyperparams,
    arch: &Architecture,
) -> Result<GridResult> {
    let cells = grid.cells()?;
    let data = split.training_data(images)?;
    let scores = parallel::map_slice(&cells, |&(lu, lv)| -> Result<f64> {
        let hyper = Hyperparams {
            lambda_u: lu,
            lambda_v: lv,
            ..hyper_base.clone()
        };
        match train(kind, &data, &hyper, arch, split.images_per_user) {
            Ok((ckpt, _)) => match evaluate(&ckpt, &split.validation, images) {
                Ok(report) => Ok(report.rmse),
                Err(e) if e.is_numerical() => Ok(f64::INFINITY),
                Err(e) => Err(e),
            },
            Err(e) if e.is_numerical() => {
                log::warn!("{kind} diverged at lambda_u={lu}, lambda_v={lv}: {e}");
                Ok(f64::INFINITY)
            }
            Err(e) => Err(e),
        }
    });
    let mut table = Vec::with_capacity(cells.len());
    for (&(lambda_u, lambda_v), score) in cells.iter().zip(scores) {
        table.push(GridCell {
            lambda_u,
            lambda_v,
            rmse: score?,
        });
    }
    let mut best: Option<GridCell> = None;
    for cell in &table {
        if cell.rmse.is_finite() && best.is_none_or(|b| cell.rmse < b.rmse) {
            best = Some(*cell);
        }
    }
    let best = best.ok_or_else(|| Error::NonFinite(format!("every {kind} grid cell diverged")))?;
    Ok(GridResult { best, table })
}
