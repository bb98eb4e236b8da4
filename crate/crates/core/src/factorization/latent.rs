use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// `cols` latent vectors of length `dim`, stored column after column.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    dim: usize,
    cols: usize,
    data: Vec<f64>,
}

impl LatentMatrix {
    pub fn zeros(dim: usize, cols: usize) -> Self {
        LatentMatrix {
            dim,
            cols,
            data: vec![0.0; dim * cols],
        }
    }

    pub fn from_columns(dim: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * columns.len());
        for c in columns {
            if c.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "column of length {} in a {dim}-dimensional matrix",
                    c.len()
                )));
            }
            data.extend_from_slice(c);
        }
        Self::from_vec(dim, columns.len(), data)
    }

    pub fn from_vec(dim: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {dim}x{cols} latent matrix",
                data.len()
            )));
        }
        Ok(LatentMatrix { dim, cols, data })
    }

    pub fn random(dim: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        LatentMatrix {
            dim,
            cols,
            data: (0..dim * cols).map(|_| normal.sample(rng)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn col_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn to_columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|i| self.col(i).to_vec()).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
