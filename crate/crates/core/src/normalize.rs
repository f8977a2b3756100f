//! Per-dimension standardization of frames.
//!
//! Gaussian visible units assume unit variance around their conditional
//! mean, so every modality is mapped to zero mean and unit variance before it
//! reaches a model. The fitted constants travel with the model so inference
//! and morphing reuse exactly the training transform.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions whose spread falls below this are treated as constant and only centered.
const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Normalization {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fits mean and population standard deviation over all rows of all blocks.
    pub fn fit<'a>(blocks: impl IntoIterator<Item = ArrayView2<'a, f64>>) -> Result<Self> {
        let mut sum: Option<Array1<f64>> = None;
        let mut count = 0usize;
        let blocks: Vec<_> = blocks.into_iter().collect();
        for b in &blocks {
            let s = b.sum_axis(Axis(0));
            match &mut sum {
                Some(acc) => {
                    if acc.len() != s.len() {
                        return Err(Error::shape("normalization input", acc.len(), s.len()));
                    }
                    *acc += &s;
                }
                None => sum = Some(s),
            }
            count += b.nrows();
        }
        let sum = sum.ok_or_else(|| Error::Data("cannot fit normalization on no data".into()))?;
        if count == 0 {
            return Err(Error::Data("cannot fit normalization on no frames".into()));
        }
        let mean = sum / count as f64;
        let mut sq = Array1::<f64>::zeros(mean.len());
        for b in &blocks {
            for row in b.rows() {
                for ((acc, &x), &m) in sq.iter_mut().zip(row.iter()).zip(mean.iter()) {
                    *acc += (x - m) * (x - m);
                }
            }
        }
        let std = sq.mapv(|s| {
            let sd = (s / count as f64).sqrt();
            if sd < MIN_STD {
                1.0
            } else {
                sd
            }
        });
        Ok(Normalization {
            mean: mean.to_vec(),
            std: std.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self, block: &str) -> Result<()> {
        if self.std.len() != self.mean.len() {
            return Err(Error::shape(format!("{block}.std"), self.mean.len(), self.std.len()));
        }
        if self.mean.iter().chain(&self.std).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { block: block.into() });
        }
        if self.std.iter().any(|&s| s <= 0.0) {
            return Err(Error::Data(format!("{block}: standard deviations must be positive")));
        }
        Ok(())
    }

    pub fn apply(&self, frames: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(frames.ncols())?;
        let mut out = frames.to_owned();
        for mut row in out.rows_mut() {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
        Ok(out)
    }

    pub fn invert(&self, frames: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(frames.ncols())?;
        let mut out = frames.to_owned();
        for mut row in out.rows_mut() {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = *x * s + m;
            }
        }
        Ok(out)
    }

    fn check(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::shape("frame dimension", self.dim(), dim));
        }
        Ok(())
    }
}

/// Mean absolute value over all entries, used to flag raw (unstandardized) input.
pub fn mean_abs(frames: ArrayView2<f64>) -> f64 {
    if frames.is_empty() {
        return 0.0;
    }
    frames.iter().map(|x| x.abs()).sum::<f64>() / frames.len() as f64
}
