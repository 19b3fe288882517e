//! Min-max scaling fitted on baseline training windows, and the train/test split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("no vectors to fit on")]
    EmptyInput,
    #[error("vector has {got} features, scaler expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("split ratio must lie in (0, 1), got {0}")]
    BadRatio(f64),
}

/// Per-feature training minimum and maximum.
///
/// Features that are constant over the training set (`max == min`) are
/// flagged degenerate and scaled with unit range: every training value maps
/// to 0 and any test-time departure keeps its raw magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl ScalerParams {
    pub fn fit<V: AsRef<[f64]>>(train: &[V]) -> Result<Self, PreprocessError> {
        let first = train.first().ok_or(PreprocessError::EmptyInput)?.as_ref();
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for v in &train[1..] {
            let v = v.as_ref();
            if v.len() != min.len() {
                return Err(PreprocessError::LengthMismatch {
                    expected: min.len(),
                    got: v.len(),
                });
            }
            for ((lo, hi), &x) in min.iter_mut().zip(max.iter_mut()).zip(v) {
                *lo = lo.min(x);
                *hi = hi.max(x);
            }
        }
        let degenerate = min.iter().zip(&max).map(|(a, b)| a == b).collect();
        Ok(ScalerParams {
            min,
            max,
            degenerate,
        })
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }

    fn range(&self, i: usize) -> f64 {
        if self.degenerate[i] {
            1.0
        } else {
            self.max[i] - self.min[i]
        }
    }

    fn check(&self, v: &[f64]) -> Result<(), PreprocessError> {
        if v.len() != self.len() {
            return Err(PreprocessError::LengthMismatch {
                expected: self.len(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `(v - min) / (max - min)`, unclipped.
    pub fn transform(&self, v: &[f64]) -> Result<Vec<f64>, PreprocessError> {
        self.check(v)?;
        Ok(v.iter()
            .enumerate()
            .map(|(i, &x)| (x - self.min[i]) / self.range(i))
            .collect())
    }

    pub fn inverse_transform(&self, s: &[f64]) -> Result<Vec<f64>, PreprocessError> {
        self.check(s)?;
        Ok(s.iter()
            .enumerate()
            .map(|(i, &x)| x * self.range(i) + self.min[i])
            .collect())
    }

    /// Converts a scaled-space difference into raw feature units.
    pub fn unscale_delta(&self, d: &[f64]) -> Result<Vec<f64>, PreprocessError> {
        self.check(d)?;
        Ok(d.iter().enumerate().map(|(i, &x)| x * self.range(i)).collect())
    }

    /// The scaled training hull: `[0, 1]` per informative feature, `{0}` per degenerate one.
    pub fn scaled_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lower = vec![0.0; self.len()];
        let upper = self
            .degenerate
            .iter()
            .map(|&d| if d { 0.0 } else { 1.0 })
            .collect();
        (lower, upper)
    }
}

pub fn fit_scaler<V: AsRef<[f64]>>(train: &[V]) -> Result<ScalerParams, PreprocessError> {
    ScalerParams::fit(train)
}

pub fn transform(v: &[f64], params: &ScalerParams) -> Result<Vec<f64>, PreprocessError> {
    params.transform(v)
}

/// Seeded random partition of `0..n` into sorted train and test index lists,
/// with `round(ratio * n)` training indices.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), PreprocessError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(PreprocessError::BadRatio(ratio));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratio * n as f64).round() as usize;
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Splits items into (train, test), each keeping the original relative order.
pub fn split<T: Clone>(items: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>), PreprocessError> {
    let (train, test) = split_indices(items.len(), ratio, seed)?;
    Ok((
        train.iter().map(|&i| items[i].clone()).collect(),
        test.iter().map(|&i| items[i].clone()).collect(),
    ))
}
