//! Counterfactual explanations: for each flagged window, the closest input
//! inside the baseline hull that the detector would accept, and the per-feature
//! deviation needed to get there.

mod report;
mod solver;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::Threshold;
use crate::preprocess::{PreprocessError, ScalerParams};
use crate::rae::{RaeError, RaeModel};

pub use report::{
    distribution_report, render_global, ExplanationReport, FeatureDeviation, FeatureHistogram, GlobalSection,
    HistogramBins, SampleRecord, DEFAULT_BINS,
};
pub use solver::{solve_counterfactual, SolverConfig};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("expected {expected} features, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error("non-finite iterate during counterfactual search")]
    NonFiniteIterate,
    #[error("no converged counterfactuals to aggregate")]
    NoConvergedSamples,
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Model(#[from] RaeError),
    #[error(transparent)]
    Scale(#[from] PreprocessError),
}

/// Per-feature box the counterfactual must stay in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundsBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, ExplainError> {
        if lower.len() != upper.len() {
            return Err(ExplainError::LengthMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return Err(ExplainError::BadConfig("lower bound above upper bound".into()));
        }
        Ok(BoundsBox { lower, upper })
    }

    /// The scaled range seen during training.
    pub fn from_scaler(scaler: &ScalerParams) -> Self {
        let (lower, upper) = scaler.scaled_bounds();
        BoundsBox { lower, upper }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, &v)| v.clamp(self.lower[i], self.upper[i]))
            .collect()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.len() && z.iter().enumerate().all(|(i, &v)| self.lower[i] <= v && v <= self.upper[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// The window is already below the threshold; nothing to explain.
    AlreadyNormal,
    Converged,
    /// Penalty weight reached its cap without a feasible point.
    MaxLambdaExceeded,
    NonFiniteIterate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub window_id: usize,
    pub x: Vec<f64>,
    pub x_cf: Vec<f64>,
    /// `x - x_cf` in scaled units: positive where the anomaly exceeds the
    /// nearest accepted input.
    pub deviation: Vec<f64>,
    /// `deviation` in raw feature units, when a scaler was available.
    pub deviation_unscaled: Option<Vec<f64>>,
    pub j: f64,
    pub j_cf: f64,
    pub iterations: usize,
    pub converged: bool,
    pub lambda_final: f64,
    pub status: SolveStatus,
    /// Whether the last penalty stage ended on the step-size criterion.
    pub stage_converged: bool,
    /// Whether the search had to restart from the input itself.
    pub restarted: bool,
    /// Whether the answer is the projected reconstruction itself.
    pub from_reconstruction: bool,
}

impl Explanation {
    pub(crate) fn new(window_id: usize, x: Vec<f64>, x_cf: Vec<f64>, j: f64, j_cf: f64, status: SolveStatus) -> Self {
        let deviation = x.iter().zip(&x_cf).map(|(o, c)| o - c).collect();
        Explanation {
            window_id,
            x,
            x_cf,
            deviation,
            deviation_unscaled: None,
            j,
            j_cf,
            iterations: 0,
            converged: matches!(status, SolveStatus::Converged | SolveStatus::AlreadyNormal),
            lambda_final: 0.0,
            status,
            stage_converged: false,
            restarted: false,
            from_reconstruction: false,
        }
    }

    /// Placeholder for a sample whose search was aborted.
    fn failed(window_id: usize, x: &[f64], j: f64) -> Self {
        Explanation::new(window_id, x.to_vec(), x.to_vec(), j, j, SolveStatus::NonFiniteIterate)
    }

    pub fn with_unscaled(mut self, scaler: &ScalerParams) -> Result<Self, ExplainError> {
        self.deviation_unscaled = Some(scaler.unscale_delta(&self.deviation)?);
        Ok(self)
    }

    pub fn distance_sq(&self) -> f64 {
        self.deviation.iter().map(|d| d * d).sum()
    }
}

/// Explains every `(window_id, scaled x)` pair in parallel. Output order
/// follows input order. Samples whose search diverges are kept and flagged
/// instead of failing the batch; configuration and shape errors still fail it.
pub fn explain_batch(
    model: &RaeModel,
    samples: &[(usize, Vec<f64>)],
    threshold: &Threshold,
    bounds: &BoundsBox,
    cfg: &SolverConfig,
    scaler: Option<&ScalerParams>,
) -> Result<Vec<Explanation>, ExplainError> {
    cfg.validate()?;
    samples
        .par_iter()
        .map(|(id, x)| {
            let e = match solve_counterfactual(model, *id, x, threshold, bounds, cfg) {
                Ok(e) => e,
                Err(ExplainError::NonFiniteIterate) => {
                    log::warn!("window {id}: counterfactual search diverged");
                    let j = model.sample_error(x).unwrap_or(f64::NAN);
                    Explanation::failed(*id, x, j)
                }
                Err(e) => return Err(e),
            };
            match scaler {
                Some(s) => e.with_unscaled(s),
                None => Ok(e),
            }
        })
        .collect()
}

/// Mean counterfactual deviation over the converged explanations of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalExplanation {
    pub class_tag: String,
    pub count: usize,
    pub non_converged: usize,
    pub mean_deviation: Vec<f64>,
    pub mean_abs_deviation: Vec<f64>,
    pub mean_deviation_unscaled: Option<Vec<f64>>,
}

impl GlobalExplanation {
    /// Feature indices ordered by decreasing mean absolute deviation.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.mean_abs_deviation.len()).collect();
        idx.sort_by(|&a, &b| self.mean_abs_deviation[b].total_cmp(&self.mean_abs_deviation[a]).then(a.cmp(&b)));
        idx
    }
}

/// Averages the deviation of converged explanations. Windows that were
/// already normal carry a zero deviation and are left out, as are failures.
pub fn aggregate(explanations: &[Explanation], class_tag: &str) -> Result<GlobalExplanation, ExplainError> {
    let used: Vec<&Explanation> = explanations
        .iter()
        .filter(|e| e.status == SolveStatus::Converged)
        .collect();
    let non_converged = explanations.iter().filter(|e| !e.converged).count();
    let first = used.first().ok_or(ExplainError::NoConvergedSamples)?;
    let d = first.deviation.len();
    let n = used.len() as f64;
    let mut mean = vec![0.0; d];
    let mut mean_abs = vec![0.0; d];
    for e in &used {
        if e.deviation.len() != d {
            return Err(ExplainError::LengthMismatch {
                expected: d,
                got: e.deviation.len(),
            });
        }
        for (i, &v) in e.deviation.iter().enumerate() {
            mean[i] += v / n;
            mean_abs[i] += v.abs() / n;
        }
    }
    let mean_deviation_unscaled = if used.iter().all(|e| e.deviation_unscaled.is_some()) {
        let mut m = vec![0.0; d];
        for e in &used {
            for (i, v) in e.deviation_unscaled.as_ref().unwrap().iter().enumerate() {
                m[i] += v / n;
            }
        }
        Some(m)
    } else {
        None
    };
    Ok(GlobalExplanation {
        class_tag: class_tag.to_string(),
        count: used.len(),
        non_converged,
        mean_deviation: mean,
        mean_abs_deviation: mean_abs,
        mean_deviation_unscaled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// All-zero weights: the reconstruction is constant (0.5, 0.5).
    fn constant_model() -> RaeModel {
        let mut m = RaeModel::new(&[2, 2], 0.0, 0).unwrap();
        for layer in m.layers_mut() {
            layer.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        m
    }

    fn unit_box() -> BoundsBox {
        BoundsBox::new(vec![0.0; 2], vec![1.0; 2]).unwrap()
    }

    #[test]
    fn bounds_box_projection() {
        let b = unit_box();
        assert_eq!(b.project(&[-1.0, 2.0]), vec![0.0, 1.0]);
        assert!(b.contains(&[0.0, 1.0]));
        assert!(!b.contains(&[0.0, 1.1]));
        assert!(BoundsBox::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn already_normal_short_circuits() {
        let m = constant_model();
        let t = Threshold::new(0.1, 0.99, 1.0).unwrap();
        let e = solve_counterfactual(&m, 3, &[0.5, 0.55], &t, &unit_box(), &SolverConfig::default()).unwrap();
        assert_eq!(e.status, SolveStatus::AlreadyNormal);
        assert_eq!(e.x_cf, e.x);
        assert_eq!(e.iterations, 0);
        assert!(e.deviation.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn projection_onto_error_ball() {
        // feasible set is the disk of radius r around (0.5, 0.5); the nearest
        // point lies on the segment towards the centre
        let m = constant_model();
        let r: f64 = 0.15;
        let t = Threshold::new(r * r, 0.99, 1.0).unwrap();
        let x = [0.95, 0.5];
        let e = solve_counterfactual(&m, 0, &x, &t, &unit_box(), &SolverConfig::default()).unwrap();
        assert_eq!(e.status, SolveStatus::Converged);
        assert!(e.j_cf <= t.effective());
        assert!((e.x_cf[0] - (0.5 + r)).abs() < 1e-3, "{:?}", e.x_cf);
        assert!((e.x_cf[1] - 0.5).abs() < 1e-3, "{:?}", e.x_cf);
    }

    #[test]
    fn aggregate_skips_unconverged() {
        let mk = |dev: f64, status| {
            let mut e = Explanation::new(0, vec![dev], vec![0.0], 1.0, 0.1, status);
            e.deviation_unscaled = Some(vec![dev * 2.0]);
            e
        };
        let es = vec![
            mk(1.0, SolveStatus::Converged),
            mk(-3.0, SolveStatus::Converged),
            mk(100.0, SolveStatus::MaxLambdaExceeded),
            mk(0.0, SolveStatus::AlreadyNormal),
        ];
        let g = aggregate(&es, "dos").unwrap();
        assert_eq!(g.count, 2);
        assert_eq!(g.non_converged, 1);
        assert_eq!(g.mean_deviation, vec![-1.0]);
        assert_eq!(g.mean_abs_deviation, vec![2.0]);
        assert_eq!(g.mean_deviation_unscaled, Some(vec![-2.0]));
        assert!(matches!(aggregate(&es[2..], "x"), Err(ExplainError::NoConvergedSamples)));
    }

    #[test]
    fn batch_preserves_order() {
        let m = constant_model();
        let t = Threshold::new(0.0225, 0.99, 1.0).unwrap();
        let samples: Vec<(usize, Vec<f64>)> = vec![(7, vec![0.95, 0.5]), (2, vec![0.5, 0.5]), (9, vec![0.0, 0.0])];
        let out = explain_batch(&m, &samples, &t, &unit_box(), &SolverConfig::default(), None).unwrap();
        let ids: Vec<usize> = out.iter().map(|e| e.window_id).collect();
        assert_eq!(ids, vec![7, 2, 9]);
        assert!(out.iter().all(|e| e.converged));
    }
}
