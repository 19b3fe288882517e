//! Window-level confusion counts, derived metrics and the summary table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{DetectionResult, Prediction};
use crate::windowing::WindowLabel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
}

/// Confusion counts with anomaly as the positive class.
///
/// A ratio whose denominator is zero is reported as 0 and listed in
/// `degenerate` by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: Vec<String>,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let mut degenerate = Vec::new();
        let mut ratio = |name: &str, num: usize, den: usize| {
            if den == 0 {
                degenerate.push(name.to_string());
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let accuracy = ratio("accuracy", tp + tn, tp + fp + tn + fn_);
        let precision = ratio("precision", tp, tp + fp);
        let recall = ratio("recall", tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            degenerate.push("f1".to_string());
            0.0
        };
        Metrics {
            tp,
            fp,
            tn,
            fn_,
            accuracy,
            precision,
            recall,
            f1,
            degenerate,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Fraction of normal windows classified normal.
    pub fn specificity(&self) -> f64 {
        let den = self.tn + self.fp;
        if den == 0 {
            0.0
        } else {
            self.tn as f64 / den as f64
        }
    }
}

pub fn confusion(predictions: &[Prediction], labels: &[WindowLabel]) -> Result<Metrics, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (p, l) in predictions.iter().zip(labels) {
        match (p, l) {
            (Prediction::Anomaly, WindowLabel::Attack) => tp += 1,
            (Prediction::Anomaly, WindowLabel::Normal) => fp += 1,
            (Prediction::Normal, WindowLabel::Normal) => tn += 1,
            (Prediction::Normal, WindowLabel::Attack) => fn_ += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, tn, fn_))
}

pub fn evaluate(results: &[DetectionResult]) -> Metrics {
    let p: Vec<Prediction> = results.iter().map(|r| r.predicted).collect();
    let l: Vec<WindowLabel> = results.iter().map(|r| r.window_label).collect();
    confusion(&p, &l).expect("equal lengths by construction")
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureMetrics {
    pub capture: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub threshold_scale: f64,
    /// Specificity on the held-out baseline windows.
    pub normal_behavior: Option<f64>,
    pub captures: Vec<CaptureMetrics>,
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Renders the report as a fixed-width text table with percentages to two decimals.
pub fn summarize(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "threshold {:.6e} x {:.3} = {:.6e}",
        report.threshold,
        report.threshold_scale,
        report.threshold * report.threshold_scale
    );
    if let Some(nb) = report.normal_behavior {
        let _ = writeln!(out, "Normal Behavior: {}% of baseline test windows classified normal", pct(nb));
    }
    let _ = writeln!(
        out,
        "{:<16} {:>8} {:>8} {:>8} {:>8} {:>9} {:>10} {:>8} {:>8}",
        "capture", "TP", "FP", "TN", "FN", "Accuracy", "Precision", "Recall", "F1"
    );
    for c in &report.captures {
        let m = &c.metrics;
        let _ = writeln!(
            out,
            "{:<16} {:>8} {:>8} {:>8} {:>8} {:>9} {:>10} {:>8} {:>8}",
            c.capture,
            m.tp,
            m.fp,
            m.tn,
            m.fn_,
            pct(m.accuracy),
            pct(m.precision),
            pct(m.recall),
            pct(m.f1)
        );
    }
    out
}
