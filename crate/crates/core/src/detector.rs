//! Reconstruction-error threshold calibration and window classification.

use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rae::{RaeError, RaeModel};
use crate::windowing::{FeatureVector, WindowLabel};

/// Fraction of baseline training windows kept inside the threshold.
pub const DEFAULT_QUANTILE: f64 = 0.999999;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("no training errors to calibrate on")]
    EmptyInput,
    #[error("invalid training error {0}")]
    BadError(f64),
    #[error("invalid threshold parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Model(#[from] RaeError),
    #[error("detection csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Calibrated error bound; windows with `J >= th * scale` are anomalies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub th: f64,
    pub quantile: f64,
    /// Post-hoc multiplier used to relax the bound (>= 1).
    pub scale: f64,
}

impl Threshold {
    pub fn new(th: f64, quantile: f64, scale: f64) -> Result<Self, DetectorError> {
        if !(th > 0.0 && th.is_finite()) {
            return Err(DetectorError::BadParameter(format!("th = {th}")));
        }
        if !(quantile > 0.0 && quantile <= 1.0) {
            return Err(DetectorError::BadParameter(format!("quantile = {quantile}")));
        }
        if !(scale >= 1.0 && scale.is_finite()) {
            return Err(DetectorError::BadParameter(format!("scale = {scale}")));
        }
        Ok(Threshold { th, quantile, scale })
    }

    pub fn with_scale(self, scale: f64) -> Result<Self, DetectorError> {
        Threshold::new(self.th, self.quantile, scale)
    }

    pub fn effective(&self) -> f64 {
        self.th * self.scale
    }

    pub fn classify(&self, error: f64) -> Prediction {
        if error >= self.effective() {
            Prediction::Anomaly
        } else {
            Prediction::Normal
        }
    }
}

/// Empirical `q`-quantile with linear interpolation between adjacent order
/// statistics at plotting position `q (N + 1)`.
///
/// When `(1 - q)(N + 1) <= 1` the position falls at or past the last rank and
/// the result is the sample maximum.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * (n as f64 + 1.0);
    if pos <= 1.0 {
        return sorted[0];
    }
    if pos >= n as f64 {
        return sorted[n - 1];
    }
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
}

/// Threshold from baseline training reconstruction errors.
pub fn calibrate(train_errors: &[f64], quantile: f64) -> Result<Threshold, DetectorError> {
    if train_errors.is_empty() {
        return Err(DetectorError::EmptyInput);
    }
    if let Some(&bad) = train_errors.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(DetectorError::BadError(bad));
    }
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(DetectorError::BadParameter(format!("quantile = {quantile}")));
    }
    let mut sorted = train_errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let th = empirical_quantile(&sorted, quantile).max(f64::MIN_POSITIVE);
    Threshold::new(th, quantile, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Prediction {
    Normal,
    Anomaly,
}

impl Prediction {
    /// `y` of the decision rule: 1 for anomaly, 0 for normal.
    pub fn as_int(self) -> u8 {
        match self {
            Prediction::Normal => 0,
            Prediction::Anomaly => 1,
        }
    }

    pub fn is_anomaly(self) -> bool {
        self == Prediction::Anomaly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub window_id: usize,
    pub window_start: f64,
    pub error: f64,
    pub predicted: Prediction,
    pub window_label: WindowLabel,
}

/// Reconstruction errors of already-scaled vectors.
pub fn reconstruction_errors<V: AsRef<[f64]> + Sync>(model: &RaeModel, scaled: &[V]) -> Result<Vec<f64>, RaeError> {
    scaled.par_iter().map(|x| model.sample_error(x.as_ref())).collect()
}

/// Scores scaled feature vectors. Output order follows input order.
pub fn score(model: &RaeModel, scaled: &[FeatureVector], threshold: &Threshold) -> Result<Vec<DetectionResult>, DetectorError> {
    scaled
        .par_iter()
        .map(|fv| {
            let error = model.sample_error(&fv.values)?;
            Ok(DetectionResult {
                window_id: fv.window_id,
                window_start: fv.window_start,
                error,
                predicted: threshold.classify(error),
                window_label: fv.window_label,
            })
        })
        .collect()
}

pub const DETECTION_HEADER: &str = "window_id,window_start,J,predicted,window_label";

pub fn write_detection_csv<W: Write>(mut out: W, results: &[DetectionResult]) -> io::Result<()> {
    writeln!(out, "{DETECTION_HEADER}")?;
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.window_id,
            r.window_start,
            r.error,
            r.predicted.as_int(),
            r.window_label.as_str()
        )?;
    }
    out.flush()
}

pub fn read_detection_csv<R: BufRead>(reader: R) -> Result<Vec<DetectionResult>, DetectorError> {
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == DETECTION_HEADER => {}
        _ => return Err(DetectorError::Csv("missing or wrong header".into())),
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || DetectorError::Csv(format!("row {}: {line:?}", n + 1));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 5 {
            return Err(bad());
        }
        out.push(DetectionResult {
            window_id: f[0].parse().map_err(|_| bad())?,
            window_start: f[1].parse().map_err(|_| bad())?,
            error: f[2].parse().map_err(|_| bad())?,
            predicted: match f[3] {
                "0" => Prediction::Normal,
                "1" => Prediction::Anomaly,
                _ => return Err(bad()),
            },
            window_label: WindowLabel::parse(f[4]).ok_or_else(bad)?,
        });
    }
    Ok(out)
}
