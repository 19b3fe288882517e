//! Serializable explanation reports and feature distribution histograms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Explanation, GlobalExplanation, SolveStatus};
use crate::detector::Threshold;

pub const DEFAULT_BINS: usize = 50;

/// Equal-width bin counts over `[lo, hi]`; a value equal to `hi` lands in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBins {
    pub counts: Vec<usize>,
    pub total: usize,
}

fn bin_values(values: &[f64], lo: f64, hi: f64, bins: usize) -> HistogramBins {
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let k = if width > 0.0 {
            (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    HistogramBins {
        counts,
        total: values.len(),
    }
}

/// Baseline, attack and counterfactual distributions of one feature on a
/// shared bin grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureHistogram {
    pub feature: String,
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub baseline: HistogramBins,
    pub attack: HistogramBins,
    pub counterfactual: HistogramBins,
}

/// Histograms for the selected features, binned over the pooled range of all three samples.
pub fn distribution_report(
    baseline: &[Vec<f64>],
    attack: &[Vec<f64>],
    counterfactual: &[Vec<f64>],
    features: &[(usize, String)],
    bins: usize,
) -> Vec<FeatureHistogram> {
    let bins = bins.max(1);
    features
        .iter()
        .map(|(idx, name)| {
            let column = |rows: &[Vec<f64>]| rows.iter().map(|r| r[*idx]).collect::<Vec<f64>>();
            let (b, a, c) = (column(baseline), column(attack), column(counterfactual));
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &v in b.iter().chain(&a).chain(&c) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo > hi {
                (lo, hi) = (0.0, 0.0);
            }
            FeatureHistogram {
                feature: name.clone(),
                index: *idx,
                lo,
                hi,
                baseline: bin_values(&b, lo, hi, bins),
                attack: bin_values(&a, lo, hi, bins),
                counterfactual: bin_values(&c, lo, hi, bins),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub window_id: usize,
    pub x: Vec<f64>,
    pub x_cf: Vec<f64>,
    pub deviation: Vec<f64>,
    pub deviation_unscaled: Option<Vec<f64>>,
    pub j: f64,
    pub j_cf: f64,
    pub converged: bool,
    pub iterations: usize,
    pub lambda_final: f64,
    pub status: SolveStatus,
}

impl From<&Explanation> for SampleRecord {
    fn from(e: &Explanation) -> Self {
        SampleRecord {
            window_id: e.window_id,
            x: e.x.clone(),
            x_cf: e.x_cf.clone(),
            deviation: e.deviation.clone(),
            deviation_unscaled: e.deviation_unscaled.clone(),
            j: e.j,
            j_cf: e.j_cf,
            converged: e.converged,
            iterations: e.iterations,
            lambda_final: e.lambda_final,
            status: e.status,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDeviation {
    pub feature: String,
    pub mean_deviation: f64,
    pub mean_abs_deviation: f64,
    pub mean_deviation_unscaled: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSection {
    pub class_tag: String,
    pub count: usize,
    pub non_converged: usize,
    pub features: Vec<FeatureDeviation>,
}

impl GlobalSection {
    pub fn new(global: &GlobalExplanation, names: &[String]) -> Self {
        let features = names
            .iter()
            .enumerate()
            .map(|(i, name)| FeatureDeviation {
                feature: name.clone(),
                mean_deviation: global.mean_deviation[i],
                mean_abs_deviation: global.mean_abs_deviation[i],
                mean_deviation_unscaled: global.mean_deviation_unscaled.as_ref().map(|m| m[i]),
            })
            .collect();
        GlobalSection {
            class_tag: global.class_tag.clone(),
            count: global.count,
            non_converged: global.non_converged,
            features,
        }
    }
}

/// The per-capture explanation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub capture: String,
    pub class_tag: String,
    pub threshold: Threshold,
    pub feature_names: Vec<String>,
    pub anomalies_total: usize,
    pub explained: usize,
    pub non_converged: usize,
    pub samples: Vec<SampleRecord>,
    pub global: Option<GlobalSection>,
}

/// Plain-text summary: the `top` features by mean absolute deviation and
/// whether anomalies carried more or less of each than the counterfactual.
pub fn render_global(section: &GlobalSection, top: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{}: {} converged counterfactuals ({} not converged)",
        section.class_tag, section.count, section.non_converged
    );
    let mut feats: Vec<&FeatureDeviation> = section.features.iter().collect();
    feats.sort_by(|a, b| b.mean_abs_deviation.total_cmp(&a.mean_abs_deviation));
    for f in feats.into_iter().take(top) {
        let direction = if f.mean_deviation > 0.0 {
            "high in anomalies"
        } else if f.mean_deviation < 0.0 {
            "low in anomalies"
        } else {
            "unchanged"
        };
        let _ = write!(out, "  {:<28} {:+.4}", f.feature, f.mean_deviation);
        if let Some(u) = f.mean_deviation_unscaled {
            let _ = write!(out, " ({u:+.4} raw)");
        }
        let _ = writeln!(out, "  {direction}");
    }
    out
}
