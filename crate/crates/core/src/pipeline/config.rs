use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::can_io::{CaptureFormat, IdSpace, SynthConfig};
use crate::detector::DEFAULT_QUANTILE;
use crate::explainer::SolverConfig;
use crate::rae::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureRole {
    /// Normal traffic: split into training and held-out test windows.
    Baseline,
    /// Traffic containing injected frames; scored and explained in full.
    Attack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureSpec {
    /// Short tag used in output file names and as the explanation class.
    pub name: String,
    pub path: PathBuf,
    pub format: CaptureFormat,
    pub role: CaptureRole,
}

/// Parameters of the synthetic captures written by `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub baseline_duration: f64,
    pub attack_duration: f64,
    pub dos_rate: f64,
    pub fuzzy_rate: f64,
    pub fuzzy_ids: IdSpace,
    pub generator: SynthConfig,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            baseline_duration: 72.0,
            attack_duration: 10.0,
            dos_rate: 5000.0,
            fuzzy_rate: 2000.0,
            fuzzy_ids: IdSpace::STANDARD,
            generator: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSettings {
    /// Window length in seconds (the stride is half of it).
    pub size: f64,
    /// First window start; defaults to each capture's first timestamp.
    pub start: Option<f64>,
}

impl Default for WindowSettings {
    fn default() -> Self {
        WindowSettings { size: 0.05, start: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    /// Encoder widths down to the bottleneck; the decoder mirrors them.
    pub encoder: Vec<usize>,
    pub l1_coeff: f64,
    /// Attach learned projections between mirrored layers of unequal width.
    pub projection_skips: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            encoder: vec![32, 16, 8],
            l1_coeff: 1e-4,
            projection_skips: false,
        }
    }
}

/// The whole experiment in one file. Every random stream is derived from
/// `seed`, which has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Input captures. When empty the synthetic captures under
    /// `out_dir/captures` are used.
    #[serde(default)]
    pub captures: Vec<CaptureSpec>,
    #[serde(default)]
    pub synth: SynthSettings,
    #[serde(default)]
    pub window: WindowSettings,
    #[serde(default)]
    pub include_payload: bool,
    /// Keep only the first this-many baseline windows (drops the partial tail).
    #[serde(default)]
    pub max_baseline_windows: Option<usize>,
    #[serde(default = "default_split_ratio")]
    pub split_ratio: f64,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_quantile")]
    pub quantile: f64,
    #[serde(default = "default_scale")]
    pub threshold_scale: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Cap on explained anomalies per capture (first ones in window order).
    #[serde(default)]
    pub max_explanations: Option<usize>,
    /// Worker threads; 0 or absent means the rayon default.
    #[serde(default)]
    pub jobs: Option<usize>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_split_ratio() -> f64 {
    0.7
}

fn default_quantile() -> f64 {
    DEFAULT_QUANTILE
}

fn default_scale() -> f64 {
    1.0
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub window_size: Option<f64>,
    pub quantile: Option<f64>,
    pub threshold_scale: Option<f64>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

pub const SYNTH_BASELINE: &str = "baseline";
pub const SYNTH_DOS: &str = "dos";
pub const SYNTH_FUZZY: &str = "fuzzy";

impl RunConfig {
    /// Config with every default and the given seed.
    pub fn with_seed(seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({ "seed": seed })).expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.window_size {
            self.window.size = v;
        }
        if let Some(v) = o.quantile {
            self.quantile = v;
        }
        if let Some(v) = o.threshold_scale {
            self.threshold_scale = v;
        }
        if let Some(v) = o.jobs {
            self.jobs = Some(v);
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out_dir {
            self.out_dir = v.clone();
        }
    }

    /// Captures in effect: the configured list, or the three synthetic ones.
    pub fn capture_specs(&self) -> Vec<CaptureSpec> {
        if !self.captures.is_empty() {
            return self.captures.clone();
        }
        let dir = self.out_dir.join("captures");
        [
            (SYNTH_BASELINE, CaptureRole::Baseline),
            (SYNTH_DOS, CaptureRole::Attack),
            (SYNTH_FUZZY, CaptureRole::Attack),
        ]
        .into_iter()
        .map(|(name, role)| CaptureSpec {
            name: name.to_string(),
            path: dir.join(format!("{name}.csv")),
            format: CaptureFormat::Normalized,
            role,
        })
        .collect()
    }

    pub fn baseline_spec(&self) -> CaptureSpec {
        self.capture_specs()
            .into_iter()
            .find(|c| c.role == CaptureRole::Baseline)
            .expect("validated config has a baseline capture")
    }

    /// Full layer widths for a `d`-feature input.
    pub fn layer_dims(&self, d: usize) -> Vec<usize> {
        crate::rae::mirrored_dims(d, &self.model.encoder)
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(self.window.size.is_finite() && self.window.size > 0.0) {
            return bad(format!("window size must be positive, got {}", self.window.size));
        }
        if self.window.start.is_some_and(|s| !s.is_finite()) {
            return bad("window start must be finite".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio));
        }
        if self.max_baseline_windows == Some(0) {
            return bad("max_baseline_windows must be positive".into());
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return bad(format!("quantile must lie in (0, 1], got {}", self.quantile));
        }
        if !(self.threshold_scale >= 1.0 && self.threshold_scale.is_finite()) {
            return bad(format!("threshold_scale must be >= 1, got {}", self.threshold_scale));
        }
        if self.model.encoder.contains(&0) {
            return bad("encoder widths must be positive".into());
        }
        if !(self.model.l1_coeff >= 0.0 && self.model.l1_coeff.is_finite()) {
            return bad("l1_coeff must be non-negative".into());
        }
        self.train.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.solver.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let s = &self.synth;
        if !(s.baseline_duration > 0.0 && s.attack_duration > 0.0 && s.dos_rate > 0.0 && s.fuzzy_rate > 0.0) {
            return bad("synthetic durations and rates must be positive".into());
        }
        if s.fuzzy_ids.lo > s.fuzzy_ids.hi {
            return bad("fuzzy id space is empty".into());
        }

        let specs = self.capture_specs();
        let baselines = specs.iter().filter(|c| c.role == CaptureRole::Baseline).count();
        if baselines != 1 {
            return bad(format!("exactly one baseline capture required, found {baselines}"));
        }
        let mut names = BTreeSet::new();
        for c in &specs {
            let safe = !c.name.is_empty()
                && c.name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-');
            if !safe {
                return bad(format!("capture name {:?} must be non-empty [A-Za-z0-9_-]", c.name));
            }
            if !names.insert(c.name.clone()) {
                return bad(format!("duplicate capture name {:?}", c.name));
            }
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate), and additionally requires every
    /// configured capture file to exist.
    pub fn validate_inputs(&self) -> Result<(), PipelineError> {
        self.validate()?;
        for c in self.capture_specs() {
            if !c.path.is_file() {
                return Err(PipelineError::Config(format!(
                    "capture {:?}: {} does not exist",
                    c.name,
                    c.path.display()
                )));
            }
        }
        Ok(())
    }
}
