//! End-to-end driver: synthesize or load captures, extract features, train,
//! calibrate, detect, explain, evaluate and report.
//!
//! The in-memory stages ([`featurize`], [`train`], [`detect`], [`explain`])
//! are usable on their own; the `cmd_*` functions wrap them with the on-disk
//! layout under `out_dir`:
//!
//! ```text
//! captures/<name>.csv            synthetic captures (normalized CSV)
//! features/<name>.csv            one feature row per window
//! features/schema.json
//! model/bundle.json              model + scaler + schema + threshold
//! model/loss_history.json
//! model/split.json               baseline window ids used for training / testing
//! reports/detect_<name>.csv      baseline: held-out windows only
//! reports/explain_<name>.json
//! reports/histograms_<name>.json
//! reports/metrics.json, reports/table.txt, reports/summary.txt
//! ```
//!
//! A subcommand that fails after validation leaves a `FAILED` marker in
//! `out_dir` holding the error; a later successful subcommand removes it.

mod config;

use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    CaptureRole, CaptureSpec, ModelSettings, Overrides, RunConfig, SynthSettings, WindowSettings, SYNTH_BASELINE,
    SYNTH_DOS, SYNTH_FUZZY,
};

use crate::can_io::{self, inject_dos, inject_fuzzy, synth_baseline, CanFrame, CanIoError, LoadOptions};
use crate::detector::{self, DetectionResult, DetectorError, Threshold};
use crate::eval::{self, CaptureMetrics, MetricsReport};
use crate::explainer::{
    self, distribution_report, render_global, BoundsBox, ExplainError, Explanation, ExplanationReport, GlobalSection,
    SampleRecord, DEFAULT_BINS,
};
use crate::preprocess::{self, PreprocessError, ScalerParams};
use crate::rae::{self, ModelBundle, RaeError, RaeModel, SkipPlan, TrainHistory};
use crate::windowing::{self, FeatureSchema, FeatureVector, WindowSpec, WindowingError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl PipelineError {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Numeric(_) => 4,
        }
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<CanIoError> for PipelineError {
    fn from(e: CanIoError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<WindowingError> for PipelineError {
    fn from(e: WindowingError) -> Self {
        match e {
            WindowingError::BadWindowSize(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<PreprocessError> for PipelineError {
    fn from(e: PreprocessError) -> Self {
        match e {
            PreprocessError::BadRatio(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<RaeError> for PipelineError {
    fn from(e: RaeError) -> Self {
        match e {
            RaeError::NonFiniteLoss { .. } => PipelineError::Numeric(e.to_string()),
            RaeError::BadArchitecture(_) | RaeError::BadConfig(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<DetectorError> for PipelineError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::Model(inner) => inner.into(),
            DetectorError::BadError(_) => PipelineError::Numeric(e.to_string()),
            DetectorError::BadParameter(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<ExplainError> for PipelineError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::Model(inner) => inner.into(),
            ExplainError::NonFiniteIterate => PipelineError::Numeric(e.to_string()),
            ExplainError::BadConfig(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

fn json_err(e: serde_json::Error) -> PipelineError {
    PipelineError::Data(e.to_string())
}

/// A capture held in memory.
#[derive(Debug, Clone)]
pub struct Capture {
    pub name: String,
    pub role: CaptureRole,
    pub frames: Vec<CanFrame>,
}

/// Windows of one capture on a shared schema.
#[derive(Debug, Clone)]
pub struct CaptureFeatures {
    pub name: String,
    pub role: CaptureRole,
    pub vectors: Vec<FeatureVector>,
}

/// Baseline window ids on each side of the train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub bundle: ModelBundle,
    pub history: TrainHistory,
    pub split: Split,
    /// Reconstruction error of every training window, in split order.
    pub train_errors: Vec<f64>,
}

// Independent random streams derived from the run seed.
fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream)
}

/// The three synthetic captures: baseline, DoS flood and fuzzing, each on
/// its own independently seeded background traffic.
pub fn synthesize(cfg: &RunConfig) -> Vec<Capture> {
    let s = &cfg.synth;
    let baseline = synth_baseline(s.baseline_duration, sub_seed(cfg.seed, 1), &s.generator);
    let dos_bg = synth_baseline(s.attack_duration, sub_seed(cfg.seed, 2), &s.generator);
    let dos = inject_dos(&dos_bg, s.dos_rate, sub_seed(cfg.seed, 3));
    let fuzzy_bg = synth_baseline(s.attack_duration, sub_seed(cfg.seed, 4), &s.generator);
    let fuzzy = inject_fuzzy(&fuzzy_bg, s.fuzzy_rate, s.fuzzy_ids, sub_seed(cfg.seed, 5));
    vec![
        Capture {
            name: SYNTH_BASELINE.into(),
            role: CaptureRole::Baseline,
            frames: baseline,
        },
        Capture {
            name: SYNTH_DOS.into(),
            role: CaptureRole::Attack,
            frames: dos,
        },
        Capture {
            name: SYNTH_FUZZY.into(),
            role: CaptureRole::Attack,
            frames: fuzzy,
        },
    ]
}

pub fn load_captures(cfg: &RunConfig) -> Result<Vec<Capture>, PipelineError> {
    cfg.capture_specs()
        .into_iter()
        .map(|spec| {
            let (frames, meta) = can_io::load_capture(&spec.path, spec.format, LoadOptions::default())?;
            log::info!(
                "{}: {} frames over {:.3} s ({} malformed lines)",
                spec.name,
                meta.frame_count,
                meta.time_span,
                meta.malformed_lines
            );
            Ok(Capture {
                name: spec.name,
                role: spec.role,
                frames,
            })
        })
        .collect()
}

/// Fits the schema on the baseline capture and windows every capture.
pub fn featurize(cfg: &RunConfig, captures: &[Capture]) -> Result<(FeatureSchema, Vec<CaptureFeatures>), PipelineError> {
    let baseline = captures
        .iter()
        .find(|c| c.role == CaptureRole::Baseline)
        .ok_or_else(|| PipelineError::Config("no baseline capture".into()))?;
    let schema = FeatureSchema::fit(&baseline.frames, cfg.include_payload)?;
    let mut out = Vec::with_capacity(captures.len());
    for c in captures {
        if c.frames.is_empty() {
            return Err(WindowingError::EmptyCapture.into());
        }
        let spec = match cfg.window.start {
            Some(start) => WindowSpec::new(cfg.window.size, start)?,
            None => WindowSpec::for_capture(cfg.window.size, &c.frames)?,
        };
        let mut vectors = windowing::extract_features(&c.frames, &spec, &schema);
        if c.role == CaptureRole::Baseline {
            if let Some(max) = cfg.max_baseline_windows {
                vectors.truncate(max);
            }
        }
        log::info!("{}: {} windows", c.name, vectors.len());
        out.push(CaptureFeatures {
            name: c.name.clone(),
            role: c.role,
            vectors,
        });
    }
    Ok((schema, out))
}

/// Splits the baseline windows, fits the scaler on the training side, trains
/// the autoencoder and calibrates the threshold on its training errors.
pub fn train(cfg: &RunConfig, schema: &FeatureSchema, baseline: &[FeatureVector]) -> Result<Trained, PipelineError> {
    if baseline.is_empty() {
        return Err(PipelineError::Data("no baseline windows".into()));
    }
    let (train_idx, test_idx) = preprocess::split_indices(baseline.len(), cfg.split_ratio, sub_seed(cfg.seed, 10))?;
    let raw: Vec<&[f64]> = train_idx.iter().map(|&i| baseline[i].values.as_slice()).collect();
    let scaler = ScalerParams::fit(&raw)?;
    let scaled: Vec<Vec<f64>> = raw.iter().map(|v| scaler.transform(v)).collect::<Result<_, _>>()?;

    let dims = cfg.layer_dims(schema.len());
    let plan = SkipPlan::Mirrored {
        projections: cfg.model.projection_skips,
    };
    let mut model = RaeModel::with_skips(&dims, cfg.model.l1_coeff, sub_seed(cfg.seed, 11), &plan)?;
    let train_cfg = rae::TrainConfig {
        shuffle_seed: sub_seed(cfg.seed, 12),
        ..cfg.train.clone()
    };
    let history = rae::fit(&mut model, &scaled, &train_cfg, None)?;
    log::info!(
        "trained {dims:?}: loss {:.6} -> {:.6}",
        history.initial_loss,
        history.final_loss()
    );
    let train_errors = detector::reconstruction_errors(&model, &scaled)?;
    let threshold = detector::calibrate(&train_errors, cfg.quantile)?;
    log::info!("threshold {:.6e} at q = {}", threshold.th, threshold.quantile);
    let id = |idx: &[usize]| idx.iter().map(|&i| baseline[i].window_id).collect::<Vec<_>>();
    Ok(Trained {
        split: Split {
            train: id(&train_idx),
            test: id(&test_idx),
        },
        bundle: ModelBundle {
            schema: schema.clone(),
            scaler,
            model,
            threshold,
            window_size: cfg.window.size,
        },
        history,
        train_errors,
    })
}

/// Scales vectors with the bundled scaler.
pub fn scale_vectors(bundle: &ModelBundle, vectors: &[FeatureVector]) -> Result<Vec<FeatureVector>, PipelineError> {
    vectors
        .iter()
        .map(|fv| {
            Ok(FeatureVector {
                values: bundle.scaler.transform(&fv.values)?,
                ..fv.clone()
            })
        })
        .collect()
}

/// The bundled threshold relaxed by `scale`.
pub fn effective_threshold(bundle: &ModelBundle, scale: f64) -> Result<Threshold, PipelineError> {
    Ok(bundle.threshold.with_scale(scale)?)
}

/// Scores raw feature vectors.
pub fn detect(bundle: &ModelBundle, scale: f64, vectors: &[FeatureVector]) -> Result<Vec<DetectionResult>, PipelineError> {
    let threshold = effective_threshold(bundle, scale)?;
    let scaled = scale_vectors(bundle, vectors)?;
    Ok(detector::score(&bundle.model, &scaled, &threshold)?)
}

/// Explains the windows flagged in `detections`, at most `limit` of them in window order.
pub fn explain(
    bundle: &ModelBundle,
    scale: f64,
    solver: &explainer::SolverConfig,
    vectors: &[FeatureVector],
    detections: &[DetectionResult],
    limit: Option<usize>,
) -> Result<Vec<Explanation>, PipelineError> {
    let threshold = effective_threshold(bundle, scale)?;
    let by_id: HashMap<usize, &FeatureVector> = vectors.iter().map(|v| (v.window_id, v)).collect();
    let mut samples = Vec::new();
    for d in detections.iter().filter(|d| d.predicted.is_anomaly()) {
        if limit.is_some_and(|l| samples.len() >= l) {
            break;
        }
        let fv = by_id
            .get(&d.window_id)
            .ok_or_else(|| PipelineError::Data(format!("window {} missing from features", d.window_id)))?;
        samples.push((d.window_id, bundle.scaler.transform(&fv.values)?));
    }
    let bounds = BoundsBox::from_scaler(&bundle.scaler);
    Ok(explainer::explain_batch(
        &bundle.model,
        &samples,
        &threshold,
        &bounds,
        solver,
        Some(&bundle.scaler),
    )?)
}

/// Explanation file contents for one capture.
pub fn explanation_report(
    capture: &str,
    bundle: &ModelBundle,
    scale: f64,
    anomalies_total: usize,
    explanations: &[Explanation],
) -> Result<ExplanationReport, PipelineError> {
    let names = bundle.schema.names().to_vec();
    let global = match explainer::aggregate(explanations, capture) {
        Ok(g) => Some(GlobalSection::new(&g, &names)),
        Err(ExplainError::NoConvergedSamples) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(ExplanationReport {
        capture: capture.to_string(),
        class_tag: capture.to_string(),
        threshold: effective_threshold(bundle, scale)?,
        feature_names: names,
        anomalies_total,
        explained: explanations.len(),
        non_converged: explanations.iter().filter(|e| !e.converged).count(),
        samples: explanations.iter().map(SampleRecord::from).collect(),
        global,
    })
}

// ---------------------------------------------------------------- file layout

fn captures_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("captures")
}

fn features_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("features")
}

fn model_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("model")
}

fn reports_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("reports")
}

pub fn bundle_path(cfg: &RunConfig) -> PathBuf {
    model_dir(cfg).join("bundle.json")
}

pub fn failure_marker(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join("FAILED")
}

fn feature_csv(cfg: &RunConfig, name: &str) -> PathBuf {
    features_dir(cfg).join(format!("{name}.csv"))
}

fn detect_csv(cfg: &RunConfig, name: &str) -> PathBuf {
    reports_dir(cfg).join(format!("detect_{name}.csv"))
}

fn explain_json(cfg: &RunConfig, name: &str) -> PathBuf {
    reports_dir(cfg).join(format!("explain_{name}.json"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(json_err)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(json_err)
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>, PipelineError> {
    let f = fs::File::create(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn open_file(path: &Path) -> Result<BufReader<fs::File>, PipelineError> {
    let f = fs::File::open(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    Ok(BufReader::new(f))
}

fn load_schema(cfg: &RunConfig) -> Result<FeatureSchema, PipelineError> {
    read_json(&features_dir(cfg).join("schema.json"))
}

fn load_features(cfg: &RunConfig, name: &str, schema: &FeatureSchema) -> Result<Vec<FeatureVector>, PipelineError> {
    Ok(windowing::read_feature_csv(open_file(&feature_csv(cfg, name))?, schema)?)
}

fn load_model(cfg: &RunConfig) -> Result<ModelBundle, PipelineError> {
    Ok(rae::load_bundle(&bundle_path(cfg))?)
}

fn load_detections(cfg: &RunConfig, name: &str) -> Result<Vec<DetectionResult>, PipelineError> {
    Ok(detector::read_detection_csv(open_file(&detect_csv(cfg, name))?)?)
}

/// Runs `body` on a pool bounded by `cfg.jobs`, writing or clearing the
/// failure marker. Config validation happens before anything is written.
fn run_stage<T>(
    cfg: &RunConfig,
    validate: impl FnOnce(&RunConfig) -> Result<(), PipelineError>,
    body: impl FnOnce(&RunConfig) -> Result<T, PipelineError> + Send,
) -> Result<T, PipelineError>
where
    T: Send,
{
    validate(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    fs::create_dir_all(&cfg.out_dir)?;
    let marker = failure_marker(cfg);
    let result = pool.install(|| body(cfg));
    match &result {
        Ok(_) => {
            if marker.exists() {
                fs::remove_file(&marker)?;
            }
        }
        Err(e) => {
            let _ = fs::write(&marker, format!("{e}\n"));
        }
    }
    result
}

/// Writes the synthetic baseline, DoS and fuzzy captures.
pub fn cmd_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    run_stage(cfg, RunConfig::validate, |cfg| {
        let dir = captures_dir(cfg);
        fs::create_dir_all(&dir)?;
        let mut paths = Vec::new();
        for c in synthesize(cfg) {
            let path = dir.join(format!("{}.csv", c.name));
            can_io::save_normalized_csv(&path, &c.frames)?;
            log::info!("wrote {} ({} frames)", path.display(), c.frames.len());
            paths.push(path);
        }
        Ok(paths)
    })
}

/// Writes one feature CSV per capture plus the schema.
pub fn cmd_features(cfg: &RunConfig) -> Result<(), PipelineError> {
    run_stage(cfg, RunConfig::validate_inputs, |cfg| {
        let captures = load_captures(cfg)?;
        let (schema, features) = featurize(cfg, &captures)?;
        let dir = features_dir(cfg);
        fs::create_dir_all(&dir)?;
        write_json(&dir.join("schema.json"), &schema)?;
        for f in &features {
            windowing::write_feature_csv(create_file(&feature_csv(cfg, &f.name))?, &schema, &f.vectors)?;
        }
        Ok(())
    })
}

/// Trains on the baseline features and writes the bundle, loss history and split.
pub fn cmd_train(cfg: &RunConfig) -> Result<Trained, PipelineError> {
    run_stage(cfg, RunConfig::validate, |cfg| {
        let schema = load_schema(cfg)?;
        let baseline = load_features(cfg, &cfg.baseline_spec().name, &schema)?;
        let trained = train(cfg, &schema, &baseline)?;
        let dir = model_dir(cfg);
        fs::create_dir_all(&dir)?;
        rae::save_bundle(&bundle_path(cfg), &trained.bundle)?;
        write_json(&dir.join("loss_history.json"), &trained.history)?;
        write_json(&dir.join("split.json"), &trained.split)?;
        Ok(trained)
    })
}

/// Scores the held-out baseline windows and every attack capture.
pub fn cmd_detect(cfg: &RunConfig) -> Result<(), PipelineError> {
    run_stage(cfg, RunConfig::validate, |cfg| {
        let bundle = load_model(cfg)?;
        let split: Split = read_json(&model_dir(cfg).join("split.json"))?;
        fs::create_dir_all(reports_dir(cfg))?;
        for spec in cfg.capture_specs() {
            let mut vectors = load_features(cfg, &spec.name, &bundle.schema)?;
            if spec.role == CaptureRole::Baseline {
                let test: std::collections::HashSet<usize> = split.test.iter().copied().collect();
                vectors.retain(|v| test.contains(&v.window_id));
            }
            let results = detect(&bundle, cfg.threshold_scale, &vectors)?;
            let flagged = results.iter().filter(|r| r.predicted.is_anomaly()).count();
            log::info!("{}: {flagged} of {} windows flagged", spec.name, results.len());
            detector::write_detection_csv(create_file(&detect_csv(cfg, &spec.name))?, &results)?;
        }
        Ok(())
    })
}

/// Explains the flagged windows of every capture and writes histogram data
/// for the attack captures.
pub fn cmd_explain(cfg: &RunConfig) -> Result<(), PipelineError> {
    run_stage(cfg, RunConfig::validate, |cfg| {
        let bundle = load_model(cfg)?;
        let split: Split = read_json(&model_dir(cfg).join("split.json"))?;
        let baseline_name = cfg.baseline_spec().name;
        let baseline_test: Vec<Vec<f64>> = {
            let all = load_features(cfg, &baseline_name, &bundle.schema)?;
            let test: std::collections::HashSet<usize> = split.test.iter().copied().collect();
            scale_vectors(&bundle, &all)?
                .into_iter()
                .filter(|v| test.contains(&v.window_id))
                .map(|v| v.values)
                .collect()
        };
        for spec in cfg.capture_specs() {
            let vectors = load_features(cfg, &spec.name, &bundle.schema)?;
            let detections = load_detections(cfg, &spec.name)?;
            let anomalies = detections.iter().filter(|d| d.predicted.is_anomaly()).count();
            let explanations = explain(
                &bundle,
                cfg.threshold_scale,
                &cfg.solver,
                &vectors,
                &detections,
                cfg.max_explanations,
            )?;
            let report = explanation_report(&spec.name, &bundle, cfg.threshold_scale, anomalies, &explanations)?;
            log::info!(
                "{}: explained {} of {anomalies} anomalies ({} not converged)",
                spec.name,
                report.explained,
                report.non_converged
            );
            write_json(&explain_json(cfg, &spec.name), &report)?;
            if spec.role == CaptureRole::Attack {
                let attack: Vec<Vec<f64>> = explanations.iter().map(|e| e.x.clone()).collect();
                let cf: Vec<Vec<f64>> = explanations.iter().filter(|e| e.converged).map(|e| e.x_cf.clone()).collect();
                let features: Vec<(usize, String)> = bundle.schema.names().iter().cloned().enumerate().collect();
                let hist = distribution_report(&baseline_test, &attack, &cf, &features, DEFAULT_BINS);
                write_json(&reports_dir(cfg).join(format!("histograms_{}.json", spec.name)), &hist)?;
            }
        }
        Ok(())
    })
}

/// Computes metrics from the detection CSVs without re-scoring.
pub fn cmd_eval(cfg: &RunConfig) -> Result<MetricsReport, PipelineError> {
    run_stage(cfg, RunConfig::validate, |cfg| {
        let bundle = load_model(cfg)?;
        let mut captures = Vec::new();
        let mut normal_behavior = None;
        for spec in cfg.capture_specs() {
            let results = load_detections(cfg, &spec.name)?;
            let metrics = eval::evaluate(&results);
            if spec.role == CaptureRole::Baseline {
                normal_behavior = Some(metrics.specificity());
            }
            captures.push(CaptureMetrics {
                capture: spec.name,
                metrics,
            });
        }
        let report = MetricsReport {
            threshold: bundle.threshold.th,
            threshold_scale: cfg.threshold_scale,
            normal_behavior,
            captures,
        };
        write_json(&reports_dir(cfg).join("metrics.json"), &report)?;
        fs::write(reports_dir(cfg).join("table.txt"), eval::summarize(&report))?;
        Ok(report)
    })
}

/// Writes `summary.txt`: the metrics table followed by the top features of
/// each global explanation.
pub fn cmd_report(cfg: &RunConfig) -> Result<String, PipelineError> {
    run_stage(cfg, RunConfig::validate, |cfg| {
        let metrics: MetricsReport = read_json(&reports_dir(cfg).join("metrics.json"))?;
        let mut text = eval::summarize(&metrics);
        for spec in cfg.capture_specs() {
            let path = explain_json(cfg, &spec.name);
            if !path.exists() {
                continue;
            }
            let report: ExplanationReport = read_json(&path)?;
            text.push('\n');
            match &report.global {
                Some(g) => text.push_str(&render_global(g, 8)),
                None => text.push_str(&format!(
                    "{}: no converged counterfactuals ({} anomalies)\n",
                    spec.name, report.anomalies_total
                )),
            }
        }
        let mut out = create_file(&reports_dir(cfg).join("summary.txt"))?;
        out.write_all(text.as_bytes())?;
        out.flush()?;
        Ok(text)
    })
}

/// Every stage in order, from synthesis (when no captures are configured) to the summary.
pub fn run_all(cfg: &RunConfig) -> Result<String, PipelineError> {
    cfg.validate()?;
    if cfg.captures.is_empty() {
        cmd_synth(cfg)?;
    }
    cmd_features(cfg)?;
    cmd_train(cfg)?;
    cmd_detect(cfg)?;
    cmd_explain(cfg)?;
    cmd_eval(cfg)?;
    cmd_report(cfg)
}
