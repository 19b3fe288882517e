//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. The dataset reproductions run only when their configs are given
//! through `RXADS_OTIDS_CONFIG` / `RXADS_CARHACKING_CONFIG`.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rxads::can_io::{inject_dos, inject_fuzzy, synth_baseline, IdSpace, SynthConfig};
use rxads::detector::{DetectionResult, Threshold};
use rxads::eval::{evaluate, Metrics};
use rxads::explainer::{aggregate, solve_counterfactual, BoundsBox, Explanation, SolveStatus, SolverConfig};
use rxads::pipeline::{self, CaptureFeatures, CaptureRole, RunConfig, Trained};
use rxads::rae::{squared_distance, RaeModel};
use rxads::windowing::{extract_features, fit_schema, WindowSpec};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, name: &str, elapsed: Duration, outcome: Outcome) {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                self.failures += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {name}: {detail} [{:.2} s]", elapsed.as_secs_f64());
    }

    fn run(&mut self, name: &str, f: impl FnOnce() -> Outcome) {
        let t0 = Instant::now();
        let outcome = f();
        self.record(name, t0.elapsed(), outcome);
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn with_budget(outcome: Outcome, elapsed: Duration, budget: Duration) -> Outcome {
    match outcome {
        Outcome::Pass(d) if elapsed > budget => {
            Outcome::Fail(format!("{d}; took {:.1} s, budget {} s", elapsed.as_secs_f64(), budget.as_secs()))
        }
        other => other,
    }
}

// ------------------------------------------------------------------ features

fn feature_oracle() -> Outcome {
    let t0 = Instant::now();
    let base = synth_baseline(2.0, 101, &SynthConfig::default());
    let schema = fit_schema(&base, true).unwrap();
    let dos = inject_dos(&base, 3000.0, 102);
    let mut frames = inject_fuzzy(&dos, 2000.0, IdSpace::STANDARD, 103);
    frames.truncate(1000);
    let mut windows = 0;
    let mut mismatches = 0;
    for win in [0.005, 0.01, 0.02, 0.05, 0.1] {
        let spec = WindowSpec::for_capture(win, &frames).unwrap();
        for fv in extract_features(&frames, &spec, &schema) {
            let want = common::oracle_window(
                &frames,
                spec.window_start(fv.window_id),
                spec.window_end(fv.window_id),
                schema.baseline_ids(),
                schema.payload_columns(),
            );
            windows += 1;
            // bit-exact, NaN-free comparison
            if fv.values.iter().zip(&want).any(|(a, b)| a.to_bits() != b.to_bits()) || fv.values.len() != want.len() {
                mismatches += 1;
            }
        }
    }
    let outcome = check(
        mismatches == 0,
        format!("{} frames, 5 window sizes, {windows} windows, {mismatches} mismatching", frames.len()),
    );
    with_budget(outcome, t0.elapsed(), Duration::from_secs(10))
}

// ----------------------------------------------------------------- gradients

fn gradients() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_param, mut worst_input): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let (model, batch) = common::random_draw(&mut rng);
        worst_param = worst_param.max(common::parameter_error(&model, &batch));
        for x in &batch {
            worst_input = worst_input.max(common::input_error(&model, x));
        }
    }
    let tol = common::GRADIENT_TOL;
    let outcome = check(
        worst_param < tol && worst_input < tol,
        format!("100 draws, worst relative error: parameters {worst_param:.2e}, inputs {worst_input:.2e} (tol {tol:e})"),
    );
    with_budget(outcome, t0.elapsed(), Duration::from_secs(60))
}

// ------------------------------------------------------- synthetic fixture

struct Synthetic {
    cfg: RunConfig,
    trained: Trained,
    features: Vec<CaptureFeatures>,
    detections: Vec<(String, Vec<DetectionResult>)>,
    elapsed: Duration,
}

fn synthetic_config() -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/synthetic.json");
    RunConfig::load(&path).unwrap()
}

/// Synthesis through detection, in memory, on one worker thread.
fn run_synthetic() -> Synthetic {
    let cfg = synthetic_config();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let t0 = Instant::now();
    let (trained, features, detections) = pool.install(|| {
        let captures = pipeline::synthesize(&cfg);
        let (schema, features) = pipeline::featurize(&cfg, &captures).unwrap();
        let trained = pipeline::train(&cfg, &schema, &features[0].vectors).unwrap();
        let detections = features
            .iter()
            .map(|f| {
                let mut vectors = f.vectors.clone();
                if f.role == CaptureRole::Baseline {
                    vectors.retain(|v| trained.split.test.contains(&v.window_id));
                }
                (f.name.clone(), pipeline::detect(&trained.bundle, cfg.threshold_scale, &vectors).unwrap())
            })
            .collect();
        (trained, features, detections)
    });
    Synthetic {
        cfg,
        trained,
        features,
        detections,
        elapsed: t0.elapsed(),
    }
}

impl Synthetic {
    fn metrics(&self, name: &str) -> Metrics {
        evaluate(&self.detections.iter().find(|(n, _)| n == name).unwrap().1)
    }

    fn explain_all(&self, name: &str) -> (Vec<Explanation>, Vec<Vec<f64>>) {
        let f = self.features.iter().find(|f| f.name == name).unwrap();
        let det = &self.detections.iter().find(|(n, _)| n == name).unwrap().1;
        let bundle = &self.trained.bundle;
        let exps = pipeline::explain(bundle, self.cfg.threshold_scale, &self.cfg.solver, &f.vectors, det, None).unwrap();
        let xs = exps.iter().map(|e| e.x.clone()).collect();
        (exps, xs)
    }
}

fn calibration(s: &Synthetic) -> Outcome {
    let th = s.trained.bundle.threshold;
    let n = s.trained.train_errors.len();
    let above = s.trained.train_errors.iter().filter(|&&e| e > th.th).count();
    let bound = ((1.0 - th.quantile) * n as f64).ceil() as usize;
    check(
        n == 2000 && above == 0 && above <= bound,
        format!("{above} of {n} training windows above th = {:.6} (q = {})", th.th, th.quantile),
    )
}

fn end_to_end(s: &Synthetic) -> Outcome {
    let base = s.metrics("baseline");
    let dos = s.metrics("dos");
    let fuzzy = s.metrics("fuzzy");
    let spec = base.specificity();
    let outcome = check(
        s.trained.split.train.len() == 2000
            && base.total() >= 600
            && spec >= 0.995
            && dos.recall >= 0.99
            && fuzzy.recall >= 0.98,
        format!(
            "train {} / test {}: specificity {:.2}%, DoS recall {:.2}% ({} windows), Fuzzy recall {:.2}% ({} windows)",
            s.trained.split.train.len(),
            base.total(),
            100.0 * spec,
            100.0 * dos.recall,
            dos.total(),
            100.0 * fuzzy.recall,
            fuzzy.total()
        ),
    );
    with_budget(outcome, s.elapsed, Duration::from_secs(300))
}

fn feasibility(s: &Synthetic, runs: &[(String, Vec<Explanation>)]) -> Outcome {
    let bundle = &s.trained.bundle;
    let bounds = BoundsBox::from_scaler(&bundle.scaler);
    let limit = bundle.threshold.with_scale(s.cfg.threshold_scale).unwrap().effective();
    let (mut converged, mut total, mut violations, mut dominated, mut fallback_feasible) = (0, 0, 0, 0, 0);
    for (_, exps) in runs {
        for e in exps {
            total += 1;
            if !e.converged {
                continue;
            }
            converged += 1;
            let j = bundle.model.sample_error(&e.x_cf).unwrap();
            if !(j <= limit && bounds.contains(&e.x_cf)) {
                violations += 1;
            }
            let p = bounds.project(&bundle.model.reconstruct(&e.x).unwrap());
            if bundle.model.sample_error(&p).unwrap() <= limit {
                fallback_feasible += 1;
                if squared_distance(&e.x, &e.x_cf) > squared_distance(&e.x, &p) {
                    dominated += 1;
                }
            }
        }
    }
    check(
        converged > 0 && violations == 0 && dominated == 0,
        format!(
            "{converged} of {total} explanations converged; {violations} infeasible or out of bounds; \
             {dominated} farther than the feasible projected reconstruction ({fallback_feasible} such fallbacks)"
        ),
    )
}

fn sign_pattern(s: &Synthetic, dos: &[Explanation]) -> Outcome {
    let global = aggregate(dos, "dos").unwrap();
    let names = s.trained.bundle.schema.names();
    let mean = |name: &str| global.mean_deviation[names.iter().position(|n| n == name).unwrap()];
    let (hp, ir) = (mean("high_priority_count"), mean("instant_reply_count"));
    check(
        hp > 0.0 && ir < 0.0,
        format!("DoS mean deviation: high_priority_count {hp:+.4}, instant_reply_count {ir:+.4} over {} samples", global.count),
    )
}

// ---------------------------------------------------------------- toy oracle

fn closed_form() -> Outcome {
    let mut model = RaeModel::new(&[2, 2], 0.0, 0).unwrap();
    for t in model.tensors_mut() {
        t.iter_mut().for_each(|w| *w = 0.0);
    }
    let r: f64 = 0.15;
    let threshold = Threshold::new(r * r, 0.999999, 1.0).unwrap();
    let unit = BoundsBox::new(vec![0.0; 2], vec![1.0; 2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut worst, mut checked, mut unconverged): (f64, usize, usize) = (0.0, 0, 0);
    while checked < 200 {
        let x: [f64; 2] = [rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)];
        let (dx, dy) = (x[0] - 0.5, x[1] - 0.5);
        let n = (dx * dx + dy * dy).sqrt();
        if n <= r {
            continue;
        }
        let want = [0.5 + r * dx / n, 0.5 + r * dy / n];
        let e = solve_counterfactual(&model, checked, &x, &threshold, &unit, &SolverConfig::default()).unwrap();
        if e.status != SolveStatus::Converged {
            unconverged += 1;
        }
        worst = worst.max(((e.x_cf[0] - want[0]).powi(2) + (e.x_cf[1] - want[1]).powi(2)).sqrt());
        checked += 1;
    }
    check(
        worst < 1e-3 && unconverged == 0,
        format!("200 anomalies, worst distance to the radial projection {worst:.2e} (tol 1e-3), {unconverged} unconverged"),
    )
}

// ----------------------------------------------------------- dataset configs

fn dataset(var: &str, judge: impl FnOnce(&[(String, Metrics)]) -> Outcome) -> Outcome {
    let Some(path) = std::env::var_os(var).map(PathBuf::from) else {
        return Outcome::Skip(format!("set {var} to a run config listing the capture files"));
    };
    let t0 = Instant::now();
    let result = (|| -> Result<Vec<(String, Metrics)>, pipeline::PipelineError> {
        let cfg = RunConfig::load(&path)?;
        cfg.validate_inputs()?;
        let captures = pipeline::load_captures(&cfg)?;
        let (schema, features) = pipeline::featurize(&cfg, &captures)?;
        let baseline = features.iter().find(|f| f.role == CaptureRole::Baseline).unwrap();
        let trained = pipeline::train(&cfg, &schema, &baseline.vectors)?;
        features
            .iter()
            .map(|f| {
                let mut vectors = f.vectors.clone();
                if f.role == CaptureRole::Baseline {
                    vectors.retain(|v| trained.split.test.contains(&v.window_id));
                }
                Ok((f.name.clone(), evaluate(&pipeline::detect(&trained.bundle, cfg.threshold_scale, &vectors)?)))
            })
            .collect()
    })();
    let outcome = match result {
        Ok(metrics) => judge(&metrics),
        Err(e) => Outcome::Fail(format!("{}: {e}", path.display())),
    };
    with_budget(outcome, t0.elapsed(), Duration::from_secs(1800))
}

fn find<'a>(metrics: &'a [(String, Metrics)], name: &str) -> Option<&'a Metrics> {
    metrics.iter().find(|(n, _)| n == name).map(|(_, m)| m)
}

fn otids(metrics: &[(String, Metrics)]) -> Outcome {
    match (find(metrics, "baseline"), find(metrics, "dos"), find(metrics, "fuzzy")) {
        (Some(b), Some(d), Some(f)) => check(
            b.specificity() >= 0.995 && d.recall >= 0.995 && f.recall >= 0.995,
            format!(
                "normal behavior {:.2}%, DoS {:.2}%, Fuzzy {:.2}%",
                100.0 * b.specificity(),
                100.0 * d.recall,
                100.0 * f.recall
            ),
        ),
        _ => Outcome::Fail("config must name its captures baseline, dos and fuzzy".into()),
    }
}

fn car_hacking(metrics: &[(String, Metrics)]) -> Outcome {
    match (find(metrics, "dos"), find(metrics, "fuzzy")) {
        (Some(d), Some(f)) => check(
            d.f1 >= 0.980 && f.f1 >= 0.975,
            format!("DoS F1 {:.2}, Fuzzy F1 {:.2}", 100.0 * d.f1, 100.0 * f.f1),
        ),
        _ => Outcome::Fail("config must name its attack captures dos and fuzzy".into()),
    }
}

fn main() -> ExitCode {
    let mut report = Report { failures: 0 };
    report.run("feature-oracle equivalence", feature_oracle);
    report.run("gradient correctness", gradients);

    let t0 = Instant::now();
    let synthetic = run_synthetic();
    println!("     synthetic fixture trained and scored in {:.2} s", t0.elapsed().as_secs_f64());
    report.run("calibration guarantee", || calibration(&synthetic));
    report.record("synthetic end-to-end detection", synthetic.elapsed, end_to_end(&synthetic));

    let t0 = Instant::now();
    let runs: Vec<(String, Vec<Explanation>)> =
        ["dos", "fuzzy"].iter().map(|n| (n.to_string(), synthetic.explain_all(n).0)).collect();
    let outcome = feasibility(&synthetic, &runs);
    report.record("counterfactual feasibility", t0.elapsed(), outcome);
    report.run("closed-form counterfactual oracle", closed_form);
    report.run("explanation sign pattern", || sign_pattern(&synthetic, &runs[0].1));

    report.run("OTIDS reproduction (optional)", || dataset("RXADS_OTIDS_CONFIG", otids));
    report.run("Car Hacking reproduction (optional)", || dataset("RXADS_CARHACKING_CONFIG", car_hacking));

    if report.failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", report.failures);
        ExitCode::FAILURE
    }
}
