mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rxads::detector::Threshold;
use rxads::explainer::{aggregate, explain_batch, solve_counterfactual, BoundsBox, SolveStatus, SolverConfig};
use rxads::pipeline::{self, CaptureRole};
use rxads::rae::{squared_distance, RaeModel};

/// Reconstruction fixed at (0.5, 0.5): all weights and biases zero.
fn frozen_model() -> RaeModel {
    let mut m = RaeModel::new(&[2, 2], 0.0, 0).unwrap();
    for t in m.tensors_mut() {
        t.iter_mut().for_each(|w| *w = 0.0);
    }
    m
}

/// Nearest point of the disk of radius `r` around the centre, for `x` outside it.
fn radial_projection(x: &[f64], r: f64) -> [f64; 2] {
    let (dx, dy) = (x[0] - 0.5, x[1] - 0.5);
    let n = (dx * dx + dy * dy).sqrt();
    [0.5 + r * dx / n, 0.5 + r * dy / n]
}

#[test]
fn frozen_reconstruction_matches_radial_projection() {
    let m = frozen_model();
    let r: f64 = 0.15;
    let t = Threshold::new(r * r, 0.99, 1.0).unwrap();
    let unit = BoundsBox::new(vec![0.0; 2], vec![1.0; 2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 50 {
        let x = vec![rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)];
        if squared_distance(&x, &[0.5, 0.5]) <= r * r {
            continue;
        }
        let e = solve_counterfactual(&m, checked, &x, &t, &unit, &SolverConfig::default()).unwrap();
        let want = radial_projection(&x, r);
        assert_eq!(e.status, SolveStatus::Converged);
        let err = ((e.x_cf[0] - want[0]).powi(2) + (e.x_cf[1] - want[1]).powi(2)).sqrt();
        assert!(err < 1e-3, "x {x:?}: got {:?}, want {want:?}", e.x_cf);
        checked += 1;
    }
}

#[test]
fn solution_respects_tight_box() {
    // box excludes the centre; the feasible set is the disk cut by x <= 0.45
    let m = frozen_model();
    let t = Threshold::new(0.01, 0.99, 1.0).unwrap();
    let b = BoundsBox::new(vec![0.0, 0.0], vec![0.45, 1.0]).unwrap();
    let e = solve_counterfactual(&m, 0, &[0.0, 0.5], &t, &b, &SolverConfig::default()).unwrap();
    assert!(e.converged);
    assert!(b.contains(&e.x_cf));
    assert!(e.j_cf <= t.effective());
    assert!((e.x_cf[0] - 0.4).abs() < 1e-3, "{:?}", e.x_cf);
}

#[test]
fn unreachable_threshold_is_flagged() {
    // the box keeps every point at least 0.4 away from the reconstruction
    let m = frozen_model();
    let t = Threshold::new(0.01, 0.99, 1.0).unwrap();
    let b = BoundsBox::new(vec![0.9, 0.9], vec![1.0, 1.0]).unwrap();
    let cfg = SolverConfig {
        max_iterations: 300,
        ..SolverConfig::default()
    };
    let e = solve_counterfactual(&m, 4, &[1.0, 1.0], &t, &b, &cfg).unwrap();
    assert!(!e.converged);
    assert_eq!(e.status, SolveStatus::MaxLambdaExceeded);
    assert!(b.contains(&e.x_cf));
    assert!((e.x_cf[0] - 0.9).abs() < 1e-6 && (e.x_cf[1] - 0.9).abs() < 1e-6);
    assert_eq!(e.lambda_final, cfg.lambda_max);
}

struct Trained {
    fixture: common::Fixture,
}

impl Trained {
    fn new() -> Self {
        Trained {
            fixture: common::synthetic_fixture(&common::small_config(3)),
        }
    }

    fn anomalies(&self, capture: &str, limit: usize) -> Vec<(usize, Vec<f64>)> {
        let bundle = &self.fixture.trained.bundle;
        let f = self.fixture.features.iter().find(|f| f.name == capture).unwrap();
        let det = pipeline::detect(bundle, 1.0, &f.vectors).unwrap();
        det.iter()
            .zip(&f.vectors)
            .filter(|(d, _)| d.predicted.is_anomaly())
            .take(limit)
            .map(|(d, v)| (d.window_id, bundle.scaler.transform(&v.values).unwrap()))
            .collect()
    }
}

#[test]
fn trained_model_explanations_are_feasible_and_dominate_fallback() {
    let t = Trained::new();
    let bundle = &t.fixture.trained.bundle;
    let bounds = BoundsBox::from_scaler(&bundle.scaler);
    let cfg = SolverConfig::default();
    for capture in ["dos", "fuzzy"] {
        let samples = t.anomalies(capture, 25);
        assert!(!samples.is_empty());
        let out = explain_batch(&bundle.model, &samples, &bundle.threshold, &bounds, &cfg, Some(&bundle.scaler)).unwrap();
        for (e, (_, x)) in out.iter().zip(&samples) {
            if !e.converged {
                continue;
            }
            assert!(bundle.model.sample_error(&e.x_cf).unwrap() <= bundle.threshold.effective());
            assert!(bounds.contains(&e.x_cf));
            let p = bounds.project(&bundle.model.reconstruct(x).unwrap());
            if bundle.model.sample_error(&p).unwrap() <= bundle.threshold.effective() {
                assert!(squared_distance(x, &e.x_cf).sqrt() <= squared_distance(x, &p).sqrt() + 1e-6);
            }
            // idempotence: the counterfactual is its own explanation
            let again = solve_counterfactual(&bundle.model, e.window_id, &e.x_cf, &bundle.threshold, &bounds, &cfg).unwrap();
            assert_eq!(again.x_cf, e.x_cf);
            assert!(again.deviation.iter().all(|d| *d == 0.0));
        }
        let g = aggregate(&out, capture).unwrap();
        assert_eq!(g.count, out.iter().filter(|e| e.status == SolveStatus::Converged).count());
    }
}

#[test]
fn batch_is_deterministic_and_permutation_equivariant() {
    let t = Trained::new();
    let bundle = &t.fixture.trained.bundle;
    let bounds = BoundsBox::from_scaler(&bundle.scaler);
    let cfg = SolverConfig::default();
    let samples = t.anomalies("dos", 6);
    let run = |s: &[(usize, Vec<f64>)]| explain_batch(&bundle.model, s, &bundle.threshold, &bounds, &cfg, None).unwrap();
    let a = run(&samples);
    assert_eq!(a, run(&samples));
    let mut reversed = samples.clone();
    reversed.reverse();
    let mut b = run(&reversed);
    b.reverse();
    assert_eq!(a, b);
    assert!(run(&[]).is_empty());
}

#[test]
fn capture_roles_are_as_synthesized() {
    let t = Trained::new();
    let roles: Vec<CaptureRole> = t.fixture.features.iter().map(|f| f.role).collect();
    assert_eq!(roles, vec![CaptureRole::Baseline, CaptureRole::Attack, CaptureRole::Attack]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn converged_points_are_feasible(x0 in -1.0f64..2.0, x1 in -1.0f64..2.0, r in 0.05f64..0.4) {
        let m = frozen_model();
        let t = Threshold::new(r * r, 0.99, 1.0).unwrap();
        let b = BoundsBox::new(vec![0.0; 2], vec![1.0; 2]).unwrap();
        let e = solve_counterfactual(&m, 0, &[x0, x1], &t, &b, &SolverConfig::default()).unwrap();
        if e.converged {
            prop_assert!(b.contains(&e.x_cf) || e.status == SolveStatus::AlreadyNormal);
            prop_assert!(m.sample_error(&e.x_cf).unwrap() <= t.effective());
        }
    }
}
