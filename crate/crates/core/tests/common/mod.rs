//! Shared helpers for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rxads::can_io::{CanFrame, FrameKind, HIGH_PRIORITY_ID};
use rxads::rae::{mirrored_dims, RaeModel, SkipPlan};

/// Naive per-window recomputation of every feature column, written
/// independently of the library: linear scans, no maps, no slicing tricks.
pub fn oracle_window(frames: &[CanFrame], start: f64, end: f64, ids: &[u32], payload: &[(u32, u8)]) -> Vec<f64> {
    let w: Vec<&CanFrame> = frames.iter().filter(|f| f.timestamp >= start && f.timestamp < end).collect();
    let n = w.len();
    let mut v = Vec::new();
    v.push(n as f64);

    let mut seen_ids: Vec<u32> = Vec::new();
    let mut seen_dlc: Vec<u8> = Vec::new();
    for f in &w {
        if !seen_ids.contains(&f.can_id) {
            seen_ids.push(f.can_id);
        }
        if !seen_dlc.contains(&f.dlc) {
            seen_dlc.push(f.dlc);
        }
    }
    v.push(seen_ids.len() as f64);
    v.push(seen_dlc.len() as f64);

    let gaps: Vec<f64> = (1..n).map(|i| w[i].timestamp - w[i - 1].timestamp).collect();
    v.extend(triple(&gaps));

    // for each request, scan forward for the first data frame with its id
    let mut requests = 0;
    let mut ratios = Vec::new();
    let mut replies = Vec::new();
    let mut lost = 0;
    for i in 0..n {
        if w[i].kind != FrameKind::Remote {
            continue;
        }
        requests += 1;
        let mut found = None;
        for j in i + 1..n {
            if w[j].kind == FrameKind::Data && w[j].can_id == w[i].can_id {
                found = Some(j);
                break;
            }
        }
        match found {
            Some(j) => {
                ratios.push((j - i - 1) as f64);
                replies.push(w[j].timestamp - w[i].timestamp);
            }
            None => lost += 1,
        }
    }
    v.push(requests as f64);
    v.push(ratios.len() as f64);
    v.push(lost as f64);
    v.extend(triple(&ratios));
    v.push(ratios.iter().filter(|&&r| r == 0.0).count() as f64);
    v.extend(triple(&replies));

    v.push(w.iter().filter(|f| f.can_id == HIGH_PRIORITY_ID).count() as f64);
    v.push(w.iter().filter(|f| !ids.contains(&f.can_id)).count() as f64);
    for id in ids {
        v.push(w.iter().filter(|f| f.can_id == *id).count() as f64);
    }
    for &(id, byte) in payload {
        let bytes: Vec<f64> = w
            .iter()
            .filter(|f| f.can_id == id && f.payload.len() > byte as usize)
            .map(|f| f.payload[byte as usize] as f64)
            .collect();
        let mut sum = 0.0;
        for b in &bytes {
            sum += b;
        }
        v.push(if bytes.is_empty() { 0.0 } else { sum / bytes.len() as f64 });
    }
    v
}

fn triple(xs: &[f64]) -> [f64; 3] {
    if xs.is_empty() {
        return [0.0; 3];
    }
    let mut lo = xs[0];
    let mut hi = xs[0];
    let mut sum = 0.0;
    for &x in xs {
        if x < lo {
            lo = x;
        }
        if x > hi {
            hi = x;
        }
        sum += x;
    }
    let mean = sum / xs.len() as f64;
    [lo, hi, mean.max(lo).min(hi)]
}

/// Norm-wise relative error between two gradient vectors.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central-difference step.
const H: f64 = 1e-5;
pub const GRADIENT_TOL: f64 = 1e-5;

/// A random architecture, skip layout, L1 weight and input batch.
pub fn random_draw(rng: &mut ChaCha8Rng) -> (RaeModel, Vec<Vec<f64>>) {
    let d = rng.random_range(2..9);
    let depth = rng.random_range(0..4);
    let encoder: Vec<usize> = (0..depth).map(|_| rng.random_range(1..9)).collect();
    let dims = if rng.random_bool(0.7) {
        mirrored_dims(d, &encoder)
    } else {
        let mut dims = vec![d];
        dims.extend(&encoder);
        dims.push(d);
        dims
    };
    let n_layers = dims.len() - 1;
    let plan = match rng.random_range(0..3) {
        0 => SkipPlan::None,
        1 => SkipPlan::Mirrored {
            projections: rng.random_bool(0.5),
        },
        _ => {
            let mut pairs = Vec::new();
            for from in 0..n_layers {
                for to in from + 1..n_layers {
                    if rng.random_bool(0.3) {
                        pairs.push((from, to));
                    }
                }
            }
            SkipPlan::Custom(pairs)
        }
    };
    let l1 = if rng.random_bool(0.5) { 0.0 } else { 1e-3 };
    let mut model = RaeModel::with_skips(&dims, l1, rng.random(), &plan).unwrap();
    // keep weights away from the |w| kink so differences stay smooth
    for t in model.tensors_mut() {
        for w in t.iter_mut() {
            if w.abs() < 1e-3 {
                *w = if *w < 0.0 { -1e-3 } else { 1e-3 };
            }
        }
    }
    let batch_len = rng.random_range(1..6);
    let batch = (0..batch_len)
        .map(|_| (0..d).map(|_| rng.random_range(-0.5..1.5)).collect())
        .collect();
    (model, batch)
}

pub fn parameter_error(model: &RaeModel, batch: &[Vec<f64>]) -> f64 {
    let analytic = model.gradients(batch).unwrap().flatten();
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut m = model.clone();
    let n_tensors = m.tensors().len();
    for t in 0..n_tensors {
        let len = m.tensors()[t].len();
        for i in 0..len {
            let orig = m.tensors()[t][i];
            m.tensors_mut()[t][i] = orig + H;
            let up = m.batch_loss(batch).unwrap();
            m.tensors_mut()[t][i] = orig - H;
            let down = m.batch_loss(batch).unwrap();
            m.tensors_mut()[t][i] = orig;
            numeric.push((up - down) / (2.0 * H));
        }
    }
    rel_error(&analytic, &numeric)
}

pub fn input_error(model: &RaeModel, x: &[f64]) -> f64 {
    let analytic = model.input_gradient(x).unwrap();
    let mut z = x.to_vec();
    let numeric: Vec<f64> = (0..x.len())
        .map(|i| {
            z[i] = x[i] + H;
            let up = model.sample_error(&z).unwrap();
            z[i] = x[i] - H;
            let down = model.sample_error(&z).unwrap();
            z[i] = x[i];
            (up - down) / (2.0 * H)
        })
        .collect();
    rel_error(&analytic, &numeric)
}

/// Synthetic captures featurized and trained under `cfg`.
pub struct Fixture {
    pub trained: rxads::pipeline::Trained,
    pub features: Vec<rxads::pipeline::CaptureFeatures>,
}

pub fn synthetic_fixture(cfg: &rxads::pipeline::RunConfig) -> Fixture {
    let captures = rxads::pipeline::synthesize(cfg);
    let (schema, features) = rxads::pipeline::featurize(cfg, &captures).unwrap();
    let trained = rxads::pipeline::train(cfg, &schema, &features[0].vectors).unwrap();
    Fixture { trained, features }
}

/// A quick configuration: seconds of traffic, a small network.
pub fn small_config(seed: u64) -> rxads::pipeline::RunConfig {
    let mut cfg = rxads::pipeline::RunConfig::with_seed(seed);
    cfg.synth.baseline_duration = 8.0;
    cfg.synth.attack_duration = 2.0;
    cfg.model.encoder = vec![16, 8];
    cfg.train.epochs = 20;
    cfg
}
