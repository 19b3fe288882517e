//! Projected penalty search for the nearest in-bounds input the detector accepts.
//!
//! Minimizes `||x - z||^2 + lambda * max(0, J(z) - tau)^2` with Adam steps on
//! `z`, projecting onto the bounds box after every step. `lambda` grows
//! geometrically whenever a stage ends outside the feasible set. The best
//! feasible iterate seen anywhere (including the box-projected
//! reconstruction used as the first start) is then polished against the
//! linearized constraint and returned.

use serde::{Deserialize, Serialize};

use super::{BoundsBox, ExplainError, Explanation, SolveStatus};
use crate::detector::Threshold;
use crate::rae::{squared_distance, RaeModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub learning_rate: f64,
    /// Per-iteration multiplicative learning-rate decay inside a stage.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Iteration budget per penalty stage.
    pub max_iterations: usize,
    /// A stage ends once a projected step is shorter than this.
    pub step_tolerance: f64,
    /// Penalty target sits at `th * scale * (1 - margin)`.
    pub margin: f64,
    pub lambda_init: f64,
    pub lambda_factor: f64,
    pub lambda_max: f64,
    /// Linearized projection steps applied to the best feasible point.
    pub polish_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            learning_rate: 0.02,
            lr_decay: 0.99,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iterations: 5000,
            step_tolerance: 1e-6,
            margin: 0.01,
            lambda_init: 1.0,
            lambda_factor: 10.0,
            lambda_max: 1e6,
            polish_iterations: 100,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ExplainError> {
        let ok = self.learning_rate > 0.0
            && self.lr_decay > 0.0
            && self.lr_decay <= 1.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.max_iterations >= 1
            && self.step_tolerance > 0.0
            && (0.0..1.0).contains(&self.margin)
            && self.lambda_init > 0.0
            && self.lambda_factor > 1.0
            && self.lambda_max >= self.lambda_init;
        if ok {
            Ok(())
        } else {
            Err(ExplainError::BadConfig(format!("{self:?}")))
        }
    }
}

#[derive(Default)]
struct Tracker {
    feasible: Option<(f64, Vec<f64>, f64)>,
    infeasible: Option<(f64, Vec<f64>)>,
}

impl Tracker {
    fn record(&mut self, x: &[f64], z: &[f64], j: f64, limit: f64) {
        if j <= limit {
            let d = squared_distance(x, z);
            if self.feasible.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
                self.feasible = Some((d, z.to_vec(), j));
            }
        } else if self.infeasible.as_ref().is_none_or(|(bj, _)| j < *bj) {
            self.infeasible = Some((j, z.to_vec()));
        }
    }
}

struct Run {
    iterations: usize,
    lambda: f64,
    stage_converged: bool,
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[allow(clippy::too_many_arguments)]
fn run_from(
    model: &RaeModel,
    x: &[f64],
    start: Vec<f64>,
    limit: f64,
    tau: f64,
    bounds: &BoundsBox,
    cfg: &SolverConfig,
    tracker: &mut Tracker,
) -> Result<Run, ExplainError> {
    let d = x.len();
    let mut z = start;
    let mut lambda = cfg.lambda_init;
    let mut iterations = 0;
    loop {
        let (mut m, mut v) = (vec![0.0; d], vec![0.0; d]);
        let mut lr = cfg.learning_rate;
        let mut stage_converged = false;
        for t in 1..=cfg.max_iterations {
            let (j, gj) = model.error_and_input_gradient(&z)?;
            if !j.is_finite() || !finite(&gj) {
                return Err(ExplainError::NonFiniteIterate);
            }
            tracker.record(x, &z, j, limit);
            let violation = (j - tau).max(0.0);
            let bc1 = 1.0 - cfg.beta1.powi(t as i32);
            let bc2 = 1.0 - cfg.beta2.powi(t as i32);
            let mut step_sq = 0.0;
            for i in 0..d {
                let g = 2.0 * (z[i] - x[i]) + 2.0 * lambda * violation * gj[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let next = z[i] - lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.epsilon);
                let next = next.clamp(bounds.lower[i], bounds.upper[i]);
                step_sq += (next - z[i]) * (next - z[i]);
                z[i] = next;
            }
            if !finite(&z) {
                return Err(ExplainError::NonFiniteIterate);
            }
            iterations += 1;
            lr *= cfg.lr_decay;
            if step_sq.sqrt() < cfg.step_tolerance {
                stage_converged = true;
                break;
            }
        }
        let j = model.sample_error(&z)?;
        if !j.is_finite() {
            return Err(ExplainError::NonFiniteIterate);
        }
        tracker.record(x, &z, j, limit);
        if j <= limit || lambda >= cfg.lambda_max {
            return Ok(Run {
                iterations,
                lambda,
                stage_converged,
            });
        }
        lambda = (lambda * cfg.lambda_factor).min(cfg.lambda_max);
    }
}

/// Relative slack below the limit that polishing retracts onto.
const POLISH_SLACK: f64 = 1e-6;

/// Newton steps along the gradient that bring `w` onto `J = level`.
fn retract(model: &RaeModel, mut w: Vec<f64>, level: f64, bounds: &BoundsBox) -> Result<(Vec<f64>, f64), ExplainError> {
    let mut j = f64::NAN;
    for _ in 0..8 {
        let (jw, g) = model.error_and_input_gradient(&w)?;
        j = jw;
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if !(gg > 0.0 && gg.is_finite() && j.is_finite()) || (j - level).abs() <= 1e-3 * POLISH_SLACK * level {
            break;
        }
        let mu = (j - level) / gg;
        w = bounds.project(&w.iter().zip(&g).map(|(wi, gi)| wi - mu * gi).collect::<Vec<_>>());
        j = f64::NAN;
    }
    if j.is_nan() {
        j = model.sample_error(&w)?;
    }
    Ok((w, j))
}

/// Moves a feasible `z` closer to `x` while keeping `J(z) <= limit`.
///
/// Adam leaves the penalty iterate scattered around the boundary of the
/// feasible set. Polishing slides along that boundary instead: a step along
/// the component of `x - z` tangent to the level set, then Newton retraction
/// back onto `J = limit * (1 - POLISH_SLACK)`. The step length adapts; only
/// feasible points strictly closer to `x` are accepted.
fn polish(
    model: &RaeModel,
    x: &[f64],
    z: Vec<f64>,
    j: f64,
    limit: f64,
    bounds: &BoundsBox,
    iterations: usize,
) -> Result<(Vec<f64>, f64, usize), ExplainError> {
    let level = limit * (1.0 - POLISH_SLACK);
    // first pull straight toward x as far as the level set allows
    let (mut best, mut best_j) = (z, j);
    let mut best_dist = squared_distance(x, &best);
    let (w, jw) = retract(model, best.clone(), level, bounds)?;
    if jw.is_finite() && jw <= limit && squared_distance(x, &w) < best_dist {
        best_dist = squared_distance(x, &w);
        best = w;
        best_j = jw;
    }
    let mut alpha: f64 = 1.0;
    let mut used = 0;
    while used < iterations {
        used += 1;
        let (_, g) = model.error_and_input_gradient(&best)?;
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if !(gg > 0.0 && gg.is_finite()) {
            break;
        }
        let r: Vec<f64> = x.iter().zip(&best).map(|(xi, zi)| xi - zi).collect();
        let along = r.iter().zip(&g).map(|(ri, gi)| ri * gi).sum::<f64>() / gg;
        let tangent: Vec<f64> = r.iter().zip(&g).map(|(ri, gi)| ri - along * gi).collect();
        let tnorm = tangent.iter().map(|v| v * v).sum::<f64>().sqrt();
        if tnorm < 1e-12 * best_dist.sqrt().max(1e-12) {
            break;
        }
        let mut accepted = false;
        while alpha > 1e-8 {
            let w: Vec<f64> = best.iter().zip(&tangent).map(|(bi, ti)| bi + alpha * ti).collect();
            let (w, jw) = retract(model, bounds.project(&w), level, bounds)?;
            let dw = squared_distance(x, &w);
            if jw.is_finite() && jw <= limit && dw < best_dist {
                best_dist = dw;
                best = w;
                best_j = jw;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        alpha = (alpha * 2.0).min(1.0);
    }
    Ok((best, best_j, used))
}

/// Solves for the counterfactual of one scaled window `x`.
///
/// A window the detector already accepts is returned unchanged with zero
/// iterations. Otherwise the search starts from the box-projected
/// reconstruction and restarts from the box-projected `x` only if the first
/// start never reaches the feasible set.
pub fn solve_counterfactual(
    model: &RaeModel,
    window_id: usize,
    x: &[f64],
    threshold: &Threshold,
    bounds: &BoundsBox,
    cfg: &SolverConfig,
) -> Result<Explanation, ExplainError> {
    cfg.validate()?;
    let d = model.input_dim();
    if x.len() != d || bounds.len() != d {
        return Err(ExplainError::LengthMismatch {
            expected: d,
            got: x.len().min(bounds.len()),
        });
    }
    let limit = threshold.effective();
    let j_x = model.sample_error(x)?;
    if !j_x.is_finite() {
        return Err(ExplainError::NonFiniteIterate);
    }
    if j_x <= limit {
        return Ok(Explanation::new(window_id, x.to_vec(), x.to_vec(), j_x, j_x, SolveStatus::AlreadyNormal));
    }
    let tau = limit * (1.0 - cfg.margin);
    let mut tracker = Tracker::default();
    let reconstruction = bounds.project(&model.reconstruct(x)?);
    let mut run = run_from(model, x, reconstruction.clone(), limit, tau, bounds, cfg, &mut tracker)?;
    let mut restarted = false;
    if tracker.feasible.is_none() {
        restarted = true;
        let second = run_from(model, x, bounds.project(x), limit, tau, bounds, cfg, &mut tracker)?;
        run = Run {
            iterations: run.iterations + second.iterations,
            ..second
        };
    }
    let mut e = match tracker.feasible {
        Some((_, z, j)) => {
            let (z, j, used) = polish(model, x, z, j, limit, bounds, cfg.polish_iterations)?;
            run.iterations += used;
            Explanation::new(window_id, x.to_vec(), z, j_x, j, SolveStatus::Converged)
        }
        None => {
            let (j, z) = tracker.infeasible.unwrap_or((model.sample_error(&reconstruction)?, reconstruction.clone()));
            Explanation::new(window_id, x.to_vec(), z, j_x, j, SolveStatus::MaxLambdaExceeded)
        }
    };
    e.iterations = run.iterations;
    e.lambda_final = run.lambda;
    e.stage_converged = run.stage_converged;
    e.restarted = restarted;
    e.from_reconstruction = e.converged && e.x_cf == reconstruction;
    Ok(e)
}
