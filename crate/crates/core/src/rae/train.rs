use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{RaeError, RaeModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Mini-batch size (the `T` of the batch loss).
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub shuffle_seed: u64,
    /// Stop after this many epochs without validation improvement, restoring
    /// the best parameters. Ignored when no validation set is supplied.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            shuffle_seed: 0,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RaeError> {
        let bad = |m: &str| Err(RaeError::BadConfig(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1");
        }
        // zero is accepted so a run can be replayed without moving parameters
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return bad("adam betas must lie in [0, 1) and epsilon be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Full-set batch loss before the first update.
    pub initial_loss: f64,
    /// Mean mini-batch loss of each completed epoch.
    pub epoch_loss: Vec<f64>,
    /// Validation reconstruction error per epoch, when a validation set was given.
    pub validation_error: Vec<f64>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn final_loss(&self) -> f64 {
        self.epoch_loss.last().copied().unwrap_or(self.initial_loss)
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &RaeModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut RaeModel, grads: &[Vec<f64>], cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for (k, params) in model.tensors_mut().into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            for i in 0..params.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                params[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
            }
        }
    }
}

fn mean_error<V: AsRef<[f64]>>(model: &RaeModel, data: &[V]) -> Result<f64, RaeError> {
    let mut sum = 0.0;
    for x in data {
        sum += model.sample_error(x.as_ref())?;
    }
    Ok(sum / data.len() as f64)
}

/// Trains with Adam over shuffled mini-batches. Deterministic for a fixed
/// model seed and `shuffle_seed`.
pub fn fit<V: AsRef<[f64]>>(
    model: &mut RaeModel,
    train: &[V],
    cfg: &TrainConfig,
    validation: Option<&[V]>,
) -> Result<TrainHistory, RaeError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(RaeError::EmptyBatch);
    }
    let initial_loss = model.batch_loss(train)?;
    if !initial_loss.is_finite() {
        return Err(RaeError::NonFiniteLoss { epoch: 0 });
    }
    let mut history = TrainHistory {
        initial_loss,
        ..TrainHistory::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut adam = Adam::new(model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let validation = validation.filter(|v| !v.is_empty());
    let mut best: Option<(f64, RaeModel)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| train[i].as_ref()).collect();
            let (loss, grads) = model.loss_and_gradients(&batch)?;
            if !loss.is_finite() {
                return Err(RaeError::NonFiniteLoss { epoch });
            }
            weighted += loss * chunk.len() as f64;
            adam.step(model, &grads.tensors, cfg);
        }
        let epoch_loss = weighted / train.len() as f64;
        history.epoch_loss.push(epoch_loss);
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");

        if let Some(val) = validation {
            let err = mean_error(model, val)?;
            history.validation_error.push(err);
            if best.as_ref().is_none_or(|(b, _)| err < *b) {
                best = Some((err, model.clone()));
                since_best = 0;
            } else {
                since_best += 1;
            }
            if cfg.patience.is_some_and(|p| since_best >= p) {
                history.stopped_early = true;
                break;
            }
        }
    }
    if history.stopped_early {
        if let Some((_, m)) = best {
            *model = m;
        }
    }
    Ok(history)
}
