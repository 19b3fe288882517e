//! Residual autoencoder with sigmoid layers and additive skip connections.
//!
//! Activations are indexed `a_0 = x`, `a_l` for the output of layer `l`
//! (`1..=L`). Every layer computes `h_l = sigmoid(W_l a_{l-1} + b_l)`; a skip
//! `(from, to)` adds `a_from` (or `P a_from` through a learned projection when
//! the widths differ) to `h_to`. Skips only target hidden layers, so the
//! reconstruction `a_L` always lies in `(0, 1)^d`.

mod bundle;
mod train;

pub use bundle::{load_bundle, save_bundle, ModelBundle, BUNDLE_FORMAT, BUNDLE_VERSION};
pub use train::{fit, TrainConfig, TrainHistory};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RaeError {
    #[error("bad architecture: {0}")]
    BadArchitecture(String),
    #[error("input has {got} features, model expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed bundle: {0}")]
    Format(String),
    #[error("bundle version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("bundle checksum mismatch")]
    ChecksumMismatch,
}

/// Dense layer `y = W x + b`, `W` stored row-major with `rows` outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng, with_bias: bool) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let weights = (0..rows * cols)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Dense {
            rows,
            cols,
            weights,
            biases: if with_bias { vec![0.0; rows] } else { Vec::new() },
        }
    }

    /// `W x`, plus the bias when present.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let row = &self.weights[r * self.cols..(r + 1) * self.cols];
                let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
                dot + self.biases.get(r).copied().unwrap_or(0.0)
            })
            .collect()
    }

    /// `out += W^T delta`
    fn apply_transpose_add(&self, delta: &[f64], out: &mut [f64]) {
        for (r, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * d;
            }
        }
    }

    fn check(&self) -> bool {
        self.weights.len() == self.rows * self.cols
            && (self.biases.is_empty() || self.biases.len() == self.rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipConnection {
    pub from: usize,
    pub to: usize,
    /// `None` is an identity shortcut and requires equal widths.
    pub projection: Option<Dense>,
}

/// How [`RaeModel::with_skips`] places shortcuts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SkipPlan {
    None,
    /// Encoder activation `i` feeds its mirror decoder activation `L - i`.
    /// Unequal widths get a projection only when `projections` is set.
    Mirrored { projections: bool },
    Custom(Vec<(usize, usize)>),
}

impl Default for SkipPlan {
    fn default() -> Self {
        SkipPlan::Mirrored { projections: false }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Activations recorded by [`RaeModel::forward`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// `a_0 ..= a_L`
    pub acts: Vec<Vec<f64>>,
    /// sigmoid outputs `h_1 ..= h_L`, stored at index `l - 1`
    pub sig: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has at least the input")
    }
}

/// Gradient tensors in the same order as [`RaeModel::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.concat()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaeModel {
    dims: Vec<usize>,
    layers: Vec<Dense>,
    skips: Vec<SkipConnection>,
    l1_coeff: f64,
    seed: u64,
}

fn validate_dims(dims: &[usize]) -> Result<(), RaeError> {
    if dims.len() < 2 {
        return Err(RaeError::BadArchitecture("need at least input and output dims".into()));
    }
    if dims.iter().any(|&d| d < 1) {
        return Err(RaeError::BadArchitecture("every dim must be >= 1".into()));
    }
    if dims[0] != dims[dims.len() - 1] {
        return Err(RaeError::BadArchitecture(format!(
            "input dim {} differs from output dim {}",
            dims[0],
            dims[dims.len() - 1]
        )));
    }
    Ok(())
}

/// The conventional mirrored architecture `d -> hidden... -> reversed(hidden) -> d`.
pub fn mirrored_dims(d: usize, encoder: &[usize]) -> Vec<usize> {
    let mut dims = vec![d];
    dims.extend_from_slice(encoder);
    if let Some((_, rest)) = encoder.split_last() {
        dims.extend(rest.iter().rev());
    }
    dims.push(d);
    dims
}

impl RaeModel {
    /// Glorot-uniform weights, zero biases and mirrored identity skips.
    pub fn new(dims: &[usize], l1_coeff: f64, seed: u64) -> Result<Self, RaeError> {
        Self::with_skips(dims, l1_coeff, seed, &SkipPlan::default())
    }

    pub fn with_skips(dims: &[usize], l1_coeff: f64, seed: u64, plan: &SkipPlan) -> Result<Self, RaeError> {
        validate_dims(dims)?;
        if !(l1_coeff >= 0.0 && l1_coeff.is_finite()) {
            return Err(RaeError::BadArchitecture(format!("l1 coefficient {l1_coeff}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| Dense::glorot(w[1], w[0], &mut rng, true))
            .collect();
        let n_layers = dims.len() - 1;
        let pairs: Vec<(usize, usize, bool)> = match plan {
            SkipPlan::None => Vec::new(),
            SkipPlan::Mirrored { projections } => (1..)
                .take_while(|&i| i < n_layers - i)
                .filter_map(|i| {
                    let j = n_layers - i;
                    if dims[i] == dims[j] {
                        Some((i, j, false))
                    } else if *projections {
                        Some((i, j, true))
                    } else {
                        None
                    }
                })
                .collect(),
            SkipPlan::Custom(list) => list
                .iter()
                .map(|&(from, to)| {
                    if from >= to || to >= n_layers {
                        return Err(RaeError::BadArchitecture(format!(
                            "skip {from}->{to} must go forward into a hidden layer"
                        )));
                    }
                    Ok((from, to, dims[from] != dims[to]))
                })
                .collect::<Result<_, _>>()?,
        };
        let skips = pairs
            .into_iter()
            .map(|(from, to, project)| SkipConnection {
                from,
                to,
                projection: project.then(|| Dense::glorot(dims[to], dims[from], &mut rng, false)),
            })
            .collect();
        Ok(RaeModel {
            dims: dims.to_vec(),
            layers,
            skips,
            l1_coeff,
            seed,
        })
    }

    /// Structural checks for models built from deserialized data.
    pub fn validate(&self) -> Result<(), RaeError> {
        validate_dims(&self.dims)?;
        let bad = |m: String| Err(RaeError::BadArchitecture(m));
        if self.layers.len() != self.dims.len() - 1 {
            return bad("layer count does not match dims".into());
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.rows != self.dims[l + 1] || layer.cols != self.dims[l] || !layer.check() || layer.biases.len() != layer.rows {
                return bad(format!("layer {} has the wrong shape", l + 1));
            }
        }
        for s in &self.skips {
            if s.from >= s.to || s.to >= self.layers.len() {
                return bad(format!("skip {}->{} out of range", s.from, s.to));
            }
            match &s.projection {
                None if self.dims[s.from] != self.dims[s.to] => {
                    return bad(format!("identity skip {}->{} joins unequal widths", s.from, s.to))
                }
                Some(p) if p.rows != self.dims[s.to] || p.cols != self.dims[s.from] || !p.check() => {
                    return bad(format!("projection {}->{} has the wrong shape", s.from, s.to))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn skips(&self) -> &[SkipConnection] {
        &self.skips
    }

    /// Drops the shortcut at `index`, returning it.
    pub fn remove_skip(&mut self, index: usize) -> SkipConnection {
        self.skips.remove(index)
    }

    pub fn l1_coeff(&self) -> f64 {
        self.l1_coeff
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Parameter tensors: per layer its weights then biases, then skip projections.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.push(&l.weights);
            out.push(&l.biases);
        }
        out.extend(self.skips.iter().filter_map(|s| s.projection.as_ref()).map(|p| p.weights.as_slice()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weights);
            out.push(&mut l.biases);
        }
        out.extend(
            self.skips
                .iter_mut()
                .filter_map(|s| s.projection.as_mut())
                .map(|p| p.weights.as_mut_slice()),
        );
        out
    }

    /// Whether tensor `i` (in [`tensors`](Self::tensors) order) is a weight matrix
    /// subject to the L1 penalty.
    pub fn is_weight_tensor(&self, i: usize) -> bool {
        i >= 2 * self.layers.len() || i.is_multiple_of(2)
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `sum |w|` over weights and projections (biases excluded).
    pub fn l1_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_weight_tensor(*i))
            .map(|(_, t)| t.iter().map(|w| w.abs()).sum::<f64>())
            .sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<(), RaeError> {
        if x.len() != self.input_dim() {
            return Err(RaeError::LengthMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Full forward pass keeping every activation for backpropagation.
    pub fn forward(&self, x: &[f64]) -> Result<Trace, RaeError> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    fn forward_unchecked(&self, x: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut sig = Vec::with_capacity(self.layers.len());
        acts.push(x.to_vec());
        for (l0, layer) in self.layers.iter().enumerate() {
            let h: Vec<f64> = layer.apply(&acts[l0]).into_iter().map(sigmoid).collect();
            let mut a = h.clone();
            for s in self.skips.iter().filter(|s| s.to == l0 + 1) {
                match &s.projection {
                    None => a.iter_mut().zip(&acts[s.from]).for_each(|(o, v)| *o += v),
                    Some(p) => a
                        .iter_mut()
                        .zip(p.apply(&acts[s.from]))
                        .for_each(|(o, v)| *o += v),
                }
            }
            sig.push(h);
            acts.push(a);
        }
        Trace { acts, sig }
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>, RaeError> {
        Ok(self.forward(x)?.acts.pop().expect("output"))
    }

    /// Reconstruction error `||x - x'||^2`; no regularization term.
    pub fn sample_error(&self, x: &[f64]) -> Result<f64, RaeError> {
        let trace = self.forward(x)?;
        Ok(squared_distance(x, trace.output()))
    }

    /// Mean reconstruction error over the batch plus `l1_coeff * sum |w|`.
    pub fn batch_loss<V: AsRef<[f64]>>(&self, batch: &[V]) -> Result<f64, RaeError> {
        if batch.is_empty() {
            return Err(RaeError::EmptyBatch);
        }
        let mut total = 0.0;
        for x in batch {
            total += self.sample_error(x.as_ref())?;
        }
        Ok(total / batch.len() as f64 + self.l1_coeff * self.l1_norm())
    }

    /// Backpropagates `delta_out = dJ/da_L` through the trace, adding
    /// parameter gradients into `grads` (when given) and returning `dJ/da_0`
    /// through the network path.
    fn backward(&self, trace: &Trace, delta_out: Vec<f64>, mut grads: Option<&mut Gradients>) -> Vec<f64> {
        let n = self.layers.len();
        let mut deltas: Vec<Vec<f64>> = self.dims.iter().map(|&d| vec![0.0; d]).collect();
        deltas[n] = delta_out;
        let proj_slot: Vec<Option<usize>> = {
            let mut next = 2 * n;
            self.skips
                .iter()
                .map(|s| {
                    s.projection.as_ref().map(|_| {
                        next += 1;
                        next - 1
                    })
                })
                .collect()
        };
        for l in (1..=n).rev() {
            let delta_a = std::mem::take(&mut deltas[l]);
            for (si, s) in self.skips.iter().enumerate().filter(|(_, s)| s.to == l) {
                match &s.projection {
                    None => deltas[s.from].iter_mut().zip(&delta_a).for_each(|(o, d)| *o += d),
                    Some(p) => {
                        if let Some(g) = grads.as_deref_mut() {
                            let gp = &mut g.tensors[proj_slot[si].expect("projection slot")];
                            outer_add(gp, &delta_a, &trace.acts[s.from]);
                        }
                        p.apply_transpose_add(&delta_a, &mut deltas[s.from]);
                    }
                }
            }
            let h = &trace.sig[l - 1];
            let dz: Vec<f64> = delta_a.iter().zip(h).map(|(d, h)| d * h * (1.0 - h)).collect();
            let layer = &self.layers[l - 1];
            if let Some(g) = grads.as_deref_mut() {
                outer_add(&mut g.tensors[2 * (l - 1)], &dz, &trace.acts[l - 1]);
                g.tensors[2 * (l - 1) + 1].iter_mut().zip(&dz).for_each(|(o, d)| *o += d);
            }
            layer.apply_transpose_add(&dz, &mut deltas[l - 1]);
            deltas[l] = delta_a;
        }
        std::mem::take(&mut deltas[0])
    }

    fn zero_gradients(&self) -> Gradients {
        Gradients {
            tensors: self.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    /// Exact gradients of [`batch_loss`](Self::batch_loss) with respect to
    /// every parameter. The L1 subgradient uses `sign(0) = 0`.
    pub fn gradients<V: AsRef<[f64]>>(&self, batch: &[V]) -> Result<Gradients, RaeError> {
        Ok(self.loss_and_gradients(batch)?.1)
    }

    /// Batch loss together with its gradients, sharing the forward passes.
    pub fn loss_and_gradients<V: AsRef<[f64]>>(&self, batch: &[V]) -> Result<(f64, Gradients), RaeError> {
        if batch.is_empty() {
            return Err(RaeError::EmptyBatch);
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grads = self.zero_gradients();
        let mut total = 0.0;
        for x in batch {
            let x = x.as_ref();
            self.check_input(x)?;
            let trace = self.forward_unchecked(x);
            let out = trace.output();
            total += squared_distance(x, out);
            let delta: Vec<f64> = out.iter().zip(x).map(|(o, v)| 2.0 * (o - v) * scale).collect();
            self.backward(&trace, delta, Some(&mut grads));
        }
        if self.l1_coeff > 0.0 {
            for (i, (g, w)) in grads.tensors.iter_mut().zip(self.tensors()).enumerate() {
                if self.is_weight_tensor(i) {
                    for (gi, wi) in g.iter_mut().zip(w) {
                        *gi += self.l1_coeff * sign(*wi);
                    }
                }
            }
        }
        Ok((total * scale + self.l1_coeff * self.l1_norm(), grads))
    }

    /// Gradient of [`sample_error`](Self::sample_error) with respect to the input.
    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>, RaeError> {
        Ok(self.error_and_input_gradient(x)?.1)
    }

    /// `(J(x), dJ/dx)` from a single forward/backward pass.
    pub fn error_and_input_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), RaeError> {
        self.check_input(x)?;
        let trace = self.forward_unchecked(x);
        let out = trace.output();
        let j = squared_distance(x, out);
        let delta: Vec<f64> = out.iter().zip(x).map(|(o, v)| 2.0 * (o - v)).collect();
        let direct: Vec<f64> = delta.iter().map(|d| -d).collect();
        let through = self.backward(&trace, delta, None);
        Ok((j, direct.iter().zip(&through).map(|(a, b)| a + b).collect()))
    }
}

fn sign(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `g += d a^T` for a row-major `g`.
fn outer_add(g: &mut [f64], d: &[f64], a: &[f64]) {
    let cols = a.len();
    for (r, &dr) in d.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        for (gi, ai) in g[r * cols..(r + 1) * cols].iter_mut().zip(a) {
            *gi += dr * ai;
        }
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn init_model(dims: &[usize], l1_coeff: f64, seed: u64) -> Result<RaeModel, RaeError> {
    RaeModel::new(dims, l1_coeff, seed)
}
