//! Dense feed-forward regressor with exact reverse-mode gradients and Adam.
//!
//! The network maps a flattened CIR feature vector to a 2D position. Hidden
//! layers use a rectifier, the output layer is linear. All parameters live in
//! a fixed canonical order (per layer: weights row-major, then biases) so the
//! whole model can be viewed as one flat `Vec<f64>` — the unit of averaging,
//! penalties, and checkpoints.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output dimension is always (x, y).
pub const OUTPUT_DIM: usize = 2;

/// One dense layer: `y = act(W x + b)`, weights row-major `(out_dim, in_dim)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Dense {
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
    pub(crate) w: Vec<f64>,
    pub(crate) b: Vec<f64>,
}

impl Dense {
    /// Glorot-uniform init: weights in ±sqrt(6/(fan_in+fan_out)), zero biases.
    pub(crate) fn new_seeded<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Dense {
            in_dim,
            out_dim,
            w,
            b: vec![0.0; out_dim],
        }
    }

    pub(crate) fn zeroed(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    pub(crate) fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// `out[r] = b[r] + Σ_c w[r,c]·x[c]` (no activation).
    pub(crate) fn affine_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.w[r * self.in_dim..(r + 1) * self.in_dim];
            let mut acc = self.b[r];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *o = acc;
        }
    }

    /// Accumulates `out += Wᵀ d` (used for backprop of the input).
    pub(crate) fn input_grad_into(&self, d: &[f64], out: &mut [f64]) {
        for (r, dr) in d.iter().enumerate() {
            let row = &self.w[r * self.in_dim..(r + 1) * self.in_dim];
            for (o, wi) in out.iter_mut().zip(row) {
                *o += wi * dr;
            }
        }
    }
}

fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Multilayer perceptron with rectifier hidden layers and a linear 2D head.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub(crate) layers: Vec<Dense>,
}

impl Mlp {
    /// Builds a seeded model with layer sizes `[input_dim, hidden..., 2]`.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(OUTPUT_DIM);
        let layers = sizes
            .windows(2)
            .map(|p| Dense::new_seeded(p[0], p[1], rng))
            .collect();
        Mlp { sizes, layers }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Total trainable parameter count: Σ (in+1)·out over layers.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Flattens all parameters into canonical order.
    pub fn to_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    /// Restores parameters from a flat vector in canonical order.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let wn = l.w.len();
            l.w.copy_from_slice(&params[off..off + wn]);
            off += wn;
            let bn = l.b.len();
            l.b.copy_from_slice(&params[off..off + bn]);
            off += bn;
        }
        Ok(())
    }

    /// Rebuilds a model of the given architecture from a flat parameter vector.
    pub fn from_params(sizes: &[usize], params: &[f64]) -> Result<Self> {
        if sizes.len() < 2 || *sizes.last().unwrap() != OUTPUT_DIM {
            return Err(Error::InvalidConfig(format!(
                "bad layer sizes {sizes:?}: need [input, ..., 2]"
            )));
        }
        let layers: Vec<Dense> = sizes
            .windows(2)
            .map(|p| Dense::zeroed(p[0], p[1]))
            .collect();
        let mut model = Mlp {
            sizes: sizes.to_vec(),
            layers,
        };
        model.set_params(params)?;
        Ok(model)
    }

    /// Single forward pass. Deterministic for fixed parameters.
    pub fn forward(&self, x: &[f64]) -> Result<[f64; 2]> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.out_dim];
            layer.affine_into(&cur, &mut next);
            if li < last {
                for v in &mut next {
                    *v = relu(*v);
                }
            }
            cur = next;
        }
        Ok([cur[0], cur[1]])
    }

    /// Forward pass keeping post-activation values of every layer
    /// (`acts[0]` is the input itself). Used by backprop and by the
    /// progressive-column lateral connections.
    pub(crate) fn forward_acts(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.out_dim];
            layer.affine_into(acts.last().unwrap(), &mut next);
            if li < last {
                for v in &mut next {
                    *v = relu(*v);
                }
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation { layer: li });
            }
            acts.push(next);
        }
        Ok(acts)
    }

    /// Gradient of `Σ_samples ⟨out_grads[s], ŷ_s⟩` w.r.t. all parameters, i.e.
    /// backprop of arbitrary per-sample output gradients. The caller supplies
    /// the loss derivative at the output (e.g. `(ŷ−y)/B` for the batch MSE).
    pub fn backward_batch(
        &self,
        xs: &[impl AsRef<[f64]>],
        out_grads: &[[f64; 2]],
    ) -> Result<Vec<f64>> {
        if xs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        assert_eq!(xs.len(), out_grads.len());
        let mut grad = vec![0.0; self.param_count()];
        // Per-layer offsets into the flat gradient.
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.param_count();
        }
        for (x, og) in xs.iter().zip(out_grads) {
            let x = x.as_ref();
            if x.len() != self.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim(),
                    got: x.len(),
                });
            }
            let acts = self.forward_acts(x)?;
            let mut delta = og.to_vec();
            for li in (0..self.layers.len()).rev() {
                let layer = &self.layers[li];
                let input = &acts[li];
                let goff = offsets[li];
                // dW[r,c] += delta[r]·input[c]; db[r] += delta[r]
                for (r, dr) in delta.iter().enumerate() {
                    let row = &mut grad[goff + r * layer.in_dim..goff + (r + 1) * layer.in_dim];
                    for (g, xi) in row.iter_mut().zip(input) {
                        *g += dr * xi;
                    }
                }
                let boff = goff + layer.w.len();
                for (r, dr) in delta.iter().enumerate() {
                    grad[boff + r] += dr;
                }
                if li > 0 {
                    let mut prev = vec![0.0; layer.in_dim];
                    layer.input_grad_into(&delta, &mut prev);
                    // Rectifier derivative: act > 0 ⇒ 1, else 0.
                    for (p, a) in prev.iter_mut().zip(&acts[li]) {
                        if *a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        Ok(grad)
    }
}

/// Reusable activation/delta buffers for the fused per-sample
/// forward + backprop path, sized for one model architecture.
#[derive(Debug, Clone)]
pub struct BatchWorkspace {
    /// acts[k]: post-activation output at depth k (acts[0] = input copy).
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    prev: Vec<f64>,
}

impl Mlp {
    pub fn workspace(&self) -> BatchWorkspace {
        BatchWorkspace {
            acts: self.sizes.iter().map(|&s| vec![0.0; s]).collect(),
            delta: vec![0.0; *self.sizes.iter().max().unwrap()],
            prev: vec![0.0; *self.sizes.iter().max().unwrap()],
        }
    }

    /// Forward pass storing activations in `ws`; allocation-free. Finiteness
    /// is not checked per layer here — the training loop checks the batch
    /// loss and Adam refuses non-finite gradients.
    pub fn forward_ws(&self, x: &[f64], ws: &mut BatchWorkspace) -> Result<[f64; 2]> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        ws.acts[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for li in 0..self.layers.len() {
            let (inp, out) = {
                let (a, b) = ws.acts.split_at_mut(li + 1);
                (&a[li], &mut b[0])
            };
            self.layers[li].affine_into(inp, out);
            if li < last {
                for v in out.iter_mut() {
                    *v = relu(*v);
                }
            }
        }
        let out = ws.acts.last().unwrap();
        Ok([out[0], out[1]])
    }

    /// Backprop of one sample's output gradient, accumulating into `grad`
    /// (canonical layout). Must follow [`Mlp::forward_ws`] on the same input.
    pub fn backward_ws(&self, og: [f64; 2], ws: &mut BatchWorkspace, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.param_count());
        debug_assert!(self.layers.len() <= 16);
        let mut offsets = [0usize; 16];
        let mut off = 0;
        for (i, l) in self.layers.iter().enumerate() {
            offsets[i] = off;
            off += l.param_count();
        }
        ws.delta[..OUTPUT_DIM].copy_from_slice(&og);
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &ws.acts[li];
            let goff = offsets[li];
            let delta = &ws.delta[..layer.out_dim];
            for (r, dr) in delta.iter().enumerate() {
                let row = &mut grad[goff + r * layer.in_dim..goff + (r + 1) * layer.in_dim];
                for (g, xi) in row.iter_mut().zip(input) {
                    *g += dr * xi;
                }
            }
            let boff = goff + layer.w.len();
            for (r, dr) in delta.iter().enumerate() {
                grad[boff + r] += dr;
            }
            if li > 0 {
                let prev = &mut ws.prev[..layer.in_dim];
                prev.fill(0.0);
                layer.input_grad_into(delta, prev);
                for (p, a) in prev.iter_mut().zip(&ws.acts[li]) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                ws.delta[..layer.in_dim].copy_from_slice(&ws.prev[..layer.in_dim]);
            }
        }
    }
}

/// MSE over a batch of 2D predictions: mean over batch and components,
/// i.e. `(1/2B)·Σ‖ŷ−y‖²`.
pub fn mse_loss(pred: &[[f64; 2]], target: &[[f64; 2]]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: pred.len(),
            got: target.len(),
        });
    }
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(target) {
        let dx = p[0] - t[0];
        let dy = p[1] - t[1];
        sum += dx * dx + dy * dy;
    }
    Ok(sum / (2.0 * pred.len() as f64))
}

/// Loss and exact parameter gradient of [`mse_loss`] on a batch.
pub fn mse_gradient(
    model: &Mlp,
    xs: &[impl AsRef<[f64]>],
    targets: &[[f64; 2]],
) -> Result<(f64, Vec<f64>)> {
    if xs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let inv_b = 1.0 / xs.len() as f64;
    let mut preds = Vec::with_capacity(xs.len());
    for x in xs {
        preds.push(model.forward(x.as_ref())?);
    }
    let loss = mse_loss(&preds, targets)?;
    let out_grads: Vec<[f64; 2]> = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| [(p[0] - t[0]) * inv_b, (p[1] - t[1]) * inv_b])
        .collect();
    let grad = model.backward_batch(xs, &out_grads)?;
    Ok((loss, grad))
}

/// Adam hyperparameters plus the multi-step decay schedule.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Epoch indices at which the learning rate is multiplied by `decay`.
    pub milestones: Vec<usize>,
    pub decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            milestones: vec![30, 40],
            decay: 0.1,
        }
    }
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    lr_scale: f64,
}

impl Adam {
    pub fn new(param_count: usize, config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            lr_scale: 1.0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies the multi-step schedule for the given (0-based) epoch.
    pub fn set_epoch(&mut self, epoch: usize) {
        let hits = self.config.milestones.iter().filter(|&&m| epoch >= m).count();
        self.lr_scale = self.config.decay.powi(hits as i32);
    }

    pub fn effective_lr(&self) -> f64 {
        self.config.lr * self.lr_scale
    }

    /// One Adam update with bias correction. Refuses non-finite gradients.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() || params.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                got: grad.len(),
            });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index: i });
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = self.config.beta1;
        let b2 = self.config.beta2;
        let lr = self.effective_lr();
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.config.eps);
        }
        Ok(())
    }
}

/// Versioned model checkpoint: architecture, canonical parameters,
/// optimizer state, and provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
    pub optimizer: Option<Adam>,
    pub seed: u64,
    pub epoch: usize,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn of(model: &Mlp, optimizer: Option<Adam>, seed: u64, epoch: usize) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            layer_sizes: model.layer_sizes().to_vec(),
            params: model.to_params(),
            optimizer,
            seed,
            epoch,
        }
    }

    pub fn model(&self) -> Result<Mlp> {
        Mlp::from_params(&self.layer_sizes, &self.params)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }
}
