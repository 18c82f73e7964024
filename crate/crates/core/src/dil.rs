//! Domain-incremental adaptation: the sequential task loop with five
//! methods (finetune, EWC, LwF, SI, progressive columns) and optional
//! cross-task weight averaging.
//!
//! All methods share one gradient loop; parameter-space penalties (EWC, SI)
//! add `2λ·w⊙(θ−θ*)` to the MSE gradient, LwF adds a distillation residual
//! at the output, and the progressive path trains a fresh column with
//! lateral adapters while earlier columns stay frozen. Penalties are applied
//! only for `λ > 0` so a zero-λ run follows the finetune trajectory
//! bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{mse_loss, Adam, AdamConfig, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Finetune,
    Ewc,
    Lwf,
    Si,
    Pnn,
}

impl Method {
    pub fn parse(name: &str) -> Result<Method> {
        Ok(match name {
            "finetune" | "ft" => Method::Finetune,
            "ewc" => Method::Ewc,
            "lwf" => Method::Lwf,
            "si" => Method::Si,
            "pnn" => Method::Pnn,
            other => return Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Finetune => "finetune",
            Method::Ewc => "ewc",
            Method::Lwf => "lwf",
            Method::Si => "si",
            Method::Pnn => "pnn",
        }
    }

    /// Default regularization strength per method (λ-sweep optima).
    pub fn default_lambda(&self) -> f64 {
        match self {
            Method::Ewc => 1e5,
            Method::Lwf => 10.0,
            Method::Si => 5.0,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DilConfig {
    pub method: Method,
    pub lambda: f64,
    pub weight_averaging: bool,
    pub epochs_initial: usize,
    pub epochs_adapt: usize,
    pub batch: usize,
    pub lr: f64,
    /// Initial-training decay milestones (epoch indices); adaptation epochs
    /// run at constant lr.
    pub milestones: Vec<usize>,
    pub decay: f64,
    /// SI damping term ξ.
    pub si_xi: f64,
    pub hidden: Vec<usize>,
}

impl DilConfig {
    pub fn new(method: Method) -> Self {
        DilConfig {
            method,
            lambda: method.default_lambda(),
            weight_averaging: false,
            epochs_initial: 50,
            epochs_adapt: 5,
            batch: 16,
            lr: 1e-3,
            milestones: vec![30, 40],
            decay: 0.1,
            si_xi: 0.1,
            hidden: vec![256, 128, 64],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs_initial < 1 || self.epochs_adapt < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch < 1 {
            return Err(Error::InvalidConfig("batch must be >= 1".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidConfig("lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// Materialized training stream: features, targets, and sample provenance.
#[derive(Debug, Clone, Default)]
pub struct TrainSet {
    pub ids: Vec<u64>,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<[f64; 2]>,
}

impl TrainSet {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Concatenates the modified-region stream with the exemplar replay set.
    /// Shuffling happens per epoch inside the training loop, so every
    /// exemplar appears at least once per epoch.
    pub fn concat(&self, other: &TrainSet) -> TrainSet {
        let mut out = self.clone();
        out.ids.extend_from_slice(&other.ids);
        out.xs.extend_from_slice(&other.xs);
        out.ys.extend_from_slice(&other.ys);
        out
    }
}

// ---------------------------------------------------------------------------
// Penalties
// ---------------------------------------------------------------------------

/// Quadratic anchor penalty `λ·Σ wᵢ(θᵢ−θ*ᵢ)²` shared by EWC (w = Fisher)
/// and SI (w = Ω).
pub fn penalty_quadratic(theta: &[f64], anchor: &[f64], weights: &[f64], lambda: f64) -> f64 {
    lambda
        * theta
            .iter()
            .zip(anchor)
            .zip(weights)
            .map(|((t, a), w)| w * (t - a) * (t - a))
            .sum::<f64>()
}

/// Adds the gradient `2λ·w⊙(θ−θ*)` of [`penalty_quadratic`] in place.
pub fn add_quadratic_penalty_grad(
    grad: &mut [f64],
    theta: &[f64],
    anchor: &[f64],
    weights: &[f64],
    lambda: f64,
) {
    for i in 0..grad.len() {
        grad[i] += 2.0 * lambda * weights[i] * (theta[i] - anchor[i]);
    }
}

/// Distillation penalty `λ·MSE(teacher(x), student(x))` over a batch.
pub fn penalty_lwf(student: &Mlp, teacher: &Mlp, xs: &[Vec<f64>], lambda: f64) -> Result<f64> {
    let sp: Result<Vec<[f64; 2]>> = xs.iter().map(|x| student.forward(x)).collect();
    let tp: Result<Vec<[f64; 2]>> = xs.iter().map(|x| teacher.forward(x)).collect();
    Ok(lambda * mse_loss(&sp?, &tp?)?)
}

/// Diagonal Fisher estimate: mean over per-sample gradients of the squared
/// MSE-gradient components.
pub fn estimate_fisher(model: &Mlp, data: &TrainSet) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut fisher = vec![0.0; model.param_count()];
    let mut ws = model.workspace();
    let mut g = vec![0.0; model.param_count()];
    for (x, y) in data.xs.iter().zip(&data.ys) {
        let pred = model.forward_ws(x, &mut ws)?;
        // Single-sample MSE gradient: residual / 1.
        g.fill(0.0);
        model.backward_ws([pred[0] - y[0], pred[1] - y[1]], &mut ws, &mut g);
        for (f, gi) in fisher.iter_mut().zip(&g) {
            *f += gi * gi;
        }
    }
    let inv = 1.0 / data.len() as f64;
    for f in &mut fisher {
        *f *= inv;
    }
    Ok(fisher)
}

/// Per-step SI path accumulation: `ω += (−grad)⊙Δθ`.
pub fn si_accumulate(omega: &mut [f64], grad: &[f64], delta_theta: &[f64]) {
    for ((w, g), d) in omega.iter_mut().zip(grad).zip(delta_theta) {
        *w += -g * d;
    }
}

/// Task-end SI consolidation: `Ωᵢ += max(ωᵢ,0)/(Δ²ᵢ + ξ)`.
pub fn si_consolidate(importance: &mut [f64], omega: &[f64], delta_task: &[f64], xi: f64) {
    for ((imp, w), d) in importance.iter_mut().zip(omega).zip(delta_task) {
        *imp += w.max(0.0) / (d * d + xi);
    }
}

// ---------------------------------------------------------------------------
// Shared gradient loop
// ---------------------------------------------------------------------------

enum Penalty<'a> {
    None,
    Quadratic {
        lambda: f64,
        anchor: &'a [f64],
        weights: &'a [f64],
    },
    Distill {
        lambda: f64,
        teacher: &'a Mlp,
    },
}

/// Runs seeded mini-batch epochs on a single model. Returns the last epoch's
/// mean training loss. `omega` (when given) receives the SI path integral.
fn train_epochs(
    model: &mut Mlp,
    adam: &mut Adam,
    data: &TrainSet,
    epochs: usize,
    batch: usize,
    shuffle_seed: u64,
    penalty: Penalty<'_>,
    mut omega: Option<&mut Vec<f64>>,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut params = model.to_params();
    let mut last_loss = 0.0;
    let mut ws = model.workspace();
    let mut tws = model.workspace();
    let mut grad = vec![0.0; params.len()];
    let mut before = vec![0.0; params.len()];
    for epoch in 0..epochs {
        adam.set_epoch(epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed.wrapping_add(epoch as u64));
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch) {
            model.set_params(&params)?;
            let b = chunk.len() as f64;
            let mut loss = 0.0;
            grad.fill(0.0);
            // Fused per-sample forward + backprop: the out-gradient of each
            // sample depends only on its own prediction (and the teacher's).
            for &i in chunk {
                let x = &data.xs[i];
                let t = data.ys[i];
                let pred = model.forward_ws(x, &mut ws)?;
                let (rx, ry) = (pred[0] - t[0], pred[1] - t[1]);
                loss += (rx * rx + ry * ry) / (2.0 * b);
                let mut og = [rx / b, ry / b];
                if let Penalty::Distill { lambda, teacher } = &penalty {
                    if *lambda > 0.0 {
                        let tp = teacher.forward_ws(x, &mut tws)?;
                        let (dx, dy) = (pred[0] - tp[0], pred[1] - tp[1]);
                        loss += lambda * (dx * dx + dy * dy) / (2.0 * b);
                        og[0] += lambda * dx / b;
                        og[1] += lambda * dy / b;
                    }
                }
                model.backward_ws(og, &mut ws, &mut grad);
            }
            if let Penalty::Quadratic {
                lambda,
                anchor,
                weights,
            } = &penalty
            {
                if *lambda > 0.0 {
                    loss += penalty_quadratic(&params, anchor, weights, *lambda);
                    add_quadratic_penalty_grad(&mut grad, &params, anchor, weights, *lambda);
                }
            }
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            match &mut omega {
                Some(om) => {
                    before.copy_from_slice(&params);
                    adam.step(&mut params, &grad)?;
                    for i in 0..params.len() {
                        om[i] += -grad[i] * (params[i] - before[i]);
                    }
                }
                None => adam.step(&mut params, &grad)?,
            }
            epoch_loss += loss;
            batches += 1;
        }
        last_loss = epoch_loss / batches as f64;
    }
    model.set_params(&params)?;
    Ok(last_loss)
}

// ---------------------------------------------------------------------------
// Progressive columns
// ---------------------------------------------------------------------------

/// Zero-bias lateral adapter from a frozen column's activation into a new
/// column's pre-activation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct Adapter {
    in_dim: usize,
    out_dim: usize,
    w: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PnnColumn {
    mlp: Mlp,
    /// `adapters[i][j]`: feeds this column's layer `i` (for hidden layers
    /// with `i >= 1`) from frozen column `j`'s activation at depth `i`.
    adapters: Vec<Vec<Adapter>>,
}

/// Progressive network: one frozen column per task, the newest column
/// trainable with lateral adapters from all earlier ones.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Pnn {
    sizes: Vec<usize>,
    columns: Vec<PnnColumn>,
}

impl Pnn {
    pub fn from_initial(mlp: Mlp) -> Self {
        Pnn {
            sizes: mlp.layer_sizes().to_vec(),
            columns: vec![PnnColumn {
                mlp,
                adapters: vec![],
            }],
        }
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// Number of layers (hidden + output).
    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Adds a fresh trainable column with seeded base weights and
    /// zero-initialized lateral adapters; earlier columns freeze.
    pub fn add_column<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::InvalidConfig("no existing column".into()));
        }
        let hidden = &self.sizes[1..self.sizes.len() - 1];
        let mlp = Mlp::new(self.sizes[0], hidden, rng);
        let n_frozen = self.columns.len();
        let mut adapters = Vec::with_capacity(self.n_layers());
        for i in 0..self.n_layers() {
            // Hidden layers beyond the first receive laterals; the first
            // hidden layer sees the shared input, the output layer none.
            let laterals = if i >= 1 && i < self.n_layers() - 1 {
                (0..n_frozen)
                    .map(|_| Adapter {
                        in_dim: self.sizes[i],
                        out_dim: self.sizes[i + 1],
                        w: vec![0.0; self.sizes[i] * self.sizes[i + 1]],
                    })
                    .collect()
            } else {
                vec![]
            };
            adapters.push(laterals);
        }
        self.columns.push(PnnColumn { mlp, adapters });
        Ok(())
    }

    /// Closed-form trainable parameter count of column `c`.
    pub fn column_param_count(&self, c: usize) -> usize {
        let base: usize = self
            .sizes
            .windows(2)
            .map(|p| (p[0] + 1) * p[1])
            .sum();
        let lateral: usize = (1..self.n_layers() - 1)
            .map(|i| c * self.sizes[i] * self.sizes[i + 1])
            .sum();
        base + lateral
    }

    fn flatten_column(&self, c: usize) -> Vec<f64> {
        let col = &self.columns[c];
        let mut out = col.mlp.to_params();
        for layer in &col.adapters {
            for a in layer {
                out.extend_from_slice(&a.w);
            }
        }
        out
    }

    fn unflatten_column(&mut self, c: usize, params: &[f64]) -> Result<()> {
        let base = self.columns[c].mlp.param_count();
        self.columns[c].mlp.set_params(&params[..base])?;
        let mut off = base;
        for layer in &mut self.columns[c].adapters {
            for a in layer {
                let n = a.w.len();
                a.w.copy_from_slice(&params[off..off + n]);
                off += n;
            }
        }
        if off != params.len() {
            return Err(Error::DimensionMismatch {
                expected: off,
                got: params.len(),
            });
        }
        Ok(())
    }

    /// Activations of every column up to and including `c` for one input.
    /// Frozen columns run their plain forward; column `c` adds laterals.
    fn forward_acts_column(&self, c: usize, x: &[f64]) -> Result<Vec<Vec<Vec<f64>>>> {
        let mut all_acts: Vec<Vec<Vec<f64>>> = Vec::with_capacity(c + 1);
        for j in 0..c {
            all_acts.push(self.columns[j].mlp.forward_acts(x)?);
        }
        let col = &self.columns[c];
        let mut acts = Vec::with_capacity(self.n_layers() + 1);
        acts.push(x.to_vec());
        for i in 0..self.n_layers() {
            let layer = &col.mlp.layers[i];
            let mut z = vec![0.0; layer.out_dim];
            layer.affine_into(&acts[i], &mut z);
            for (j, adapter) in col.adapters.get(i).map(Vec::as_slice).unwrap_or(&[]).iter().enumerate() {
                let frozen_act = &all_acts[j][i];
                for r in 0..adapter.out_dim {
                    let row = &adapter.w[r * adapter.in_dim..(r + 1) * adapter.in_dim];
                    let mut acc = 0.0;
                    for (w, a) in row.iter().zip(frozen_act) {
                        acc += w * a;
                    }
                    z[r] += acc;
                }
            }
            if i < self.n_layers() - 1 {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteActivation { layer: i });
            }
            acts.push(z);
        }
        all_acts.push(acts);
        Ok(all_acts)
    }

    /// Prediction of column `c` for one input.
    pub fn forward_column(&self, c: usize, x: &[f64]) -> Result<[f64; 2]> {
        if x.len() != self.sizes[0] {
            return Err(Error::DimensionMismatch {
                expected: self.sizes[0],
                got: x.len(),
            });
        }
        let acts = self.forward_acts_column(c, x)?;
        let out = acts[c].last().unwrap();
        Ok([out[0], out[1]])
    }

    /// Task-to-column routing: each adapted task has its own column; tasks
    /// beyond the newest column use the newest.
    pub fn predict_for_task(&self, task: usize, x: &[f64]) -> Result<[f64; 2]> {
        self.forward_column(task.min(self.columns.len() - 1), x)
    }

    /// Gradient of the batch MSE w.r.t. the newest column's flattened
    /// parameters (own layers + adapters). Frozen columns receive no grad.
    fn last_column_grad(&self, xs: &[&Vec<f64>], out_grads: &[[f64; 2]]) -> Result<Vec<f64>> {
        let c = self.columns.len() - 1;
        let col = &self.columns[c];
        let n_layers = self.n_layers();
        let base = col.mlp.param_count();
        let mut grad = vec![0.0; self.column_param_count(c)];
        let mut layer_off = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in &col.mlp.layers {
            layer_off.push(off);
            off += l.param_count();
        }
        let mut adapter_off = Vec::with_capacity(n_layers);
        let mut aoff = base;
        for layer in &col.adapters {
            let mut per = Vec::with_capacity(layer.len());
            for a in layer {
                per.push(aoff);
                aoff += a.w.len();
            }
            adapter_off.push(per);
        }
        for (x, og) in xs.iter().zip(out_grads) {
            let all_acts = self.forward_acts_column(c, x)?;
            let acts = &all_acts[c];
            let mut delta = og.to_vec();
            for i in (0..n_layers).rev() {
                let layer = &col.mlp.layers[i];
                let input = &acts[i];
                let goff = layer_off[i];
                for (r, dr) in delta.iter().enumerate() {
                    let row = &mut grad[goff + r * layer.in_dim..goff + (r + 1) * layer.in_dim];
                    for (g, xi) in row.iter_mut().zip(input) {
                        *g += dr * xi;
                    }
                }
                let boff = goff + layer.in_dim * layer.out_dim;
                for (r, dr) in delta.iter().enumerate() {
                    grad[boff + r] += dr;
                }
                for (j, adapter) in col.adapters[i].iter().enumerate() {
                    let frozen_act = &all_acts[j][i];
                    let ao = adapter_off[i][j];
                    for (r, dr) in delta.iter().enumerate() {
                        let row = &mut grad[ao + r * adapter.in_dim..ao + (r + 1) * adapter.in_dim];
                        for (g, a) in row.iter_mut().zip(frozen_act) {
                            *g += dr * a;
                        }
                    }
                }
                if i > 0 {
                    let mut prev = vec![0.0; layer.in_dim];
                    layer.input_grad_into(&delta, &mut prev);
                    for (p, a) in prev.iter_mut().zip(&acts[i]) {
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

    /// Trains the newest column on plain MSE; earlier columns stay
    /// bit-identical.
    pub fn train_last_column(
        &mut self,
        data: &TrainSet,
        epochs: usize,
        batch: usize,
        adam_cfg: AdamConfig,
        shuffle_seed: u64,
    ) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let c = self.columns.len() - 1;
        let mut params = self.flatten_column(c);
        let mut adam = Adam::new(params.len(), adam_cfg);
        let mut last_loss = 0.0;
        for epoch in 0..epochs {
            adam.set_epoch(epoch);
            let mut order: Vec<usize> = (0..data.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed.wrapping_add(epoch as u64));
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            let mut epoch_loss = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(batch) {
                self.unflatten_column(c, &params)?;
                let xs: Vec<&Vec<f64>> = chunk.iter().map(|&i| &data.xs[i]).collect();
                let b = xs.len() as f64;
                let mut preds = Vec::with_capacity(xs.len());
                for x in &xs {
                    preds.push(self.forward_column(c, x)?);
                }
                let targets: Vec<[f64; 2]> = chunk.iter().map(|&i| data.ys[i]).collect();
                let loss = mse_loss(&preds, &targets)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch, loss });
                }
                let out_grads: Vec<[f64; 2]> = preds
                    .iter()
                    .zip(&targets)
                    .map(|(p, t)| [(p[0] - t[0]) / b, (p[1] - t[1]) / b])
                    .collect();
                let grad = self.last_column_grad(&xs, &out_grads)?;
                adam.step(&mut params, &grad)?;
                epoch_loss += loss;
                batches += 1;
            }
            last_loss = epoch_loss / batches as f64;
        }
        self.unflatten_column(c, &params)?;
        Ok(last_loss)
    }

    /// Serialized bytes of the frozen columns (everything but the newest);
    /// used to assert the freeze contract.
    pub fn frozen_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.columns[..self.columns.len() - 1]).expect("columns serialize")
    }
}

// ---------------------------------------------------------------------------
// Method state and the task loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EwcState {
    pub anchor: Vec<f64>,
    pub fisher: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SiState {
    /// Consolidated importance Ω.
    pub importance: Vec<f64>,
    pub anchor: Vec<f64>,
}

/// Method-specific carryover between tasks plus the checkpoint list.
#[derive(Debug, Clone, Default)]
pub struct DilState {
    pub checkpoints: Vec<Vec<f64>>,
    pub ewc: Option<EwcState>,
    pub teacher: Option<Mlp>,
    pub si: Option<SiState>,
    pub pnn: Option<Pnn>,
}

/// Byproducts of the initial training run that method bookkeeping needs.
/// Method-independent, so one run can seed every method for a given seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialArtifacts {
    pub init_params: Vec<f64>,
    pub final_params: Vec<f64>,
    pub omega: Vec<f64>,
    pub final_loss: f64,
}

/// 50-epoch seeded initial training (no penalty; the SI path integral is
/// recorded as a byproduct).
pub fn run_initial_training(
    input_dim: usize,
    cfg: &DilConfig,
    train: &TrainSet,
    seed: u64,
) -> Result<(Mlp, InitialArtifacts)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Mlp::new(input_dim, &cfg.hidden, &mut rng);
    let init_params = model.to_params();
    let mut adam = Adam::new(
        model.param_count(),
        AdamConfig {
            lr: cfg.lr,
            milestones: cfg.milestones.clone(),
            decay: cfg.decay,
            ..AdamConfig::default()
        },
    );
    let mut omega = vec![0.0; model.param_count()];
    let final_loss = train_epochs(
        &mut model,
        &mut adam,
        train,
        cfg.epochs_initial,
        cfg.batch,
        seed.wrapping_mul(0x9e3779b97f4a7c15),
        Penalty::None,
        Some(&mut omega),
    )?;
    let final_params = model.to_params();
    Ok((
        model,
        InitialArtifacts {
            init_params,
            final_params,
            omega,
            final_loss,
        },
    ))
}

/// A model plus its method state, advancing through the task sequence.
#[derive(Debug, Clone)]
pub struct DilModel {
    pub cfg: DilConfig,
    pub model: Mlp,
    pub state: DilState,
    /// Base seed for shuffle streams and column init.
    pub seed: u64,
    /// Number of completed tasks.
    pub tasks_done: usize,
}

impl DilModel {
    /// Builds the post-task-1 state from a finished initial run, performing
    /// the method bookkeeping (Fisher estimate, teacher snapshot, SI
    /// consolidation, column freeze, checkpoint push).
    pub fn from_initial(
        cfg: DilConfig,
        model: Mlp,
        artifacts: &InitialArtifacts,
        initial_stream: &TrainSet,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut state = DilState::default();
        match cfg.method {
            Method::Finetune => {}
            Method::Ewc => {
                state.ewc = Some(EwcState {
                    anchor: artifacts.final_params.clone(),
                    fisher: estimate_fisher(&model, initial_stream)?,
                });
            }
            Method::Lwf => state.teacher = Some(model.clone()),
            Method::Si => {
                let mut importance = vec![0.0; model.param_count()];
                let delta_task: Vec<f64> = artifacts
                    .final_params
                    .iter()
                    .zip(&artifacts.init_params)
                    .map(|(f, i)| f - i)
                    .collect();
                si_consolidate(&mut importance, &artifacts.omega, &delta_task, cfg.si_xi);
                state.si = Some(SiState {
                    importance,
                    anchor: artifacts.final_params.clone(),
                });
            }
            Method::Pnn => state.pnn = Some(Pnn::from_initial(model.clone())),
        }
        state.checkpoints.push(artifacts.final_params.clone());
        Ok(DilModel {
            cfg,
            model,
            state,
            seed,
            tasks_done: 1,
        })
    }

    /// Convenience: initial training plus bookkeeping in one call.
    pub fn train_initial(
        cfg: DilConfig,
        input_dim: usize,
        train: &TrainSet,
        seed: u64,
    ) -> Result<Self> {
        let (model, artifacts) = run_initial_training(input_dim, &cfg, train, seed)?;
        Self::from_initial(cfg, model, &artifacts, train, seed)
    }

    fn check_stream(&self, stream: &TrainSet) -> Result<()> {
        if stream.is_empty() {
            return Err(Error::EmptyBatch);
        }
        for x in &stream.xs {
            if x.len() != self.model.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.model.input_dim(),
                    got: x.len(),
                });
            }
        }
        Ok(())
    }

    /// Adapts to a new task: 5 seeded epochs over the mixed stream
    /// (modified-region samples + exemplars) with the method penalty, then
    /// optional cross-task weight averaging, then bookkeeping.
    pub fn adapt(&mut self, stream: &TrainSet) -> Result<()> {
        self.check_stream(stream)?;
        let shuffle_seed = self
            .seed
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add((self.tasks_done as u64) << 20);
        // Fresh optimizer per adaptation, constant lr.
        let adam_cfg = AdamConfig {
            lr: self.cfg.lr,
            milestones: vec![],
            decay: 1.0,
            ..AdamConfig::default()
        };
        if self.cfg.method == Method::Pnn {
            let pnn = self.state.pnn.as_mut().expect("pnn state");
            let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed ^ 0xc01);
            pnn.add_column(&mut rng)?;
            pnn.train_last_column(
                stream,
                self.cfg.epochs_adapt,
                self.cfg.batch,
                adam_cfg,
                shuffle_seed,
            )?;
            // Weight averaging is undefined for a growing architecture;
            // disabled on this path.
            self.state
                .checkpoints
                .push(pnn.flatten_column(pnn.n_columns() - 1));
            self.tasks_done += 1;
            return Ok(());
        }
        let mut adam = Adam::new(self.model.param_count(), adam_cfg);
        let mut omega = vec![0.0; self.model.param_count()];
        let pre_adapt = self.model.to_params();
        {
            let penalty = match self.cfg.method {
                Method::Finetune => Penalty::None,
                Method::Ewc => {
                    let ewc = self.state.ewc.as_ref().expect("ewc state");
                    Penalty::Quadratic {
                        lambda: self.cfg.lambda,
                        anchor: &ewc.anchor,
                        weights: &ewc.fisher,
                    }
                }
                Method::Si => {
                    let si = self.state.si.as_ref().expect("si state");
                    Penalty::Quadratic {
                        lambda: self.cfg.lambda,
                        anchor: &si.anchor,
                        weights: &si.importance,
                    }
                }
                Method::Lwf => Penalty::Distill {
                    lambda: self.cfg.lambda,
                    teacher: self.state.teacher.as_ref().expect("lwf teacher"),
                },
                Method::Pnn => unreachable!(),
            };
            let mut model = self.model.clone();
            train_epochs(
                &mut model,
                &mut adam,
                stream,
                self.cfg.epochs_adapt,
                self.cfg.batch,
                shuffle_seed,
                penalty,
                Some(&mut omega),
            )?;
            self.model = model;
        }
        if self.cfg.weight_averaging {
            let mut avg = self.model.to_params();
            for ckpt in &self.state.checkpoints {
                for (a, c) in avg.iter_mut().zip(ckpt) {
                    *a += c;
                }
            }
            let inv = 1.0 / (self.state.checkpoints.len() + 1) as f64;
            for a in &mut avg {
                *a *= inv;
            }
            self.model.set_params(&avg)?;
        }
        let final_params = self.model.to_params();
        match self.cfg.method {
            Method::Ewc => {
                self.state.ewc = Some(EwcState {
                    anchor: final_params.clone(),
                    fisher: estimate_fisher(&self.model, stream)?,
                });
            }
            Method::Lwf => self.state.teacher = Some(self.model.clone()),
            Method::Si => {
                let si = self.state.si.as_mut().expect("si state");
                let delta_task: Vec<f64> = final_params
                    .iter()
                    .zip(&pre_adapt)
                    .map(|(f, p)| f - p)
                    .collect();
                si_consolidate(&mut si.importance, &omega, &delta_task, self.cfg.si_xi);
                si.anchor = final_params.clone();
            }
            _ => {}
        }
        self.state.checkpoints.push(final_params);
        self.tasks_done += 1;
        Ok(())
    }

    /// Prediction for a given task id (relevant for the progressive path,
    /// where each task keeps its own column).
    pub fn predict(&self, task: usize, x: &[f64]) -> Result<[f64; 2]> {
        match &self.state.pnn {
            Some(pnn) => pnn.predict_for_task(task, x),
            None => self.model.forward(x),
        }
    }
}

/// Mean Euclidean positioning error over a test set, in meters.
pub fn evaluate_mae(
    predict: impl Fn(&[f64]) -> Result<[f64; 2]>,
    xs: &[Vec<f64>],
    positions: &[[f64; 2]],
) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut acc = 0.0;
    for (x, p) in xs.iter().zip(positions) {
        let pred = predict(x)?;
        acc += ((pred[0] - p[0]).powi(2) + (pred[1] - p[1]).powi(2)).sqrt();
    }
    Ok(acc / xs.len() as f64)
}
