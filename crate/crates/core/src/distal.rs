//! Distal teaching: a dense network maps a normalized pose to raw sin/cos
//! joint pairs, and the training error is measured in task space by pushing
//! the decoded configuration through the (frozen) forward kinematics. The
//! chain is borrowed immutably everywhere, so FK can never receive an
//! update; only the network parameters learn.
//!
//! The network input is always 7 values — the position scaled by
//! 1 / total_length and the canonical (w ≥ 0) unit quaternion — and the
//! output is 2n raw pair values decoded by `atan2`.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chain::{ChainSpec, JointConfig};
use crate::datasets::Dataset;
use crate::error::Error;
use crate::metrics::{decode_config, decode_partials, grad_loss_wrt_config, penalized_loss, LossWeights};
use crate::transform::Pose;
use crate::Result;

/// Hidden-layer nonlinearity. A single smooth saturating choice keeps the
/// finite-difference gradient checks clean; the output layer is always
/// linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
        })
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidOptions(format!("unknown activation `{other}`"))),
        }
    }
}

/// Network architecture: 7 inputs, dense hidden layers, 2n outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl MlpSpec {
    /// Spec for a chain: 7 inputs and doubled outputs (one sin/cos pair per
    /// joint).
    pub fn for_chain(chain: &ChainSpec, hidden_layers: Vec<usize>, seed: u64) -> Self {
        Self {
            input_dim: INPUT_DIM,
            hidden_layers,
            output_dim: 2 * chain.dof(),
            activation: Activation::Tanh,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim != INPUT_DIM {
            return Err(Error::InvalidOptions(format!(
                "input dimension must be {INPUT_DIM}, got {}",
                self.input_dim
            )));
        }
        if self.output_dim < 2 || self.output_dim % 2 != 0 {
            return Err(Error::InvalidOptions(format!(
                "output dimension must be a positive even number, got {}",
                self.output_dim
            )));
        }
        if self.hidden_layers.iter().any(|&w| w == 0) {
            return Err(Error::InvalidOptions("hidden widths must be at least 1".into()));
        }
        Ok(())
    }

    /// Layer sizes from input through hidden to output.
    fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_layers.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_layers);
        dims.push(self.output_dim);
        dims
    }
}

/// Fixed network input width: scaled position plus canonical quaternion.
pub const INPUT_DIM: usize = 7;

/// Reference hidden-layer widths per builtin chain.
pub fn preset_hidden(chain_name: &str) -> Option<Vec<usize>> {
    match chain_name {
        "planar3" => Some(vec![256, 256]),
        "arm6" => Some(vec![512; 6]),
        "chain15" => Some(vec![1024; 3]),
        _ => None,
    }
}

/// Dense-layer parameters: one weight matrix and bias vector per layer.
/// Also serves as the gradient and optimizer-moment container, since those
/// share the shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl MlpParams {
    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    fn zeros_like(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: self.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }
}

/// Weights drawn uniformly with the fan-scaled bound √(6 / (fan_in +
/// fan_out)), row-major draw order; biases zero. Deterministic in
/// `spec.seed`.
pub fn init_mlp(spec: &MlpSpec) -> Result<MlpParams> {
    spec.validate()?;
    let dims = spec.layer_dims();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut weights = Vec::with_capacity(dims.len() - 1);
    let mut biases = Vec::with_capacity(dims.len() - 1);
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut w = DMatrix::zeros(fan_out, fan_in);
        for r in 0..fan_out {
            for c in 0..fan_in {
                w[(r, c)] = rng.random_range(-bound..=bound);
            }
        }
        weights.push(w);
        biases.push(DVector::zeros(fan_out));
    }
    Ok(MlpParams { weights, biases })
}

/// Affine layers with tanh on the hidden layers and a linear output layer;
/// the raw sin/cos pairs are decoded downstream by `decode_config`.
pub fn mlp_forward(params: &MlpParams, input: &DVector<f64>) -> Result<DVector<f64>> {
    let expected = params.weights[0].ncols();
    if input.len() != expected {
        return Err(Error::DimensionMismatch { expected, actual: input.len() });
    }
    let last = params.layer_count() - 1;
    let mut a = input.clone();
    for (l, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        a = w * a + b;
        if l < last {
            a.apply(|x| *x = x.tanh());
        }
    }
    Ok(a)
}

/// Batched forward pass over inputs stored as the columns of a 7×B matrix.
/// Identical arithmetic to [`mlp_forward`] per column, but the hidden
/// layers become matrix-matrix products, which is what makes batch queries
/// cheaper than repeated single queries.
pub fn mlp_forward_batch(params: &MlpParams, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let expected = params.weights[0].ncols();
    if inputs.nrows() != expected {
        return Err(Error::DimensionMismatch { expected, actual: inputs.nrows() });
    }
    let last = params.layer_count() - 1;
    let mut a = inputs.clone();
    for (l, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        let mut z = w * a;
        for mut col in z.column_iter_mut() {
            col += b;
        }
        if l < last {
            z.apply(|x| *x = x.tanh());
        }
        a = z;
    }
    Ok(a)
}

/// Threshold below which a raw sin/cos pair has no usable direction.
const DEGENERATE_PAIR_TOL: f64 = 1e-30;

/// Task-space training loss of a raw network output: decode the sin/cos
/// pairs, run the forward kinematics, and score the reached pose with the
/// penalized loss.
pub fn dt_loss(
    chain: &ChainSpec,
    raw_output: &[f64],
    target: &Pose,
    weights: &LossWeights,
) -> Result<f64> {
    for (i, pair) in raw_output.chunks_exact(2).enumerate() {
        if pair[0] * pair[0] + pair[1] * pair[1] < DEGENERATE_PAIR_TOL {
            return Err(Error::DegeneratePair(i));
        }
    }
    let config = decode_config(raw_output)?;
    penalized_loss(chain, &config, target, weights)
}

/// Analytic gradient of the task-space loss with respect to every network
/// parameter: penalized-loss gradient in joint space, times the `atan2`
/// decode Jacobian, backpropagated through the dense layers. The chain is
/// read-only, so the FK stage receives no update by construction.
pub fn dt_backward(
    chain: &ChainSpec,
    params: &MlpParams,
    input: &DVector<f64>,
    target: &Pose,
    weights: &LossWeights,
) -> Result<MlpParams> {
    let mut acc = params.zeros_like();
    accumulate_sample_gradient(chain, params, input, target, weights, &mut acc)?;
    Ok(acc)
}

/// Adds one sample's parameter gradient into `acc` and returns the sample
/// loss. Shared by `dt_backward` and the training batches.
fn accumulate_sample_gradient(
    chain: &ChainSpec,
    params: &MlpParams,
    input: &DVector<f64>,
    target: &Pose,
    weights: &LossWeights,
    acc: &mut MlpParams,
) -> Result<f64> {
    let expected = params.weights[0].ncols();
    if input.len() != expected {
        return Err(Error::DimensionMismatch { expected, actual: input.len() });
    }
    // Forward pass keeping every post-activation value.
    let last = params.layer_count() - 1;
    let mut acts: Vec<DVector<f64>> = Vec::with_capacity(params.layer_count());
    for l in 0..params.layer_count() {
        let prev = if l == 0 { input } else { &acts[l - 1] };
        let mut z = &params.weights[l] * prev + &params.biases[l];
        if l < last {
            z.apply(|x| *x = x.tanh());
        }
        acts.push(z);
    }
    let raw = &acts[last];

    let config = decode_config(raw.as_slice())?;
    let loss = penalized_loss(chain, &config, target, weights)?;
    let grad_theta = grad_loss_wrt_config(chain, &config, target, weights)?;

    // Decode stage: dθ/ds = c/r, dθ/dc = −s/r with r = s² + c².
    let mut delta = DVector::zeros(raw.len());
    for (i, &g) in grad_theta.iter().enumerate() {
        let (ds, dc) = decode_partials(raw[2 * i], raw[2 * i + 1]);
        delta[2 * i] = g * ds;
        delta[2 * i + 1] = g * dc;
    }

    // Dense-layer backpropagation.
    for l in (0..params.layer_count()).rev() {
        let prev = if l == 0 { input } else { &acts[l - 1] };
        acc.weights[l].ger(1.0, &delta, prev, 1.0);
        acc.biases[l] += &delta;
        if l > 0 {
            let mut back = params.weights[l].tr_mul(&delta);
            for (b, &a) in back.iter_mut().zip(acts[l - 1].iter()) {
                *b *= 1.0 - a * a;
            }
            delta = back;
        }
    }
    Ok(loss)
}

/// Training options. The loss weights mirror the evaluation protocol
/// (position weight 0.75, no feasibility penalty unless enabled); the
/// optimizer settings are ordinary adaptive-moment defaults.
#[derive(Debug, Clone)]
pub struct TrainOpts {
    pub weights: LossWeights,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainOpts {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 500,
            validation_fraction: 0.1,
            patience: 50,
            seed: 0,
        }
    }
}

impl TrainOpts {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidOptions("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidOptions("batch size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidOptions("epoch budget must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidOptions(
                "validation fraction must lie in [0, 1)".into(),
            ));
        }
        if self.patience == 0 {
            return Err(Error::InvalidOptions("patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// A trained IK model: the network, the input scale, and the per-epoch
/// (train, validation) mean-loss history. Immutable once built;
/// predictions are thread-safe.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub chain_name: String,
    pub dof: usize,
    pub spec: MlpSpec,
    pub params: MlpParams,
    pub scale: f64,
    pub history: Vec<(f64, f64)>,
}

impl TrainedModel {
    /// Rejects use against a different chain (name or joint count).
    pub fn check_chain(&self, chain: &ChainSpec) -> Result<()> {
        if self.chain_name != chain.name() {
            return Err(Error::ChainMismatch {
                expected: chain.name().to_string(),
                found: self.chain_name.clone(),
            });
        }
        if self.dof != chain.dof() {
            return Err(Error::DimensionMismatch { expected: chain.dof(), actual: self.dof });
        }
        Ok(())
    }

    /// Predicted configuration for one target pose: normalize, forward,
    /// decode. Pure, and the runtime does not depend on the target value.
    pub fn predict(&self, target: &Pose) -> JointConfig {
        let raw = mlp_forward(&self.params, &normalize_input(target, self.scale))
            .expect("input width is fixed by construction");
        decode_config(raw.as_slice()).expect("output width is even by construction")
    }

    /// Predicted configurations for a batch of targets in one pass. The
    /// hidden layers run as matrix-matrix products, so the per-query cost
    /// is far below repeated [`TrainedModel::predict`] calls.
    pub fn predict_batch(&self, targets: &[Pose]) -> Vec<JointConfig> {
        if targets.is_empty() {
            return Vec::new();
        }
        let mut inputs = DMatrix::zeros(INPUT_DIM, targets.len());
        for (j, t) in targets.iter().enumerate() {
            inputs.set_column(j, &normalize_input(t, self.scale));
        }
        let raw = mlp_forward_batch(&self.params, &inputs)
            .expect("input width is fixed by construction");
        raw.column_iter()
            .map(|col| {
                let values: Vec<f64> = col.iter().copied().collect();
                decode_config(&values).expect("output width is even by construction")
            })
            .collect()
    }
}

/// Network input for a target pose: position scaled by `scale`, quaternion
/// already canonical (w ≥ 0) by `Pose` construction.
fn normalize_input(target: &Pose, scale: f64) -> DVector<f64> {
    let q = target.quat_wxyz();
    DVector::from_vec(vec![
        target.position.x * scale,
        target.position.y * scale,
        target.position.z * scale,
        q[0],
        q[1],
        q[2],
        q[3],
    ])
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Batch gradients are accumulated over a fixed number of index chunks and
/// combined in chunk order, so the result is bitwise identical no matter
/// how many worker threads execute the chunks.
const BATCH_CHUNKS: usize = 8;

struct Adam {
    m: MlpParams,
    v: MlpParams,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(shape: &MlpParams, lr: f64) -> Self {
        Self { m: shape.zeros_like(), v: shape.zeros_like(), t: 0, lr }
    }

    fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t);
        let lr = self.lr;
        let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + ADAM_EPS);
            }
        };
        for l in 0..params.layer_count() {
            update(
                params.weights[l].as_mut_slice(),
                self.m.weights[l].as_mut_slice(),
                self.v.weights[l].as_mut_slice(),
                grads.weights[l].as_slice(),
            );
            update(
                params.biases[l].as_mut_slice(),
                self.m.biases[l].as_mut_slice(),
                self.v.biases[l].as_mut_slice(),
                grads.biases[l].as_slice(),
            );
        }
    }
}

/// Forward pass for one chunk of samples as matrix columns, keeping the
/// post-activation matrix of every layer. Batching the dense algebra keeps
/// each weight matrix in cache for the whole chunk instead of streaming it
/// once per sample.
fn chunk_forward(
    params: &MlpParams,
    inputs: &[DVector<f64>],
    chunk: &[usize],
) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let last = params.layer_count() - 1;
    let mut x = DMatrix::zeros(params.weights[0].ncols(), chunk.len());
    for (j, &i) in chunk.iter().enumerate() {
        x.column_mut(j).copy_from(&inputs[i]);
    }
    let mut acts: Vec<DMatrix<f64>> = Vec::with_capacity(params.layer_count());
    for l in 0..params.layer_count() {
        let prev = if l == 0 { &x } else { &acts[l - 1] };
        let mut z = &params.weights[l] * prev;
        for mut col in z.column_iter_mut() {
            col += &params.biases[l];
        }
        if l < last {
            z.apply(|v| *v = v.tanh());
        }
        acts.push(z);
    }
    (x, acts)
}

/// One chunk's loss sum and parameter gradient; the dense stages run as
/// whole-chunk matrix products, the kinematic stage per sample.
fn chunk_gradient(
    chain: &ChainSpec,
    params: &MlpParams,
    inputs: &[DVector<f64>],
    targets: &[Pose],
    weights: &LossWeights,
    chunk: &[usize],
) -> Result<(f64, MlpParams)> {
    let (x, acts) = chunk_forward(params, inputs, chunk);
    let last = params.layer_count() - 1;
    let raw = &acts[last];

    // Joint-space loss gradient per sample, decoded into raw-output space.
    let mut delta = DMatrix::zeros(raw.nrows(), chunk.len());
    let mut loss_sum = 0.0;
    let mut col = vec![0.0; raw.nrows()];
    for (j, &i) in chunk.iter().enumerate() {
        for (c, &v) in col.iter_mut().zip(raw.column(j).iter()) {
            *c = v;
        }
        let config = decode_config(&col)?;
        loss_sum += penalized_loss(chain, &config, &targets[i], weights)?;
        let grad_theta = grad_loss_wrt_config(chain, &config, &targets[i], weights)?;
        for (k, &g) in grad_theta.iter().enumerate() {
            let (ds, dc) = decode_partials(col[2 * k], col[2 * k + 1]);
            delta[(2 * k, j)] = g * ds;
            delta[(2 * k + 1, j)] = g * dc;
        }
    }

    // Dense backpropagation over the whole chunk at once.
    let layers = params.layer_count();
    let mut weight_grads = vec![DMatrix::zeros(0, 0); layers];
    let mut bias_grads = vec![DVector::zeros(0); layers];
    let mut d = delta;
    for l in (0..layers).rev() {
        let prev = if l == 0 { &x } else { &acts[l - 1] };
        weight_grads[l] = &d * prev.transpose();
        bias_grads[l] = d.column_sum();
        if l > 0 {
            let mut back = params.weights[l].tr_mul(&d);
            back.zip_apply(&acts[l - 1], |bv, a| *bv *= 1.0 - a * a);
            d = back;
        }
    }
    Ok((loss_sum, MlpParams { weights: weight_grads, biases: bias_grads }))
}

/// Mean loss and summed gradient over a set of sample indices, evaluated
/// in parallel over [`BATCH_CHUNKS`] fixed chunks with an ordered
/// reduction.
fn batch_gradient(
    chain: &ChainSpec,
    params: &MlpParams,
    inputs: &[DVector<f64>],
    targets: &[Pose],
    weights: &LossWeights,
    indices: &[usize],
) -> Result<(f64, MlpParams)> {
    let chunk_size = indices.len().div_ceil(BATCH_CHUNKS);
    let partials: Vec<(f64, MlpParams)> = crate::thread_pool().install(|| {
        indices
            .par_chunks(chunk_size)
            .map(|chunk| chunk_gradient(chain, params, inputs, targets, weights, chunk))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut loss_sum = 0.0;
    let mut grad = params.zeros_like();
    for (l, g) in &partials {
        loss_sum += l;
        grad.add_assign(g);
    }
    Ok((loss_sum / indices.len() as f64, grad))
}

/// Mean loss over a set of sample indices without gradients, same chunked
/// ordered reduction as [`batch_gradient`].
fn mean_loss(
    chain: &ChainSpec,
    params: &MlpParams,
    inputs: &[DVector<f64>],
    targets: &[Pose],
    weights: &LossWeights,
    indices: &[usize],
) -> Result<f64> {
    let chunk_size = indices.len().div_ceil(BATCH_CHUNKS);
    let partials: Vec<f64> = crate::thread_pool().install(|| {
        indices
            .par_chunks(chunk_size)
            .map(|chunk| {
                let (_, acts) = chunk_forward(params, inputs, chunk);
                let raw = &acts[acts.len() - 1];
                let mut sum = 0.0;
                let mut col = vec![0.0; raw.nrows()];
                for (j, &i) in chunk.iter().enumerate() {
                    for (c, &v) in col.iter_mut().zip(raw.column(j).iter()) {
                        *c = v;
                    }
                    sum += dt_loss(chain, &col, &targets[i], weights)?;
                }
                Ok(sum)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(partials.iter().sum::<f64>() / indices.len() as f64)
}

/// Trains an IK model by mini-batch adaptive-moment descent on the mean
/// task-space loss. Only the poses of the dataset are used — the network
/// never regresses on joint targets. The learning rate follows a cosine
/// anneal from `opts.learning_rate` down to zero across `max_epochs`: the
/// loss is built from unsquared error norms whose gradients keep a fixed
/// magnitude near the optimum, so a constant rate stalls at an error floor
/// proportional to the rate, while the anneal keeps lowering that floor. A
/// validation split is carved from the dataset; training stops early when
/// validation stalls for `patience` epochs, and the best-validation
/// parameters are restored. Deterministic in `(dataset, spec, opts)`.
pub fn train(
    chain: &ChainSpec,
    dataset: &Dataset,
    spec: &MlpSpec,
    opts: &TrainOpts,
) -> Result<TrainedModel> {
    spec.validate()?;
    opts.validate()?;
    if spec.output_dim != 2 * chain.dof() {
        return Err(Error::DimensionMismatch {
            expected: 2 * chain.dof(),
            actual: spec.output_dim,
        });
    }
    if dataset.chain != chain.name() {
        return Err(Error::ChainMismatch {
            expected: chain.name().to_string(),
            found: dataset.chain.clone(),
        });
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let scale = 1.0 / chain.total_length();
    let inputs: Vec<DVector<f64>> =
        dataset.samples.iter().map(|s| normalize_input(&s.pose, scale)).collect();
    let targets: Vec<Pose> = dataset.samples.iter().map(|s| s.pose).collect();

    // One seeded permutation carves the validation split from the sample
    // budget; epoch shuffles continue from the same stream.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let val_count = (opts.validation_fraction * dataset.len() as f64).floor() as usize;
    let (val_idx, train_idx) = order.split_at(val_count);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut params = init_mlp(spec)?;
    let mut adam = Adam::new(&params, opts.learning_rate);
    let mut history = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut best_params = params.clone();
    let mut stale_epochs = 0usize;

    // Cosine-annealed learning rate, peak to zero across the schedule. The
    // anneal removes the error floor that a constant rate leaves under the
    // unsquared pose-error norms (the gradient magnitude does not vanish
    // near the optimum, so Adam orbits the minimum at a radius proportional
    // to the final rate). A linear warmup was measured and rejected: it
    // suppresses the early large-step exploration and lands visibly worse
    // at equal budget.
    for epoch in 0..opts.max_epochs {
        adam.lr = opts.learning_rate
            * 0.5
            * (1.0 + (PI * epoch as f64 / opts.max_epochs as f64).cos());
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in train_idx.chunks(opts.batch_size) {
            let (batch_loss, grad_sum) =
                batch_gradient(chain, &params, &inputs, &targets, &opts.weights, batch)?;
            if !batch_loss.is_finite() {
                return Err(Error::Divergence { epoch, loss: batch_loss });
            }
            let mut grad = grad_sum;
            let inv = 1.0 / batch.len() as f64;
            for w in &mut grad.weights {
                *w *= inv;
            }
            for b in &mut grad.biases {
                *b *= inv;
            }
            adam.step(&mut params, &grad);
            loss_sum += batch_loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train_idx.len() as f64;
        let val_loss = if val_idx.is_empty() {
            train_loss
        } else {
            mean_loss(chain, &params, &inputs, &targets, &opts.weights, &val_idx)?
        };
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: val_loss });
        }
        history.push((train_loss, val_loss));

        if val_loss < best_loss {
            best_loss = val_loss;
            best_params = params.clone();
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= opts.patience {
                break;
            }
        }
    }

    Ok(TrainedModel {
        chain_name: chain.name().to_string(),
        dof: chain.dof(),
        spec: spec.clone(),
        params: best_params,
        scale,
        history,
    })
}

/// Renders the model as the versioned text document. Floats use the
/// shortest representation that parses back to the same bits, so
/// save → load → save is byte-identical.
pub fn save_model(model: &TrainedModel) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "ikforge-model v1 {} {}\n# seed {}\n# activation {}\nscale {:?}\nlayers {}\n",
        model.chain_name,
        model.dof,
        model.spec.seed,
        model.spec.activation,
        model.scale,
        model.params.layer_count(),
    ));
    for (w, b) in model.params.weights.iter().zip(&model.params.biases) {
        // The bias rides along as the last column of the layer block.
        out.push_str(&format!("{} {}\n", w.nrows(), w.ncols() + 1));
        for r in 0..w.nrows() {
            let mut row: Vec<String> = (0..w.ncols()).map(|c| format!("{:?}", w[(r, c)])).collect();
            row.push(format!("{:?}", b[r]));
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out.push_str(&format!("history {}\n", model.history.len()));
    for (t, v) in &model.history {
        out.push_str(&format!("{t:?} {v:?}\n"));
    }
    out
}

/// Writes the model document to disk; see [`save_model`].
pub fn write_model(model: &TrainedModel, destination: &Path) -> Result<()> {
    fs::write(destination, save_model(model))?;
    Ok(())
}

/// Whitespace token stream with line numbers, for the model loader.
struct TokenCursor<'a> {
    tokens: &'a [(usize, &'a str)],
    pos: usize,
}

impl<'a> TokenCursor<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let t = self.tokens.get(self.pos).copied().ok_or_else(|| Error::FileFormat {
            kind: "model",
            reason: format!("unexpected end of file, expected {what}"),
        })?;
        self.pos += 1;
        Ok(t)
    }

    fn next_usize(&mut self, what: &str) -> Result<usize> {
        let (line, t) = self.next(what)?;
        t.parse().map_err(|_| Error::Parse {
            line,
            reason: format!("expected {what}, found `{t}`"),
        })
    }

    fn next_f64(&mut self, what: &str) -> Result<f64> {
        let (line, t) = self.next(what)?;
        let v: f64 = t.parse().map_err(|_| Error::Parse {
            line,
            reason: format!("expected {what}, found `{t}`"),
        })?;
        if !v.is_finite() {
            return Err(Error::FileFormat {
                kind: "model",
                reason: format!("non-finite value on line {line}"),
            });
        }
        Ok(v)
    }

    fn done(&self) -> bool {
        self.pos >= self.tokens.len()
    }
}

/// Parses a model document, rejecting version or shape inconsistencies and
/// non-finite values.
pub fn load_model(text: &str) -> Result<TrainedModel> {
    let mut seed = 0u64;
    let mut activation = Activation::Tanh;
    // Comments may carry the seed and activation; everything else is a
    // whitespace-separated token stream tagged with line numbers.
    let mut tokens: Vec<(usize, &str)> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            let mut it = comment.split_whitespace();
            match (it.next(), it.next()) {
                (Some("seed"), Some(s)) => {
                    seed = s.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        reason: format!("bad seed value `{s}`"),
                    })?;
                }
                (Some("activation"), Some(a)) => activation = a.parse()?,
                _ => {}
            }
            continue;
        }
        tokens.extend(line.split_whitespace().map(|t| (line_no, t)));
    }

    let mut cur = TokenCursor { tokens: &tokens, pos: 0 };

    let (line, magic) = cur.next("header")?;
    let (_, version) = cur.next("version")?;
    if magic != "ikforge-model" || version != "v1" {
        return Err(Error::FileFormat {
            kind: "model",
            reason: format!("unsupported header on line {line}"),
        });
    }
    let chain_name = cur.next("chain name")?.1.to_string();
    let dof = cur.next_usize("joint count")?;
    let (line, kw) = cur.next("scale keyword")?;
    if kw != "scale" {
        return Err(Error::FileFormat {
            kind: "model",
            reason: format!("expected `scale` on line {line}"),
        });
    }
    let scale = cur.next_f64("scale value")?;
    if scale <= 0.0 {
        return Err(Error::FileFormat { kind: "model", reason: "scale must be positive".into() });
    }
    let (line, kw) = cur.next("layers keyword")?;
    if kw != "layers" {
        return Err(Error::FileFormat {
            kind: "model",
            reason: format!("expected `layers` on line {line}"),
        });
    }
    let layer_count = cur.next_usize("layer count")?;
    if layer_count == 0 {
        return Err(Error::FileFormat {
            kind: "model",
            reason: "a model needs at least one layer".into(),
        });
    }

    let mut weights = Vec::with_capacity(layer_count);
    let mut biases = Vec::with_capacity(layer_count);
    let mut prev_rows = INPUT_DIM;
    for l in 0..layer_count {
        let rows = cur.next_usize("layer rows")?;
        let cols = cur.next_usize("layer cols")?;
        if rows == 0 || cols != prev_rows + 1 {
            return Err(Error::FileFormat {
                kind: "model",
                reason: format!(
                    "layer {l} block is {rows}x{cols}, expected {}x{} from the preceding layer",
                    rows.max(1),
                    prev_rows + 1
                ),
            });
        }
        let mut w = DMatrix::zeros(rows, cols - 1);
        let mut b = DVector::zeros(rows);
        for r in 0..rows {
            for c in 0..cols - 1 {
                w[(r, c)] = cur.next_f64("weight value")?;
            }
            b[r] = cur.next_f64("bias value")?;
        }
        weights.push(w);
        biases.push(b);
        prev_rows = rows;
    }
    if prev_rows != 2 * dof {
        return Err(Error::FileFormat {
            kind: "model",
            reason: format!("output width {prev_rows} does not match {dof} joints"),
        });
    }

    let mut history = Vec::new();
    if !cur.done() {
        let (line, kw) = cur.next("history keyword")?;
        if kw != "history" {
            return Err(Error::FileFormat {
                kind: "model",
                reason: format!("unexpected trailing data on line {line}"),
            });
        }
        let entries = cur.next_usize("history length")?;
        for _ in 0..entries {
            let t = cur.next_f64("history train loss")?;
            let v = cur.next_f64("history validation loss")?;
            history.push((t, v));
        }
    }
    if !cur.done() {
        let (line, _) = cur.next("end of file")?;
        return Err(Error::FileFormat {
            kind: "model",
            reason: format!("unexpected trailing data on line {line}"),
        });
    }

    let spec = MlpSpec {
        input_dim: INPUT_DIM,
        hidden_layers: weights[..layer_count - 1].iter().map(|w| w.nrows()).collect(),
        output_dim: prev_rows,
        activation,
        seed,
    };
    Ok(TrainedModel {
        chain_name,
        dof,
        spec,
        params: MlpParams { weights, biases },
        scale,
        history,
    })
}

/// Reads a model document from disk; see [`load_model`].
pub fn read_model(source: &Path) -> Result<TrainedModel> {
    load_model(&fs::read_to_string(source)?)
}
