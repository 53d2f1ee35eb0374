//! AdamW training loop with separate learning rates for the two branches.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::model::{training_loss, DenoiserParams, LossItem, TrainingSample, FLOW_GROUP};
use super::schedule::NoiseSchedule;
use super::DiffusionError;

/// Epoch losses above this abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    /// Learning rate of the conditioning projection and flow branch.
    pub lr_flow: f64,
    pub lr_image: f64,
    pub batch: usize,
    pub seed: u64,
    /// Decoupled weight decay, applied to weight matrices only.
    pub weight_decay: f64,
    /// Learning rates follow a cosine from their base value down to this
    /// fraction of it over the run.
    pub final_lr_fraction: f64,
    /// Rescales each step's gradient to at most this global norm.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr_flow: 1e-3,
            lr_image: 2e-3,
            batch: 8,
            seed: 0,
            weight_decay: 0.0,
            final_lr_fraction: 0.05,
            max_grad_norm: Some(1.0),
        }
    }
}

struct AdamState {
    m: DenoiserParams,
    v: DenoiserParams,
    step: i32,
}

fn adam_slice(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, decay: f64, bias: (f64, f64)) {
    for k in 0..p.len() {
        m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
        v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
        let m_hat = m[k] / bias.0;
        let v_hat = v[k] / bias.1;
        p[k] -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + decay * p[k]);
    }
}

impl AdamState {
    fn new(params: &DenoiserParams) -> Self {
        Self { m: params.zeros_like(), v: params.zeros_like(), step: 0 }
    }

    fn update(&mut self, params: &mut DenoiserParams, grads: &DenoiserParams, lr: (f64, f64), weight_decay: f64) {
        self.step += 1;
        let bias = (1.0 - BETA1.powi(self.step), 1.0 - BETA2.powi(self.step));
        for (li, layer) in params.layers.iter_mut().enumerate() {
            let rate = if FLOW_GROUP.contains(&li) { lr.0 } else { lr.1 };
            let (g, m, v) = (&grads.layers[li], &mut self.m.layers[li], &mut self.v.layers[li]);
            adam_slice(
                layer.w.as_mut_slice(),
                g.w.as_slice(),
                m.w.as_mut_slice(),
                v.w.as_mut_slice(),
                rate,
                weight_decay,
                bias,
            );
            adam_slice(layer.b.as_mut_slice(), g.b.as_slice(), m.b.as_mut_slice(), v.b.as_mut_slice(), rate, 0.0, bias);
        }
    }
}

fn clip_norm(grads: &mut DenoiserParams, limit: f64) {
    let norm = grads
        .layers
        .iter()
        .map(|l| l.w.norm_squared() + l.b.norm_squared())
        .sum::<f64>()
        .sqrt();
    if norm > limit {
        let scale = limit / norm;
        for l in &mut grads.layers {
            l.w *= scale;
            l.b *= scale;
        }
    }
}

/// Trains in place and returns the mean loss of each epoch.
///
/// Each epoch visits the shuffled dataset in batches; the last batch wraps
/// around to the start of the order so every batch is full. Every item gets
/// a fresh timestep in `1..=steps` and fresh Gaussian noise. The run is a
/// pure function of `opts.seed`, the data and the initial parameters.
pub fn train(
    params: &mut DenoiserParams,
    data: &[TrainingSample],
    schedule: &NoiseSchedule,
    opts: &TrainOptions,
) -> Result<Vec<f64>, DiffusionError> {
    if data.is_empty() {
        return Err(DiffusionError::EmptyDataset);
    }
    if opts.batch == 0 {
        return Err(DiffusionError::BadDims("batch size 0".into()));
    }
    let dims = params.dims;
    if dims.steps != schedule.steps() {
        return Err(DiffusionError::HeaderMismatch(format!(
            "model expects {} diffusion steps, schedule has {}",
            dims.steps,
            schedule.steps()
        )));
    }
    let (f, g) = (dims.flow_len(), dims.image_len());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adam = AdamState::new(params);
    let steps_per_epoch = data.len().div_ceil(opts.batch);
    let total_steps = (opts.epochs * steps_per_epoch).max(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(opts.epochs);
    let mut global_step = 0usize;
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for s in 0..steps_per_epoch {
            let picks: Vec<(usize, usize, Vec<f64>, Vec<f64>)> = (0..opts.batch)
                .map(|k| {
                    let idx = order[(s * opts.batch + k) % data.len()];
                    let t = rng.random_range(1..=schedule.steps());
                    let eps_f: Vec<f64> = (0..f).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let eps_i: Vec<f64> = (0..g).map(|_| StandardNormal.sample(&mut rng)).collect();
                    (idx, t, eps_f, eps_i)
                })
                .collect();
            let batch: Vec<LossItem<'_>> = picks
                .iter()
                .map(|(idx, t, ef, ei)| LossItem { sample: &data[*idx], t: *t, eps_flow: ef, eps_image: ei })
                .collect();
            let (loss, mut grads) = training_loss(params, &batch, schedule, dims.lambda)?;
            if let Some(limit) = opts.max_grad_norm {
                clip_norm(&mut grads, limit);
            }
            let progress = global_step as f64 / total_steps as f64;
            let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
            let factor = opts.final_lr_fraction + (1.0 - opts.final_lr_fraction) * cosine;
            adam.update(params, &grads, (opts.lr_flow * factor, opts.lr_image * factor), opts.weight_decay);
            global_step += 1;
            epoch_loss += loss.total;
        }
        epoch_loss /= steps_per_epoch as f64;
        if !epoch_loss.is_finite() || !params.is_finite() {
            return Err(DiffusionError::NonfiniteLoss);
        }
        if epoch_loss > DIVERGENCE_LIMIT {
            return Err(DiffusionError::DivergedLoss { epoch, loss: epoch_loss });
        }
        curve.push(epoch_loss);
    }
    Ok(curve)
}
