//! Feed-forward denoiser with a flow branch and a goal-image branch.
//!
//! Both branches predict the clean signal; the noise prediction used by the
//! loss and the sampler is derived from it in closed form. The image branch
//! sees the flow branch's prediction as extra conditioning, and gradients of
//! the image loss flow back through that path into the flow branch.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::schedule::{clamp_start, noise_values, timestep_embedding, NoiseSchedule};
use super::tensor::{FlowTensor, GrayImage, CHANNELS};
use super::DiffusionError;

/// Shapes and hyperparameters fixed for the lifetime of a model. Everything
/// here is written to the model file header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelDims {
    pub num_points: usize,
    pub horizon: usize,
    /// Goal image size. The initial frame used as visual conditioning has
    /// the same size.
    pub image_width: usize,
    pub image_height: usize,
    pub task_dim: usize,
    pub temb_dim: usize,
    /// Width of the shared conditioning projection.
    pub cond_dim: usize,
    pub hidden: usize,
    pub steps: usize,
    pub schedule_offset: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl ModelDims {
    /// Toy defaults: 64 points over 8 frames, 16x16 images, 8 tasks.
    pub fn toy() -> Self {
        Self {
            num_points: 64,
            horizon: 8,
            image_width: 16,
            image_height: 16,
            task_dim: 8,
            temb_dim: 32,
            cond_dim: 64,
            hidden: 256,
            steps: super::schedule::DEFAULT_STEPS,
            schedule_offset: super::schedule::COSINE_OFFSET,
            lambda: 0.4,
            seed: 0,
        }
    }

    pub fn flow_len(&self) -> usize {
        self.num_points * self.horizon * CHANNELS
    }

    pub fn image_len(&self) -> usize {
        self.image_width * self.image_height
    }

    pub fn start_len(&self) -> usize {
        self.num_points * CHANNELS
    }

    pub fn conditioning_len(&self) -> usize {
        self.image_len() + self.task_dim + self.start_len()
    }

    /// `(out, in)` of every layer in storage order: conditioning projection,
    /// three flow layers, three image layers.
    pub fn layer_shapes(&self) -> [(usize, usize); NUM_LAYERS] {
        let (f, g, e, p, h) = (self.flow_len(), self.image_len(), self.temb_dim, self.cond_dim, self.hidden);
        [
            (p, self.conditioning_len()),
            (h, f + e + p),
            (h, h),
            (f, h),
            (h, g + e + p + f),
            (h, h),
            (g, h),
        ]
    }

    fn validate(&self) -> Result<(), DiffusionError> {
        let positive = [
            self.num_points,
            self.horizon,
            self.image_width,
            self.image_height,
            self.temb_dim,
            self.cond_dim,
            self.hidden,
        ];
        if positive.contains(&0) || self.horizon < 2 {
            return Err(DiffusionError::BadDims(format!("{self:?}")));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(DiffusionError::BadDims(format!("lambda {}", self.lambda)));
        }
        Ok(())
    }
}

pub const NUM_LAYERS: usize = 7;
const COND: usize = 0;
const FLOW: [usize; 3] = [1, 2, 3];
const IMAGE: [usize; 3] = [4, 5, 6];
/// Layers trained at the flow learning rate. The rest use the image rate.
pub const FLOW_GROUP: [usize; 4] = [COND, FLOW[0], FLOW[1], FLOW[2]];

/// Conditioning for one sample: the initial frame, a one-hot task vector and
/// the start points (frame 0 of the flow).
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    pub visual: Vec<f64>,
    pub task: Vec<f64>,
    pub start_points: Vec<f64>,
}

impl Conditioning {
    pub fn new(initial: &GrayImage, task_id: usize, task_dim: usize, start_points: Vec<f64>) -> Self {
        let mut task = vec![0.0; task_dim];
        if let Some(slot) = task.get_mut(task_id) {
            *slot = 1.0;
        }
        Self { visual: initial.data.clone(), task, start_points }
    }

    pub fn check(&self, dims: &ModelDims) -> Result<(), DiffusionError> {
        let got = (self.visual.len(), self.task.len(), self.start_points.len());
        let want = (dims.image_len(), dims.task_dim, dims.start_len());
        if got != want {
            return Err(DiffusionError::HeaderMismatch(format!(
                "conditioning (visual, task, start) = {got:?}, model expects {want:?}"
            )));
        }
        Ok(())
    }

    fn write_into(&self, out: &mut [f64]) {
        let (v, rest) = out.split_at_mut(self.visual.len());
        let (l, s) = rest.split_at_mut(self.task.len());
        v.copy_from_slice(&self.visual);
        l.copy_from_slice(&self.task);
        s.copy_from_slice(&self.start_points);
    }
}

/// Weight matrix `(out, in)` and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Layer {
    fn zeros(out: usize, inp: usize) -> Self {
        Self { w: DMatrix::zeros(out, inp), b: DVector::zeros(out) }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = &self.w * x;
        for mut col in y.column_iter_mut() {
            col += &self.b;
        }
        y
    }

    pub fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Learnable parameters plus the dimensions they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    pub dims: ModelDims,
    pub layers: Vec<Layer>,
}

impl DenoiserParams {
    /// Uniform `±1/sqrt(fan_in)` weights and zero biases from `dims.seed`.
    pub fn init(dims: ModelDims) -> Result<Self, DiffusionError> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(dims.seed);
        let layers = dims
            .layer_shapes()
            .iter()
            .map(|&(out, inp)| {
                let bound = 1.0 / (inp as f64).sqrt();
                let mut layer = Layer::zeros(out, inp);
                // fill row-major so the draw order matches the file layout
                for r in 0..out {
                    for c in 0..inp {
                        layer.w[(r, c)] = rng.random_range(-bound..=bound);
                    }
                }
                layer
            })
            .collect();
        Ok(Self { dims, layers })
    }

    pub fn zeros_like(&self) -> Self {
        let layers = self.layers.iter().map(|l| Layer::zeros(l.w.nrows(), l.w.ncols())).collect();
        Self { dims: self.dims, layers }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    /// All parameters, layer by layer, weights row-major then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            for r in 0..l.w.nrows() {
                out.extend(l.w.row(r).iter());
            }
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<(), DiffusionError> {
        if values.len() != self.num_params() {
            return Err(DiffusionError::ShapeMismatch { expected: self.num_params(), got: values.len() });
        }
        let mut it = values.iter();
        for l in &mut self.layers {
            for r in 0..l.w.nrows() {
                for c in 0..l.w.ncols() {
                    l.w[(r, c)] = *it.next().unwrap_or(&0.0);
                }
            }
            for v in l.b.iter_mut() {
                *v = *it.next().unwrap_or(&0.0);
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// Parameters rounded through `f32`, as they come back from a model file.
    pub fn quantized(&self) -> Self {
        let mut q = self.clone();
        for l in &mut q.layers {
            l.w.apply(|v| *v = *v as f32 as f64);
            l.b.apply(|v| *v = *v as f32 as f64);
        }
        q
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Stacks row blocks of equal column count.
fn vstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = parts[0].ncols();
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut off = 0;
    for p in parts {
        out.rows_mut(off, p.nrows()).copy_from(*p);
        off += p.nrows();
    }
    out
}

/// Activations kept for the backward pass of a three-layer block.
struct MlpCache {
    input: DMatrix<f64>,
    pre1: DMatrix<f64>,
    act1: DMatrix<f64>,
    pre2: DMatrix<f64>,
    act2: DMatrix<f64>,
}

fn mlp_forward(layers: &[Layer], idx: [usize; 3], input: DMatrix<f64>) -> (MlpCache, DMatrix<f64>) {
    let pre1 = layers[idx[0]].apply(&input);
    let act1 = pre1.map(silu);
    let pre2 = layers[idx[1]].apply(&act1);
    let act2 = pre2.map(silu);
    let out = layers[idx[2]].apply(&act2);
    (MlpCache { input, pre1, act1, pre2, act2 }, out)
}

fn accumulate_linear(grad: &mut Layer, d_out: &DMatrix<f64>, input: &DMatrix<f64>) {
    grad.w += d_out * input.transpose();
    for col in d_out.column_iter() {
        grad.b += col;
    }
}

fn silu_backward(d_act: &DMatrix<f64>, pre: &DMatrix<f64>) -> DMatrix<f64> {
    d_act.zip_map(pre, |d, x| d * silu_grad(x))
}

/// Returns the gradient with respect to the block input.
fn mlp_backward(
    layers: &[Layer],
    grads: &mut [Layer],
    idx: [usize; 3],
    cache: &MlpCache,
    d_out: &DMatrix<f64>,
) -> DMatrix<f64> {
    accumulate_linear(&mut grads[idx[2]], d_out, &cache.act2);
    let d_pre2 = silu_backward(&layers[idx[2]].w.tr_mul(d_out), &cache.pre2);
    accumulate_linear(&mut grads[idx[1]], &d_pre2, &cache.act1);
    let d_pre1 = silu_backward(&layers[idx[1]].w.tr_mul(&d_pre2), &cache.pre1);
    accumulate_linear(&mut grads[idx[0]], &d_pre1, &cache.input);
    layers[idx[0]].w.tr_mul(&d_pre1)
}

/// Batched network inputs, one column per sample.
struct BatchInput {
    flow: DMatrix<f64>,
    image: DMatrix<f64>,
    temb: DMatrix<f64>,
    cond: DMatrix<f64>,
}

struct ForwardCache {
    cond_input: DMatrix<f64>,
    cond_pre: DMatrix<f64>,
    flow: MlpCache,
    image: MlpCache,
}

/// Clean-signal predictions for flow and image, one column per sample.
fn forward(params: &DenoiserParams, input: BatchInput) -> (ForwardCache, DMatrix<f64>, DMatrix<f64>) {
    let layers = &params.layers;
    let cond_pre = layers[COND].apply(&input.cond);
    let cond_act = cond_pre.map(silu);
    let flow_in = vstack(&[&input.flow, &input.temb, &cond_act]);
    let (flow_cache, flow_out) = mlp_forward(layers, FLOW, flow_in);
    let image_in = vstack(&[&input.image, &input.temb, &cond_act, &flow_out]);
    let (image_cache, image_out) = mlp_forward(layers, IMAGE, image_in);
    let cache = ForwardCache { cond_input: input.cond, cond_pre, flow: flow_cache, image: image_cache };
    (cache, flow_out, image_out)
}

fn backward(
    params: &DenoiserParams,
    cache: &ForwardCache,
    d_flow_out: &DMatrix<f64>,
    d_image_out: &DMatrix<f64>,
) -> DenoiserParams {
    let d = params.dims;
    let (f, g, e, p) = (d.flow_len(), d.image_len(), d.temb_dim, d.cond_dim);
    let mut grads = params.zeros_like();
    let d_image_in = mlp_backward(&params.layers, &mut grads.layers, IMAGE, &cache.image, d_image_out);
    let mut d_cond_act = d_image_in.rows(g + e, p).into_owned();
    let d_flow_total = d_flow_out + d_image_in.rows(g + e + p, f);
    let d_flow_in = mlp_backward(&params.layers, &mut grads.layers, FLOW, &cache.flow, &d_flow_total);
    d_cond_act += d_flow_in.rows(f + e, p);
    let d_cond_pre = silu_backward(&d_cond_act, &cache.cond_pre);
    accumulate_linear(&mut grads.layers[COND], &d_cond_pre, &cache.cond_input);
    grads
}

/// One training example: ground-truth flow, goal image and conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub flow: FlowTensor,
    pub goal: GrayImage,
    pub cond: Conditioning,
}

impl TrainingSample {
    /// Builds the conditioning from the sample's own start frame.
    pub fn new(flow: FlowTensor, goal: GrayImage, initial: &GrayImage, task_id: usize, task_dim: usize) -> Self {
        let cond = Conditioning::new(initial, task_id, task_dim, flow.start_points());
        Self { flow, goal, cond }
    }

    fn check(&self, dims: &ModelDims) -> Result<(), DiffusionError> {
        if self.flow.len() != dims.flow_len() {
            return Err(DiffusionError::ShapeMismatch { expected: dims.flow_len(), got: self.flow.len() });
        }
        if self.goal.data.len() != dims.image_len() {
            return Err(DiffusionError::ShapeMismatch { expected: dims.image_len(), got: self.goal.data.len() });
        }
        self.cond.check(dims)
    }
}

/// A sample together with its diffusion timestep and noise draws.
#[derive(Debug, Clone, Copy)]
pub struct LossItem<'a> {
    pub sample: &'a TrainingSample,
    pub t: usize,
    pub eps_flow: &'a [f64],
    pub eps_image: &'a [f64],
}

/// Batch-mean loss terms. `total = flow + lambda * image`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub flow: f64,
    pub image: f64,
}

/// Noise-prediction loss over a batch and its exact gradient with respect to
/// every parameter.
///
/// The flow term averages squared noise error over all entries except the
/// start frame; the image term averages over pixels. Both branches share the
/// timestep of their item. `t` must be at least 1.
pub fn training_loss(
    params: &DenoiserParams,
    batch: &[LossItem<'_>],
    schedule: &NoiseSchedule,
    lambda: f64,
) -> Result<(LossTerms, DenoiserParams), DiffusionError> {
    let d = params.dims;
    if batch.is_empty() {
        return Err(DiffusionError::EmptyDataset);
    }
    if !(lambda >= 0.0) {
        return Err(DiffusionError::BadDims(format!("lambda {lambda}")));
    }
    let (f, g) = (d.flow_len(), d.image_len());
    let n = batch.len();
    let mut input = BatchInput {
        flow: DMatrix::zeros(f, n),
        image: DMatrix::zeros(g, n),
        temb: DMatrix::zeros(d.temb_dim, n),
        cond: DMatrix::zeros(d.conditioning_len(), n),
    };
    let mut coeffs = Vec::with_capacity(n);
    for (j, item) in batch.iter().enumerate() {
        item.sample.check(&d)?;
        if item.t == 0 {
            return Err(DiffusionError::BadTimestep { t: 0, steps: schedule.steps() });
        }
        if item.eps_flow.len() != f {
            return Err(DiffusionError::ShapeMismatch { expected: f, got: item.eps_flow.len() });
        }
        if item.eps_image.len() != g {
            return Err(DiffusionError::ShapeMismatch { expected: g, got: item.eps_image.len() });
        }
        let z0 = item.sample.flow.as_slice();
        let mut zt = noise_values(z0, item.eps_flow, item.t, schedule)?;
        clamp_start(&mut zt, z0, d.horizon);
        let xt = noise_values(&item.sample.goal.data, item.eps_image, item.t, schedule)?;
        input.flow.column_mut(j).copy_from_slice(&zt);
        input.image.column_mut(j).copy_from_slice(&xt);
        input.temb.column_mut(j).copy_from_slice(&timestep_embedding(item.t, d.temb_dim));
        let mut c = vec![0.0; d.conditioning_len()];
        item.sample.cond.write_into(&mut c);
        input.cond.column_mut(j).copy_from_slice(&c);
        coeffs.push(schedule.coefficients(item.t));
    }
    let zt_all = input.flow.clone();
    let xt_all = input.image.clone();
    let (cache, flow_out, image_out) = forward(params, input);

    let stride = d.horizon * CHANNELS;
    let flow_count = (d.num_points * (d.horizon - 1) * CHANNELS) as f64;
    let mut d_flow = DMatrix::zeros(f, n);
    let mut d_image = DMatrix::zeros(g, n);
    let (mut flow_loss, mut image_loss) = (0.0, 0.0);
    for (j, item) in batch.iter().enumerate() {
        let (a, b) = coeffs[j];
        let scale = -a / b;
        for k in 0..f {
            if k % stride < CHANNELS {
                continue;
            }
            let r = (zt_all[(k, j)] - a * flow_out[(k, j)]) / b - item.eps_flow[k];
            flow_loss += r * r / flow_count;
            d_flow[(k, j)] = 2.0 * r * scale / (flow_count * n as f64);
        }
        for k in 0..g {
            let r = (xt_all[(k, j)] - a * image_out[(k, j)]) / b - item.eps_image[k];
            image_loss += r * r / g as f64;
            d_image[(k, j)] = lambda * 2.0 * r * scale / (g as f64 * n as f64);
        }
    }
    flow_loss /= n as f64;
    image_loss /= n as f64;
    let total = flow_loss + lambda * image_loss;
    if !total.is_finite() {
        return Err(DiffusionError::NonfiniteLoss);
    }
    let grads = backward(params, &cache, &d_flow, &d_image);
    Ok((LossTerms { total, flow: flow_loss, image: image_loss }, grads))
}

/// Anything that predicts the added noise for a noisy flow and goal image.
pub trait Denoiser {
    fn dims(&self) -> &ModelDims;

    /// Noise estimates `(flow, image)` at timestep `t >= 1`.
    fn predict_noise(
        &self,
        z_t: &[f64],
        x_t: &[f64],
        t: usize,
        cond: &Conditioning,
        schedule: &NoiseSchedule,
    ) -> Result<(Vec<f64>, Vec<f64>), DiffusionError>;
}

impl DenoiserParams {
    /// Clean-signal predictions `(flow, image)` for a single input.
    pub fn predict_clean(
        &self,
        z_t: &[f64],
        x_t: &[f64],
        t: usize,
        cond: &Conditioning,
    ) -> Result<(Vec<f64>, Vec<f64>), DiffusionError> {
        let d = self.dims;
        cond.check(&d)?;
        if z_t.len() != d.flow_len() {
            return Err(DiffusionError::HeaderMismatch(format!("flow length {} vs {}", z_t.len(), d.flow_len())));
        }
        if x_t.len() != d.image_len() {
            return Err(DiffusionError::HeaderMismatch(format!("image length {} vs {}", x_t.len(), d.image_len())));
        }
        let mut c = vec![0.0; d.conditioning_len()];
        cond.write_into(&mut c);
        let input = BatchInput {
            flow: DMatrix::from_column_slice(z_t.len(), 1, z_t),
            image: DMatrix::from_column_slice(x_t.len(), 1, x_t),
            temb: DMatrix::from_vec(d.temb_dim, 1, timestep_embedding(t, d.temb_dim)),
            cond: DMatrix::from_vec(c.len(), 1, c),
        };
        let (_, flow, image) = forward(self, input);
        Ok((flow.as_slice().to_vec(), image.as_slice().to_vec()))
    }
}

impl Denoiser for DenoiserParams {
    fn dims(&self) -> &ModelDims {
        &self.dims
    }

    fn predict_noise(
        &self,
        z_t: &[f64],
        x_t: &[f64],
        t: usize,
        cond: &Conditioning,
        schedule: &NoiseSchedule,
    ) -> Result<(Vec<f64>, Vec<f64>), DiffusionError> {
        let (flow, image) = self.predict_clean(z_t, x_t, t, cond)?;
        Ok((
            noise_from_clean(z_t, &flow, t, schedule),
            noise_from_clean(x_t, &image, t, schedule),
        ))
    }
}

/// `(z_t - sqrt(alpha_bar) * clean) / sqrt(1 - alpha_bar)`.
pub fn noise_from_clean(z_t: &[f64], clean: &[f64], t: usize, schedule: &NoiseSchedule) -> Vec<f64> {
    let (a, b) = schedule.coefficients(t);
    z_t.iter().zip(clean).map(|(z, c)| (z - a * c) / b).collect()
}

/// Knows the answer: returns the exact noise that separates `z_t` from the
/// stored clean flow and goal image.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    pub dims: ModelDims,
    pub flow: Vec<f64>,
    pub goal: Vec<f64>,
}

impl Denoiser for OracleDenoiser {
    fn dims(&self) -> &ModelDims {
        &self.dims
    }

    fn predict_noise(
        &self,
        z_t: &[f64],
        x_t: &[f64],
        t: usize,
        cond: &Conditioning,
        schedule: &NoiseSchedule,
    ) -> Result<(Vec<f64>, Vec<f64>), DiffusionError> {
        cond.check(&self.dims)?;
        Ok((
            noise_from_clean(z_t, &self.flow, t, schedule),
            noise_from_clean(x_t, &self.goal, t, schedule),
        ))
    }
}
