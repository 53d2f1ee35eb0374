//! Deterministic DDIM sampling with the start frame pinned.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::model::{Conditioning, Denoiser};
use super::schedule::NoiseSchedule;
use super::tensor::{FlowTensor, GrayImage, CHANNELS, CH_VIS};
use super::DiffusionError;

fn pin_start(values: &mut [f64], start: &[f64], horizon: usize) {
    let stride = horizon * CHANNELS;
    for (chunk, s) in values.chunks_mut(stride).zip(start.chunks(CHANNELS)) {
        chunk[..CHANNELS].copy_from_slice(s);
    }
}

/// One deterministic update from `t` to `t_prev` given a noise estimate.
fn ddim_update(z: &mut [f64], eps: &[f64], t: usize, t_prev: usize, schedule: &NoiseSchedule) {
    let (a, b) = schedule.coefficients(t);
    let (a_prev, b_prev) = schedule.coefficients(t_prev);
    for (zi, ei) in z.iter_mut().zip(eps) {
        let clean = (*zi - b * ei) / a;
        *zi = a_prev * clean + b_prev * ei;
    }
}

/// Draws a flow and goal image by running `sample_steps` deterministic DDIM
/// updates from Gaussian noise seeded with `seed`.
///
/// Frame 0 of the flow is overwritten with the conditioning start points
/// before every network call and after every update, so it comes out
/// bit-identical to them. Visibility and image values are clamped to [0, 1]
/// at the end.
pub fn ddim_sample<D: Denoiser + ?Sized>(
    denoiser: &D,
    cond: &Conditioning,
    schedule: &NoiseSchedule,
    sample_steps: usize,
    seed: u64,
) -> Result<(FlowTensor, GrayImage), DiffusionError> {
    let dims = *denoiser.dims();
    cond.check(&dims)?;
    if dims.steps != schedule.steps() {
        return Err(DiffusionError::HeaderMismatch(format!(
            "model trained with {} steps, schedule has {}",
            dims.steps,
            schedule.steps()
        )));
    }
    let timesteps = schedule.sampling_timesteps(sample_steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: Vec<f64> = (0..dims.flow_len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut x: Vec<f64> = (0..dims.image_len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    pin_start(&mut z, &cond.start_points, dims.horizon);
    for pair in timesteps.windows(2) {
        let (t, t_prev) = (pair[0], pair[1]);
        let (eps_flow, eps_image) = denoiser.predict_noise(&z, &x, t, cond, schedule)?;
        ddim_update(&mut z, &eps_flow, t, t_prev, schedule);
        ddim_update(&mut x, &eps_image, t, t_prev, schedule);
        pin_start(&mut z, &cond.start_points, dims.horizon);
    }
    let mut flow = FlowTensor::from_vec(dims.num_points, dims.horizon, z)?;
    for i in 0..dims.num_points {
        for t in 1..dims.horizon {
            let v = flow.get(i, t, CH_VIS).clamp(0.0, 1.0);
            flow.set(i, t, CH_VIS, v);
        }
    }
    let goal = GrayImage::from_vec(dims.image_width, dims.image_height, x)?.clamped();
    Ok((flow, goal))
}
