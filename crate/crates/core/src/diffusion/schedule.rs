//! Cosine noise schedule and the closed-form forward process.

use super::tensor::FlowTensor;
use super::DiffusionError;

/// Offset in the squared-cosine profile.
pub const COSINE_OFFSET: f64 = 0.008;
pub const MIN_BETA: f64 = 1e-6;
pub const MAX_BETA: f64 = 0.999;
pub const MIN_STEPS: usize = 10;
/// Diffusion steps used for both training and sampling unless overridden.
pub const DEFAULT_STEPS: usize = 250;

/// `beta[t]` and `alpha_bar[t]` for `t = 0..=steps`. Index 0 is the clean
/// signal (`beta[0] = 0`, `alpha_bar[0] = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    steps: usize,
    offset: f64,
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

/// Squared-cosine schedule. Betas are clipped to `[MIN_BETA, MAX_BETA]` and
/// the cumulative products are recomputed from the clipped values, so
/// `alpha_bar` is always exactly consistent with `beta`.
pub fn cosine_schedule(steps: usize) -> Result<NoiseSchedule, DiffusionError> {
    if steps < MIN_STEPS {
        return Err(DiffusionError::BadSteps(steps));
    }
    let s = COSINE_OFFSET;
    let f = |t: usize| {
        let x = ((t as f64 / steps as f64) + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2;
        x.cos().powi(2)
    };
    let f0 = f(0);
    let mut beta = vec![0.0; steps + 1];
    let mut alpha_bar = vec![1.0; steps + 1];
    for t in 1..=steps {
        let raw = 1.0 - (f(t) / f0) / (f(t - 1) / f0);
        beta[t] = raw.clamp(MIN_BETA, MAX_BETA);
        alpha_bar[t] = alpha_bar[t - 1] * (1.0 - beta[t]);
    }
    Ok(NoiseSchedule { steps, offset: s, beta, alpha_bar })
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn check_timestep(&self, t: usize) -> Result<(), DiffusionError> {
        if t > self.steps {
            return Err(DiffusionError::BadTimestep { t, steps: self.steps });
        }
        Ok(())
    }

    /// `(sqrt(alpha_bar), sqrt(1 - alpha_bar))` at `t`.
    pub fn coefficients(&self, t: usize) -> (f64, f64) {
        let a = self.alpha_bar[t];
        (a.sqrt(), (1.0 - a).sqrt())
    }

    /// Evenly spaced descending timesteps for a sampler with `n` steps,
    /// always starting at `steps` and ending at 0.
    pub fn sampling_timesteps(&self, n: usize) -> Result<Vec<usize>, DiffusionError> {
        if n == 0 || n > self.steps {
            return Err(DiffusionError::BadSteps(n));
        }
        let mut ts: Vec<usize> = (0..=n)
            .rev()
            .map(|k| ((k as f64) * self.steps as f64 / n as f64).round() as usize)
            .collect();
        ts.dedup();
        Ok(ts)
    }
}

/// Noises a flat array in closed form:
/// `z_t = sqrt(alpha_bar) * z0 + sqrt(1 - alpha_bar) * eps`.
pub fn noise_values(z0: &[f64], eps: &[f64], t: usize, schedule: &NoiseSchedule) -> Result<Vec<f64>, DiffusionError> {
    schedule.check_timestep(t)?;
    if z0.len() != eps.len() {
        return Err(DiffusionError::ShapeMismatch { expected: z0.len(), got: eps.len() });
    }
    let (a, b) = schedule.coefficients(t);
    Ok(z0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// Forward noising of a flow tensor with the start frame held fixed: frame 0
/// of the result is frame 0 of `z0`, whatever `eps` holds there.
pub fn forward_noise(
    z0: &FlowTensor,
    t: usize,
    eps: &FlowTensor,
    schedule: &NoiseSchedule,
) -> Result<FlowTensor, DiffusionError> {
    if z0.num_points() != eps.num_points() || z0.horizon() != eps.horizon() {
        return Err(DiffusionError::ShapeMismatch { expected: z0.len(), got: eps.len() });
    }
    let mut values = noise_values(z0.as_slice(), eps.as_slice(), t, schedule)?;
    clamp_start(&mut values, z0.as_slice(), z0.horizon());
    Ok(FlowTensor::from_vec(z0.num_points(), z0.horizon(), values)?)
}

/// Overwrites the frame-0 entries of a flattened flow with those of `start`
/// (another full flattened flow of the same shape).
pub(crate) fn clamp_start(values: &mut [f64], start: &[f64], horizon: usize) {
    let stride = horizon * super::tensor::CHANNELS;
    for (dst, src) in values.chunks_mut(stride).zip(start.chunks(stride)) {
        dst[..super::tensor::CHANNELS].copy_from_slice(&src[..super::tensor::CHANNELS]);
    }
}

/// Sinusoidal embedding of a timestep: `dim / 2` sines followed by the
/// matching cosines at geometrically spaced frequencies.
pub fn timestep_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let freq = (-(10_000f64).ln() * k as f64 / half.max(1) as f64).exp();
        let arg = t as f64 * freq;
        out[k] = arg.sin();
        out[half + k] = arg.cos();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_invariants() {
        for steps in [10, 37, 250, 1000] {
            let s = cosine_schedule(steps).unwrap();
            assert!(s.beta()[1..].iter().all(|&b| b > 0.0 && b < 1.0));
            assert!(s.alpha_bar().windows(2).all(|w| w[1] < w[0]));
            assert!(s.alpha_bar()[0] >= 0.999);
            let recomputed = s.beta()[1..].iter().fold(1.0, |acc, b| acc * (1.0 - b));
            assert!((recomputed - s.alpha_bar()[steps]).abs() <= 1e-12);
            assert!(s.alpha_bar()[steps] <= 0.01);
        }
        assert!(matches!(cosine_schedule(9), Err(DiffusionError::BadSteps(9))));
    }

    #[test]
    fn sampling_timesteps_span() {
        let s = cosine_schedule(250).unwrap();
        let ts = s.sampling_timesteps(50).unwrap();
        assert_eq!(ts.first(), Some(&250));
        assert_eq!(ts.last(), Some(&0));
        assert_eq!(ts.len(), 51);
        assert_eq!(s.sampling_timesteps(250).unwrap().len(), 251);
        assert!(s.sampling_timesteps(251).is_err());
    }

    #[test]
    fn embedding_shape() {
        let e = timestep_embedding(0, 8);
        assert_eq!(e, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_ne!(timestep_embedding(3, 8), timestep_embedding(4, 8));
    }
}
