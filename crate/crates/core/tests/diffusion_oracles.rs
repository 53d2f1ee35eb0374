use ecflow_core::diffusion::{
    cosine_schedule, ddim_sample, forward_noise, noise_values, train, DenoiserParams, FlowTensor, ModelDims,
    TrainOptions, TrainingSample, CHANNELS,
};
use ecflow_core::fixtures;
use ecflow_core::oracle::{default_camera, render_sample, RenderOptions, SyntheticScene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

#[test]
fn forward_marginal_variance_matches_schedule() {
    let schedule = cosine_schedule(250).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 10_000;
    for t in [1, 10, 60, 125, 200, 250] {
        let z0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eps = gaussian(n, &mut rng);
        let zt = noise_values(&z0, &eps, t, &schedule).unwrap();
        let a = schedule.alpha_bar()[t].sqrt();
        let resid: Vec<f64> = zt.iter().zip(&z0).map(|(z, x)| z - a * x).collect();
        let mean = resid.iter().sum::<f64>() / n as f64;
        let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want = 1.0 - schedule.alpha_bar()[t];
        assert!((var / want - 1.0).abs() < 0.05, "t={t}: {var} vs {want}");
    }
}

#[test]
fn forward_noise_boundary_cases() {
    let schedule = cosine_schedule(250).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (p, h) = (6, 4);
    let z0 = FlowTensor::from_vec(p, h, (0..p * h * CHANNELS).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let eps = FlowTensor::from_vec(p, h, gaussian(p * h * CHANNELS, &mut rng)).unwrap();

    assert_eq!(forward_noise(&z0, 0, &eps, &schedule).unwrap(), z0);

    let last = forward_noise(&z0, 250, &eps, &schedule).unwrap();
    let zero = FlowTensor::zeros(p, h);
    let scaled = forward_noise(&z0, 100, &zero, &schedule).unwrap();
    let a = schedule.alpha_bar()[100].sqrt();
    for i in 0..p {
        for c in 0..CHANNELS {
            assert_eq!(last.get(i, 0, c).to_bits(), z0.get(i, 0, c).to_bits());
            assert_eq!(scaled.get(i, 0, c).to_bits(), z0.get(i, 0, c).to_bits());
            for t in 1..h {
                assert!((last.get(i, t, c) - eps.get(i, t, c)).abs() < 1e-3);
                assert!((scaled.get(i, t, c) - a * z0.get(i, t, c)).abs() < 1e-15);
            }
        }
    }
}

fn corpus(tasks: usize, demos: usize, dims: &ModelDims) -> Vec<TrainingSample> {
    let chain = fixtures::arm7();
    let camera = default_camera();
    let opts = RenderOptions { num_points: dims.num_points, ..RenderOptions::default() };
    let mut out = Vec::new();
    for task in 0..tasks {
        for demo in 0..demos {
            let scene = SyntheticScene::for_task(&chain, &camera, task, demo, 7, 8).unwrap();
            let (s, _) = render_sample(&scene, &opts, (task * demos + demo) as u64).unwrap();
            out.push(TrainingSample::new(s.flow, s.goal_image, &s.initial_image, task, dims.task_dim));
        }
    }
    out
}

#[test]
fn single_sample_is_memorized() {
    let dims = ModelDims::toy();
    let data = corpus(1, 1, &dims);
    let schedule = cosine_schedule(dims.steps).unwrap();
    let mut params = DenoiserParams::init(dims).unwrap();
    let opts = TrainOptions { epochs: 1000, ..TrainOptions::default() };
    let curve = train(&mut params, &data, &schedule, &opts).unwrap();
    let tail = curve[curve.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(tail < 1e-3, "final loss {tail}");

    let (flow, _) = ddim_sample(&params, &data[0].cond, &schedule, 50, 1).unwrap();
    let truth = &data[0].flow;
    let mut worst = 0.0f64;
    for i in 0..dims.num_points {
        for t in 1..dims.horizon {
            let a = flow.pixel(i, t, 128, 128);
            let b = truth.pixel(i, t, 128, 128);
            worst = worst.max((a[0] - b[0]).hypot(a[1] - b[1]));
        }
    }
    assert!(worst < 2.0, "worst deviation {worst} px");
}

#[test]
fn corpus_loss_drops_by_an_order_of_magnitude() {
    let dims = ModelDims { hidden: 64, ..ModelDims::toy() };
    let data = corpus(8, 5, &dims);
    assert_eq!(data.len(), 40);
    let schedule = cosine_schedule(dims.steps).unwrap();
    let mut params = DenoiserParams::init(dims).unwrap();
    let opts = TrainOptions { epochs: 2000, batch: 40, ..TrainOptions::default() };
    let curve = train(&mut params, &data, &schedule, &opts).unwrap();
    let tail = curve[curve.len() - 20..].iter().sum::<f64>() / 20.0;
    assert!(tail < 0.1 * curve[0], "{} -> {tail}", curve[0]);
}
