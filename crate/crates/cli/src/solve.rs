//! `solve`: end-effector pose trajectories from flows and depth.

use std::fmt::Write as _;
use std::path::Path;

use ecflow_core::camera::DepthSampling;
use ecflow_core::diffusion::FlowTensor;
use ecflow_core::kinematics::JointConfig;
use ecflow_core::oracle::{derive_seed, import_dataset};
use ecflow_core::solver::{solve_trajectory, ConfigSource, PoseTrajectory, SolverConfig, SolverError};
use ecflow_core::urdf::KinematicChain;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::common::{jobs, load_chain, parallel_map, prepare_output};
use crate::config::{key, switch, Key, RunConfig};
use crate::error::{read_text, require, write, CliError};
use crate::sample::read_predicted_flows;

pub const SUMMARY_FILE: &str = "solve_summary.csv";

pub const KEYS: &[Key] = &[
    key("dataset", "", "Dataset supplying depth, cameras and initial configurations"),
    key("flows", "", "Directory written by sample; empty solves the dataset's own flows"),
    key("out", "", "Directory for trajectory CSVs"),
    key("urdf", "", "Robot description; empty uses the bundled 7-joint arm"),
    key("weights", "full", "Per-link weights: full, eef-only or file:<path>"),
    key("config-source", "chained", "Joint configuration per step: chained or provided (read from gt_traj.csv)"),
    switch("skip-degenerate", "Carry the previous pose forward over steps with no usable points"),
    key("motion-threshold", "0.5", "Minimum pixel motion for a point to be used"),
    key("visibility-threshold", "0.5", "Minimum visibility at both frames"),
    key("max-opt-iters", "100", "Optimizer iterations per step"),
    key("depth-sampling", "linear", "Depth read at sub-pixel positions: linear (slope-corrected) or nearest"),
    key("flow-noise-px", "0", "Standard deviation of Gaussian pixel noise added to every flow coordinate"),
    key("seed", "0", "Seed of the added flow noise"),
    key("jobs", "1", "Worker threads; output is identical for any value"),
];

pub fn trajectory_file(scene: usize) -> String {
    format!("scene_{scene}.csv")
}

fn parse_weights(raw: &str, chain: &KinematicChain) -> Result<Vec<f64>, CliError> {
    let m = chain.link_count();
    match raw {
        "full" => Ok(SolverConfig::full(m).joint_weights),
        "eef-only" => Ok(SolverConfig::eef_only(m).joint_weights),
        other => {
            let path = other
                .strip_prefix("file:")
                .ok_or_else(|| CliError::Usage(format!("`weights`: expected full, eef-only or file:<path>, got `{other}`")))?;
            let path = Path::new(path);
            let text = read_text(path)?;
            let values = text
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| CliError::format(path, format!("bad weight `{s}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != m {
                return Err(CliError::format(path, format!("{} weights for {m} links", values.len())));
            }
            Ok(values)
        }
    }
}

pub fn solver_config(cfg: &RunConfig, chain: &KinematicChain) -> Result<SolverConfig, CliError> {
    let mut sc = SolverConfig::full(chain.link_count());
    sc.joint_weights = parse_weights(cfg.raw("weights"), chain)?;
    sc.config_source = match cfg.raw("config-source") {
        "chained" => ConfigSource::Chained,
        "provided" => ConfigSource::Provided,
        other => return Err(CliError::Usage(format!("`config-source`: expected chained or provided, got `{other}`"))),
    };
    sc.skip_degenerate = cfg.flag("skip-degenerate")?;
    sc.motion_threshold = cfg.parse("motion-threshold")?;
    sc.visibility_threshold = cfg.parse("visibility-threshold")?;
    sc.max_opt_iters = cfg.parse("max-opt-iters")?;
    sc.depth_sampling = match cfg.raw("depth-sampling") {
        "linear" => DepthSampling::Linear,
        "nearest" => DepthSampling::Nearest,
        other => return Err(CliError::Usage(format!("`depth-sampling`: expected linear or nearest, got `{other}`"))),
    };
    sc.validate(chain.link_count()).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(sc)
}

/// Adds i.i.d. Gaussian noise of `sigma` pixels to every flow coordinate.
pub fn add_pixel_noise(flow: &mut FlowTensor, sigma: f64, width: u32, height: u32, seed: u64) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("positive standard deviation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..flow.num_points() {
        for t in 0..flow.horizon() {
            let [u, v] = flow.pixel(i, t, width, height);
            let noisy = [u + normal.sample(&mut rng), v + normal.sample(&mut rng)];
            flow.set_pixel(i, t, width, height, noisy);
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let dataset = cfg.required_path("dataset")?;
    require(&dataset)?;
    let chain = load_chain(cfg)?;
    let solver = solver_config(cfg, &chain)?;
    let sigma: f64 = cfg.parse("flow-noise-px")?;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(CliError::Usage("`flow-noise-px` must be non-negative".into()));
    }
    let seed: u64 = cfg.parse("seed")?;
    let (manifest, scenes) = import_dataset(&dataset).map_err(|e| CliError::from_dataset(&dataset, e))?;
    if manifest.dof != chain.dof() {
        return Err(CliError::format(
            &dataset,
            format!("dataset has {} joints, robot has {}", manifest.dof, chain.dof()),
        ));
    }
    let flows = match cfg.optional_path("flows") {
        Some(dir) => {
            require(&dir)?;
            read_predicted_flows(&dir, &manifest)?
        }
        None => scenes.iter().map(|s| s.flow.clone()).collect(),
    };
    let out = prepare_output(cfg)?;

    let work: Vec<usize> = (0..scenes.len()).collect();
    let trajectories: Vec<PoseTrajectory> = parallel_map(jobs(cfg)?, &work, |_, &k| {
        let s = &scenes[k];
        let mut flow = flows[k].clone();
        add_pixel_noise(&mut flow, sigma, s.camera.width, s.camera.height, derive_seed(seed, k as u64));
        let initial = JointConfig::new(manifest.scenes[k].initial_config.clone());
        let provided = (solver.config_source == ConfigSource::Provided).then_some(s.gt_configs.as_slice());
        solve_trajectory(&flow, &s.depths, &s.camera, &chain, &initial, &solver, provided).map_err(|e| match e {
            SolverError::DegenerateStep { t } => CliError::Degenerate { scene: k, step: t },
            other => CliError::module("action-solver", format!("scene {k}"), other),
        })
    })?;

    let mut summary = String::from("scene,steps,converged_steps,degenerate_steps,mean_residual_px,mean_points\n");
    for (k, traj) in trajectories.iter().enumerate() {
        write(&out.join(trajectory_file(k)), traj.to_csv())?;
        let n = traj.steps.len() as f64;
        let converged = traj.steps.iter().filter(|s| s.converged).count();
        let degenerate = traj.steps.iter().filter(|s| s.degenerate).count();
        let residual = traj.steps.iter().map(|s| s.residual).sum::<f64>() / n;
        let points = traj.steps.iter().map(|s| s.num_points as f64).sum::<f64>() / n;
        let _ = writeln!(summary, "{k},{},{converged},{degenerate},{residual},{points}", traj.steps.len());
    }
    write(&out.join(SUMMARY_FILE), summary)
}
