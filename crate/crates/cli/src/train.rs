//! `train`: fits the flow + goal-image denoiser to a dataset.

use std::fmt::Write as _;

use ecflow_core::diffusion::{cosine_schedule, save_model, train, DenoiserParams, ModelDims, TrainOptions, TrainingSample};
use ecflow_core::oracle::import_dataset;

use crate::common::prepare_output;
use crate::config::{key, Key, RunConfig};
use crate::error::{require, write, CliError};

pub const MODEL_FILE: &str = "model.ecf";
pub const LOSS_FILE: &str = "loss.csv";

pub const KEYS: &[Key] = &[
    key("dataset", "", "Dataset directory written by gen-data"),
    key("out", "", "Directory for the model and loss curve"),
    key("seed", "0", "Seed for initialization, batching and noise"),
    key("epochs", "2000", "Passes over the dataset"),
    key("batch", "8", "Samples per optimizer step"),
    key("lr-flow", "0.001", "Learning rate of the conditioning and flow branch"),
    key("lr-image", "0.002", "Learning rate of the goal-image branch"),
    key("weight-decay", "0", "Decoupled weight decay on weight matrices"),
    key("final-lr-fraction", "0.05", "Learning rates decay along a cosine to this fraction"),
    key("max-grad-norm", "1", "Global gradient-norm clip; 0 disables it"),
    key("hidden", "256", "Hidden width of both branches"),
    key("cond-dim", "64", "Width of the shared conditioning projection"),
    key("temb-dim", "32", "Timestep embedding size"),
    key("lambda", "0.4", "Weight of the goal-image loss"),
    key("steps", "250", "Diffusion steps"),
    key("task-dim", "0", "One-hot task width; 0 uses the dataset's task count"),
];

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let dataset = cfg.required_path("dataset")?;
    require(&dataset)?;
    let (manifest, scenes) = import_dataset(&dataset).map_err(|e| CliError::from_dataset(&dataset, e))?;
    let task_dim: usize = match cfg.parse("task-dim")? {
        0 => manifest.num_tasks,
        d => d,
    };
    if let Some(s) = scenes.iter().find(|s| s.task_id >= task_dim) {
        return Err(CliError::Usage(format!("task id {} does not fit `task-dim` {task_dim}", s.task_id)));
    }
    let dims = ModelDims {
        num_points: manifest.num_points,
        horizon: manifest.horizon,
        image_width: manifest.goal_size,
        image_height: manifest.goal_size,
        task_dim,
        temb_dim: cfg.parse("temb-dim")?,
        cond_dim: cfg.parse("cond-dim")?,
        hidden: cfg.parse("hidden")?,
        steps: cfg.parse("steps")?,
        schedule_offset: ecflow_core::diffusion::schedule::COSINE_OFFSET,
        lambda: cfg.parse("lambda")?,
        seed: cfg.parse("seed")?,
    };
    let max_norm: f64 = cfg.parse("max-grad-norm")?;
    let opts = TrainOptions {
        epochs: cfg.parse("epochs")?,
        lr_flow: cfg.parse("lr-flow")?,
        lr_image: cfg.parse("lr-image")?,
        batch: cfg.parse("batch")?,
        seed: dims.seed,
        weight_decay: cfg.parse("weight-decay")?,
        final_lr_fraction: cfg.parse("final-lr-fraction")?,
        max_grad_norm: (max_norm > 0.0).then_some(max_norm),
    };
    if opts.epochs == 0 || opts.batch == 0 {
        return Err(CliError::Usage("`epochs` and `batch` must be positive".into()));
    }
    if !(dims.lambda >= 0.0) {
        return Err(CliError::Usage("`lambda` must be non-negative".into()));
    }
    let schedule = cosine_schedule(dims.steps).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut params = DenoiserParams::init(dims).map_err(|e| CliError::Usage(e.to_string()))?;
    let data: Vec<TrainingSample> = scenes
        .into_iter()
        .map(|s| TrainingSample::new(s.flow, s.goal_image, &s.initial_image, s.task_id, task_dim))
        .collect();
    let out = prepare_output(cfg)?;
    let curve = train(&mut params, &data, &schedule, &opts).map_err(|e| CliError::from_model(&dataset, e))?;

    let mut csv = String::from("epoch,loss\n");
    for (epoch, loss) in curve.iter().enumerate() {
        let _ = writeln!(csv, "{epoch},{loss}");
    }
    write(&out.join(LOSS_FILE), csv)?;
    let model_path = out.join(MODEL_FILE);
    save_model(&model_path, &params).map_err(|e| match e {
        ecflow_core::diffusion::DiffusionError::Io { path, source } => CliError::Output { path, source },
        other => CliError::format(&model_path, other),
    })
}
