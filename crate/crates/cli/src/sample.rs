//! `sample`: predicted flows and goal images for every dataset scene.

use std::fmt::Write as _;
use std::path::Path;

use ecflow_core::diffusion::{cosine_schedule, ddim_sample, load_model, Conditioning, FlowTensor};
use ecflow_core::oracle::dataset::sha256_hex;
use ecflow_core::oracle::{derive_seed, import_dataset, Manifest};

use crate::common::{jobs, parallel_map, prepare_output, read_csv, scene_dir};
use crate::config::{key, Key, RunConfig};
use crate::error::{create_dir, read_bytes, require, write, CliError};

pub const INDEX_FILE: &str = "samples.csv";

pub const KEYS: &[Key] = &[
    key("model", "", "Model file written by train"),
    key("dataset", "", "Dataset supplying initial images, task ids and start points"),
    key("out", "", "Directory for the predicted flows"),
    key("seed", "0", "Sampling seed"),
    key("sample-steps", "250", "Deterministic sampler updates"),
    key("jobs", "1", "Worker threads; output is identical for any value"),
];

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let model_path = cfg.required_path("model")?;
    let dataset = cfg.required_path("dataset")?;
    require(&model_path)?;
    require(&dataset)?;
    let params = load_model(&model_path).map_err(|e| CliError::from_model(&model_path, e))?;
    let (manifest, scenes) = import_dataset(&dataset).map_err(|e| CliError::from_dataset(&dataset, e))?;
    let d = params.dims;
    let expected = (manifest.num_points, manifest.horizon, manifest.goal_size, manifest.goal_size);
    if (d.num_points, d.horizon, d.image_width, d.image_height) != expected {
        return Err(CliError::format(
            &model_path,
            format!(
                "model shapes (points, horizon, image w, image h) = {:?} do not match the dataset's {expected:?}",
                (d.num_points, d.horizon, d.image_width, d.image_height)
            ),
        ));
    }
    let schedule = cosine_schedule(d.steps).map_err(|e| CliError::format(&model_path, e))?;
    let steps: usize = cfg.parse("sample-steps")?;
    schedule.sampling_timesteps(steps).map_err(|e| CliError::Usage(e.to_string()))?;
    let seed: u64 = cfg.parse("seed")?;
    let out = prepare_output(cfg)?;

    let outputs = parallel_map(jobs(cfg)?, &scenes, |k, s| {
        if s.task_id >= d.task_dim {
            return Err(CliError::format(
                &dataset,
                format!("scene {k} has task {} but the model knows {} tasks", s.task_id, d.task_dim),
            ));
        }
        let cond = Conditioning::new(&s.initial_image, s.task_id, d.task_dim, s.flow.start_points());
        ddim_sample(&params, &cond, &schedule, steps, derive_seed(seed, k as u64))
            .map_err(|e| CliError::module("flow-diffusion", format!("scene {k}"), e))
    })?;

    let mut index = String::from("scene,task_id,flow_sha256,goal_sha256\n");
    for (k, ((flow, goal), s)) in outputs.iter().zip(&scenes).enumerate() {
        let dir = scene_dir(&out, k);
        create_dir(&dir)?;
        let flow_bytes = flow.to_bytes();
        let goal_bytes = goal.to_bytes();
        write(&dir.join("flow.bin"), &flow_bytes)?;
        write(&dir.join("goal.bin"), &goal_bytes)?;
        let _ = writeln!(index, "{k},{},{},{}", s.task_id, sha256_hex(&flow_bytes), sha256_hex(&goal_bytes));
    }
    write(&out.join(INDEX_FILE), index)
}

/// Reads the flows written by `sample`, checking count, size and digest.
pub fn read_predicted_flows(dir: &Path, manifest: &Manifest) -> Result<Vec<FlowTensor>, CliError> {
    let index_path = dir.join(INDEX_FILE);
    let (header, rows) = read_csv(&index_path)?;
    let col = header
        .iter()
        .position(|h| h == "flow_sha256")
        .ok_or_else(|| CliError::format(&index_path, "no flow_sha256 column"))?;
    if rows.len() != manifest.num_scenes {
        return Err(CliError::format(
            &index_path,
            format!("{} predicted flows for {} scenes", rows.len(), manifest.num_scenes),
        ));
    }
    rows.iter()
        .enumerate()
        .map(|(k, row)| {
            let path = scene_dir(dir, k).join("flow.bin");
            let bytes = read_bytes(&path)?;
            if sha256_hex(&bytes) != row[col] {
                return Err(CliError::format(&path, "checksum mismatch"));
            }
            FlowTensor::from_bytes(manifest.num_points, manifest.horizon, &bytes).map_err(|e| CliError::format(&path, e))
        })
        .collect()
}
