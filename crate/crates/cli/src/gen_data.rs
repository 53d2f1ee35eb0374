//! `gen-data`: synthetic demonstrations written as a dataset directory.

use std::collections::BTreeMap;

use ecflow_core::camera::CameraModel;
use ecflow_core::oracle::{
    default_camera, derive_seed, export_dataset, render_sample, DatasetInfo, RenderOptions, SyntheticScene,
};

use crate::common::{jobs, load_chain, parallel_map, prepare_output};
use crate::config::{key, switch, Key, RunConfig};
use crate::error::CliError;

pub const KEYS: &[Key] = &[
    key("out", "", "Dataset directory to create"),
    key("urdf", "", "Robot description; empty uses the bundled 7-joint arm"),
    key("camera", "", "Camera file (key=value); empty uses the fixture camera"),
    key("tasks", "8", "Number of tasks"),
    key("demos", "5", "Demonstrations per task"),
    key("horizon", "8", "Frames per demonstration"),
    key("num-points", "400", "Tracked points per demonstration"),
    key("image-size", "16", "Side of the square initial and goal images"),
    key("invalid-depth-fraction", "0", "Fraction of valid depth cells to invalidate per frame"),
    switch("occlude-eef", "Hide the end-effector link behind a box during `occlude-frames`"),
    key("occlude-frames", "3-6", "Inclusive frame range hidden by --occlude-eef"),
    key("seed", "0", "Master seed"),
    key("jobs", "1", "Worker threads; output is identical for any value"),
];

fn frame_range(raw: &str, horizon: usize) -> Result<std::ops::RangeInclusive<usize>, CliError> {
    let bad = || CliError::Usage(format!("`occlude-frames`: expected FIRST-LAST within 0..{horizon}, got `{raw}`"));
    let (a, b) = raw.split_once('-').ok_or_else(bad)?;
    let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a > b || b >= horizon {
        return Err(bad());
    }
    Ok(a..=b)
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let chain = load_chain(cfg)?;
    let camera = match cfg.optional_path("camera") {
        None => default_camera(),
        Some(path) => {
            crate::error::require(&path)?;
            CameraModel::load(&path).map_err(|e| CliError::format(&path, e))?
        }
    };
    let tasks: usize = cfg.parse("tasks")?;
    let demos: usize = cfg.parse("demos")?;
    let horizon: usize = cfg.parse("horizon")?;
    let seed: u64 = cfg.parse("seed")?;
    let options = RenderOptions {
        num_points: cfg.parse("num-points")?,
        image_size: cfg.parse("image-size")?,
        invalid_depth_fraction: cfg.parse("invalid-depth-fraction")?,
    };
    if tasks == 0 || demos == 0 {
        return Err(CliError::Usage("`tasks` and `demos` must be positive".into()));
    }
    if horizon < 2 {
        return Err(CliError::Usage(format!("`horizon` must be at least 2, got {horizon}")));
    }
    if options.num_points == 0 || options.image_size == 0 {
        return Err(CliError::Usage("`num-points` and `image-size` must be positive".into()));
    }
    if !(0.0..1.0).contains(&options.invalid_depth_fraction) {
        return Err(CliError::Usage("`invalid-depth-fraction` must lie in [0, 1)".into()));
    }
    let occlusion = if cfg.flag("occlude-eef")? {
        Some(frame_range(cfg.raw("occlude-frames"), horizon)?)
    } else {
        None
    };
    let out = prepare_output(cfg)?;

    let items: Vec<(usize, usize)> = (0..tasks).flat_map(|t| (0..demos).map(move |d| (t, d))).collect();
    let samples = parallel_map(jobs(cfg)?, &items, |k, &(task, demo)| {
        let context = || format!("scene {k} (task {task}, demo {demo})");
        let mut scene = SyntheticScene::for_task(&chain, &camera, task, demo, seed, horizon)
            .map_err(|e| CliError::module("sim-oracle", context(), e))?;
        if let Some(frames) = &occlusion {
            scene.occlude_link(chain.link_count() - 1, frames.clone(), 0.6);
        }
        render_sample(&scene, &options, derive_seed(seed, k as u64))
            .map(|(sample, _)| sample)
            .map_err(|e| CliError::module("sim-oracle", context(), e))
    })?;
    let info = DatasetInfo {
        seed,
        robot: chain.name.clone(),
        geometry_sources: chain
            .geometry_sources()
            .into_iter()
            .map(|(link, src)| (link.to_string(), src.as_str().to_string()))
            .collect::<BTreeMap<_, _>>(),
        invalid_depth_fraction: options.invalid_depth_fraction,
    };
    export_dataset(&out, &samples, &info).map_err(|e| CliError::from_dataset(&out, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_ranges() {
        assert_eq!(frame_range("3-6", 8).unwrap(), 3..=6);
        assert!(frame_range("3-8", 8).is_err());
        assert!(frame_range("5-2", 8).is_err());
        assert!(frame_range("x", 8).is_err());
    }
}
