//! `eval`: pose errors of solved trajectories against `gt_traj.csv`.
//!
//! A trajectory counts as a success when its final pose lies within both
//! the translation and the rotation threshold of the recorded final pose.

use std::fmt::Write as _;
use std::path::Path;

use ecflow_core::oracle::dataset::{parse_trajectory_csv, read_manifest, sha256_hex};
use ecflow_core::se3::{pose_distance, pose_from_quat_translation, Pose};

use crate::common::{prepare_output, read_csv, scene_dir};
use crate::config::{key, Key, RunConfig};
use crate::error::{read_bytes, require, write, CliError};
use crate::solve::trajectory_file;

pub const STEPS_FILE: &str = "steps.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

pub const KEYS: &[Key] = &[
    key("dataset", "", "Dataset whose gt_traj.csv files hold the reference poses"),
    key("trajectories", "", "Directory written by solve"),
    key("out", "", "Directory for the metrics"),
    key("success-translation", "0.02", "Final-pose translation threshold, meters"),
    key("success-rotation-deg", "5", "Final-pose rotation threshold, degrees"),
];

/// One solved step as read back from a trajectory CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedStep {
    pub pose: Pose,
    pub residual: f64,
    pub degenerate: bool,
}

pub fn read_trajectory(path: &Path) -> Result<Vec<SolvedStep>, CliError> {
    let (header, rows) = read_csv(path)?;
    let want = "step,qw,qx,qy,qz,tx,ty,tz,residual_px,iterations,converged,degenerate,points";
    if header.join(",") != want {
        return Err(CliError::format(path, "unexpected trajectory header"));
    }
    rows.iter()
        .map(|r| {
            let num = |i: usize| r[i].parse::<f64>().map_err(|_| CliError::format(path, format!("bad number `{}`", r[i])));
            Ok(SolvedStep {
                pose: pose_from_quat_translation([num(1)?, num(2)?, num(3)?, num(4)?], [num(5)?, num(6)?, num(7)?]),
                residual: num(8)?,
                degenerate: r[11] == "1",
            })
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let dataset = cfg.required_path("dataset")?;
    let traj_dir = cfg.required_path("trajectories")?;
    require(&dataset)?;
    require(&traj_dir)?;
    let max_t: f64 = cfg.parse("success-translation")?;
    let max_r: f64 = cfg.parse("success-rotation-deg")?;
    let manifest = read_manifest(&dataset).map_err(|e| CliError::from_dataset(&dataset, e))?;
    let out = prepare_output(cfg)?;

    let mut steps_csv = String::from("scene,step,trans_err_m,rot_err_deg,residual_px,degenerate\n");
    let mut metrics = String::from(
        "scene,task_id,mean_trans_err_m,max_trans_err_m,final_trans_err_m,mean_rot_err_deg,max_rot_err_deg,final_rot_err_deg,mean_residual_px,degenerate_steps,success\n",
    );
    let (mut all_trans, mut all_rot) = (Vec::new(), Vec::new());
    let (mut successes, mut degenerate_total) = (0usize, 0usize);
    for (k, entry) in manifest.scenes.iter().enumerate() {
        let gt_path = scene_dir(&dataset, k).join("gt_traj.csv");
        let bytes = read_bytes(&gt_path)?;
        if entry.checksums.get("gt_traj.csv") != Some(&sha256_hex(&bytes)) {
            return Err(CliError::format(&gt_path, "checksum mismatch"));
        }
        let text = String::from_utf8(bytes).map_err(|e| CliError::format(&gt_path, e))?;
        let (gt_poses, _) = parse_trajectory_csv(&text, manifest.dof).map_err(|e| CliError::format(&gt_path, e))?;
        let solved_path = traj_dir.join(trajectory_file(k));
        let solved = read_trajectory(&solved_path)?;
        if solved.len() != gt_poses.len() {
            return Err(CliError::format(
                &solved_path,
                format!("{} poses, reference has {}", solved.len(), gt_poses.len()),
            ));
        }
        let (mut trans, mut rot, mut residual, mut degenerate) = (Vec::new(), Vec::new(), 0.0, 0usize);
        for (t, (s, gt)) in solved.iter().zip(&gt_poses).enumerate().skip(1) {
            let (dt, dr) = pose_distance(&s.pose, gt);
            let dr = dr.to_degrees();
            let _ = writeln!(steps_csv, "{k},{t},{dt},{dr},{},{}", s.residual, s.degenerate as u8);
            trans.push(dt);
            rot.push(dr);
            residual += s.residual;
            degenerate += s.degenerate as usize;
        }
        let n = trans.len().max(1) as f64;
        let (final_t, final_r) = (*trans.last().unwrap_or(&0.0), *rot.last().unwrap_or(&0.0));
        let success = final_t <= max_t && final_r <= max_r;
        successes += success as usize;
        degenerate_total += degenerate;
        let _ = writeln!(
            metrics,
            "{k},{},{},{},{final_t},{},{},{final_r},{},{degenerate},{}",
            entry.task_id,
            trans.iter().sum::<f64>() / n,
            trans.iter().copied().fold(0.0, f64::max),
            rot.iter().sum::<f64>() / n,
            rot.iter().copied().fold(0.0, f64::max),
            residual / n,
            success as u8
        );
        all_trans.extend(trans);
        all_rot.extend(rot);
    }
    let scenes = manifest.scenes.len();
    let mean_t = all_trans.iter().sum::<f64>() / all_trans.len().max(1) as f64;
    let mean_r = all_rot.iter().sum::<f64>() / all_rot.len().max(1) as f64;
    let summary = format!(
        "trajectories,success_rate,mean_trans_err_m,median_trans_err_m,mean_rot_err_deg,median_rot_err_deg,degenerate_steps\n{scenes},{},{mean_t},{},{mean_r},{},{degenerate_total}\n",
        successes as f64 / scenes.max(1) as f64,
        median(&mut all_trans),
        median(&mut all_rot),
    );
    write(&out.join(STEPS_FILE), steps_csv)?;
    write(&out.join(METRICS_FILE), metrics)?;
    write(&out.join(SUMMARY_FILE), summary)
}
