//! On-disk dataset: a JSON manifest plus one directory of little-endian
//! binary blobs per scene.
//!
//! ```text
//! manifest.json
//! scene_<k>/flow.bin       num_points × horizon × 3 f32
//! scene_<k>/depth_<t>.bin  u32 width, u32 height, then f32 depths
//! scene_<k>/init.bin       image_size² f32
//! scene_<k>/goal.bin       image_size² f32
//! scene_<k>/gt_traj.csv    step,qw,qx,qy,qz,tx,ty,tz,q0..q<dof-1>
//! scene_<k>/camera.txt     key=value camera
//! ```
//!
//! The manifest lists a SHA-256 digest for every file; import checks every
//! shape against the manifest before checking digests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::camera::{CameraModel, DepthMap};
use crate::diffusion::{FlowTensor, GrayImage};
use crate::kinematics::JointConfig;
use crate::se3::{pose_from_quat_translation, quat_wxyz, Pose};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("{file}: shape mismatch: {reason}")]
    ShapeMismatch { file: PathBuf, reason: String },
    #[error("{file}: checksum mismatch")]
    ChecksumFail { file: PathBuf },
    #[error("{file}: {reason}")]
    CorruptFile { file: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One demonstration as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub task_id: usize,
    pub seed: u64,
    pub camera: CameraModel,
    pub initial_image: GrayImage,
    pub goal_image: GrayImage,
    pub flow: FlowTensor,
    pub depths: Vec<DepthMap>,
    /// Ground-truth joint configurations; only evaluation reads these.
    pub gt_configs: Vec<JointConfig>,
    /// Ground-truth end-effector poses; only evaluation reads these.
    pub gt_poses: Vec<Pose>,
}

impl SceneSample {
    pub fn initial_config(&self) -> &JointConfig {
        &self.gt_configs[0]
    }

    /// What survives a save/load cycle.
    pub fn quantized(&self) -> Self {
        Self {
            flow: self.flow.quantized(),
            initial_image: self.initial_image.quantized(),
            goal_image: self.goal_image.quantized(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub dir: String,
    pub task_id: usize,
    pub seed: u64,
    pub initial_config: Vec<f64>,
    /// File name to lowercase hex SHA-256.
    pub checksums: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub num_scenes: usize,
    pub num_tasks: usize,
    pub horizon: usize,
    pub num_points: usize,
    pub image_width: u32,
    pub image_height: u32,
    /// Side length of the square initial and goal images.
    pub goal_size: usize,
    pub dof: usize,
    pub seed: u64,
    pub robot: String,
    /// Which URDF element each link's bounding geometry came from.
    pub geometry_sources: BTreeMap<String, String>,
    pub invalid_depth_fraction: f64,
    pub scenes: Vec<SceneEntry>,
}

/// Dataset-wide facts recorded alongside the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetInfo {
    pub seed: u64,
    pub robot: String,
    pub geometry_sources: BTreeMap<String, String>,
    pub invalid_depth_fraction: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn trajectory_csv(poses: &[Pose], configs: &[JointConfig]) -> String {
    let dof = configs.first().map_or(0, JointConfig::len);
    let mut s = String::from("step,qw,qx,qy,qz,tx,ty,tz");
    for j in 0..dof {
        let _ = write!(s, ",q{j}");
    }
    s.push('\n');
    for (k, (pose, q)) in poses.iter().zip(configs).enumerate() {
        let [w, x, y, z] = quat_wxyz(pose);
        let t = pose.translation.vector;
        let _ = write!(s, "{k},{w},{x},{y},{z},{},{},{}", t.x, t.y, t.z);
        for v in &q.values {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_trajectory_csv(text: &str, dof: usize) -> Result<(Vec<Pose>, Vec<JointConfig>), String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    if header.split(',').count() != 8 + dof {
        return Err(format!("expected {} columns", 8 + dof));
    }
    let mut poses = Vec::new();
    let mut configs = Vec::new();
    for (n, line) in lines.enumerate() {
        let v: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| format!("row {}: bad number", n + 1))?;
        if v.len() != 8 + dof {
            return Err(format!("row {}: expected {} columns", n + 1, 8 + dof));
        }
        if v[0] != n as f64 {
            return Err(format!("row {}: steps out of order", n + 1));
        }
        poses.push(pose_from_quat_translation([v[1], v[2], v[3], v[4]], [v[5], v[6], v[7]]));
        configs.push(JointConfig::new(v[8..].to_vec()));
    }
    Ok((poses, configs))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], sums: &mut BTreeMap<String, String>) -> Result<(), DatasetError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(io_err(&path))?;
    sums.insert(name.to_string(), sha256_hex(bytes));
    Ok(())
}

/// Writes `samples` under `dir` (created if needed). All samples must share
/// horizon, point count, camera resolution and image size.
pub fn export_dataset(dir: &Path, samples: &[SceneSample], info: &DatasetInfo) -> Result<Manifest, DatasetError> {
    let first = samples
        .first()
        .ok_or_else(|| DatasetError::CorruptManifest("no samples to export".into()))?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(samples.len());
    for (k, s) in samples.iter().enumerate() {
        let same_shape = s.flow.num_points() == first.flow.num_points()
            && s.flow.horizon() == first.flow.horizon()
            && s.camera.width == first.camera.width
            && s.camera.height == first.camera.height
            && s.initial_image.width == first.initial_image.width;
        if !same_shape {
            return Err(DatasetError::ShapeMismatch {
                file: dir.to_path_buf(),
                reason: format!("sample {k} differs in shape from sample 0"),
            });
        }
        let name = format!("scene_{k}");
        let sdir = dir.join(&name);
        fs::create_dir_all(&sdir).map_err(io_err(&sdir))?;
        let mut sums = BTreeMap::new();
        write_file(&sdir, "flow.bin", &s.flow.to_bytes(), &mut sums)?;
        for (t, d) in s.depths.iter().enumerate() {
            write_file(&sdir, &format!("depth_{t}.bin"), &d.to_bytes(), &mut sums)?;
        }
        write_file(&sdir, "init.bin", &s.initial_image.to_bytes(), &mut sums)?;
        write_file(&sdir, "goal.bin", &s.goal_image.to_bytes(), &mut sums)?;
        write_file(&sdir, "gt_traj.csv", trajectory_csv(&s.gt_poses, &s.gt_configs).as_bytes(), &mut sums)?;
        write_file(&sdir, "camera.txt", s.camera.to_text().as_bytes(), &mut sums)?;
        entries.push(SceneEntry {
            dir: name,
            task_id: s.task_id,
            seed: s.seed,
            initial_config: s.initial_config().values.clone(),
            checksums: sums,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        num_scenes: samples.len(),
        num_tasks: samples.iter().map(|s| s.task_id + 1).max().unwrap_or(0),
        horizon: first.flow.horizon(),
        num_points: first.flow.num_points(),
        image_width: first.camera.width,
        image_height: first.camera.height,
        goal_size: first.initial_image.width,
        dof: first.initial_config().len(),
        seed: info.seed,
        robot: info.robot.clone(),
        geometry_sources: info.geometry_sources.clone(),
        invalid_depth_fraction: info.invalid_depth_fraction,
        scenes: entries,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| DatasetError::CorruptManifest(e.to_string()))?;
    if m.format_version != FORMAT_VERSION {
        return Err(DatasetError::CorruptManifest(format!(
            "unsupported format version {}",
            m.format_version
        )));
    }
    if m.scenes.len() != m.num_scenes {
        return Err(DatasetError::CorruptManifest(format!(
            "num_scenes is {} but {} scenes are listed",
            m.num_scenes,
            m.scenes.len()
        )));
    }
    if m.horizon < 2 || m.num_points == 0 || m.goal_size == 0 {
        return Err(DatasetError::CorruptManifest("degenerate dimensions".into()));
    }
    Ok(m)
}

struct SceneReader<'a> {
    dir: PathBuf,
    entry: &'a SceneEntry,
}

impl SceneReader<'_> {
    /// Reads a file, checks its size, then its digest.
    fn read(&self, name: &str, expected_len: Option<usize>) -> Result<Vec<u8>, DatasetError> {
        let path = self.dir.join(name);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        if let Some(len) = expected_len {
            if bytes.len() != len {
                return Err(DatasetError::ShapeMismatch {
                    file: path,
                    reason: format!("expected {len} bytes, found {}", bytes.len()),
                });
            }
        }
        let want = self
            .entry
            .checksums
            .get(name)
            .ok_or_else(|| DatasetError::CorruptManifest(format!("no checksum for {}", path.display())))?;
        if &sha256_hex(&bytes) != want {
            return Err(DatasetError::ChecksumFail { file: path });
        }
        Ok(bytes)
    }

    fn corrupt(&self, name: &str, reason: impl ToString) -> DatasetError {
        DatasetError::CorruptFile {
            file: self.dir.join(name),
            reason: reason.to_string(),
        }
    }
}

/// Loads and validates every scene listed in the manifest.
pub fn import_dataset(dir: &Path) -> Result<(Manifest, Vec<SceneSample>), DatasetError> {
    let m = read_manifest(dir)?;
    let mut samples = Vec::with_capacity(m.num_scenes);
    for entry in &m.scenes {
        let r = SceneReader {
            dir: dir.join(&entry.dir),
            entry,
        };
        if entry.initial_config.len() != m.dof {
            return Err(DatasetError::ShapeMismatch {
                file: dir.join(MANIFEST_FILE),
                reason: format!("initial_config of {} has {} values", entry.dir, entry.initial_config.len()),
            });
        }
        let flow_bytes = r.read("flow.bin", Some(m.num_points * m.horizon * 3 * 4))?;
        let flow = FlowTensor::from_bytes(m.num_points, m.horizon, &flow_bytes).map_err(|e| r.corrupt("flow.bin", e))?;
        let pixels = m.image_width as usize * m.image_height as usize;
        let mut depths = Vec::with_capacity(m.horizon);
        for t in 0..m.horizon {
            let name = format!("depth_{t}.bin");
            let bytes = r.read(&name, Some(8 + 4 * pixels))?;
            let d = DepthMap::from_bytes(&bytes).map_err(|e| r.corrupt(&name, e))?;
            if (d.width, d.height) != (m.image_width, m.image_height) {
                return Err(DatasetError::ShapeMismatch {
                    file: r.dir.join(&name),
                    reason: format!("header says {}x{}", d.width, d.height),
                });
            }
            depths.push(d);
        }
        let img_len = Some(m.goal_size * m.goal_size * 4);
        let init = GrayImage::from_bytes(m.goal_size, m.goal_size, &r.read("init.bin", img_len)?)
            .map_err(|e| r.corrupt("init.bin", e))?;
        let goal = GrayImage::from_bytes(m.goal_size, m.goal_size, &r.read("goal.bin", img_len)?)
            .map_err(|e| r.corrupt("goal.bin", e))?;
        let traj_text = String::from_utf8(r.read("gt_traj.csv", None)?).map_err(|e| r.corrupt("gt_traj.csv", e))?;
        let (gt_poses, gt_configs) = parse_trajectory_csv(&traj_text, m.dof).map_err(|e| r.corrupt("gt_traj.csv", e))?;
        if gt_poses.len() != m.horizon {
            return Err(DatasetError::ShapeMismatch {
                file: r.dir.join("gt_traj.csv"),
                reason: format!("{} rows for horizon {}", gt_poses.len(), m.horizon),
            });
        }
        if gt_configs[0].values != entry.initial_config {
            return Err(r.corrupt("gt_traj.csv", "first row disagrees with the manifest's initial_config"));
        }
        let cam_text = String::from_utf8(r.read("camera.txt", None)?).map_err(|e| r.corrupt("camera.txt", e))?;
        let camera = CameraModel::from_text(&cam_text).map_err(|e| r.corrupt("camera.txt", e))?;
        if (camera.width, camera.height) != (m.image_width, m.image_height) {
            return Err(DatasetError::ShapeMismatch {
                file: r.dir.join("camera.txt"),
                reason: "camera resolution differs from the manifest".into(),
            });
        }
        samples.push(SceneSample {
            task_id: entry.task_id,
            seed: entry.seed,
            camera,
            initial_image: init,
            goal_image: goal,
            flow,
            depths,
            gt_configs,
            gt_poses,
        });
    }
    Ok((m, samples))
}
