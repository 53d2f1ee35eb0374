//! Deterministic synthetic scenes with analytically known ground truth.
//!
//! A scene is an arm moving along a smooth joint-space trajectory in front of
//! a pinhole camera, optionally with temporary box occluders. Everything the
//! learned and geometric stages consume (point flow, depth maps, initial and
//! goal images) is rendered from it by exact ray casting, so every downstream
//! quantity can be checked against the generating trajectory.

pub mod dataset;
pub mod raycast;

use std::ops::RangeInclusive;

use nalgebra::{Point3, Translation3, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::camera::{primitive_samples, CameraModel, DepthMap};
use crate::diffusion::{FlowTensor, GrayImage, CH_VIS};
use crate::kinematics::{forward_kinematics, inverse_kinematics, IkOptions, JointConfig, KinematicsError};
use crate::se3::Pose;
use crate::urdf::{KinematicChain, Primitive};

pub use dataset::{export_dataset, import_dataset, DatasetError, DatasetInfo, Manifest, SceneSample};
use raycast::{cast, segment_blocked, HitOwner, PlacedPrimitive};

pub const DEFAULT_HORIZON: usize = 8;
pub const DEFAULT_NUM_POINTS: usize = 400;
/// Largest joint change between consecutive frames, radians (or meters).
pub const DEFAULT_MAX_STEP: f64 = 0.12;
pub const DEFAULT_IMAGE_SIZE: usize = 16;
/// Samples per image pixel along each axis when rendering gray images.
pub const IMAGE_SUPERSAMPLING: usize = 4;
const KNOTS: usize = 4;
/// Knots are drawn from this central fraction of every joint range.
const KNOT_RANGE_FRACTION: f64 = 0.3;
/// Largest per-joint change between consecutive knots.
const KNOT_STEP: f64 = 0.4;
/// Surface points closer than this to the first hit along their camera ray
/// count as visible.
const VISIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("horizon must be at least 2, got {0}")]
    BadHorizon(usize),
    #[error("number of points must be at least 1")]
    BadPointCount,
    #[error("the chain is not visible from the camera")]
    EmptyChain,
    #[error("could not realize frame {frame} of the trajectory by inverse kinematics")]
    Unrealizable { frame: usize },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Fixture camera: 128×128, `fx = fy = 200`, principal point at the image
/// center, looking at the arm from the front-right.
pub fn default_camera() -> CameraModel {
    CameraModel::look_at(
        200.0,
        200.0,
        128,
        128,
        Point3::new(1.7, 1.0, 1.2),
        Point3::new(0.0, 0.0, 0.75),
        Vector3::z(),
    )
    .expect("fixture camera is valid")
}

/// Derives an independent seed for item `index` of a seeded collection.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `count` spline knots: the first drawn from the central part of every
/// joint range, each later one a bounded random step from its predecessor,
/// so that every joint contributes comparable motion.
pub fn random_knots(chain: &KinematicChain, rng: &mut impl Rng, count: usize) -> Vec<Vec<f64>> {
    let limits = chain.limits();
    let mut knots: Vec<Vec<f64>> = Vec::with_capacity(count);
    for k in 0..count {
        let knot = limits
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let mid = 0.5 * (l.lower + l.upper);
                let half = 0.5 * KNOT_RANGE_FRACTION * (l.upper - l.lower);
                if k == 0 {
                    rng.random_range(mid - half..=mid + half)
                } else {
                    let next = knots[k - 1][j] + rng.random_range(-KNOT_STEP..=KNOT_STEP);
                    next.clamp(mid - 1.5 * half, mid + 1.5 * half)
                }
            })
            .collect();
        knots.push(knot);
    }
    knots
}

/// Natural cubic spline through `(k, ys[k])`, evaluated at `xs`.
fn natural_cubic_spline(ys: &[f64], xs: &[f64]) -> Vec<f64> {
    let n = ys.len();
    // second derivatives m[k]; m[0] = m[n-1] = 0 (natural boundary)
    // with unit spacing: m[k-1] + 4 m[k] + m[k+1] = 6 (y[k+1] - 2 y[k] + y[k-1])
    let mut m = vec![0.0; n];
    let inner = n.saturating_sub(2);
    let mut c = vec![0.0; inner];
    let mut d = vec![0.0; inner];
    for i in 0..inner {
        let rhs = 6.0 * (ys[i + 2] - 2.0 * ys[i + 1] + ys[i]);
        let (c_prev, d_prev) = if i == 0 { (0.0, 0.0) } else { (c[i - 1], d[i - 1]) };
        let denom = 4.0 - c_prev;
        c[i] = 1.0 / denom;
        d[i] = (rhs - d_prev) / denom;
    }
    for i in (0..inner).rev() {
        m[i + 1] = d[i] - c[i] * m[i + 2];
    }
    xs.iter()
        .map(|&x| {
            let k = (x.floor() as usize).min(n - 2);
            let s = x - k as f64;
            let r = 1.0 - s;
            r * ys[k] + s * ys[k + 1] + ((r * r * r - r) * m[k] + (s * s * s - s) * m[k + 1]) / 6.0
        })
        .collect()
}

/// Joint-space cubic spline through `knots`, sampled at `horizon` frames and
/// slowed down about its first frame until no joint moves more than
/// `max_step` between frames.
pub fn spline_trajectory(
    chain: &KinematicChain,
    knots: &[Vec<f64>],
    horizon: usize,
    max_step: f64,
) -> Result<Vec<JointConfig>, OracleError> {
    if horizon < 2 {
        return Err(OracleError::BadHorizon(horizon));
    }
    let dof = chain.dof();
    let scale = (knots.len() - 1) as f64 / (horizon - 1) as f64;
    let xs: Vec<f64> = (0..horizon).map(|t| t as f64 * scale).collect();
    let per_joint: Vec<Vec<f64>> = (0..dof)
        .map(|j| {
            let ys: Vec<f64> = knots.iter().map(|k| k[j]).collect();
            natural_cubic_spline(&ys, &xs)
        })
        .collect();
    let mut largest: f64 = 0.0;
    for q in &per_joint {
        for w in q.windows(2) {
            largest = largest.max((w[1] - w[0]).abs());
        }
    }
    let shrink = if largest > max_step { max_step / largest } else { 1.0 };
    Ok((0..horizon)
        .map(|t| {
            JointConfig::new(
                per_joint
                    .iter()
                    .map(|q| q[0] + shrink * (q[t] - q[0]))
                    .collect(),
            )
            .clamped(chain)
        })
        .collect())
}

/// Smooth in-limit joint trajectory, deterministic per seed.
pub fn gen_trajectory(
    chain: &KinematicChain,
    horizon: usize,
    seed: u64,
    max_step: f64,
) -> Result<Vec<JointConfig>, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let knots = random_knots(chain, &mut rng, KNOTS);
    spline_trajectory(chain, &knots, horizon, max_step)
}

/// Re-expresses a trajectory so that each frame is the inverse-kinematics
/// solution for its end-effector pose seeded from the previous realized
/// frame. A redundant arm then moves exactly as a pose-level controller that
/// chains the same IK would move it, which makes the end-effector pose
/// sequence a complete description of the motion.
pub fn realize_trajectory(
    chain: &KinematicChain,
    trajectory: &[JointConfig],
    ik: &IkOptions,
) -> Result<Vec<JointConfig>, OracleError> {
    let mut out: Vec<JointConfig> = Vec::with_capacity(trajectory.len());
    out.push(trajectory[0].clone());
    for (frame, q) in trajectory.iter().enumerate().skip(1) {
        let target = *forward_kinematics(chain, q)?.last().unwrap();
        let sol = inverse_kinematics(chain, &target, out.last().unwrap(), ik)?;
        if !sol.converged {
            return Err(OracleError::Unrealizable { frame });
        }
        out.push(sol.config);
    }
    Ok(out)
}

/// A box that blocks the view during a range of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Occluder {
    pub pose: Pose,
    pub size: Vector3<f64>,
    pub frames: RangeInclusive<usize>,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub chain: KinematicChain,
    pub camera: CameraModel,
    pub trajectory: Vec<JointConfig>,
    pub task_id: usize,
    pub occluders: Vec<Occluder>,
}

impl SyntheticScene {
    pub fn new(chain: KinematicChain, camera: CameraModel, trajectory: Vec<JointConfig>, task_id: usize) -> Self {
        Self {
            chain,
            camera,
            trajectory,
            task_id,
            occluders: Vec::new(),
        }
    }

    /// Fixture-camera scene following a realized random trajectory.
    pub fn random(chain: &KinematicChain, horizon: usize, seed: u64) -> Result<Self, OracleError> {
        let raw = gen_trajectory(chain, horizon, seed, DEFAULT_MAX_STEP)?;
        let traj = realize_trajectory(chain, &raw, &IkOptions::default())?;
        Ok(Self::new(chain.clone(), default_camera(), traj, 0))
    }

    /// Scene for demonstration `demo` of task `task`: all demonstrations of a
    /// task share knots up to a small per-demo jitter.
    pub fn for_task(
        chain: &KinematicChain,
        camera: &CameraModel,
        task: usize,
        demo: usize,
        seed: u64,
        horizon: usize,
    ) -> Result<Self, OracleError> {
        let mut task_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, task as u64));
        let mut knots = random_knots(chain, &mut task_rng, KNOTS);
        let mut demo_rng = ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(seed, task as u64), demo as u64 + 1));
        for knot in &mut knots {
            for v in knot.iter_mut() {
                *v += demo_rng.random_range(-0.05..=0.05);
            }
        }
        let raw = spline_trajectory(chain, &knots, horizon, DEFAULT_MAX_STEP)?;
        let traj = realize_trajectory(chain, &raw, &IkOptions::default())?;
        Ok(Self::new(chain.clone(), camera.clone(), traj, task))
    }

    pub fn horizon(&self) -> usize {
        self.trajectory.len()
    }

    pub fn link_poses(&self, frame: usize) -> Vec<Pose> {
        forward_kinematics(&self.chain, &self.trajectory[frame]).expect("scene configs match the chain")
    }

    /// End-effector pose at every frame.
    pub fn tip_poses(&self) -> Vec<Pose> {
        (0..self.horizon())
            .map(|t| *self.link_poses(t).last().unwrap())
            .collect()
    }

    /// Everything visible at a frame: link primitives plus active occluders.
    pub fn primitives(&self, frame: usize) -> Vec<PlacedPrimitive> {
        let poses = self.link_poses(frame);
        let mut out: Vec<PlacedPrimitive> = poses
            .iter()
            .enumerate()
            .map(|(j, pose)| PlacedPrimitive {
                pose: pose * self.chain.geometry_origin(j),
                primitive: self.chain.geometries()[j].primitive,
                owner: HitOwner::Link(j),
            })
            .collect();
        for (k, occ) in self.occluders.iter().enumerate() {
            if occ.frames.contains(&frame) {
                out.push(PlacedPrimitive {
                    pose: occ.pose,
                    primitive: Primitive::Box { size: occ.size },
                    owner: HitOwner::Occluder(k),
                });
            }
        }
        out
    }

    /// Adds a thin camera-facing box, placed at `depth_ratio` of the way from
    /// the camera to the link, that hides all of `link` during `frames`.
    pub fn occlude_link(&mut self, link: usize, frames: RangeInclusive<usize>, depth_ratio: f64) {
        let samples = primitive_samples(&self.chain.geometries()[link].primitive);
        let mut cam_points = Vec::new();
        for frame in frames.clone() {
            let frame_pose = self.link_poses(frame)[link] * self.chain.geometry_origin(link);
            for s in &samples {
                cam_points.push(self.camera.to_camera(&frame_pose.transform_point(&Point3::from(*s))));
            }
        }
        let z_min = cam_points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        let plane = depth_ratio * z_min;
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &cam_points {
            for (k, c) in [p.x, p.y].into_iter().enumerate() {
                let at_plane = c * plane / p.z;
                lo[k] = lo[k].min(at_plane);
                hi[k] = hi[k].max(at_plane);
            }
        }
        let margin = 0.1 * (hi[0] - lo[0]).max(hi[1] - lo[1]) + 0.005;
        let thickness = 0.01;
        let center_cam = Translation3::new(0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), plane);
        self.occluders.push(Occluder {
            pose: self.camera.world_to_camera.inverse() * center_cam,
            size: Vector3::new(hi[0] - lo[0] + 2.0 * margin, hi[1] - lo[1] + 2.0 * margin, thickness),
            frames,
        });
    }
}

/// Rendered flow plus the oracle-only correspondence to the arm surface.
#[derive(Debug, Clone)]
pub struct RenderedFlow {
    pub flow: FlowTensor,
    /// Link each tracked point is attached to.
    pub labels: Vec<usize>,
    /// Tracked points in their link's frame.
    pub local_points: Vec<Point3<f64>>,
}

/// Tracks `num_points` arm surface points through the scene.
///
/// Points are drawn by casting rays through uniformly random continuous
/// pixels of frame 0 and keeping the first arm hit, so every link receives
/// points in proportion to its visible image area. At every frame a point is
/// visible when it lies inside the image and nothing (arm or occluder) is
/// closer along its camera ray.
pub fn render_flow(scene: &SyntheticScene, num_points: usize, seed: u64) -> Result<RenderedFlow, OracleError> {
    if num_points == 0 {
        return Err(OracleError::BadPointCount);
    }
    let cam = &scene.camera;
    let (w, h) = (cam.width, cam.height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prims = scene.primitives(0);
    let poses0 = scene.link_poses(0);
    let mut labels = Vec::with_capacity(num_points);
    let mut local_points = Vec::with_capacity(num_points);
    let max_attempts = 10_000 * num_points;
    let mut attempts = 0;
    while labels.len() < num_points {
        attempts += 1;
        if attempts > max_attempts {
            return Err(OracleError::EmptyChain);
        }
        let u = rng.random_range(0.0..w as f64);
        let v = rng.random_range(0.0..h as f64);
        let (origin, dir) = cam.ray(u, v);
        if let Some((t, HitOwner::Link(j))) = cast(&prims, &origin, &dir) {
            labels.push(j);
            local_points.push(poses0[j].inverse_transform_point(&(origin + dir * t)));
        }
    }

    let horizon = scene.horizon();
    let mut flow = FlowTensor::zeros(num_points, horizon);
    let center = cam.center();
    for t in 0..horizon {
        let poses = scene.link_poses(t);
        let prims = scene.primitives(t);
        for (i, (&j, local)) in labels.iter().zip(&local_points).enumerate() {
            let world = poses[j].transform_point(local);
            let (uv, visible) = match cam.project(&world) {
                Ok([u, v]) => {
                    let unblocked = !segment_blocked(&prims, &center, &world, VISIBILITY_TOL);
                    ([u, v], cam.contains_pixel(u, v) && unblocked)
                }
                // keep the last finite position for points that leave the view
                Err(_) if t > 0 => (flow.pixel(i, t - 1, w, h), false),
                Err(_) => ([0.0, 0.0], false),
            };
            flow.set_pixel(i, t, w, h, uv);
            flow.set(i, t, CH_VIS, if visible { 1.0 } else { 0.0 });
        }
    }
    Ok(RenderedFlow {
        flow,
        labels,
        local_points,
    })
}

/// Camera-frame depth of the first surface along every pixel-center ray;
/// pixels that see nothing are invalid (0).
pub fn render_depth(scene: &SyntheticScene, frame: usize) -> DepthMap {
    let cam = &scene.camera;
    let prims = scene.primitives(frame);
    let mut depth = DepthMap::invalid(cam.width, cam.height);
    for y in 0..cam.height as usize {
        for x in 0..cam.width as usize {
            let (origin, dir) = cam.ray(x as f64 + 0.5, y as f64 + 0.5);
            if let Some((t, _)) = cast(&prims, &origin, &dir) {
                depth.set(x, y, t as f32);
            }
        }
    }
    depth
}

/// Marks `round(fraction * valid cells)` randomly chosen valid cells invalid
/// and returns the mask of injected cells.
pub fn inject_invalid_depth(depth: &mut DepthMap, fraction: f64, seed: u64) -> Vec<bool> {
    let valid: Vec<usize> = (0..depth.data.len())
        .filter(|&k| depth.data[k] > 0.0)
        .collect();
    let count = ((fraction.clamp(0.0, 1.0) * valid.len() as f64).round() as usize).min(valid.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; depth.data.len()];
    for k in sample(&mut rng, valid.len(), count) {
        mask[valid[k]] = true;
        depth.data[valid[k]] = 0.0;
    }
    mask
}

fn shade(owner: HitOwner, link_count: usize) -> f64 {
    match owner {
        HitOwner::Link(j) => 0.3 + 0.7 * (j + 1) as f64 / link_count as f64,
        HitOwner::Occluder(_) => 0.15,
    }
}

/// Supersampled `size × size` gray rendering of a frame: background 0,
/// occluders dark, each link a fixed brighter level.
pub fn render_image(scene: &SyntheticScene, frame: usize, size: usize) -> GrayImage {
    let cam = scene.camera.resized(size as u32, size as u32);
    let prims = scene.primitives(frame);
    let links = scene.chain.link_count();
    let ss = IMAGE_SUPERSAMPLING;
    let mut img = GrayImage::zeros(size, size);
    for y in 0..size {
        for x in 0..size {
            let mut acc = 0.0;
            for sy in 0..ss {
                for sx in 0..ss {
                    let u = x as f64 + (sx as f64 + 0.5) / ss as f64;
                    let v = y as f64 + (sy as f64 + 0.5) / ss as f64;
                    let (origin, dir) = cam.ray(u, v);
                    if let Some((_, owner)) = cast(&prims, &origin, &dir) {
                        acc += shade(owner, links);
                    }
                }
            }
            img.data[y * size + x] = acc / (ss * ss) as f64;
        }
    }
    img
}

pub fn render_initial(scene: &SyntheticScene, size: usize) -> GrayImage {
    render_image(scene, 0, size)
}

pub fn render_goal_image(scene: &SyntheticScene, size: usize) -> GrayImage {
    render_image(scene, scene.horizon() - 1, size)
}

/// How a scene is turned into a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub num_points: usize,
    pub image_size: usize,
    /// Fraction of valid depth cells to invalidate in every frame.
    pub invalid_depth_fraction: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            num_points: DEFAULT_NUM_POINTS,
            image_size: DEFAULT_IMAGE_SIZE,
            invalid_depth_fraction: 0.0,
        }
    }
}

/// Oracle-side facts about a rendered sample that the pipeline under test
/// never sees.
#[derive(Debug, Clone)]
pub struct OracleTruth {
    pub labels: Vec<usize>,
    pub local_points: Vec<Point3<f64>>,
    /// Per frame, the depth cells invalidated by injection.
    pub invalid_masks: Vec<Vec<bool>>,
    /// Flow before any noise or quantization.
    pub exact_flow: FlowTensor,
}

/// Renders everything a dataset sample holds.
pub fn render_sample(
    scene: &SyntheticScene,
    options: &RenderOptions,
    seed: u64,
) -> Result<(SceneSample, OracleTruth), OracleError> {
    let rendered = render_flow(scene, options.num_points, derive_seed(seed, 0))?;
    let mut depths = Vec::with_capacity(scene.horizon());
    let mut masks = Vec::with_capacity(scene.horizon());
    for t in 0..scene.horizon() {
        let mut d = render_depth(scene, t);
        let mask = if options.invalid_depth_fraction > 0.0 {
            inject_invalid_depth(&mut d, options.invalid_depth_fraction, derive_seed(seed, 100 + t as u64))
        } else {
            vec![false; d.data.len()]
        };
        depths.push(d);
        masks.push(mask);
    }
    let sample = SceneSample {
        task_id: scene.task_id,
        seed,
        camera: scene.camera.clone(),
        initial_image: render_initial(scene, options.image_size),
        goal_image: render_goal_image(scene, options.image_size),
        flow: rendered.flow.clone(),
        depths,
        gt_configs: scene.trajectory.clone(),
        gt_poses: scene.tip_poses(),
    };
    Ok((
        sample,
        OracleTruth {
            labels: rendered.labels,
            local_points: rendered.local_points,
            invalid_masks: masks,
            exact_flow: rendered.flow,
        },
    ))
}
