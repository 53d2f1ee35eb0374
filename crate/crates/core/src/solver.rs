//! Recovering end-effector poses from predicted point flow.
//!
//! For each step `t → t+1` the solver keeps the tracked points that are
//! reliable (visible at both frames, moving, with valid depth), attaches each
//! to the single link whose image rectangle contains it, lifts it to 3D with
//! the depth map, and then searches for the end-effector pose whose inverse
//! kinematics moves every link so that its points land on their predicted
//! pixels at `t+1`.

use std::fmt::Write as _;

use nalgebra::{Matrix6, Point3, Vector3, Vector6};
use thiserror::Error;

use crate::camera::{project_joint_bboxes, CameraError, CameraModel, DepthMap, DepthSampling, PixelRect};
use crate::diffusion::FlowTensor;
use crate::kinematics::{
    forward_kinematics, inverse_kinematics, link_motion_between, IkOptions, JointConfig, KinematicsError,
};
use crate::se3::{perturb_world, quat_wxyz, Pose};
use crate::urdf::KinematicChain;

/// Cost charged for a candidate pose the inverse kinematics cannot reach.
pub const IK_FAILURE_PENALTY: f64 = 1e6;
/// Residuals below this many pixels are treated as this size when
/// reweighting.
const IRLS_FLOOR: f64 = 1e-10;
/// Central-difference step for the pose Jacobian (meters and radians).
const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("frame {t} has no successor in a flow of horizon {horizon}")]
    BadFrameIndex { t: usize, horizon: usize },
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error("step {t}: no usable points")]
    DegenerateStep { t: usize },
    #[error("point {index}: {source}")]
    InvalidDepth { index: usize, source: CameraError },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("step {t}: {source}")]
    Kinematics { t: usize, source: KinematicsError },
}

/// Where the joint configuration at each step comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigSource {
    /// Carried forward from the solver's own inverse-kinematics solutions.
    Chained,
    /// Read from an external source such as joint encoders.
    Provided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Minimum pixel displacement between `t` and `t+1`.
    pub motion_threshold: f64,
    pub visibility_threshold: f64,
    /// One non-negative weight per link.
    pub joint_weights: Vec<f64>,
    pub max_opt_iters: usize,
    /// Stop when the mean per-point residual improves by less than this
    /// many pixels.
    pub opt_tolerance: f64,
    pub warm_start: bool,
    pub config_source: ConfigSource,
    pub skip_degenerate: bool,
    /// How depth is read when lifting points; validity is per nearest cell
    /// either way.
    pub depth_sampling: DepthSampling,
    pub ik: IkOptions,
}

impl SolverConfig {
    /// Every link weighted equally.
    pub fn full(link_count: usize) -> Self {
        Self {
            motion_threshold: 0.5,
            visibility_threshold: 0.5,
            joint_weights: vec![1.0; link_count],
            max_opt_iters: 100,
            opt_tolerance: 1e-9,
            warm_start: true,
            config_source: ConfigSource::Chained,
            skip_degenerate: false,
            depth_sampling: DepthSampling::default(),
            ik: IkOptions::default(),
        }
    }

    /// Only the end-effector link counts.
    pub fn eef_only(link_count: usize) -> Self {
        let mut w = vec![0.0; link_count];
        if let Some(last) = w.last_mut() {
            *last = 1.0;
        }
        Self {
            joint_weights: w,
            ..Self::full(link_count)
        }
    }

    pub fn validate(&self, link_count: usize) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::BadConfig(m));
        if !(self.motion_threshold >= 0.0) {
            return bad(format!("motion threshold {} is negative", self.motion_threshold));
        }
        if !(0.0..=1.0).contains(&self.visibility_threshold) {
            return bad(format!("visibility threshold {} is outside [0, 1]", self.visibility_threshold));
        }
        if self.joint_weights.len() != link_count {
            return bad(format!(
                "{} joint weights for {link_count} links",
                self.joint_weights.len()
            ));
        }
        if self.joint_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("joint weights must be finite and non-negative".into());
        }
        if !self.joint_weights.iter().any(|&w| w > 0.0) {
            return bad("at least one joint weight must be positive".into());
        }
        if !(self.opt_tolerance >= 0.0) {
            return bad("optimizer tolerance must be non-negative".into());
        }
        Ok(())
    }
}

fn check_frame(flow: &FlowTensor, t: usize) -> Result<(), SolverError> {
    if t + 1 >= flow.horizon() {
        return Err(SolverError::BadFrameIndex {
            t,
            horizon: flow.horizon(),
        });
    }
    Ok(())
}

/// Indices of points usable for step `t → t+1`: visible at both frames,
/// displaced by at least the motion threshold, and over a valid depth cell
/// at frame `t`.
pub fn filter_points(
    flow: &FlowTensor,
    t: usize,
    depth: &DepthMap,
    cfg: &SolverConfig,
) -> Result<Vec<usize>, SolverError> {
    check_frame(flow, t)?;
    let (w, h) = (depth.width, depth.height);
    Ok((0..flow.num_points())
        .filter(|&i| {
            if flow.visibility(i, t) < cfg.visibility_threshold
                || flow.visibility(i, t + 1) < cfg.visibility_threshold
            {
                return false;
            }
            let [u0, v0] = flow.pixel(i, t, w, h);
            let [u1, v1] = flow.pixel(i, t + 1, w, h);
            if (u1 - u0).hypot(v1 - v0) < cfg.motion_threshold {
                return false;
            }
            depth.lookup(u0, v0).is_some()
        })
        .collect())
}

/// Point indices per link: a point joins a link when its pixel lies in that
/// link's rectangle and in no other.
pub fn assign_points_to_joints(points: &[(usize, [f64; 2])], bboxes: &[Option<PixelRect>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); bboxes.len()];
    for &(index, [u, v]) in points {
        let mut owner = None;
        let mut hits = 0;
        for (j, rect) in bboxes.iter().enumerate() {
            if rect.is_some_and(|r| r.contains(u, v)) {
                hits += 1;
                owner = Some(j);
            }
        }
        if hits == 1 {
            out[owner.unwrap()].push(index);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointPoint {
    pub index: usize,
    /// Position at frame `t`.
    pub world: Point3<f64>,
    /// Predicted pixel at frame `t+1`.
    pub target: [f64; 2],
}

/// Lifted points grouped by link.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointPointSet {
    pub joints: Vec<Vec<JointPoint>>,
}

impl JointPointSet {
    pub fn count(&self) -> usize {
        self.joints.iter().map(Vec::len).sum()
    }

    /// Number of points on links with positive weight.
    pub fn weighted_count(&self, weights: &[f64]) -> usize {
        self.joints
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(p, _)| p.len())
            .sum()
    }

    /// Whether every point index appears under at most one link.
    pub fn is_unique(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.joints.iter().flatten().all(|p| seen.insert(p.index))
    }
}

/// Back-projects every assigned point at its frame-`t` pixel using the
/// frame-`t` depth map.
pub fn lift_points(
    assignment: &[Vec<usize>],
    flow: &FlowTensor,
    t: usize,
    depth: &DepthMap,
    camera: &CameraModel,
    sampling: DepthSampling,
) -> Result<JointPointSet, SolverError> {
    check_frame(flow, t)?;
    let (w, h) = (camera.width, camera.height);
    let joints = assignment
        .iter()
        .map(|indices| {
            indices
                .iter()
                .map(|&index| {
                    let px = flow.pixel(index, t, w, h);
                    let d = depth.sample(px[0], px[1], sampling).unwrap_or(0.0);
                    let world = camera
                        .lift(px, d)
                        .map_err(|source| SolverError::InvalidDepth { index, source })?;
                    Ok(JointPoint {
                        index,
                        world,
                        target: flow.pixel(index, t + 1, w, h),
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(JointPointSet { joints })
}

/// Everything the objective needs for one step.
struct Objective<'a> {
    set: &'a JointPointSet,
    chain: &'a KinematicChain,
    config_t: &'a JointConfig,
    camera: &'a CameraModel,
    weights: &'a [f64],
    ik: &'a IkOptions,
}

/// Per-point pixel residuals of one candidate pose.
struct Evaluation {
    config: JointConfig,
    /// `(weight, residual)` for each point on a positively weighted link.
    residuals: Vec<(f64, [f64; 2])>,
    reachable: bool,
}

impl Evaluation {
    fn cost(&self) -> f64 {
        if !self.reachable {
            return IK_FAILURE_PENALTY;
        }
        self.residuals
            .iter()
            .map(|(w, r)| w * r[0].hypot(r[1]))
            .sum()
    }
}

impl Objective<'_> {
    fn evaluate(&self, candidate: &Pose) -> Result<Evaluation, KinematicsError> {
        let sol = inverse_kinematics(self.chain, candidate, self.config_t, self.ik)?;
        let motions = link_motion_between(self.chain, self.config_t, &sol.config)?;
        let mut residuals = Vec::with_capacity(self.set.count());
        let mut reachable = sol.converged;
        for ((points, &w), motion) in self.set.joints.iter().zip(self.weights).zip(&motions) {
            if w <= 0.0 {
                continue;
            }
            for p in points {
                match self.camera.project(&motion.transform_point(&p.world)) {
                    Ok([u, v]) => residuals.push((w, [u - p.target[0], v - p.target[1]])),
                    Err(_) => reachable = false,
                }
            }
        }
        Ok(Evaluation {
            config: sol.config,
            residuals,
            reachable,
        })
    }
}

/// Weighted sum of pixel distances between the predicted `t+1` pixels and
/// the projections of the lifted points moved by each link's motion from
/// `config_t` to the inverse-kinematics solution of `candidate` (seeded at
/// `config_t`). Unreachable candidates cost [`IK_FAILURE_PENALTY`].
pub fn reprojection_error(
    candidate: &Pose,
    set: &JointPointSet,
    chain: &KinematicChain,
    config_t: &JointConfig,
    camera: &CameraModel,
    weights: &[f64],
    ik: &IkOptions,
) -> Result<f64, KinematicsError> {
    let obj = Objective {
        set,
        chain,
        config_t,
        camera,
        weights,
        ik,
    };
    Ok(obj.evaluate(candidate)?.cost())
}

/// Outcome of one optimized step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub pose: Pose,
    /// Weighted reprojection error at `pose`, pixels.
    pub residual: f64,
    /// Inverse-kinematics configuration for `pose`.
    pub config: JointConfig,
    pub iterations: usize,
    pub converged: bool,
    /// Points that contributed to the objective.
    pub num_points: usize,
}

/// Iteratively reweighted Levenberg–Marquardt on the summed pixel
/// distances, over world-frame translation and rotation increments applied
/// to `start`.
fn minimize(obj: &Objective, start: &Pose, cfg: &SolverConfig) -> Result<(Pose, Evaluation, usize, bool), KinematicsError> {
    let mut pose = *start;
    let mut current = obj.evaluate(&pose)?;
    let mut cost = current.cost();
    let n = current.residuals.len().max(1) as f64;
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_opt_iters {
        iterations += 1;
        // Jacobian of every 2D residual with respect to the 6 increments
        let mut jac = vec![[[0.0; 6]; 2]; current.residuals.len()];
        let mut usable = true;
        for k in 0..6 {
            let mut delta = Vector6::zeros();
            delta[k] = JACOBIAN_STEP;
            let plus = obj.evaluate(&apply(&pose, &delta))?;
            let minus = obj.evaluate(&apply(&pose, &(-delta)))?;
            if !plus.reachable || !minus.reachable || plus.residuals.len() != current.residuals.len() {
                usable = false;
                break;
            }
            for (row, (p, m)) in jac.iter_mut().zip(plus.residuals.iter().zip(&minus.residuals)) {
                row[0][k] = (p.1[0] - m.1[0]) / (2.0 * JACOBIAN_STEP);
                row[1][k] = (p.1[1] - m.1[1]) / (2.0 * JACOBIAN_STEP);
            }
        }
        if !usable || !current.reachable {
            break;
        }
        let mut hess = Matrix6::zeros();
        let mut grad = Vector6::zeros();
        for (row, (w, r)) in jac.iter().zip(&current.residuals) {
            let a = w / r[0].hypot(r[1]).max(IRLS_FLOOR);
            for c in 0..2 {
                let jr = Vector6::from_column_slice(&row[c]);
                hess += a * jr * jr.transpose();
                grad += a * r[c] * jr;
            }
        }
        // isotropic damping per block keeps steps independent of the world
        // frame's orientation and of the overall weight scale
        let trans_scale = (hess[(0, 0)] + hess[(1, 1)] + hess[(2, 2)]) / 3.0;
        let rot_scale = (hess[(3, 3)] + hess[(4, 4)] + hess[(5, 5)]) / 3.0;
        let mut accepted = false;
        while mu < 1e12 {
            let mut damped = hess;
            for d in 0..3 {
                damped[(d, d)] += mu * trans_scale;
                damped[(d + 3, d + 3)] += mu * rot_scale;
            }
            let Some(step) = damped.cholesky().map(|c| -c.solve(&grad)) else {
                mu *= 4.0;
                continue;
            };
            let trial_pose = apply(&pose, &step);
            let trial = obj.evaluate(&trial_pose)?;
            let trial_cost = trial.cost();
            if trial_cost < cost {
                let gain = (cost - trial_cost) / n;
                pose = trial_pose;
                current = trial;
                cost = trial_cost;
                mu = (mu / 3.0).max(1e-12);
                accepted = true;
                if gain < cfg.opt_tolerance || step.norm() < 1e-14 {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            // no descent direction left at machine precision
            converged = current.reachable;
            break;
        }
        if converged {
            break;
        }
    }
    Ok((pose, current, iterations, converged))
}

fn apply(pose: &Pose, delta: &Vector6<f64>) -> Pose {
    perturb_world(
        pose,
        &Vector3::new(delta[0], delta[1], delta[2]),
        &Vector3::new(delta[3], delta[4], delta[5]),
    )
}

/// Finds the end-effector pose at `t+1`, starting the search from
/// `start_pose`.
#[allow(clippy::too_many_arguments)]
pub fn solve_step(
    flow: &FlowTensor,
    t: usize,
    config_t: &JointConfig,
    depth: &DepthMap,
    camera: &CameraModel,
    chain: &KinematicChain,
    cfg: &SolverConfig,
    start_pose: &Pose,
) -> Result<StepResult, SolverError> {
    cfg.validate(chain.link_count())?;
    let kin = |source| SolverError::Kinematics { t, source };
    let survivors = filter_points(flow, t, depth, cfg)?;
    let bboxes = project_joint_bboxes(chain, config_t, camera).map_err(kin)?;
    let pixels: Vec<(usize, [f64; 2])> = survivors
        .iter()
        .map(|&i| (i, flow.pixel(i, t, camera.width, camera.height)))
        .collect();
    let assignment = assign_points_to_joints(&pixels, &bboxes);
    let set = lift_points(&assignment, flow, t, depth, camera, cfg.depth_sampling)?;
    optimize_pose(&set, t, config_t, camera, chain, cfg, start_pose)
}

/// Pose search over an already lifted point set; the part of
/// [`solve_step`] after filtering, assignment and lifting.
pub fn optimize_pose(
    set: &JointPointSet,
    t: usize,
    config_t: &JointConfig,
    camera: &CameraModel,
    chain: &KinematicChain,
    cfg: &SolverConfig,
    start_pose: &Pose,
) -> Result<StepResult, SolverError> {
    let num_points = set.weighted_count(&cfg.joint_weights);
    if num_points == 0 {
        return Err(SolverError::DegenerateStep { t });
    }
    let obj = Objective {
        set,
        chain,
        config_t,
        camera,
        weights: &cfg.joint_weights,
        ik: &cfg.ik,
    };
    let (pose, eval, iterations, converged) =
        minimize(&obj, start_pose, cfg).map_err(|source| SolverError::Kinematics { t, source })?;
    Ok(StepResult {
        pose,
        residual: eval.cost(),
        config: eval.config,
        iterations,
        converged,
        num_points,
    })
}

/// Diagnostics for one step of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The step had no usable points and the previous pose was carried
    /// forward.
    pub degenerate: bool,
    pub num_points: usize,
}

/// One pose per frame. Frame 0 is the initial end-effector pose; `steps[k]`
/// describes how frame `k+1` was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrajectory {
    pub poses: Vec<Pose>,
    pub configs: Vec<JointConfig>,
    pub steps: Vec<StepReport>,
}

impl PoseTrajectory {
    /// Step report in CSV form:
    /// `step,qw,qx,qy,qz,tx,ty,tz,residual_px,iterations,converged,degenerate,points`.
    /// Row 0 is the initial pose with zero residual.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,qw,qx,qy,qz,tx,ty,tz,residual_px,iterations,converged,degenerate,points\n");
        for (k, pose) in self.poses.iter().enumerate() {
            let [w, x, y, z] = quat_wxyz(pose);
            let tr = pose.translation.vector;
            let (res, it, conv, deg, pts) = match k.checked_sub(1).map(|i| &self.steps[i]) {
                None => (0.0, 0, true, false, 0),
                Some(r) => (r.residual, r.iterations, r.converged, r.degenerate, r.num_points),
            };
            let _ = writeln!(
                s,
                "{k},{w},{x},{y},{z},{},{},{},{res},{it},{},{},{pts}",
                tr.x, tr.y, tr.z, conv as u8, deg as u8
            );
        }
        s
    }
}

/// Solves every step in order. With [`ConfigSource::Provided`],
/// `provided[t]` is the configuration at frame `t`; otherwise it is chained
/// from the previous step's solution starting at `initial`.
pub fn solve_trajectory(
    flow: &FlowTensor,
    depths: &[DepthMap],
    camera: &CameraModel,
    chain: &KinematicChain,
    initial: &JointConfig,
    cfg: &SolverConfig,
    provided: Option<&[JointConfig]>,
) -> Result<PoseTrajectory, SolverError> {
    let horizon = flow.horizon();
    if horizon < 2 {
        return Err(SolverError::ShapeMismatch(format!("horizon {horizon} is below 2")));
    }
    if depths.len() < horizon - 1 {
        return Err(SolverError::ShapeMismatch(format!(
            "{} depth maps for horizon {horizon}",
            depths.len()
        )));
    }
    if cfg.config_source == ConfigSource::Provided && provided.is_none_or(|p| p.len() < horizon) {
        return Err(SolverError::BadConfig(
            "provided configuration source needs one configuration per frame".into(),
        ));
    }
    let tip = |q: &JointConfig, t: usize| {
        forward_kinematics(chain, q)
            .map(|p| *p.last().unwrap())
            .map_err(|source| SolverError::Kinematics { t, source })
    };
    let initial_pose = tip(initial, 0)?;
    let mut poses = vec![initial_pose];
    let mut configs = vec![initial.clone()];
    let mut steps = Vec::with_capacity(horizon - 1);
    for t in 0..horizon - 1 {
        let config_t = match (cfg.config_source, provided) {
            (ConfigSource::Provided, Some(p)) => p[t].clone(),
            _ => configs[t].clone(),
        };
        let start = if cfg.warm_start { poses[t] } else { initial_pose };
        match solve_step(flow, t, &config_t, &depths[t], camera, chain, cfg, &start) {
            Ok(r) => {
                poses.push(r.pose);
                configs.push(r.config);
                steps.push(StepReport {
                    residual: r.residual,
                    iterations: r.iterations,
                    converged: r.converged,
                    degenerate: false,
                    num_points: r.num_points,
                });
            }
            Err(SolverError::DegenerateStep { .. }) if cfg.skip_degenerate => {
                poses.push(poses[t]);
                configs.push(config_t);
                steps.push(StepReport {
                    residual: 0.0,
                    iterations: 0,
                    converged: false,
                    degenerate: true,
                    num_points: 0,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(PoseTrajectory { poses, configs, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::DepthMap;
    use crate::diffusion::CH_VIS;

    fn rect(u0: f64, v0: f64, u1: f64, v1: f64) -> Option<PixelRect> {
        Some(PixelRect {
            u_min: u0,
            v_min: v0,
            u_max: u1,
            v_max: v1,
        })
    }

    fn two_point_flow() -> (FlowTensor, DepthMap) {
        let mut flow = FlowTensor::zeros(2, 2);
        // point 0 moves 2 px, point 1 stays
        flow.set_pixel(0, 0, 8, 8, [2.5, 2.5]);
        flow.set_pixel(0, 1, 8, 8, [4.5, 2.5]);
        flow.set_pixel(1, 0, 8, 8, [5.5, 5.5]);
        flow.set_pixel(1, 1, 8, 8, [5.5, 5.5]);
        for i in 0..2 {
            for t in 0..2 {
                flow.set(i, t, CH_VIS, 1.0);
            }
        }
        let mut depth = DepthMap::invalid(8, 8);
        depth.data.iter_mut().for_each(|d| *d = 1.0);
        (flow, depth)
    }

    #[test]
    fn zero_motion_is_removed() {
        let (flow, depth) = two_point_flow();
        let cfg = SolverConfig::full(2);
        assert_eq!(filter_points(&flow, 0, &depth, &cfg).unwrap(), vec![0]);
    }

    #[test]
    fn invisible_successor_is_removed() {
        let (mut flow, depth) = two_point_flow();
        flow.set(0, 1, CH_VIS, 0.0);
        let cfg = SolverConfig::full(2);
        assert!(filter_points(&flow, 0, &depth, &cfg).unwrap().is_empty());
    }

    #[test]
    fn invalid_depth_is_removed() {
        let (flow, mut depth) = two_point_flow();
        depth.set(2, 2, 0.0);
        let cfg = SolverConfig::full(2);
        assert!(filter_points(&flow, 0, &depth, &cfg).unwrap().is_empty());
    }

    #[test]
    fn last_frame_has_no_successor() {
        let (flow, depth) = two_point_flow();
        assert!(matches!(
            filter_points(&flow, 1, &depth, &SolverConfig::full(2)),
            Err(SolverError::BadFrameIndex { t: 1, horizon: 2 })
        ));
    }

    #[test]
    fn overlap_and_outside_points_are_dropped() {
        let boxes = [rect(0.0, 0.0, 10.0, 10.0), rect(5.0, 5.0, 20.0, 20.0), None];
        let pts = [(0, [2.0, 2.0]), (1, [7.0, 7.0]), (2, [15.0, 15.0]), (3, [50.0, 50.0])];
        let a = assign_points_to_joints(&pts, &boxes);
        assert_eq!(a, vec![vec![0], vec![2], vec![]]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::full(3);
        assert!(cfg.validate(3).is_ok());
        assert!(cfg.validate(4).is_err());
        cfg.joint_weights = vec![0.0; 3];
        assert!(cfg.validate(3).is_err());
        cfg = SolverConfig::full(3);
        cfg.motion_threshold = -1.0;
        assert!(cfg.validate(3).is_err());
        assert_eq!(SolverConfig::eef_only(3).joint_weights, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn csv_columns() {
        let traj = PoseTrajectory {
            poses: vec![Pose::identity(), Pose::translation(1.0, 0.0, 0.0)],
            configs: vec![],
            steps: vec![StepReport {
                residual: 0.5,
                iterations: 3,
                converged: true,
                degenerate: false,
                num_points: 7,
            }],
        };
        let csv = traj.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0,1,0,0,0,0,0,0,0,0,1,0,0");
        assert_eq!(lines[2], "1,1,0,0,0,1,0,0,0.5,3,1,0,7");
    }
}
