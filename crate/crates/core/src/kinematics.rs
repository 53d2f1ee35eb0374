//! Forward kinematics, geometric Jacobian and numerical inverse kinematics
//! for a serial [`KinematicChain`].
//!
//! All poses are expressed in the world frame, i.e. they include the chain's
//! base placement.

use nalgebra::{DMatrix, DVector, Translation3, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

use crate::se3::{rotation_error, Pose};
use crate::urdf::{JointKind, JointLimit, KinematicChain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("configuration has {got} values, chain has {expected} degrees of freedom")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

/// Joint positions in slot order: radians for revolute, meters for
/// prismatic joints.
#[derive(Debug, Clone, PartialEq)]
pub struct JointConfig {
    pub values: Vec<f64>,
}

impl JointConfig {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(dof: usize) -> Self {
        Self {
            values: vec![0.0; dof],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Clamps every value into its joint's limits.
    pub fn clamped(&self, chain: &KinematicChain) -> Self {
        let values = self
            .values
            .iter()
            .zip(chain.limits())
            .map(|(v, l)| l.clamp(*v))
            .collect();
        Self { values }
    }

    pub fn within_limits(&self, chain: &KinematicChain) -> bool {
        self.values
            .iter()
            .zip(chain.limits())
            .all(|(v, l)| l.contains(*v))
    }

    pub fn max_abs_diff(&self, other: &JointConfig) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_dim(chain: &KinematicChain, config: &JointConfig) -> Result<(), KinematicsError> {
    if config.len() != chain.dof() {
        return Err(KinematicsError::DimensionMismatch {
            expected: chain.dof(),
            got: config.len(),
        });
    }
    Ok(())
}

fn joint_motion(kind: JointKind, axis: &Vector3<f64>, value: f64) -> Pose {
    match kind {
        JointKind::Revolute => Pose::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_scaled_axis(axis * value),
        ),
        JointKind::Prismatic => Pose::from_parts(
            Translation3::from(axis * value),
            UnitQuaternion::identity(),
        ),
        JointKind::Fixed => Pose::identity(),
    }
}

/// Link poses plus the world frame of every joint (before its motion).
struct Frames {
    links: Vec<Pose>,
    joints: Vec<Pose>,
}

fn frames(chain: &KinematicChain, config: &JointConfig) -> Frames {
    let mut links = Vec::with_capacity(chain.link_count());
    let mut joints = Vec::with_capacity(chain.joints().len());
    let mut current = *chain.base();
    links.push(current);
    for (i, joint) in chain.joints().iter().enumerate() {
        let frame = current * chain.joint_origin(i);
        joints.push(frame);
        current = match (chain.slot(i), joint.axis) {
            (Some(s), Some(axis)) => frame * joint_motion(joint.kind, &axis, config.values[s]),
            _ => frame,
        };
        links.push(current);
    }
    Frames { links, joints }
}

/// World pose of every link; the last entry is the end-effector.
pub fn forward_kinematics(
    chain: &KinematicChain,
    config: &JointConfig,
) -> Result<Vec<Pose>, KinematicsError> {
    check_dim(chain, config)?;
    Ok(frames(chain, config).links)
}

/// End-effector (tip link) pose.
pub fn tip_pose(chain: &KinematicChain, config: &JointConfig) -> Result<Pose, KinematicsError> {
    forward_kinematics(chain, config).map(|p| *p.last().expect("chain has a root link"))
}

/// 6×dof Jacobian of the tip: linear velocity of the tip origin on rows 0..3,
/// angular velocity on rows 3..6, both in the world frame.
pub fn geometric_jacobian(
    chain: &KinematicChain,
    config: &JointConfig,
) -> Result<DMatrix<f64>, KinematicsError> {
    check_dim(chain, config)?;
    Ok(jacobian_from_frames(chain, &frames(chain, config)))
}

fn jacobian_from_frames(chain: &KinematicChain, f: &Frames) -> DMatrix<f64> {
    let tip = f.links.last().unwrap().translation.vector;
    let mut jac = DMatrix::zeros(6, chain.dof());
    for (i, joint) in chain.joints().iter().enumerate() {
        let (Some(slot), Some(axis)) = (chain.slot(i), joint.axis) else {
            continue;
        };
        let z = f.joints[i].rotation * axis.into_inner();
        let (lin, ang) = match joint.kind {
            JointKind::Revolute => (z.cross(&(tip - f.joints[i].translation.vector)), z),
            _ => (z, Vector3::zeros()),
        };
        jac.fixed_view_mut::<3, 1>(0, slot).copy_from(&lin);
        jac.fixed_view_mut::<3, 1>(3, slot).copy_from(&ang);
    }
    jac
}

/// Rigid motion of every link between two configurations:
/// `Δ_j = T_j(b) · T_j(a)⁻¹`, so that `Δ_j · p` moves a world point attached
/// to link `j` from its position under `a` to its position under `b`.
pub fn link_motion_between(
    chain: &KinematicChain,
    config_a: &JointConfig,
    config_b: &JointConfig,
) -> Result<Vec<Pose>, KinematicsError> {
    let a = forward_kinematics(chain, config_a)?;
    let b = forward_kinematics(chain, config_b)?;
    Ok(b.iter().zip(&a).map(|(pb, pa)| pb * pa.inverse()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkOptions {
    /// Position (m) and rotation (rad) tolerance.
    pub tol: f64,
    pub max_iters: usize,
    /// Initial Levenberg damping; doubled on a rejected step, halved on an
    /// accepted one.
    pub damping: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 200,
            damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    /// Best configuration found, always within joint limits.
    pub config: JointConfig,
    pub converged: bool,
    pub iterations: usize,
    pub position_error: f64,
    pub rotation_error: f64,
}

/// Joints pinned at a limit that a proposed step pushes further out.
fn blocked(q: &JointConfig, step: &DVector<f64>, limits: &[JointLimit], locked: &[bool]) -> Vec<usize> {
    (0..step.len())
        .filter(|&i| {
            !locked[i]
                && ((q.values[i] <= limits[i].lower && step[i] < 0.0) || (q.values[i] >= limits[i].upper && step[i] > 0.0))
        })
        .collect()
}

fn without_columns(jac: &DMatrix<f64>, locked: &[bool]) -> DMatrix<f64> {
    let mut out = jac.clone();
    for (i, &l) in locked.iter().enumerate() {
        if l {
            out.column_mut(i).fill(0.0);
        }
    }
    out
}

/// Null-space pull toward the seed restricted to joints that are free to
/// move in the direction it asks for.
fn constrained_null(
    jac: &DMatrix<f64>,
    toward_seed: &DVector<f64>,
    q: &JointConfig,
    limits: &[JointLimit],
) -> DVector<f64> {
    let mut locked = vec![false; toward_seed.len()];
    loop {
        let mut v = toward_seed.clone();
        for (i, &l) in locked.iter().enumerate() {
            if l {
                v[i] = 0.0;
            }
        }
        let mut r = null_projection(&without_columns(jac, &locked), &v);
        for (i, &l) in locked.iter().enumerate() {
            if l {
                r[i] = 0.0;
            }
        }
        let newly = blocked(q, &r, limits, &locked);
        if newly.is_empty() {
            return r;
        }
        for i in newly {
            locked[i] = true;
        }
    }
}


struct IkState {
    error: Vector6<f64>,
    null_residual: DVector<f64>,
    jac: DMatrix<f64>,
}

impl IkState {
    fn new(chain: &KinematicChain, target: &Pose, q: &JointConfig, seed: &DVector<f64>, limits: &[JointLimit]) -> Self {
        let frames = frames(chain, q);
        let tip = frames.links.last().unwrap();
        let dp = target.translation.vector - tip.translation.vector;
        let dr = rotation_error(&target.rotation, &tip.rotation);
        let error = Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z);
        let jac = jacobian_from_frames(chain, &frames);
        let toward_seed = seed - DVector::from_column_slice(&q.values);
        let null_residual = constrained_null(&jac, &toward_seed, q, limits);
        Self {
            error,
            null_residual,
            jac,
        }
    }

    fn merit(&self) -> f64 {
        self.error.norm() + 0.01 * self.null_residual.norm()
    }

    fn converged(&self, tol: f64) -> bool {
        self.error.fixed_rows::<3>(0).norm() <= tol
            && self.error.fixed_rows::<3>(3).norm() <= tol
            && self.null_residual.norm() <= tol
    }

    /// Damped step on the pose error plus the null-space pull, with joints
    /// that sit at a limit and would be pushed past it taken out of the
    /// solve. `None` if the damped normal matrix is not positive definite.
    fn step(&self, q: &JointConfig, limits: &[JointLimit], lambda: f64, null_gain: f64) -> Option<DVector<f64>> {
        let mut locked = vec![false; q.len()];
        loop {
            let jac = without_columns(&self.jac, &locked);
            let jt = jac.transpose();
            let mut normal = &jt * &jac;
            for d in 0..normal.nrows() {
                normal[(d, d)] += lambda;
            }
            let mut step = normal.cholesky()?.solve(&(&jt * self.error)) + &self.null_residual * null_gain;
            for (i, &l) in locked.iter().enumerate() {
                if l {
                    step[i] = 0.0;
                }
            }
            let newly = blocked(q, &step, limits, &locked);
            if newly.is_empty() {
                return Some(step);
            }
            for i in newly {
                locked[i] = true;
            }
        }
    }
}

/// `(I - J⁺J) v`: component of `v` that leaves the tip pose unchanged to
/// first order.
fn null_projection(jac: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let svd = jac.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut out = v.clone();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > 1e-9 {
            let row = v_t.row(k).transpose();
            out -= &row * row.dot(v);
        }
    }
    out
}

/// Damped least-squares inverse kinematics.
///
/// Each iteration takes the Levenberg step `(JᵀJ + λI)⁻¹ Jᵀ e` on the
/// pose error `e = [p* − p; log(R* Rᵀ)]`, adds the null-space component of
/// `seed − q`, and clamps to the joint limits. Joints resting on a limit
/// that the step would push outward are frozen for that iteration. The
/// null-space term makes the answer for redundant chains the solution
/// closest to `seed`, so the result is a function of `(target, seed)` alone
/// rather than of the iteration path.
///
/// A seed that already reaches the target is returned unchanged with zero
/// iterations. When `max_iters` is exhausted the best configuration is
/// returned with `converged == false`.
pub fn inverse_kinematics(
    chain: &KinematicChain,
    target: &Pose,
    seed: &JointConfig,
    options: &IkOptions,
) -> Result<IkSolution, KinematicsError> {
    check_dim(chain, seed)?;
    if !(options.tol > 0.0) {
        return Err(KinematicsError::BadTolerance(options.tol));
    }
    let limits = chain.limits();
    let mut q = seed.clamped(chain);
    let seed_vec = DVector::from_column_slice(&q.values);
    let mut state = IkState::new(chain, target, &q, &seed_vec, &limits);
    let mut lambda = options.damping;
    let mut iterations = 0;

    while !state.converged(options.tol) && iterations < options.max_iters {
        iterations += 1;
        let null_gain = (options.damping / lambda).min(1.0);
        let Some(step) = state.step(&q, &limits, lambda, null_gain) else {
            lambda *= 2.0;
            continue;
        };
        let candidate = JointConfig::new(
            q.values
                .iter()
                .zip(step.iter())
                .zip(&limits)
                .map(|((v, d), l)| l.clamp(v + d))
                .collect(),
        );
        let next = IkState::new(chain, target, &candidate, &seed_vec, &limits);
        if next.merit() < state.merit() {
            q = candidate;
            state = next;
            lambda = (lambda * 0.5).max(1e-12);
        } else {
            lambda *= 2.0;
            if lambda > 1e12 {
                break;
            }
        }
    }

    let converged = state.converged(options.tol);
    Ok(IkSolution {
        config: q,
        converged,
        iterations,
        position_error: state.error.fixed_rows::<3>(0).norm(),
        rotation_error: state.error.fixed_rows::<3>(3).norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::urdf::parse_urdf;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_config(chain: &KinematicChain, rng: &mut ChaCha8Rng) -> JointConfig {
        JointConfig::new(
            chain
                .limits()
                .iter()
                .map(|l| rng.random_range(l.lower..=l.upper))
                .collect(),
        )
    }

    fn single_revolute() -> KinematicChain {
        parse_urdf(
            r#"<robot name="r">
                <link name="a"/><link name="b"/><link name="c"/>
                <joint name="j" type="revolute"><parent link="a"/><child link="b"/>
                  <axis xyz="0 0 1"/><limit lower="-3" upper="3"/></joint>
                <joint name="f" type="fixed"><parent link="b"/><child link="c"/>
                  <origin xyz="1 0 0"/></joint>
            </robot>"#,
        )
        .unwrap()
    }

    #[test]
    fn quarter_turn_moves_child_offset() {
        let chain = single_revolute();
        let poses = forward_kinematics(&chain, &JointConfig::new(vec![FRAC_PI_2])).unwrap();
        let p = poses[2].translation.vector;
        assert!((p - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn zero_config_composes_static_origins() {
        let chain = fixtures::arm7();
        let poses = forward_kinematics(&chain, &JointConfig::zeros(7)).unwrap();
        let mut expected = Pose::identity();
        for (i, _) in chain.joints().iter().enumerate() {
            expected *= chain.joint_origin(i);
            let (dt, dr) = crate::se3::pose_distance(&expected, &poses[i + 1]);
            assert!(dt < 1e-12 && dr < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let chain = fixtures::arm7();
        assert_eq!(
            forward_kinematics(&chain, &JointConfig::zeros(3)),
            Err(KinematicsError::DimensionMismatch {
                expected: 7,
                got: 3
            })
        );
        assert!(geometric_jacobian(&chain, &JointConfig::zeros(8)).is_err());
    }

    #[test]
    fn prismatic_column() {
        let chain = parse_urdf(
            r#"<robot name="p"><link name="a"/><link name="b"/>
                <joint name="j" type="prismatic"><parent link="a"/><child link="b"/>
                  <origin xyz="0.3 0.1 0"/><axis xyz="0 0 1"/><limit lower="0" upper="1"/></joint>
            </robot>"#,
        )
        .unwrap();
        let jac = geometric_jacobian(&chain, &JointConfig::new(vec![0.4])).unwrap();
        assert_eq!(jac.column(0).as_slice(), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn revolute_through_tip_has_no_linear_part() {
        let chain = parse_urdf(
            r#"<robot name="r"><link name="a"/><link name="b"/>
                <joint name="j" type="revolute"><parent link="a"/><child link="b"/>
                  <origin xyz="0.2 0.3 0.4"/><axis xyz="1 0 0"/><limit lower="-1" upper="1"/></joint>
            </robot>"#,
        )
        .unwrap();
        let jac = geometric_jacobian(&chain, &JointConfig::new(vec![0.7])).unwrap();
        assert_eq!(jac.fixed_view::<3, 1>(0, 0).norm(), 0.0);
        assert!((jac.fixed_view::<3, 1>(3, 0) - Vector3::x()).norm() < 1e-15);
    }

    #[test]
    fn ik_returns_seed_when_already_at_target() {
        let chain = fixtures::arm7();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_config(&chain, &mut rng);
        let target = tip_pose(&chain, &q).unwrap();
        let sol = inverse_kinematics(&chain, &target, &q, &IkOptions::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.converged);
        assert_eq!(sol.config, q);
    }

    #[test]
    fn ik_recovers_small_perturbation() {
        let chain = fixtures::arm7();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let seed = JointConfig::new(vec![0.2, 0.6, -0.3, -1.5, 0.4, 1.0, -0.2]);
            let perturbed = JointConfig::new(
                seed.values
                    .iter()
                    .map(|v| v + rng.random_range(-0.05..0.05))
                    .collect(),
            );
            let target = tip_pose(&chain, &perturbed).unwrap();
            let sol = inverse_kinematics(&chain, &target, &seed, &IkOptions::default()).unwrap();
            assert!(sol.converged, "{sol:?}");
            assert!(sol.position_error < 1e-6 && sol.rotation_error < 1e-6);
            assert!(sol.config.within_limits(&chain));
        }
    }

    #[test]
    fn ik_solution_is_closest_to_seed_for_redundant_arm() {
        // Moving along the self-motion manifold away from the solution must
        // not get closer to the seed.
        let chain = fixtures::arm7();
        let seed = JointConfig::new(vec![0.1, 0.5, 0.2, -1.4, -0.3, 1.1, 0.3]);
        let goal = JointConfig::new(vec![0.15, 0.55, 0.25, -1.35, -0.25, 1.05, 0.35]);
        let target = tip_pose(&chain, &goal).unwrap();
        let sol = inverse_kinematics(&chain, &target, &seed, &IkOptions::default()).unwrap();
        assert!(sol.converged);
        let jac = geometric_jacobian(&chain, &sol.config).unwrap();
        let diff = DVector::from_iterator(
            7,
            sol.config.values.iter().zip(&seed.values).map(|(a, b)| a - b),
        );
        assert!(null_projection(&jac, &diff).norm() < 1e-9);
    }

    #[test]
    fn ik_unreachable_target_flags_no_convergence() {
        let chain = fixtures::arm7();
        let seed = JointConfig::new(vec![0.0, 0.5, 0.0, -1.5, 0.0, 1.0, 0.0]);
        let target = Pose::translation(5.0, 0.0, 0.5);
        let opts = IkOptions {
            max_iters: 50,
            ..IkOptions::default()
        };
        let sol = inverse_kinematics(&chain, &target, &seed, &opts).unwrap();
        assert!(!sol.converged);
        assert!(sol.position_error > 3.0);
        assert!(sol.config.within_limits(&chain));
    }

    #[test]
    fn ik_rejects_bad_tolerance() {
        let chain = fixtures::arm7();
        let opts = IkOptions {
            tol: 0.0,
            ..IkOptions::default()
        };
        assert_eq!(
            inverse_kinematics(&chain, &Pose::identity(), &JointConfig::zeros(7), &opts),
            Err(KinematicsError::BadTolerance(0.0))
        );
    }

    #[test]
    fn link_motion_identity_cases() {
        let chain = fixtures::arm7();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_config(&chain, &mut rng);
        let b = random_config(&chain, &mut rng);
        for d in link_motion_between(&chain, &a, &a).unwrap() {
            assert!(d.translation.vector.norm() < 1e-12 && d.rotation.angle() < 1e-12);
        }
        let moved = link_motion_between(&chain, &a, &b).unwrap();
        assert!(moved[0].translation.vector.norm() < 1e-15 && moved[0].rotation.angle() < 1e-15);
        assert!(moved.last().unwrap().translation.vector.norm() > 1e-3);
    }
}
