use ecflow_core::fixtures;
use ecflow_core::kinematics::{
    forward_kinematics, geometric_jacobian, inverse_kinematics, link_motion_between, IkOptions, JointConfig,
};
use ecflow_core::se3::{pose_from_xyz_rpy, Pose};
use ecflow_core::urdf::{parse_urdf, serial_subchain, serialize_urdf, KinematicChain};
use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_config(chain: &KinematicChain, rng: &mut ChaCha8Rng) -> JointConfig {
    JointConfig::new(chain.limits().iter().map(|l| rng.random_range(l.lower..=l.upper)).collect())
}

fn numbers(text: &str) -> Vec<f64> {
    text.split_whitespace().map(|s| s.parse().unwrap()).collect()
}

fn rot_x(a: f64) -> Matrix3<f64> {
    Matrix3::new(1.0, 0.0, 0.0, 0.0, a.cos(), -a.sin(), 0.0, a.sin(), a.cos())
}

fn rot_y(a: f64) -> Matrix3<f64> {
    Matrix3::new(a.cos(), 0.0, a.sin(), 0.0, 1.0, 0.0, -a.sin(), 0.0, a.cos())
}

fn rot_z(a: f64) -> Matrix3<f64> {
    Matrix3::new(a.cos(), -a.sin(), 0.0, a.sin(), a.cos(), 0.0, 0.0, 0.0, 1.0)
}

fn homogeneous(r: Matrix3<f64>, t: Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    m
}

/// Rodrigues rotation about a unit axis.
fn axis_angle(k: Vector3<f64>, a: f64) -> Matrix3<f64> {
    let skew = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() * a.cos() + skew * a.sin() + k * k.transpose() * (1.0 - a.cos())
}

/// Joint table read straight from the fixture XML: (origin, optional axis).
fn fixture_joints() -> Vec<(Matrix4<f64>, Option<Vector3<f64>>)> {
    let doc = roxmltree::Document::parse(fixtures::ARM7_URDF).unwrap();
    doc.descendants()
        .filter(|n| n.has_tag_name("joint"))
        .map(|j| {
            let origin = j.children().find(|c| c.has_tag_name("origin")).unwrap();
            let xyz = numbers(origin.attribute("xyz").unwrap());
            let rpy = numbers(origin.attribute("rpy").unwrap());
            let r = rot_z(rpy[2]) * rot_y(rpy[1]) * rot_x(rpy[0]);
            let axis = j
                .children()
                .find(|c| c.has_tag_name("axis"))
                .map(|a| Vector3::from_vec(numbers(a.attribute("xyz").unwrap())).normalize());
            let movable = j.attribute("type") != Some("fixed");
            (homogeneous(r, Vector3::new(xyz[0], xyz[1], xyz[2])), axis.filter(|_| movable))
        })
        .collect()
}

fn matrix_chain_tip(q: &[f64]) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    let mut slot = 0;
    for (origin, axis) in fixture_joints() {
        m *= origin;
        if let Some(k) = axis {
            m *= homogeneous(axis_angle(k, q[slot]), Vector3::zeros());
            slot += 1;
        }
    }
    m
}

#[test]
fn forward_kinematics_matches_matrix_chain() {
    let chain = fixtures::arm7();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let q = random_config(&chain, &mut rng);
        let tip = *forward_kinematics(&chain, &q).unwrap().last().unwrap();
        let oracle = matrix_chain_tip(&q.values);
        let diff = tip.to_homogeneous() - oracle;
        assert!(diff.amax() < 1e-9, "{diff}");
    }
}

#[test]
fn documented_zero_transform() {
    let comment = fixtures::ARM7_URDF;
    let grab = |key: &str| {
        let line = comment.lines().find(|l| l.trim_start().starts_with(key)).unwrap();
        numbers(line.split('=').nth(1).unwrap())
    };
    let t = grab("translation");
    let r = grab("rotation");
    let documented = pose_from_xyz_rpy([t[0], t[1], t[2]], [r[0], r[1], r[2]]);
    let chain = fixtures::arm7();
    let tip = *forward_kinematics(&chain, &JointConfig::zeros(7)).unwrap().last().unwrap();
    assert!((tip.translation.vector - documented.translation.vector).norm() < 1e-9);
    assert!(tip.rotation.angle_to(&documented.rotation) < 1e-9);
}

#[test]
fn fixture_limits_read_back_exactly() {
    let chain = fixtures::arm7();
    assert_eq!(chain.dof(), 7);
    let doc = roxmltree::Document::parse(fixtures::ARM7_URDF).unwrap();
    let literal: Vec<(f64, f64)> = doc
        .descendants()
        .filter(|n| n.has_tag_name("limit"))
        .map(|l| (l.attribute("lower").unwrap().parse().unwrap(), l.attribute("upper").unwrap().parse().unwrap()))
        .collect();
    let parsed: Vec<(f64, f64)> = chain.limits().iter().map(|l| (l.lower, l.upper)).collect();
    assert_eq!(parsed.len(), literal.len());
    for (a, b) in parsed.iter().zip(&literal) {
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }
}

#[test]
fn serialize_parse_is_a_fixed_point() {
    let chain = fixtures::arm7();
    let once = parse_urdf(&serialize_urdf(&chain)).unwrap();
    let twice = parse_urdf(&serialize_urdf(&once)).unwrap();
    assert_eq!(once, twice);
    assert_eq!(serialize_urdf(&once), serialize_urdf(&twice));
    assert_eq!(once.limits(), chain.limits());
}

#[test]
fn subchains_partition_the_dof() {
    let chain = fixtures::arm7();
    assert_eq!(serial_subchain(&chain, "link2", "link5").unwrap().dof(), 3);
    let links = chain.links().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mut cuts: Vec<usize> = (0..3).map(|_| rng.random_range(1..links.len() - 1)).collect();
        cuts.push(0);
        cuts.push(links.len() - 1);
        cuts.sort_unstable();
        cuts.dedup();
        let total: usize = cuts
            .windows(2)
            .map(|w| serial_subchain(&chain, &links[w[0]], &links[w[1]]).unwrap().dof())
            .sum();
        assert_eq!(total, chain.dof());
    }
    let whole = serial_subchain(&chain, &links[0], links.last().unwrap()).unwrap();
    assert_eq!(whole.dof(), chain.dof());
}

#[test]
fn jacobian_matches_finite_differences() {
    let chain = fixtures::arm7();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-6;
    for _ in 0..100 {
        let q = random_config(&chain, &mut rng);
        let jac = geometric_jacobian(&chain, &q).unwrap();
        for j in 0..chain.dof() {
            let mut plus = q.clone();
            plus.values[j] += h;
            let mut minus = q.clone();
            minus.values[j] -= h;
            let tp = *forward_kinematics(&chain, &plus).unwrap().last().unwrap();
            let tm = *forward_kinematics(&chain, &minus).unwrap().last().unwrap();
            let lin = (tp.translation.vector - tm.translation.vector) / (2.0 * h);
            let ang = (tp.rotation * tm.rotation.inverse()).scaled_axis() / (2.0 * h);
            for k in 0..3 {
                assert!((jac[(k, j)] - lin[k]).abs() <= 1e-5);
                assert!((jac[(k + 3, j)] - ang[k]).abs() <= 1e-5);
            }
        }
    }
}

#[test]
fn ik_of_fk_returns_the_configuration() {
    let chain = fixtures::arm7();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let q = random_config(&chain, &mut rng);
        let target = *forward_kinematics(&chain, &q).unwrap().last().unwrap();
        let sol = inverse_kinematics(&chain, &target, &q, &IkOptions::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.config, q);
    }
}

#[test]
fn ik_recovers_perturbed_configurations() {
    let chain = fixtures::arm7();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let limits = chain.limits();
    for _ in 0..100 {
        let seed = random_config(&chain, &mut rng);
        let moved = JointConfig::new(
            seed.values.iter().zip(&limits).map(|(v, l)| l.clamp(v + rng.random_range(-0.05..0.05))).collect(),
        );
        let target = *forward_kinematics(&chain, &moved).unwrap().last().unwrap();
        let sol = inverse_kinematics(&chain, &target, &seed, &IkOptions::default()).unwrap();
        assert!(sol.position_error < 1e-6 && sol.rotation_error < 1e-6, "{sol:?}");
        assert!(sol.config.within_limits(&chain));
    }
}

#[test]
fn attached_points_follow_link_motion() {
    let chain = fixtures::arm7();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let a = random_config(&chain, &mut rng);
        let b = random_config(&chain, &mut rng);
        let pa = forward_kinematics(&chain, &a).unwrap();
        let pb = forward_kinematics(&chain, &b).unwrap();
        let motions = link_motion_between(&chain, &a, &b).unwrap();
        for j in 0..chain.link_count() {
            let local = Point3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(0.0..0.3));
            let before = pa[j].transform_point(&local);
            let after = pb[j].transform_point(&local);
            assert!((motions[j].transform_point(&before) - after).norm() < 1e-9);
        }
        assert!(motions[0].translation.vector.norm() == 0.0 && motions[0].rotation.angle() == 0.0);
    }
}

fn arb_pose() -> impl Strategy<Value = Pose> {
    (prop::array::uniform3(-2.0..2.0f64), prop::array::uniform3(-3.1..3.1f64))
        .prop_map(|(t, r)| pose_from_xyz_rpy(t, r))
}

proptest! {
    #[test]
    fn composition_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
        let left = ((a * b) * c).to_homogeneous();
        let right = (a * (b * c)).to_homogeneous();
        prop_assert!((left - right).amax() < 1e-12);
    }

    #[test]
    fn pose_times_inverse_is_identity(a in arb_pose()) {
        let id = (a * a.inverse()).to_homogeneous();
        prop_assert!((id - Matrix4::identity()).amax() < 1e-9);
        prop_assert!((a.rotation.norm() - 1.0).abs() < 1e-9);
    }
}
