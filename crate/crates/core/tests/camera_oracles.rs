use ecflow_core::camera::{primitive_samples, project_joint_bboxes, project_rect, CameraModel};
use ecflow_core::fixtures;
use ecflow_core::kinematics::JointConfig;
use ecflow_core::oracle::default_camera;
use ecflow_core::se3::{pose_from_xyz_rpy, Pose};
use ecflow_core::urdf::Primitive;
use nalgebra::{Matrix3x4, Point3, Vector3, Vector4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Projection through an explicit `K [R | t]` product in homogeneous
/// coordinates.
fn homogeneous_pixel(cam: &CameraModel, p: &Point3<f64>) -> [f64; 2] {
    let k = nalgebra::Matrix3::new(cam.fx, 0.0, cam.cx, 0.0, cam.fy, cam.cy, 0.0, 0.0, 1.0);
    let ext = cam.world_to_camera.to_homogeneous();
    let rt = Matrix3x4::from_fn(|r, c| ext[(r, c)]);
    let x = k * rt * Vector4::new(p.x, p.y, p.z, 1.0);
    [x[0] / x[2], x[1] / x[2]]
}

#[test]
fn projection_matches_matrix_pipeline() {
    let cam = default_camera();
    assert_eq!((cam.fx, cam.fy, cam.cx, cam.cy), (200.0, 200.0, 64.0, 64.0));
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..500 {
        let p = Point3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(0.0..1.4));
        let got = cam.project(&p).unwrap();
        let want = homogeneous_pixel(&cam, &p);
        assert!((got[0] - want[0]).abs() < 1e-9 && (got[1] - want[1]).abs() < 1e-9);
    }
}

#[test]
fn lift_project_round_trip() {
    let cam = default_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let px = [rng.random_range(0.0..128.0), rng.random_range(0.0..128.0)];
        let depth = rng.random_range(0.2..5.0);
        let back = cam.project(&cam.lift(px, depth).unwrap()).unwrap();
        worst = worst.max((back[0] - px[0]).abs()).max((back[1] - px[1]).abs());
        let z = cam.to_camera(&cam.lift(px, depth).unwrap()).z;
        assert!((z - depth).abs() < 1e-9);
    }
    assert!(worst < 1e-9, "{worst}");
}

#[test]
fn lift_at_principal_point_with_identity_extrinsic() {
    let cam = CameraModel::new(200.0, 200.0, 64.0, 64.0, 128, 128, Pose::identity()).unwrap();
    let p = cam.lift([64.0, 64.0], 2.5).unwrap();
    assert_eq!(p, Point3::new(0.0, 0.0, 2.5));
    assert!(cam.lift([64.0, 64.0], -1.0).is_err());
    assert!(cam.lift([200.0, 64.0], 1.0).is_err());
}

#[test]
fn adjacent_fixture_links_overlap_at_zero_config() {
    let chain = fixtures::arm7();
    let boxes = project_joint_bboxes(&chain, &JointConfig::zeros(chain.dof()), &default_camera()).unwrap();
    assert_eq!(boxes.len(), chain.link_count());
    let mut overlapping = 0;
    for pair in boxes.windows(2) {
        if let (Some(a), Some(b)) = (pair[0], pair[1]) {
            if a.intersects(&b) {
                overlapping += 1;
            }
        }
    }
    assert!(overlapping > 0, "{boxes:?}");
}

fn arb_pose() -> impl Strategy<Value = Pose> {
    (prop::array::uniform3(-1.0..1.0f64), prop::array::uniform3(-3.1..3.1f64))
        .prop_map(|(t, r)| pose_from_xyz_rpy(t, r))
}

proptest! {
    #[test]
    fn pixels_are_invariant_to_a_shared_rigid_motion(
        motion in arb_pose(),
        pts in prop::collection::vec(prop::array::uniform3(-0.4..0.4f64), 1..20),
    ) {
        let cam = default_camera();
        let mut moved = cam.clone();
        moved.world_to_camera = cam.world_to_camera * motion.inverse();
        for p in pts {
            let p = Point3::new(p[0], p[1], p[2] + 0.6);
            let a = cam.project(&p).unwrap();
            let b = moved.project(&motion.transform_point(&p)).unwrap();
            prop_assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn bbox_never_shrinks_when_geometry_grows(
        size in prop::array::uniform3(0.01..0.3f64),
        grow in prop::array::uniform3(1.0..2.0f64),
        placement in arb_pose(),
        kind in 0usize..3,
    ) {
        let cam = default_camera();
        let make = |s: [f64; 3]| match kind {
            0 => Primitive::Box { size: Vector3::from(s) },
            1 => Primitive::Cylinder { radius: s[0], length: s[1] },
            _ => Primitive::Sphere { radius: s[0] },
        };
        let small = make(size);
        let big = make([size[0] * grow[0], size[1] * grow[1], size[2] * grow[2]]);
        let center = Pose::translation(0.0, 0.0, 0.62) * Pose::from_parts(Default::default(), placement.rotation);
        let place = |prim: &Primitive| -> Vec<Point3<f64>> {
            primitive_samples(prim).iter().map(|s| center.transform_point(&Point3::from(*s))).collect()
        };
        let a = project_rect(&cam, &place(&small));
        let b = project_rect(&cam, &place(&big));
        if let Some(a) = a {
            let b = b.expect("a larger primitive projects somewhere");
            prop_assert!(b.contains_rect(&a), "{a:?} not inside {b:?}");
        }
    }
}
