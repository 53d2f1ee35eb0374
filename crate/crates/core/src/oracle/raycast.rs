//! Exact ray intersection against boxes, capped cylinders and spheres.

use nalgebra::{Point3, Vector3};

use crate::se3::Pose;
use crate::urdf::Primitive;

/// Hits closer than this ray parameter are ignored.
const T_MIN: f64 = 1e-12;

/// Smallest ray parameter `t > 0` at which `origin + t * dir` meets the
/// surface of a primitive centered at the local origin. Rays starting inside
/// report the exit point.
pub fn intersect_primitive(
    primitive: &Primitive,
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
) -> Option<f64> {
    match *primitive {
        Primitive::Box { size } => intersect_box(&(size / 2.0), origin, dir),
        Primitive::Sphere { radius } => intersect_sphere(radius, origin, dir),
        Primitive::Cylinder { radius, length } => intersect_cylinder(radius, length / 2.0, origin, dir),
    }
}

fn intersect_box(half: &Vector3<f64>, o: &Point3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let mut near = f64::NEG_INFINITY;
    let mut far = f64::INFINITY;
    for k in 0..3 {
        if d[k] == 0.0 {
            if o[k].abs() > half[k] {
                return None;
            }
            continue;
        }
        let a = (-half[k] - o[k]) / d[k];
        let b = (half[k] - o[k]) / d[k];
        near = near.max(a.min(b));
        far = far.min(a.max(b));
    }
    if near > far || far <= T_MIN {
        return None;
    }
    Some(if near > T_MIN { near } else { far })
}

fn positive_roots(a: f64, b: f64, c: f64) -> [Option<f64>; 2] {
    if a == 0.0 {
        return [None, None];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return [None, None];
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (b + b.signum() * sq);
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
    [(lo > T_MIN).then_some(lo), (hi > T_MIN).then_some(hi)]
}

fn intersect_sphere(r: f64, o: &Point3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let [lo, hi] = positive_roots(d.norm_squared(), 2.0 * o.coords.dot(d), o.coords.norm_squared() - r * r);
    lo.or(hi)
}

fn intersect_cylinder(r: f64, half_len: f64, o: &Point3<f64>, d: &Vector3<f64>) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > T_MIN && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    let a = d.x * d.x + d.y * d.y;
    let b = 2.0 * (o.x * d.x + o.y * d.y);
    let c = o.x * o.x + o.y * o.y - r * r;
    for t in positive_roots(a, b, c).into_iter().flatten() {
        if (o.z + t * d.z).abs() <= half_len {
            consider(t);
        }
    }
    if d.z != 0.0 {
        for z in [-half_len, half_len] {
            let t = (z - o.z) / d.z;
            let x = o.x + t * d.x;
            let y = o.y + t * d.y;
            if x * x + y * y <= r * r {
                consider(t);
            }
        }
    }
    best
}

/// What a ray ran into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitOwner {
    Link(usize),
    Occluder(usize),
}

/// A primitive placed in the world.
#[derive(Debug, Clone, Copy)]
pub struct PlacedPrimitive {
    pub pose: Pose,
    pub primitive: Primitive,
    pub owner: HitOwner,
}

impl PlacedPrimitive {
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let o = self.pose.inverse_transform_point(origin);
        let d = self.pose.inverse_transform_vector(dir);
        intersect_primitive(&self.primitive, &o, &d)
    }
}

/// Nearest hit among all primitives.
pub fn cast(
    primitives: &[PlacedPrimitive],
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
) -> Option<(f64, HitOwner)> {
    primitives
        .iter()
        .filter_map(|p| p.intersect(origin, dir).map(|t| (t, p.owner)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

/// Whether anything blocks the open segment from `from` to `to`, ignoring
/// hits within `tol` meters of `to`.
pub fn segment_blocked(primitives: &[PlacedPrimitive], from: &Point3<f64>, to: &Point3<f64>, tol: f64) -> bool {
    let d = to - from;
    let len = d.norm();
    let limit = 1.0 - tol / len;
    primitives
        .iter()
        .any(|p| p.intersect(from, &d).is_some_and(|t| t < limit))
}
