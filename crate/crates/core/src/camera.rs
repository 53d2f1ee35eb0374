//! Pinhole camera, depth maps and per-link image bounding boxes.
//!
//! Pixel coordinates are continuous: pixel `(i, j)` covers
//! `[i, i + 1) × [j, j + 1)` and its center is `(i + 0.5, j + 0.5)`. The
//! camera frame has z forward, x right and y down. There is no lens
//! distortion.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::kinematics::{forward_kinematics, JointConfig, KinematicsError};
use crate::se3::{pose_from_quat_translation, quat_wxyz, Pose};
use crate::urdf::{KinematicChain, Primitive};

/// Points closer than this to the image plane (camera-frame z) cannot be
/// projected.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("pixel ({0}, {1}) is outside the image")]
    OutOfImage(f64, f64),
    #[error("invalid camera parameters: {0}")]
    InvalidIntrinsics(String),
    #[error("camera file: {0}")]
    Format(String),
    #[error("depth map: {0}")]
    DepthFormat(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub world_to_camera: Pose,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        world_to_camera: Pose,
    ) -> Result<Self, CameraError> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            world_to_camera,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with image "up" as close to `up`
    /// as possible.
    pub fn look_at(
        fx: f64,
        fy: f64,
        width: u32,
        height: u32,
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self, CameraError> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rot = nalgebra::Rotation3::from_basis_unchecked(&[right, down, forward]);
        let camera_to_world = Pose::from_parts(
            nalgebra::Translation3::from(eye.coords),
            nalgebra::UnitQuaternion::from_rotation_matrix(&rot),
        );
        Self::new(
            fx,
            fy,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            camera_to_world.inverse(),
        )
    }

    fn validate(&self) -> Result<(), CameraError> {
        let bad = |m: &str| Err(CameraError::InvalidIntrinsics(m.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return bad("cx must lie inside the image");
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return bad("cy must lie inside the image");
        }
        let q = self.world_to_camera.rotation.quaternion();
        if (q.norm() - 1.0).abs() > 1e-9 {
            return bad("extrinsic rotation is not a unit quaternion");
        }
        Ok(())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        self.world_to_camera.inverse_transform_point(&Point3::origin())
    }

    pub fn to_camera(&self, point_world: &Point3<f64>) -> Point3<f64> {
        self.world_to_camera.transform_point(point_world)
    }

    /// `π(·)`: world point to pixel.
    pub fn project(&self, point_world: &Point3<f64>) -> Result<[f64; 2], CameraError> {
        let p = self.to_camera(point_world);
        if p.z <= MIN_DEPTH {
            return Err(CameraError::BehindCamera(p.z));
        }
        Ok([self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy])
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// Nearest pixel cell for a continuous coordinate.
    pub fn pixel_index(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        self.contains_pixel(u, v)
            .then(|| (u.floor() as usize, v.floor() as usize))
    }

    /// Back-projects a pixel at the given camera-frame depth (z) to a world
    /// point.
    pub fn lift(&self, pixel: [f64; 2], depth: f64) -> Result<Point3<f64>, CameraError> {
        if !(depth > 0.0 && depth.is_finite()) {
            return Err(CameraError::InvalidDepth(depth));
        }
        let [u, v] = pixel;
        if !self.contains_pixel(u, v) {
            return Err(CameraError::OutOfImage(u, v));
        }
        let p = Point3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        );
        Ok(self.world_to_camera.inverse_transform_point(&p))
    }

    /// World-frame ray through a pixel: origin at the camera center, direction
    /// scaled so that one unit of ray parameter is one meter of camera depth.
    pub fn ray(&self, u: f64, v: f64) -> (Point3<f64>, Vector3<f64>) {
        let d = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        (
            self.center(),
            self.world_to_camera.inverse_transform_vector(&d),
        )
    }

    /// Same camera with intrinsics rescaled to a different image size.
    pub fn resized(&self, width: u32, height: u32) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            world_to_camera: self.world_to_camera,
        }
    }

    /// Flat `key=value` text, one key per line.
    pub fn to_text(&self) -> String {
        let q = quat_wxyz(&self.world_to_camera);
        let t = self.world_to_camera.translation.vector;
        let mut s = String::new();
        for (k, v) in [
            ("fx", self.fx),
            ("fy", self.fy),
            ("cx", self.cx),
            ("cy", self.cy),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "height={}", self.height);
        for (k, v) in [
            ("qw", q[0]),
            ("qx", q[1]),
            ("qy", q[2]),
            ("qz", q[3]),
            ("tx", t.x),
            ("ty", t.y),
            ("tz", t.z),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CameraError> {
        let mut values = std::collections::HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CameraError::Format(format!("line {}: expected key=value", n + 1)))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| CameraError::Format(format!("line {}: bad number", n + 1)))?;
            values.insert(k.trim().to_string(), v);
        }
        let get = |k: &str| {
            values
                .get(k)
                .copied()
                .ok_or_else(|| CameraError::Format(format!("missing key `{k}`")))
        };
        let dim = |k: &str| -> Result<u32, CameraError> {
            let v = get(k)?;
            if v.fract() != 0.0 || v < 1.0 || v > u32::MAX as f64 {
                return Err(CameraError::Format(format!("`{k}` must be a positive integer")));
            }
            Ok(v as u32)
        };
        let pose = pose_from_quat_translation(
            [get("qw")?, get("qx")?, get("qy")?, get("qz")?],
            [get("tx")?, get("ty")?, get("tz")?],
        );
        Self::new(
            get("fx")?,
            get("fy")?,
            get("cx")?,
            get("cy")?,
            dim("width")?,
            dim("height")?,
            pose,
        )
    }

    pub fn load(path: &Path) -> Result<Self, CameraError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CameraError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Depth difference (meters) beyond which two neighbouring cells are taken
/// to lie on different surfaces.
pub const DEPTH_EDGE_JUMP: f64 = 0.1;

/// How a depth value is read at a sub-pixel position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepthSampling {
    /// The value of the cell containing the position.
    Nearest,
    /// The nearest cell's value plus a slope correction from neighbours on
    /// the same surface.
    #[default]
    Linear,
}

/// Per-pixel camera-frame depth in meters. Cells `<= 0` are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn invalid(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width as usize + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.data[y * self.width as usize + x] = value;
    }

    pub fn is_valid_cell(&self, x: usize, y: usize) -> bool {
        let d = self.get(x, y);
        d > 0.0 && d.is_finite()
    }

    /// Nearest-pixel depth at a continuous coordinate, `None` if the cell is
    /// outside the map or invalid.
    pub fn lookup(&self, u: f64, v: f64) -> Option<f64> {
        if !(u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64) {
            return None;
        }
        let (x, y) = (u.floor() as usize, v.floor() as usize);
        self.is_valid_cell(x, y).then(|| self.get(x, y) as f64)
    }

    /// Depth at a continuous coordinate under `mode`. Validity is always
    /// decided by the nearest cell, exactly as in [`DepthMap::lookup`].
    ///
    /// [`DepthSampling::Linear`] adds a first-order correction to the
    /// nearest cell's depth, with slopes taken from the neighbouring cell on
    /// the side of the query point (or, failing that, the opposite side).
    /// Neighbours that are invalid or differ from the nearest cell by more
    /// than [`DEPTH_EDGE_JUMP`] are treated as another surface and ignored.
    pub fn sample(&self, u: f64, v: f64, mode: DepthSampling) -> Option<f64> {
        let d0 = self.lookup(u, v)?;
        if mode == DepthSampling::Nearest {
            return Some(d0);
        }
        let (x, y) = (u.floor() as i64, v.floor() as i64);
        let neighbour = |cx: i64, cy: i64| -> Option<f64> {
            if cx < 0 || cy < 0 || cx >= self.width as i64 || cy >= self.height as i64 {
                return None;
            }
            let (cx, cy) = (cx as usize, cy as usize);
            let d = self.get(cx, cy) as f64;
            (self.is_valid_cell(cx, cy) && (d - d0).abs() <= DEPTH_EDGE_JUMP).then_some(d)
        };
        let slope = |offset: f64, ahead: Option<f64>, behind: Option<f64>| {
            let forward = ahead.map(|d| d - d0);
            let backward = behind.map(|d| d0 - d);
            let (near, far) = if offset >= 0.0 { (forward, backward) } else { (backward, forward) };
            near.or(far).unwrap_or(0.0)
        };
        let du = u - (x as f64 + 0.5);
        let dv = v - (y as f64 + 0.5);
        let gx = slope(du, neighbour(x + 1, y), neighbour(x - 1, y));
        let gy = slope(dv, neighbour(x, y + 1), neighbour(x, y - 1));
        Some(d0 + gx * du + gy * dv)
    }

    /// Little-endian `u32` width, `u32` height, then row-major `f32` depths.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.data.len());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for d in &self.data {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CameraError> {
        if bytes.len() < 8 {
            return Err(CameraError::DepthFormat("missing 8-byte header".into()));
        }
        let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let expected = 8 + 4 * width as usize * height as usize;
        if bytes.len() != expected {
            return Err(CameraError::DepthFormat(format!(
                "{width}x{height} map needs {expected} bytes, got {}",
                bytes.len()
            )));
        }
        let data = bytes[8..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

/// Axis-aligned pixel rectangle, inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRect {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl PixelRect {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.u_min && u <= self.u_max && v >= self.v_min && v <= self.v_max
    }

    pub fn intersects(&self, other: &PixelRect) -> bool {
        self.u_min <= other.u_max
            && other.u_min <= self.u_max
            && self.v_min <= other.v_max
            && other.v_min <= self.v_max
    }

    pub fn contains_rect(&self, other: &PixelRect) -> bool {
        self.u_min <= other.u_min
            && self.v_min <= other.v_min
            && self.u_max >= other.u_max
            && self.v_max >= other.v_max
    }
}

pub const CYLINDER_RING_SAMPLES: usize = 16;

/// Sample points of a primitive in its own frame: 8 box corners, 16 rim
/// points on each cylinder cap, or 26 sphere surface points (the normalized
/// non-zero vectors of `{-1, 0, 1}³`).
pub fn primitive_samples(primitive: &Primitive) -> Vec<Vector3<f64>> {
    match *primitive {
        Primitive::Box { size } => {
            let h = size / 2.0;
            let mut out = Vec::with_capacity(8);
            for sx in [-1.0, 1.0] {
                for sy in [-1.0, 1.0] {
                    for sz in [-1.0, 1.0] {
                        out.push(Vector3::new(sx * h.x, sy * h.y, sz * h.z));
                    }
                }
            }
            out
        }
        Primitive::Cylinder { radius, length } => {
            let mut out = Vec::with_capacity(2 * CYLINDER_RING_SAMPLES);
            for z in [-length / 2.0, length / 2.0] {
                for k in 0..CYLINDER_RING_SAMPLES {
                    let a = std::f64::consts::TAU * k as f64 / CYLINDER_RING_SAMPLES as f64;
                    out.push(Vector3::new(radius * a.cos(), radius * a.sin(), z));
                }
            }
            out
        }
        Primitive::Sphere { radius } => {
            let mut out = Vec::with_capacity(26);
            for x in -1i32..=1 {
                for y in -1i32..=1 {
                    for z in -1i32..=1 {
                        if (x, y, z) != (0, 0, 0) {
                            out.push(Vector3::new(x as f64, y as f64, z as f64).normalize() * radius);
                        }
                    }
                }
            }
            out
        }
    }
}

/// Image rectangle of world points, clipped to the image. Points behind the
/// camera are skipped; `None` when nothing projects into the image.
pub fn project_rect(camera: &CameraModel, points: &[Point3<f64>]) -> Option<PixelRect> {
    let mut rect: Option<PixelRect> = None;
    for p in points {
        let Ok([u, v]) = camera.project(p) else {
            continue;
        };
        rect = Some(match rect {
            None => PixelRect {
                u_min: u,
                v_min: v,
                u_max: u,
                v_max: v,
            },
            Some(r) => PixelRect {
                u_min: r.u_min.min(u),
                v_min: r.v_min.min(v),
                u_max: r.u_max.max(u),
                v_max: r.v_max.max(v),
            },
        });
    }
    let r = rect?;
    let clipped = PixelRect {
        u_min: r.u_min.max(0.0),
        v_min: r.v_min.max(0.0),
        u_max: r.u_max.min(camera.width as f64),
        v_max: r.v_max.min(camera.height as f64),
    };
    (clipped.u_min <= clipped.u_max && clipped.v_min <= clipped.v_max).then_some(clipped)
}

/// Image rectangle of every link's geometry at `config`, indexed like
/// [`KinematicChain::links`]. A link entirely behind the camera or outside
/// the image gets `None`.
pub fn project_joint_bboxes(
    chain: &KinematicChain,
    config: &JointConfig,
    camera: &CameraModel,
) -> Result<Vec<Option<PixelRect>>, KinematicsError> {
    let poses = forward_kinematics(chain, config)?;
    Ok(poses
        .iter()
        .enumerate()
        .map(|(i, link_pose)| {
            let frame = link_pose * chain.geometry_origin(i);
            let pts: Vec<Point3<f64>> = primitive_samples(&chain.geometries()[i].primitive)
                .iter()
                .map(|s| frame.transform_point(&Point3::from(*s)))
                .collect();
            project_rect(camera, &pts)
        })
        .collect())
}
