//! Shared geometric primitives: rigid transforms, pinhole cameras and
//! yaw-only cuboid poses.
//!
//! Conventions used throughout the crate:
//! * camera frame: +z forward, +x right, +y down (image rows grow with y);
//! * world vertical axis is y, so yaw is a rotation about y;
//! * pixel coordinates are continuous with pixel `(i, j)` centered at `(i, j)`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Rotation about the world vertical (y) axis.
pub fn rotation_y(yaw: f64) -> Mat3 {
    let (s, c) = yaw.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Wraps an angle into `[-π/4, π/4)`, the canonical range of cuboid yaw.
pub fn canonical_yaw(yaw: f64) -> f64 {
    let quarter = std::f64::consts::FRAC_PI_2;
    let shifted = (yaw + quarter / 2.0).rem_euclid(quarter);
    let out = shifted - quarter / 2.0;
    if out >= quarter / 2.0 {
        out - quarter
    } else {
        out
    }
}

/// Absolute yaw difference modulo 90°, in `[0, π/4]`.
pub fn yaw_distance(a: f64, b: f64) -> f64 {
    canonical_yaw(a - b).abs()
}

/// Wraps a line-direction difference into `(-π/2, π/2]`.
pub fn wrap_line_angle(diff: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let mut d = diff.rem_euclid(pi);
    if d > pi / 2.0 {
        d -= pi;
    }
    d
}

/// Rigid transform stored as an explicit rotation matrix so that text
/// serialisation of the 3×4 matrix round-trips exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Camera placed at `eye` looking at `target`, with image-up opposite to world +y.
    pub fn look_at(eye: Vec3, target: Vec3) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::Degenerate("look_at with coincident eye and target".into()));
        }
        let z = forward.normalize();
        let down = Vec3::new(0.0, 1.0, 0.0);
        let x = down.cross(&z);
        if x.norm() < 1e-9 {
            return Err(Error::Degenerate("look_at direction parallel to vertical".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Mat3::from_columns(&[x, y, z]);
        Ok(Self::new(rotation, eye))
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Applies the inverse transform without forming it.
    pub fn inverse_apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    /// Row-major 3×4 entries.
    pub fn to_rows(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    pub fn from_rows(v: &[f64; 12]) -> Self {
        Self::new(
            Mat3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]),
            Vec3::new(v[3], v[7], v[11]),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    /// Pinhole intrinsics from a horizontal field of view.
    pub fn from_fov(width: u32, height: u32, hfov_deg: f64) -> Self {
        let fx = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        Self {
            fx,
            fy: fx,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid intrinsics {self:?}")))
        }
    }

    /// Camera-frame direction through a pixel, with unit z component.
    pub fn pixel_direction(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        self.pixel_direction(u, v) * depth
    }

    /// Projects a camera-frame point; `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<[f64; 2]> {
        if p.z <= 1e-9 {
            return None;
        }
        Some([self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy])
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= self.width as f64 - 1.0 && v <= self.height as f64 - 1.0
    }
}

/// Yaw-only cuboid pose: `x_world = R_y(yaw) x_object + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectPose {
    pub translation: Vec3,
    pub yaw: f64,
}

impl ObjectPose {
    pub fn new(translation: Vec3, yaw: f64) -> Self {
        Self { translation, yaw }
    }

    pub fn identity() -> Self {
        Self::new(Vec3::zeros(), 0.0)
    }

    pub fn rotation(&self) -> Mat3 {
        rotation_y(self.yaw)
    }

    pub fn to_world(&self, p: &Vec3) -> Vec3 {
        self.rotation() * p + self.translation
    }

    pub fn to_object(&self, p: &Vec3) -> Vec3 {
        self.rotation().transpose() * (p - self.translation)
    }

    pub fn as_transform(&self) -> RigidTransform {
        RigidTransform::new(self.rotation(), self.translation)
    }
}

/// Axis-aligned 2D box `[u0, v0, u1, v1]`, inclusive pixel bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2 {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Box2 {
    pub fn new(u0: f64, v0: f64, u1: f64, v1: f64) -> Self {
        Self {
            min: [u0.min(u1), v0.min(v1)],
            max: [u0.max(u1), v0.max(v1)],
        }
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]).max(0.0) * (self.max[1] - self.min[1]).max(0.0)
    }

    pub fn iou(&self, other: &Box2) -> f64 {
        let w = (self.max[0].min(other.max[0]) - self.min[0].max(other.min[0])).max(0.0);
        let h = (self.max[1].min(other.max[1]) - self.min[1].max(other.min[1])).max(0.0);
        let inter = w * h;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Integer pixels covered by the box, clamped to the image.
    pub fn pixel_range(&self, width: u32, height: u32) -> ([u32; 2], [u32; 2]) {
        let clamp = |x: f64, hi: u32| -> u32 { x.round().clamp(0.0, (hi - 1) as f64) as u32 };
        (
            [clamp(self.min[0], width), clamp(self.min[1], height)],
            [clamp(self.max[0], width), clamp(self.max[1], height)],
        )
    }
}

/// Axis-aligned 3D box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    pub fn volume(&self) -> f64 {
        let d = self.max - self.min;
        d.x.max(0.0) * d.y.max(0.0) * d.z.max(0.0)
    }

    pub fn iou(&self, other: &Aabb) -> f64 {
        let lo = self.min.sup(&other.min);
        let hi = self.max.inf(&other.max);
        let d = hi - lo;
        let inter = d.x.max(0.0) * d.y.max(0.0) * d.z.max(0.0);
        let union = self.volume() + other.volume() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Squared distance from a point to the box (zero inside).
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let d = (self.min - p).sup(&Vec3::zeros()).sup(&(p - self.max));
        d.norm_squared()
    }
}

/// World-space cuboid corners in the order of sign bits (x, y, z).
pub fn cuboid_corners(pose: &ObjectPose, half_extents: &Vec3) -> [Vec3; 8] {
    let mut out = [Vec3::zeros(); 8];
    for (i, corner) in out.iter_mut().enumerate() {
        let s = |bit: usize| if i & (1 << bit) != 0 { 1.0 } else { -1.0 };
        let local = Vec3::new(
            s(0) * half_extents.x,
            s(1) * half_extents.y,
            s(2) * half_extents.z,
        );
        *corner = pose.to_world(&local);
    }
    out
}

/// World-frame axis-aligned bounds of a yaw cuboid.
pub fn cuboid_world_aabb(pose: &ObjectPose, half_extents: &Vec3) -> Aabb {
    Aabb::from_points(cuboid_corners(pose, half_extents).iter())
}

/// The three orthogonal edges (object x, y, z axes) leaving the cuboid
/// corner nearest to `viewpoint`, as world-space endpoint pairs.
pub fn nearest_corner_edges(
    pose: &ObjectPose,
    half_extents: &Vec3,
    viewpoint: &Vec3,
) -> [(Vec3, Vec3); 3] {
    let local_view = pose.to_object(viewpoint);
    let sign = |x: f64| if x >= 0.0 { 1.0 } else { -1.0 };
    let corner = Vec3::new(
        sign(local_view.x) * half_extents.x,
        sign(local_view.y) * half_extents.y,
        sign(local_view.z) * half_extents.z,
    );
    let mut edges = [(Vec3::zeros(), Vec3::zeros()); 3];
    for (axis, edge) in edges.iter_mut().enumerate() {
        let mut other = corner;
        other[axis] = -corner[axis];
        *edge = (pose.to_world(&corner), pose.to_world(&other));
    }
    edges
}

/// Undirected 2D line segment in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment2 {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Segment2 {
    pub fn new(a: [f64; 2], b: [f64; 2]) -> Self {
        Self { a, b }
    }

    /// Direction angle in `[0, π)`; vertical segments give π/2.
    pub fn angle(&self) -> f64 {
        let dx = self.b[0] - self.a[0];
        let dy = self.b[1] - self.a[1];
        dy.atan2(dx).rem_euclid(std::f64::consts::PI)
    }

    pub fn length(&self) -> f64 {
        ((self.b[0] - self.a[0]).powi(2) + (self.b[1] - self.a[1]).powi(2)).sqrt()
    }

    /// Liang-Barsky clip against `[lo, hi]`; `None` when fully outside.
    pub fn clip(&self, lo: [f64; 2], hi: [f64; 2]) -> Option<Segment2> {
        let d = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for axis in 0..2 {
            let p = [-d[axis], d[axis]];
            let q = [self.a[axis] - lo[axis], hi[axis] - self.a[axis]];
            for k in 0..2 {
                if p[k] == 0.0 {
                    if q[k] < 0.0 {
                        return None;
                    }
                } else {
                    let r = q[k] / p[k];
                    if p[k] < 0.0 {
                        t0 = t0.max(r);
                    } else {
                        t1 = t1.min(r);
                    }
                }
            }
        }
        if t0 > t1 {
            return None;
        }
        let at = |t: f64| [self.a[0] + t * d[0], self.a[1] + t * d[1]];
        Some(Segment2::new(at(t0), at(t1)))
    }
}

/// Projects a world segment into the image, clipping at a near plane and
/// at the image border. `None` if nothing of it is visible.
pub fn project_segment(
    intrinsics: &CameraIntrinsics,
    camera_to_world: &RigidTransform,
    a: &Vec3,
    b: &Vec3,
) -> Option<Segment2> {
    const NEAR: f64 = 1e-3;
    let mut pa = camera_to_world.inverse_apply(a);
    let mut pb = camera_to_world.inverse_apply(b);
    if pa.z < NEAR && pb.z < NEAR {
        return None;
    }
    if pa.z < NEAR {
        let t = (NEAR - pb.z) / (pa.z - pb.z);
        pa = pb + (pa - pb) * t;
    } else if pb.z < NEAR {
        let t = (NEAR - pa.z) / (pb.z - pa.z);
        pb = pa + (pb - pa) * t;
    }
    let seg = Segment2::new(intrinsics.project(&pa)?, intrinsics.project(&pb)?);
    seg.clip(
        [0.0, 0.0],
        [
            intrinsics.width as f64 - 1.0,
            intrinsics.height as f64 - 1.0,
        ],
    )
}
