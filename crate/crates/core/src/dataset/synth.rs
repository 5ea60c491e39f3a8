use std::path::PathBuf;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DepthSample, Detection, Frame, GtObject, LineObservation, MaskImage, RgbImage, SceneBundle};
use crate::error::{Error, Result};
use crate::geometry::{
    nearest_corner_edges, project_segment, CameraIntrinsics, ObjectPose, RigidTransform, Segment2, Vec3,
};
use crate::mesh::{primitives, read_obj, MeshFrame, TriangleBvh, TriangleMesh};

/// Object shapes in their own frame (vertical axis y, centered at the origin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    Box { half_extents: [f64; 3] },
    Sphere { radius: f64 },
    Cylinder { radius: f64, half_height: f64 },
    /// OBJ file, recentered on its bounding box and uniformly scaled.
    MeshFile { path: PathBuf, scale: f64 },
}

impl ShapeKind {
    pub fn class_id(&self) -> u32 {
        match self {
            ShapeKind::Box { .. } => 1,
            ShapeKind::Sphere { .. } => 2,
            ShapeKind::Cylinder { .. } => 3,
            ShapeKind::MeshFile { .. } => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPlacement {
    pub shape: ShapeKind,
    /// Horizontal position `(x, z)`; objects rest on the ground plane `y = 0`.
    pub position: [f64; 2],
    pub yaw_deg: f64,
    /// Center height override (world y); by default the object rests on the ground.
    #[serde(default)]
    pub center_y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    /// Cameras on a horizontal circle, all looking at `target`.
    Orbit {
        frames: usize,
        radius: f64,
        /// Height above the ground.
        height: f64,
        target: [f64; 3],
        start_deg: f64,
        sweep_deg: f64,
    },
    /// Camera-to-world matrices, 12 row-major entries each.
    Explicit { poses: Vec<[f64; 12]> },
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory::Orbit {
            frames: 120,
            radius: 0.9,
            height: 0.55,
            target: [0.0, -0.06, 0.0],
            start_deg: 0.0,
            sweep_deg: 360.0,
        }
    }
}

impl Trajectory {
    pub fn poses(&self) -> Result<Vec<RigidTransform>> {
        match self {
            Trajectory::Orbit {
                frames,
                radius,
                height,
                target,
                start_deg,
                sweep_deg,
            } => {
                let target = Vec3::from(*target);
                (0..*frames)
                    .map(|i| {
                        let a = (start_deg + sweep_deg * i as f64 / *frames as f64).to_radians();
                        let eye = Vec3::new(target.x + radius * a.sin(), -height, target.z + radius * a.cos());
                        RigidTransform::look_at(eye, target)
                    })
                    .collect()
            }
            Trajectory::Explicit { poses } => Ok(poses.iter().map(RigidTransform::from_rows).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseLevels {
    /// Gaussian endpoint noise of projected box edges, pixels.
    pub line_px: f64,
    /// Spurious segments per visible object per frame.
    pub spurious_lines: usize,
    /// Gaussian depth noise, meters.
    pub depth_m: f64,
    /// Fraction of depth samples replaced by gross outliers.
    pub depth_outlier_fraction: f64,
    /// Perturbation of the reported camera poses.
    pub pose_translation_m: f64,
    pub pose_rotation_deg: f64,
}

impl Default for NoiseLevels {
    fn default() -> Self {
        Self {
            line_px: 1.0,
            spurious_lines: 2,
            depth_m: 0.0,
            depth_outlier_fraction: 0.0,
            pose_translation_m: 0.0,
            pose_rotation_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub seed: u64,
    pub object_count: usize,
    /// Shapes cycled through when placing objects automatically.
    pub object_shapes: Vec<ShapeKind>,
    /// Explicit placements; overrides `object_count` and `object_shapes`.
    pub placements: Vec<ObjectPlacement>,
    /// Radius of the circle automatic placements are spread on.
    pub layout_radius: f64,
    pub trajectory: Trajectory,
    pub image_width: u32,
    pub image_height: u32,
    pub hfov_deg: f64,
    pub noise: NoiseLevels,
    pub ground_plane: bool,
    /// Sparse depth samples per visible object per frame.
    pub depth_samples_per_object: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            object_count: 3,
            object_shapes: vec![
                ShapeKind::Box {
                    half_extents: [0.07, 0.06, 0.05],
                },
                ShapeKind::Sphere { radius: 0.065 },
                ShapeKind::Cylinder {
                    radius: 0.05,
                    half_height: 0.075,
                },
            ],
            placements: Vec::new(),
            layout_radius: 0.2,
            trajectory: Trajectory::default(),
            image_width: 320,
            image_height: 240,
            hfov_deg: 55.0,
            noise: NoiseLevels::default(),
            ground_plane: true,
            depth_samples_per_object: 30,
        }
    }
}

enum Surface {
    Box(Vec3),
    Sphere(f64),
    Cylinder(f64, f64),
    Mesh(TriangleBvh),
}

struct SceneObject {
    id: u32,
    pose: ObjectPose,
    surface: Surface,
    bound_radius: f64,
    palette: [[f64; 3]; 2],
}

struct Hit {
    t: f64,
    /// World-frame unit normal.
    normal: Vec3,
    /// Object-frame point, for texturing.
    local: Vec3,
    id: u32,
}

const CHECKER: f64 = 0.025;

fn slab(o: &Vec3, d: &Vec3, half: &Vec3) -> Option<(f64, usize)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    let mut axis = 0;
    for a in 0..3 {
        if d[a] == 0.0 {
            if o[a].abs() > half[a] {
                return None;
            }
            continue;
        }
        let mut lo = (-half[a] - o[a]) / d[a];
        let mut hi = (half[a] - o[a]) / d[a];
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        if lo > t0 {
            t0 = lo;
            axis = a;
        }
        t1 = t1.min(hi);
    }
    (t0 <= t1 && t0 > 0.0).then_some((t0, axis))
}

fn smallest_positive_root(a: f64, b: f64, c: f64) -> Option<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 || a == 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let q = -0.5 * (b + b.signum() * s);
    let (mut r0, mut r1) = (q / a, c / q);
    if r0 > r1 {
        std::mem::swap(&mut r0, &mut r1);
    }
    if r0 > 0.0 {
        Some(r0)
    } else if r1 > 0.0 {
        Some(r1)
    } else {
        None
    }
}

impl SceneObject {
    /// Intersection with a ray in world coordinates, `t` in units of `|d|`.
    fn intersect(&self, o_w: &Vec3, d_w: &Vec3) -> Option<Hit> {
        let oc = o_w - self.pose.translation;
        let b = oc.dot(d_w);
        let a = d_w.norm_squared();
        if (b * b - a * (oc.norm_squared() - self.bound_radius * self.bound_radius)) < 0.0 {
            return None;
        }
        let o = self.pose.to_object(o_w);
        let d = self.pose.rotation().transpose() * d_w;
        let (t, n) = match &self.surface {
            Surface::Box(h) => {
                let (t, axis) = slab(&o, &d, h)?;
                let mut n = Vec3::zeros();
                n[axis] = -d[axis].signum();
                (t, n)
            }
            Surface::Sphere(r) => {
                let t = smallest_positive_root(d.norm_squared(), 2.0 * o.dot(&d), o.norm_squared() - r * r)?;
                (t, (o + d * t) / *r)
            }
            Surface::Cylinder(r, hh) => {
                let mut best: Option<(f64, Vec3)> = None;
                let (a2, b2, c2) = (
                    d.x * d.x + d.z * d.z,
                    2.0 * (o.x * d.x + o.z * d.z),
                    o.x * o.x + o.z * o.z - r * r,
                );
                let disc = b2 * b2 - 4.0 * a2 * c2;
                if a2 > 0.0 && disc >= 0.0 {
                    let s = disc.sqrt();
                    for t in [(-b2 - s) / (2.0 * a2), (-b2 + s) / (2.0 * a2)] {
                        let p = o + d * t;
                        if t > 0.0 && p.y.abs() <= *hh && best.is_none_or(|b| t < b.0) {
                            best = Some((t, Vec3::new(p.x, 0.0, p.z) / *r));
                        }
                    }
                }
                if d.y != 0.0 {
                    for cap in [-*hh, *hh] {
                        let t = (cap - o.y) / d.y;
                        let p = o + d * t;
                        if t > 0.0 && p.x * p.x + p.z * p.z <= r * r && best.is_none_or(|b| t < b.0) {
                            best = Some((t, Vec3::new(0.0, cap.signum(), 0.0)));
                        }
                    }
                }
                best?
            }
            Surface::Mesh(bvh) => bvh.ray_hit(&o, &d)?,
        };
        let mut normal = self.pose.rotation() * n;
        if normal.dot(d_w) > 0.0 {
            normal = -normal;
        }
        Some(Hit {
            t,
            normal,
            local: o + d * t,
            id: self.id,
        })
    }

    fn albedo(&self, local: &Vec3) -> [f64; 3] {
        let cell = (local / CHECKER).map(f64::floor);
        let parity = (cell.x + cell.y + cell.z) as i64 & 1;
        self.palette[parity as usize]
    }
}

const PALETTE: [[[f64; 3]; 2]; 6] = [
    [[0.85, 0.25, 0.2], [0.95, 0.75, 0.3]],
    [[0.2, 0.45, 0.85], [0.7, 0.9, 0.95]],
    [[0.25, 0.7, 0.3], [0.9, 0.85, 0.4]],
    [[0.6, 0.3, 0.75], [0.95, 0.6, 0.8]],
    [[0.9, 0.55, 0.15], [0.35, 0.2, 0.1]],
    [[0.3, 0.75, 0.7], [0.1, 0.3, 0.45]],
];

struct Scene {
    objects: Vec<SceneObject>,
    ground: bool,
    light: Vec3,
}

impl Scene {
    fn first_hit(&self, o: &Vec3, d: &Vec3) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for obj in &self.objects {
            if let Some(h) = obj.intersect(o, d) {
                if best.as_ref().is_none_or(|b| h.t < b.t) {
                    best = Some(h);
                }
            }
        }
        best
    }

    fn shade(&self, o: &Vec3, d: &Vec3, hit: Option<&Hit>) -> [f64; 3] {
        let lambert = |albedo: [f64; 3], n: &Vec3| {
            let k = 0.35 + 0.65 * n.dot(&self.light).max(0.0);
            albedo.map(|a| a * k)
        };
        match hit {
            Some(h) => {
                let obj = self.objects.iter().find(|x| x.id == h.id).expect("hit object exists");
                lambert(obj.albedo(&h.local), &h.normal)
            }
            None if self.ground && d.y > 0.0 => {
                let t = -o.y / d.y;
                let p = o + d * t;
                let parity = ((p.x / 0.1).floor() + (p.z / 0.1).floor()) as i64 & 1;
                let g = if parity == 0 { 0.55 } else { 0.45 };
                lambert([g, g, g * 0.95], &Vec3::new(0.0, -1.0, 0.0))
            }
            None => [0.82, 0.86, 0.9],
        }
    }
}

fn to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn build_surface(shape: &ShapeKind, id: u32) -> Result<(Surface, Vec3, TriangleMesh)> {
    Ok(match shape {
        ShapeKind::Box { half_extents } => {
            let h = Vec3::from(*half_extents);
            let mut mesh = primitives::box_mesh(&h, 4);
            mesh.object_id = id;
            (Surface::Box(h), h, mesh)
        }
        ShapeKind::Sphere { radius } => {
            let mut mesh = primitives::uv_sphere(*radius, 96, 48);
            mesh.object_id = id;
            (Surface::Sphere(*radius), Vec3::repeat(*radius), mesh)
        }
        ShapeKind::Cylinder { radius, half_height } => {
            let mut mesh = primitives::cylinder(*radius, *half_height, 128);
            mesh.object_id = id;
            (
                Surface::Cylinder(*radius, *half_height),
                Vec3::new(*radius, *half_height, *radius),
                mesh,
            )
        }
        ShapeKind::MeshFile { path, scale } => {
            let raw = read_obj(path, MeshFrame::Object, id)?;
            if raw.is_empty() {
                return Err(Error::InvalidInput(format!("mesh file {} has no faces", path.display())));
            }
            let b = raw.bounds();
            let center = (b.min + b.max) / 2.0;
            let mesh = raw.map_vertices(|v| (v - center) * *scale);
            let half = (b.max - b.min) * (*scale / 2.0);
            (Surface::Mesh(TriangleBvh::new(&mesh)), half, mesh)
        }
    })
}

fn placements(config: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<Vec<ObjectPlacement>> {
    if !config.placements.is_empty() {
        return Ok(config.placements.clone());
    }
    if config.object_count == 0 {
        return Err(Error::Config("object_count must be >= 1".into()));
    }
    if config.object_shapes.is_empty() {
        return Err(Error::Config("object_shapes is empty".into()));
    }
    Ok((0..config.object_count)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / config.object_count as f64;
            let r = if config.object_count == 1 { 0.0 } else { config.layout_radius };
            ObjectPlacement {
                shape: config.object_shapes[i % config.object_shapes.len()].clone(),
                position: [r * a.cos(), r * a.sin()],
                yaw_deg: rng.random_range(-45.0..45.0),
                center_y: None,
            }
        })
        .collect())
}

/// Gaussian translation (meters) and axis-angle rotation (degrees) noise.
pub fn perturb_pose(pose: &RigidTransform, translation_m: f64, rotation_deg: f64, rng: &mut ChaCha8Rng) -> RigidTransform {
    if translation_m <= 0.0 && rotation_deg <= 0.0 {
        return *pose;
    }
    let gauss = |rng: &mut ChaCha8Rng, s: f64| if s > 0.0 { Normal::new(0.0, s).unwrap().sample(rng) } else { 0.0 };
    let dt = Vec3::new(
        gauss(rng, translation_m),
        gauss(rng, translation_m),
        gauss(rng, translation_m),
    );
    let s = rotation_deg.to_radians();
    let axis_angle = Vec3::new(gauss(rng, s), gauss(rng, s), gauss(rng, s));
    let dr = nalgebra::Rotation3::new(axis_angle);
    RigidTransform::new(dr.matrix() * pose.rotation, pose.translation + dt)
}

/// Renders a deterministic synthetic sequence with exact ground truth.
pub fn generate_synthetic_scene(config: &SceneConfig) -> Result<SceneBundle> {
    let poses = config.trajectory.poses()?;
    if poses.is_empty() {
        return Err(Error::Config("trajectory has no poses".into()));
    }
    if poses.len() < 2 {
        return Err(Error::Config("trajectory needs at least 2 poses".into()));
    }
    let intrinsics = CameraIntrinsics::from_fov(config.image_width, config.image_height, config.hfov_deg);
    intrinsics.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let placements = placements(config, &mut rng)?;
    if placements.len() > u16::MAX as usize {
        return Err(Error::Config("too many objects for 16-bit masks".into()));
    }

    let mut objects = Vec::new();
    let mut gt_objects = Vec::new();
    for (i, p) in placements.iter().enumerate() {
        let id = i as u32 + 1;
        let (surface, half, mesh) = build_surface(&p.shape, id)?;
        let y = p.center_y.unwrap_or(-half.y);
        let pose = ObjectPose::new(Vec3::new(p.position[0], y, p.position[1]), p.yaw_deg.to_radians());
        objects.push(SceneObject {
            id,
            pose,
            surface,
            bound_radius: half.norm() * 1.001 + 1e-9,
            palette: PALETTE[i % PALETTE.len()],
        });
        gt_objects.push(GtObject {
            id,
            class_id: p.shape.class_id(),
            pose,
            half_extents: half,
            mesh,
        });
    }

    for obj in &gt_objects {
        let visible = poses.iter().any(|t| {
            intrinsics
                .project(&t.inverse_apply(&obj.pose.translation))
                .is_some_and(|[u, v]| intrinsics.contains(u, v))
        });
        if !visible {
            return Err(Error::InvalidInput(format!(
                "object {} is outside every camera frustum",
                obj.id
            )));
        }
    }

    let scene = Scene {
        objects,
        ground: config.ground_plane,
        light: Vec3::new(0.35, -1.0, 0.25).normalize(),
    };
    let line_noise = (config.noise.line_px > 0.0).then(|| Normal::new(0.0, config.noise.line_px).unwrap());
    let depth_noise = (config.noise.depth_m > 0.0).then(|| Normal::new(0.0, config.noise.depth_m).unwrap());

    let mut frames = Vec::with_capacity(poses.len());
    for (fi, pose) in poses.iter().enumerate() {
        let mut frng = ChaCha8Rng::seed_from_u64(config.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(fi as u64 + 1)));
        let (w, h) = (intrinsics.width, intrinsics.height);
        let mut rgb = RgbImage::new(w, h);
        let mut mask = MaskImage::new(w, h);
        let mut depth_z = vec![0.0f64; (w * h) as usize];
        let origin = pose.translation;
        for v in 0..h {
            for u in 0..w {
                let d = pose.apply_vector(&intrinsics.pixel_direction(u as f64, v as f64));
                let hit = scene.first_hit(&origin, &d);
                let color = scene.shade(&origin, &d, hit.as_ref());
                rgb.set(u, v, color.map(to_u8));
                if let Some(h) = hit {
                    mask.set(u, v, h.id as u16);
                    // The camera-frame direction has unit z, so t is the z-depth.
                    depth_z[(v * w + u) as usize] = h.t;
                }
            }
        }

        let boxes = mask.instance_boxes();
        let mut sparse_depth = Vec::new();
        let mut lines = Vec::new();
        let mut detections = Vec::new();
        for gt in &gt_objects {
            let Some(bbox) = boxes.get(&gt.id) else {
                continue;
            };
            detections.push(Detection {
                instance_id: gt.id,
                class_id: gt.class_id,
                bbox: *bbox,
            });
            let pixels: Vec<u32> = (0..w * h).filter(|&i| mask.data[i as usize] as u32 == gt.id).collect();
            let k = config.depth_samples_per_object.min(pixels.len());
            let mut chosen: Vec<u32> = sample_indices(&mut frng, pixels.len(), k).into_iter().map(|i| pixels[i]).collect();
            chosen.sort_unstable();
            for idx in chosen {
                let mut depth = depth_z[idx as usize];
                if let Some(n) = &depth_noise {
                    depth += n.sample(&mut frng);
                }
                if frng.random::<f64>() < config.noise.depth_outlier_fraction {
                    depth *= frng.random_range(0.5..1.5);
                }
                if depth > 0.0 {
                    sparse_depth.push(DepthSample {
                        u: idx % w,
                        v: idx / w,
                        depth,
                    });
                }
            }

            for (a, b) in nearest_corner_edges(&gt.pose, &gt.half_extents, &pose.center()) {
                let Some(seg) = project_segment(&intrinsics, pose, &a, &b) else {
                    continue;
                };
                let mut jitter = |p: [f64; 2]| match &line_noise {
                    Some(n) => [p[0] + n.sample(&mut frng), p[1] + n.sample(&mut frng)],
                    None => p,
                };
                let seg = Segment2::new(jitter(seg.a), jitter(seg.b));
                if seg.length() >= 3.0 {
                    lines.push(LineObservation {
                        instance_id: gt.id,
                        segment: seg,
                    });
                }
            }
            for _ in 0..config.noise.spurious_lines {
                let c = [
                    frng.random_range(bbox.min[0]..=bbox.max[0]),
                    frng.random_range(bbox.min[1]..=bbox.max[1]),
                ];
                let angle: f64 = frng.random_range(0.0..std::f64::consts::PI);
                let half_len = frng.random_range(4.0..15.0);
                let (s, co) = angle.sin_cos();
                let seg = Segment2::new([c[0] - co * half_len, c[1] - s * half_len], [c[0] + co * half_len, c[1] + s * half_len]);
                lines.push(LineObservation {
                    instance_id: gt.id,
                    segment: seg,
                });
            }
        }

        frames.push(Frame {
            frame_id: fi as u32,
            pose: perturb_pose(pose, config.noise.pose_translation_m, config.noise.pose_rotation_deg, &mut frng),
            rgb,
            mask,
            sparse_depth,
            lines,
            detections,
        });
    }

    Ok(SceneBundle {
        intrinsics,
        frames,
        gt_objects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SceneConfig {
        SceneConfig {
            seed,
            image_width: 96,
            image_height: 72,
            trajectory: Trajectory::Orbit {
                frames: 6,
                radius: 0.9,
                height: 0.55,
                target: [0.0, -0.06, 0.0],
                start_deg: 0.0,
                sweep_deg: 360.0,
            },
            ..SceneConfig::default()
        }
    }

    #[test]
    fn seed_is_deterministic() {
        let a = generate_synthetic_scene(&small(7)).unwrap();
        let b = generate_synthetic_scene(&small(7)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_scene(&small(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn three_objects_three_ids() {
        let b = generate_synthetic_scene(&small(1)).unwrap();
        let mut ids = std::collections::BTreeSet::new();
        for f in &b.frames {
            ids.extend(f.mask.data.iter().copied().filter(|&m| m != 0));
        }
        assert_eq!(ids.into_iter().collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn depth_samples_hit_the_surface() {
        let b = generate_synthetic_scene(&small(2)).unwrap();
        for f in &b.frames {
            assert!(!f.sparse_depth.is_empty());
            for s in &f.sparse_depth {
                let id = f.mask.get(s.u, s.v) as u32;
                assert_ne!(id, 0);
                let gt = b.gt_object(id).unwrap();
                let p = f.pose.apply(&b.intrinsics.unproject(s.u as f64, s.v as f64, s.depth));
                let local = gt.pose.to_object(&p);
                let bvh = TriangleBvh::new(&gt.mesh);
                let (_, d2) = bvh.closest_point(&local).unwrap();
                assert!(d2.sqrt() < 1e-4, "{}", d2.sqrt());
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = small(0);
        c.trajectory = Trajectory::Explicit { poses: vec![] };
        assert!(generate_synthetic_scene(&c).is_err());
        let mut c = small(0);
        c.placements = vec![ObjectPlacement {
            shape: ShapeKind::Sphere { radius: 0.05 },
            position: [40.0, 40.0],
            yaw_deg: 0.0,
            center_y: None,
        }];
        assert!(generate_synthetic_scene(&c).is_err());
    }

    #[test]
    fn lines_include_box_edges() {
        let mut c = small(3);
        c.noise.line_px = 0.0;
        c.noise.spurious_lines = 0;
        let b = generate_synthetic_scene(&c).unwrap();
        let f = &b.frames[0];
        for gt in &b.gt_objects {
            if f.detections.iter().any(|d| d.instance_id == gt.id) {
                let n = f.lines.iter().filter(|l| l.instance_id == gt.id).count();
                assert!(n >= 2 && n <= 3, "object {} has {n} lines", gt.id);
            }
        }
    }
}
