//! Object-frame rays, box-truncated uniform sampling and differentiable
//! volume rendering.

pub(crate) mod volume;

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Frame;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, ObjectPose, RigidTransform, Vec3};

pub use volume::{over_background, over_background_backward, volume_render, volume_render_backward, RenderGrad, RenderResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayClass {
    Object,
    Background,
    Occluder,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    /// Object frame, meters.
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
    pub pixel: [u32; 2],
    pub class: RayClass,
    pub target_color: [f64; 3],
    /// Distance along the ray to the observed surface, for object rays with sparse depth.
    pub target_depth: Option<f64>,
}

impl Ray {
    pub fn has_depth(&self) -> bool {
        self.target_depth.is_some()
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Back-projects a pixel into an object-frame ray `(origin, unit direction)`.
pub fn pixel_to_ray(
    u: f64,
    v: f64,
    intrinsics: &CameraIntrinsics,
    camera_to_world: &RigidTransform,
    object: &ObjectPose,
) -> (Vec3, Vec3) {
    let d_cam = intrinsics.pixel_direction(u, v).normalize();
    let o_world = camera_to_world.translation;
    let d_world = camera_to_world.apply_vector(&d_cam);
    let r_t = object.rotation().transpose();
    (object.to_object(&o_world), (r_t * d_world).normalize())
}

/// Slab intersection against the origin-centered box `[-h, h]`, with the
/// entry clamped to zero. `None` on a miss or an empty interval.
pub fn ray_box_intersect(origin: &Vec3, direction: &Vec3, half_extents: &Vec3) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        let (o, d, h) = (origin[a], direction[a], half_extents[a]);
        if d == 0.0 {
            if o < -h || o > h {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d;
        let (mut lo, mut hi) = ((-h - o) * inv, (h - o) * inv);
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        t0 = t0.max(lo);
        t1 = t1.min(hi);
    }
    (t1 > t0).then_some((t0, t1))
}

/// Sparse depth lookup by pixel.
#[derive(Debug, Clone, Default)]
pub struct DepthIndex {
    map: HashMap<(u32, u32), f64>,
}

impl DepthIndex {
    pub fn new(frame: &Frame) -> Self {
        Self {
            map: frame.sparse_depth.iter().map(|s| ((s.u, s.v), s.depth)).collect(),
        }
    }

    pub fn get(&self, u: u32, v: u32) -> Option<f64> {
        self.map.get(&(u, v)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Class and supervision of an in-box pixel. Returns the target color and
/// the sparse z-depth, which only object pixels keep.
pub fn classify_and_target(
    frame: &Frame,
    u: u32,
    v: u32,
    object_id: u32,
    depth: &DepthIndex,
) -> (RayClass, [f64; 3], Option<f64>) {
    let m = frame.mask.get(u, v) as u32;
    if m == object_id {
        (RayClass::Object, frame.rgb.color(u, v), depth.get(u, v))
    } else if m == 0 {
        (RayClass::Background, frame.rgb.color(u, v), None)
    } else {
        (RayClass::Occluder, frame.rgb.color(u, v), None)
    }
}

#[allow(clippy::too_many_arguments)]
/// Builds the full object-frame ray for a pixel, or `None` if it misses the box.
pub fn build_ray(
    frame: &Frame,
    intrinsics: &CameraIntrinsics,
    object: &ObjectPose,
    half_extents: &Vec3,
    object_id: u32,
    depth: &DepthIndex,
    u: u32,
    v: u32,
) -> Option<Ray> {
    let (origin, direction) = pixel_to_ray(u as f64, v as f64, intrinsics, &frame.pose, object);
    let (t_near, t_far) = ray_box_intersect(&origin, &direction, half_extents)?;
    let (class, target_color, z) = classify_and_target(frame, u, v, object_id, depth);
    // z-depth to distance along the unit ray.
    let target_depth = z.map(|z| z * intrinsics.pixel_direction(u as f64, v as f64).norm());
    Some(Ray {
        origin,
        direction,
        t_near,
        t_far,
        pixel: [u, v],
        class,
        target_color,
        target_depth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// One uniform draw per sub-interval.
    #[default]
    Stratified,
    /// Sub-interval midpoints.
    Midpoint,
}

/// Sample distances along one ray and the spacing attributed to each.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub distances: Vec<f64>,
    pub spacings: Vec<f64>,
}

/// `n` samples, one in each of `n` equal sub-intervals of `[t_near, t_far]`.
/// Spacings are gaps to the next sample; the last one is the mean bin width.
pub fn sample_uniform(t_near: f64, t_far: f64, n: usize, mode: SamplingMode, rng: &mut impl Rng) -> Result<SampleSet> {
    if n < 1 {
        return Err(Error::InvalidInput("need at least one sample per ray".into()));
    }
    if !(t_far > t_near) {
        return Err(Error::InvalidInput(format!("empty interval [{t_near}, {t_far}]")));
    }
    let bin = (t_far - t_near) / n as f64;
    let distances: Vec<f64> = (0..n)
        .map(|i| {
            let u = match mode {
                SamplingMode::Stratified => rng.random::<f64>(),
                SamplingMode::Midpoint => 0.5,
            };
            t_near + bin * (i as f64 + u)
        })
        .collect();
    let mut spacings: Vec<f64> = distances.windows(2).map(|w| w[1] - w[0]).collect();
    spacings.push(bin);
    Ok(SampleSet { distances, spacings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::from_fov(320, 240, 60.0)
    }

    #[test]
    fn principal_ray_is_optical_axis() {
        let k = intr();
        let (o, d) = pixel_to_ray(k.cx, k.cy, &k, &RigidTransform::identity(), &ObjectPose::identity());
        assert_eq!(o, Vec3::zeros());
        assert!((d - Vec3::z()).norm() < 1e-15);
    }

    #[test]
    fn ray_round_trip_projects_back() {
        let k = intr();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let eye = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-1.0..-0.2), rng.random_range(1.0..2.0));
            let cam = RigidTransform::look_at(eye, Vec3::zeros()).unwrap();
            let obj = ObjectPose::new(Vec3::new(rng.random(), rng.random(), rng.random()), rng.random_range(-3.0..3.0));
            let (u, v) = (rng.random_range(0.0..319.0), rng.random_range(0.0..239.0));
            let (o, d) = pixel_to_ray(u, v, &k, &cam, &obj);
            let s = rng.random_range(0.1..5.0);
            let p = cam.inverse_apply(&obj.to_world(&(o + d * s)));
            let [pu, pv] = k.project(&p).unwrap();
            assert!((pu - u).abs() < 1e-4 && (pv - v).abs() < 1e-4);
        }
    }

    #[test]
    fn slab_cases() {
        let h = Vec3::repeat(1.0);
        assert_eq!(ray_box_intersect(&Vec3::new(-5.0, 0.0, 0.0), &Vec3::x(), &h), Some((4.0, 6.0)));
        assert_eq!(ray_box_intersect(&Vec3::new(-5.0, 2.0, 0.0), &Vec3::x(), &h), None);
        // Inside: entry clamps to 0.
        assert_eq!(ray_box_intersect(&Vec3::zeros(), &Vec3::x(), &h), Some((0.0, 1.0)));
        // Box behind the origin.
        assert_eq!(ray_box_intersect(&Vec3::new(5.0, 0.0, 0.0), &Vec3::x(), &h), None);
    }

    #[test]
    fn stratified_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_uniform(2.0, 4.0, 1, SamplingMode::Stratified, &mut rng).unwrap();
        assert!(s.distances[0] >= 2.0 && s.distances[0] <= 4.0);
        let s = sample_uniform(1.0, 3.0, 32, SamplingMode::Stratified, &mut rng).unwrap();
        let bin = 2.0 / 32.0;
        for (i, d) in s.distances.iter().enumerate() {
            assert!(*d >= 1.0 + bin * i as f64 && *d < 1.0 + bin * (i + 1) as f64);
        }
        assert!(s.distances.windows(2).all(|w| w[0] < w[1]));
        assert!(s.spacings.iter().all(|d| *d > 0.0));
        assert_eq!(*s.spacings.last().unwrap(), bin);
        assert!(sample_uniform(0.0, 1.0, 0, SamplingMode::Midpoint, &mut rng).is_err());
    }

    #[test]
    fn sample_mean_is_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut sum = 0.0;
        let mut n = 0;
        while n < 100_000 {
            let s = sample_uniform(1.0, 3.0, 8, SamplingMode::Stratified, &mut rng).unwrap();
            sum += s.distances.iter().sum::<f64>();
            n += 8;
        }
        assert!((sum / n as f64 - 2.0).abs() < 0.02);
    }
}
