use std::collections::{BTreeMap, HashMap};

use crate::dataset::{Detection, Frame};
use crate::geometry::{cuboid_world_aabb, Box2, CameraIntrinsics};

use super::localize::{estimate_size, estimate_translation, recenter};
use super::{ObjectLandmark, ObjSlamConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Matched(u32),
    New,
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub frame_id: u32,
    /// One entry per detection of the frame, in order.
    pub outcomes: Vec<Outcome>,
}

/// Greedy injective matching by descending 2D IoU against each landmark's
/// last observed box. Same-class pairs with IoU at or above the threshold
/// qualify; detections smaller than the minimum area are rejected.
pub fn associate_detections(
    frame: &Frame,
    landmarks: &[ObjectLandmark],
    prev_boxes: &HashMap<u32, Box2>,
    config: &ObjSlamConfig,
) -> Association {
    let dets = &frame.detections;
    let mut outcomes: Vec<Outcome> = dets
        .iter()
        .map(|d| if d.bbox.area() < config.min_box_area { Outcome::Rejected } else { Outcome::New })
        .collect();
    let mut pairs = Vec::new();
    for (di, det) in dets.iter().enumerate() {
        if outcomes[di] == Outcome::Rejected {
            continue;
        }
        for lm in landmarks.iter().filter(|l| l.class_id == det.class_id) {
            if let Some(prev) = prev_boxes.get(&lm.id) {
                let iou = det.bbox.iou(prev);
                if iou >= config.iou_threshold {
                    pairs.push((iou, di, lm.id));
                }
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut taken = Vec::new();
    for (_, di, id) in pairs {
        if outcomes[di] == Outcome::New && !taken.contains(&id) {
            outcomes[di] = Outcome::Matched(id);
            taken.push(id);
        }
    }
    Association {
        frame_id: frame.frame_id,
        outcomes,
    }
}

/// Back-projects every sparse-depth sample on the detection's instance mask
/// into world coordinates and appends it to the landmark's observed cloud.
/// New points also join the inlier cloud until the next filtering pass.
pub fn accumulate_object_points(
    frame: &Frame,
    intrinsics: &CameraIntrinsics,
    detection: &Detection,
    landmark: &mut ObjectLandmark,
) -> usize {
    let before = landmark.points.len();
    for s in &frame.sparse_depth {
        if s.u >= frame.mask.width || s.v >= frame.mask.height {
            continue;
        }
        let m = frame.mask.get(s.u, s.v) as u32;
        if m == 0 || m != detection.instance_id {
            continue;
        }
        let p = frame.pose.apply(&intrinsics.unproject(s.u as f64, s.v as f64, s.depth));
        if p.iter().all(|x| x.is_finite()) {
            landmark.points.push(p);
            landmark.observed_points.push(p);
        }
    }
    landmark.points.len() - before
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Merge {
    pub kept: u32,
    pub absorbed: u32,
}

/// Merges same-class landmarks whose world boxes overlap with IoU at or
/// above the merge threshold, repeating until no pair qualifies. The lower id
/// survives; clouds, keyframes and observations are unioned and the center
/// and size re-estimated at the yaw of the larger cloud.
pub fn merge_duplicate_landmarks(landmarks: &mut Vec<ObjectLandmark>, config: &ObjSlamConfig) -> Vec<Merge> {
    let mut merges = Vec::new();
    landmarks.sort_by_key(|l| l.id);
    'outer: loop {
        for i in 0..landmarks.len() {
            for j in i + 1..landmarks.len() {
                let (a, b) = (&landmarks[i], &landmarks[j]);
                if a.class_id != b.class_id || a.points.is_empty() || b.points.is_empty() {
                    continue;
                }
                let iou = cuboid_world_aabb(&a.pose, &a.half_extents).iou(&cuboid_world_aabb(&b.pose, &b.half_extents));
                if iou >= config.merge_threshold {
                    let absorbed = landmarks.remove(j);
                    merges.push(Merge {
                        kept: landmarks[i].id,
                        absorbed: absorbed.id,
                    });
                    absorb(&mut landmarks[i], absorbed, config);
                    continue 'outer;
                }
            }
        }
        break;
    }
    merges
}

fn absorb(into: &mut ObjectLandmark, other: ObjectLandmark, config: &ObjSlamConfig) {
    let yaw = if other.points.len() > into.points.len() { other.pose.yaw } else { into.pose.yaw };
    if other.last_keyframe_frame() > into.last_keyframe_frame() {
        into.last_keyframe_camera_center = other.last_keyframe_camera_center;
    }
    into.points.extend(other.points);
    into.observed_points.extend(other.observed_points);
    into.keyframes.extend(other.keyframes);
    into.keyframes.sort_unstable();
    into.keyframes.dedup();
    let mut obs: BTreeMap<u32, u32> = other.observations;
    obs.extend(std::mem::take(&mut into.observations));
    into.observations = obs;
    if let Ok(t) = estimate_translation(&into.points).and_then(|t| recenter(&into.points, &t, yaw)) {
        into.pose.translation = t;
        into.pose.yaw = yaw;
        if let Ok(a) = estimate_size(&into.points, &t, yaw, config.box_inflation, config.size_floor) {
            into.half_extents = a;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DepthSample, MaskImage, RgbImage};
    use crate::geometry::{ObjectPose, RigidTransform, Vec3};

    fn frame_with(dets: Vec<Detection>) -> Frame {
        Frame {
            frame_id: 3,
            pose: RigidTransform::identity(),
            rgb: RgbImage::new(40, 30),
            mask: MaskImage::new(40, 30),
            sparse_depth: vec![],
            lines: vec![],
            detections: dets,
        }
    }

    fn det(inst: u32, b: Box2) -> Detection {
        Detection {
            instance_id: inst,
            class_id: 1,
            bbox: b,
        }
    }

    fn lm(id: u32) -> ObjectLandmark {
        ObjectLandmark::new(id, 1)
    }

    #[test]
    fn iou_third_threshold() {
        let a = Box2::new(0.0, 0.0, 10.0, 10.0);
        let b = Box2::new(5.0, 0.0, 15.0, 10.0);
        assert_eq!(a.iou(&b), 1.0 / 3.0);
        let f = frame_with(vec![det(1, b)]);
        let prev: HashMap<u32, Box2> = [(7, a)].into();
        let mut cfg = ObjSlamConfig {
            iou_threshold: 1.0 / 3.0,
            ..Default::default()
        };
        assert_eq!(associate_detections(&f, &[lm(7)], &prev, &cfg).outcomes, vec![Outcome::Matched(7)]);
        cfg.iou_threshold = 0.34;
        assert_eq!(associate_detections(&f, &[lm(7)], &prev, &cfg).outcomes, vec![Outcome::New]);
    }

    #[test]
    fn greedy_is_injective() {
        let a = Box2::new(0.0, 0.0, 10.0, 10.0);
        let f = frame_with(vec![det(1, Box2::new(0.0, 0.0, 10.0, 9.0)), det(2, a), det(3, Box2::new(0.0, 0.0, 1.0, 1.0))]);
        let prev: HashMap<u32, Box2> = [(1, a), (2, Box2::new(20.0, 20.0, 30.0, 30.0))].into();
        let out = associate_detections(&f, &[lm(1), lm(2)], &prev, &ObjSlamConfig::default()).outcomes;
        assert_eq!(out, vec![Outcome::New, Outcome::Matched(1), Outcome::Rejected]);
    }

    #[test]
    fn principal_point_back_projection() {
        let k = CameraIntrinsics::from_fov(41, 31, 60.0);
        let mut f = frame_with(vec![]);
        f.mask.set(20, 15, 4);
        f.sparse_depth = vec![
            DepthSample { u: 20, v: 15, depth: 1.0 },
            DepthSample { u: 2, v: 2, depth: 1.0 },
        ];
        let mut l = lm(0);
        let n = accumulate_object_points(&f, &k, &det(4, Box2::new(0.0, 0.0, 39.0, 29.0)), &mut l);
        assert_eq!(n, 1);
        assert!((l.points[0] - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn merge_nested_and_far() {
        let mut a = lm(1);
        a.points = vec![Vec3::zeros()];
        a.half_extents = Vec3::repeat(1.0);
        let mut b = lm(2);
        b.points = vec![Vec3::repeat(0.5)];
        b.half_extents = Vec3::repeat(0.5);
        b.pose = ObjectPose::new(Vec3::repeat(0.5), 0.0);
        let cfg = |t| ObjSlamConfig {
            merge_threshold: t,
            ..Default::default()
        };
        let mut v = vec![a.clone(), b.clone()];
        assert!(merge_duplicate_landmarks(&mut v, &cfg(0.126)).is_empty());
        assert_eq!(v.len(), 2);
        let m = merge_duplicate_landmarks(&mut v, &cfg(0.125));
        assert_eq!(m, vec![Merge { kept: 1, absorbed: 2 }]);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].points.len(), 2);

        let mut far = b.clone();
        far.id = 3;
        far.pose.translation = Vec3::repeat(9.0);
        let mut v = vec![a, far];
        assert!(merge_duplicate_landmarks(&mut v, &ObjSlamConfig::default()).is_empty());
    }
}
