//! Object landmarks: detection association, per-object point clouds with
//! outlier removal, and yaw-cuboid pose and size estimation.

mod association;
mod eif;
mod localize;

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Frame;
use crate::error::{Error, Result};
use crate::geometry::{Box2, CameraIntrinsics, ObjectPose, Vec3};

pub use association::{accumulate_object_points, associate_detections, merge_duplicate_landmarks, Association, Merge, Outcome};
pub use eif::{average_path_length, eif_fit, eif_score, outlier_filter, EifConfig, EifForest, EifNode, EifTree};
pub use localize::{
    estimate_size, estimate_translation, estimate_yaw_lines, estimate_yaw_pca, localize_landmark, project_box_edges,
    recenter, LineView, LineYawProblem, PcaYaw, YawCost, YawEstimate,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjSlamConfig {
    pub iou_threshold: f64,
    pub merge_threshold: f64,
    pub eif: EifConfig,
    pub slope_tolerance_deg: f64,
    /// Minimum half extent, meters.
    pub size_floor: f64,
    pub box_inflation: f64,
    /// Detections below this area (px²) are rejected.
    pub min_box_area: f64,
    pub seed: u64,
}

impl Default for ObjSlamConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            merge_threshold: 0.3,
            eif: EifConfig::default(),
            slope_tolerance_deg: 10.0,
            size_floor: 0.01,
            box_inflation: 1.1,
            min_box_area: 16.0,
            seed: 0,
        }
    }
}

impl ObjSlamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.iou_threshold) || !unit(self.merge_threshold) || !unit(self.eif.score_threshold) {
            return Err(Error::Config("association, merge and outlier thresholds must lie in [0, 1]".into()));
        }
        if !(self.size_floor > 0.0) || !(self.box_inflation >= 1.0) || !(self.slope_tolerance_deg > 0.0) {
            return Err(Error::Config(
                "size floor and slope tolerance must be positive and box inflation at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectLandmark {
    pub id: u32,
    pub class_id: u32,
    pub pose: ObjectPose,
    pub half_extents: Vec3,
    /// Inlier cloud from the last filtering pass plus points seen since,
    /// world frame, meters.
    pub points: Vec<Vec3>,
    /// Every accumulated point; filtering never removes from it.
    pub observed_points: Vec<Vec3>,
    /// Accepted keyframe ids, strictly increasing.
    pub keyframes: Vec<u32>,
    pub last_keyframe_camera_center: Option<Vec3>,
    /// Mask instance id of this object in each frame it was seen.
    pub observations: BTreeMap<u32, u32>,
    pub yaw_degenerate: bool,
}

impl ObjectLandmark {
    pub fn new(id: u32, class_id: u32) -> Self {
        Self {
            id,
            class_id,
            pose: ObjectPose::identity(),
            half_extents: Vec3::repeat(ObjSlamConfig::default().size_floor),
            points: Vec::new(),
            observed_points: Vec::new(),
            keyframes: Vec::new(),
            last_keyframe_camera_center: None,
            observations: BTreeMap::new(),
            yaw_degenerate: false,
        }
    }

    pub fn last_keyframe_frame(&self) -> Option<u32> {
        self.keyframes.last().copied()
    }

    pub fn summary(&self) -> LandmarkSummary {
        LandmarkSummary {
            id: self.id,
            class: self.class_id,
            translation: self.pose.translation.into(),
            yaw: self.pose.yaw,
            half_extents: self.half_extents.into(),
            point_count: self.points.len(),
            keyframes: self.keyframes.clone(),
        }
    }
}

/// Rebuilds the inlier cloud by filtering every observed point, so sparse
/// regions are not eroded by repeated passes. Returns the number of
/// observed points left out.
pub fn remove_outliers(landmark: &mut ObjectLandmark, config: &ObjSlamConfig) -> Result<usize> {
    let all = &landmark.observed_points;
    let seed = config.seed ^ (landmark.id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ all.len() as u64;
    let keep = outlier_filter(all, &config.eif, seed)?;
    let removed = all.len() - keep.len();
    landmark.points = keep.into_iter().map(|i| all[i]).collect();
    Ok(removed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSummary {
    pub id: u32,
    pub class: u32,
    pub translation: [f64; 3],
    pub yaw: f64,
    pub half_extents: [f64; 3],
    pub point_count: usize,
    pub keyframes: Vec<u32>,
}

pub fn write_landmarks_json(path: &Path, landmarks: &[ObjectLandmark]) -> Result<()> {
    let summaries: Vec<LandmarkSummary> = landmarks.iter().map(|l| l.summary()).collect();
    let text = serde_json::to_string_pretty(&summaries).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Which landmark each detection of a frame ended up on.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameUpdate {
    pub association: Association,
    /// `(detection index, landmark id)` for matched and newly created landmarks.
    pub assignments: Vec<(usize, u32)>,
    pub created: Vec<u32>,
}

/// Landmark map maintained by the tracking thread.
#[derive(Debug, Clone)]
pub struct ObjectMap {
    pub config: ObjSlamConfig,
    landmarks: Vec<ObjectLandmark>,
    last_boxes: HashMap<u32, Box2>,
    next_id: u32,
}

impl ObjectMap {
    pub fn new(config: ObjSlamConfig) -> Self {
        Self {
            config,
            landmarks: Vec::new(),
            last_boxes: HashMap::new(),
            next_id: 1,
        }
    }

    pub fn landmarks(&self) -> &[ObjectLandmark] {
        &self.landmarks
    }

    pub fn landmark(&self, id: u32) -> Option<&ObjectLandmark> {
        self.landmarks.iter().find(|l| l.id == id)
    }

    fn landmark_mut(&mut self, id: u32) -> Result<&mut ObjectLandmark> {
        self.landmarks.iter_mut().find(|l| l.id == id).ok_or(Error::UnknownObject(id))
    }

    /// Associates the frame's detections, spawns landmarks for unmatched
    /// ones and grows the point clouds. New landmarks get a provisional
    /// center from their first points.
    pub fn process_frame(&mut self, frame: &Frame, intrinsics: &CameraIntrinsics) -> FrameUpdate {
        let association = associate_detections(frame, &self.landmarks, &self.last_boxes, &self.config);
        let mut assignments = Vec::new();
        let mut created = Vec::new();
        for (di, outcome) in association.outcomes.iter().enumerate() {
            let det = &frame.detections[di];
            let id = match outcome {
                Outcome::Rejected => continue,
                Outcome::Matched(id) => *id,
                Outcome::New => {
                    let id = self.next_id;
                    self.next_id += 1;
                    self.landmarks.push(ObjectLandmark::new(id, det.class_id));
                    created.push(id);
                    id
                }
            };
            self.last_boxes.insert(id, det.bbox);
            let floor = self.config.size_floor;
            let Ok(lm) = self.landmark_mut(id) else { continue };
            lm.observations.insert(frame.frame_id, det.instance_id);
            accumulate_object_points(frame, intrinsics, det, lm);
            if lm.keyframes.is_empty() && !lm.points.is_empty() {
                if let Ok(t) = estimate_translation(&lm.points) {
                    lm.pose.translation = t;
                    lm.half_extents = Vec3::repeat(floor);
                }
            }
            assignments.push((di, id));
        }
        FrameUpdate {
            association,
            assignments,
            created,
        }
    }

    /// Records a keyframe for the landmark, filters its cloud and
    /// re-estimates pose and size.
    pub fn accept_keyframe<F: Borrow<Frame>>(
        &mut self,
        id: u32,
        frame: &Frame,
        frames: &[F],
        intrinsics: &CameraIntrinsics,
    ) -> Result<YawEstimate> {
        let config = self.config;
        let lm = self.landmark_mut(id)?;
        if lm.points.is_empty() {
            return Err(Error::Empty("object point cloud"));
        }
        if lm.keyframes.last().is_some_and(|k| *k >= frame.frame_id) {
            return Err(Error::InvalidInput(format!(
                "keyframe {} does not follow {:?}",
                frame.frame_id,
                lm.keyframes.last()
            )));
        }
        lm.keyframes.push(frame.frame_id);
        lm.last_keyframe_camera_center = Some(frame.pose.center());
        remove_outliers(lm, &config)?;
        localize_landmark(lm, frames, intrinsics, &config)
    }

    /// Merges duplicates and forgets the boxes of absorbed landmarks.
    pub fn merge_duplicates(&mut self) -> Vec<Merge> {
        let merges = merge_duplicate_landmarks(&mut self.landmarks, &self.config);
        for m in &merges {
            if let Some(b) = self.last_boxes.remove(&m.absorbed) {
                self.last_boxes.entry(m.kept).or_insert(b);
            }
        }
        merges
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn outlier_removal_keeps_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut l = ObjectLandmark::new(1, 1);
        l.observed_points = (0..100).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let cfg = ObjSlamConfig {
            eif: EifConfig {
                score_threshold: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        remove_outliers(&mut l, &cfg).unwrap();
        assert_eq!(l.points.len(), 50);
        assert_eq!(l.observed_points.len(), 100);
    }

    #[test]
    fn config_validation() {
        assert!(ObjSlamConfig::default().validate().is_ok());
        let bad = ObjSlamConfig {
            box_inflation: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
