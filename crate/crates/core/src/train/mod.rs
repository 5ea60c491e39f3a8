//! Per-object training: losses, the keyframe update policy, single
//! iterations and the multi-object worker pool.

mod iteration;
mod loss;
mod pool;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::Frame;
use crate::error::{Error, Result};
use crate::geometry::{Box2, CameraIntrinsics, ObjectPose, Vec3};
use crate::nerf::{AdamConfig, Gradients, HashGridModel, ModelConfig};
use crate::objslam::ObjectLandmark;
use crate::render::{DepthIndex, SamplingMode};

pub use iteration::train_iteration;
pub use loss::{compute_losses, BatchCounts, LossAccumulator, LossReport, LossWeights, RayLossGrad, RayPrediction};
pub use pool::{write_train_logs, ObjectStats, TaskStatus, TrainerPool};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub rays_per_iteration: usize,
    pub samples_per_ray: usize,
    pub iterations_per_update: usize,
    /// Extra iterations added per earlier update of the same object.
    pub iterations_growth: usize,
    /// Cap on the total iterations queued per object.
    pub max_iterations_per_object: Option<usize>,
    /// Depth loss weight λ₁.
    pub lambda_depth: f64,
    /// Density loss weight λ₂.
    pub lambda_density: f64,
    pub raw_loss_sums: bool,
    /// Keyframe update threshold α, degrees.
    pub update_angle_deg: f64,
    pub worker_count: usize,
    pub seed: u64,
    pub sampling: SamplingMode,
    pub adam: AdamConfig,
    /// Rays per forward/backward chunk.
    pub chunk_rays: usize,
    /// Composite each ray over its random color instead of black.
    pub random_background: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rays_per_iteration: 4096,
            samples_per_ray: 32,
            iterations_per_update: 300,
            iterations_growth: 0,
            max_iterations_per_object: None,
            lambda_depth: 0.5,
            lambda_density: 0.01,
            raw_loss_sums: false,
            update_angle_deg: 25.0,
            worker_count: 8,
            seed: 0,
            sampling: SamplingMode::Stratified,
            adam: AdamConfig::default(),
            chunk_rays: 128,
            random_background: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rays_per_iteration < 1 || self.samples_per_ray < 1 || self.iterations_per_update < 1 || self.chunk_rays < 1 {
            return Err(Error::Config("ray, sample, iteration and chunk counts must be >= 1".into()));
        }
        if !(self.lambda_depth >= 0.0) || !(self.lambda_density >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if !(self.update_angle_deg > 0.0 && self.update_angle_deg < 180.0) {
            return Err(Error::Config("update angle must lie in (0, 180) degrees".into()));
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            depth: self.lambda_depth,
            density: self.lambda_density,
            raw_sums: self.raw_loss_sums,
        }
    }

    /// Iterations granted to the `update_index`-th update (zero-based),
    /// before the per-object cap.
    pub fn iterations_for_update(&self, update_index: usize) -> usize {
        self.iterations_per_update + update_index * self.iterations_growth
    }
}

/// Viewing angle in degrees between two camera centers as seen from `target`,
/// or `None` when either center coincides with it.
pub fn viewing_angle_deg(target: &Vec3, a: &Vec3, b: &Vec3) -> Option<f64> {
    let (u, v) = (a - target, b - target);
    let (nu, nv) = (u.norm(), v.norm());
    if nu < 1e-12 || nv < 1e-12 {
        return None;
    }
    Some((u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0).acos().to_degrees())
}

/// The first view of an object is always a keyframe; later views must have
/// moved more than `update_angle_deg` around it since the last one.
pub fn should_update_keyframes(landmark: &ObjectLandmark, camera_center: &Vec3, update_angle_deg: f64) -> bool {
    match landmark.last_keyframe_camera_center {
        None => true,
        Some(last) => viewing_angle_deg(&landmark.pose.translation, &last, camera_center).is_some_and(|a| a > update_angle_deg),
    }
}

/// One keyframe as seen by the trainer.
#[derive(Debug, Clone)]
pub struct KeyframeView {
    pub frame: Arc<Frame>,
    /// Mask value of the object in this frame.
    pub instance_id: u32,
    pub bbox: Box2,
    pub depth: Arc<DepthIndex>,
}

/// Immutable copy of what training needs from a landmark.
#[derive(Debug, Clone)]
pub struct TrainingSnapshot {
    pub object_id: u32,
    pub pose: ObjectPose,
    pub half_extents: Vec3,
    pub intrinsics: CameraIntrinsics,
    pub keyframes: Vec<KeyframeView>,
}

impl TrainingSnapshot {
    /// Object frame to the model's unit cube.
    pub fn normalize(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x / (2.0 * self.half_extents.x) + 0.5,
            p.y / (2.0 * self.half_extents.y) + 0.5,
            p.z / (2.0 * self.half_extents.z) + 0.5,
        )
    }

    /// Builds a snapshot from a landmark, looking up its keyframes among
    /// shared frames. Frames without a detection of the object are skipped.
    pub fn from_landmark(landmark: &ObjectLandmark, frames: &[Arc<Frame>], depth: &[Arc<DepthIndex>], intrinsics: &CameraIntrinsics) -> Result<Self> {
        if frames.len() != depth.len() {
            return Err(Error::ShapeMismatch(format!("{} frames, {} depth indices", frames.len(), depth.len())));
        }
        let mut keyframes = Vec::new();
        for fid in &landmark.keyframes {
            let Some(fi) = frames.iter().position(|f| f.frame_id == *fid) else { continue };
            let Some(&instance_id) = landmark.observations.get(fid) else { continue };
            let Some(det) = frames[fi].detections.iter().find(|d| d.instance_id == instance_id) else { continue };
            keyframes.push(KeyframeView {
                frame: frames[fi].clone(),
                instance_id,
                bbox: det.bbox,
                depth: depth[fi].clone(),
            });
        }
        Ok(Self {
            object_id: landmark.id,
            pose: landmark.pose,
            half_extents: landmark.half_extents,
            intrinsics: *intrinsics,
            keyframes,
        })
    }
}

/// A model bound to the object it represents, with reusable gradient buffers.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    pub object_id: u32,
    pub model: HashGridModel,
    pub iterations: u64,
    grads: Option<Gradients>,
}

impl ObjectModel {
    pub fn new(object_id: u32, config: ModelConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            object_id,
            model: HashGridModel::new(config, seed)?,
            iterations: 0,
            grads: None,
        })
    }

    pub fn from_model(object_id: u32, model: HashGridModel) -> Self {
        Self {
            object_id,
            model,
            iterations: 0,
            grads: None,
        }
    }
}

/// Per-object seed derived from a run seed.
pub fn object_seed(seed: u64, object_id: u32) -> u64 {
    seed ^ (object_id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
