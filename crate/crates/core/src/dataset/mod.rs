//! Sequence data: frames with posed observations, the on-disk sequence
//! format, and a synthetic scene generator used as ground-truth oracle.

mod io;
mod synth;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{Box2, CameraIntrinsics, ObjectPose, RigidTransform, Segment2, Vec3};
use crate::mesh::TriangleMesh;

pub use io::{load_sequence, save_sequence};
pub use synth::{
    generate_synthetic_scene, perturb_pose, NoiseLevels, ObjectPlacement, SceneConfig, ShapeKind,
    Trajectory,
};

/// 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize * 3],
        }
    }

    #[inline]
    fn index(&self, u: u32, v: u32) -> usize {
        (v as usize * self.width as usize + u as usize) * 3
    }

    pub fn get(&self, u: u32, v: u32) -> [u8; 3] {
        let i = self.index(u, v);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, u: u32, v: u32, rgb: [u8; 3]) {
        let i = self.index(u, v);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Pixel color scaled to `[0, 1]`.
    pub fn color(&self, u: u32, v: u32) -> [f64; 3] {
        self.get(u, v).map(|c| c as f64 / 255.0)
    }
}

/// 16-bit instance-id image; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u16>,
}

impl MaskImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn get(&self, u: u32, v: u32) -> u16 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, id: u16) {
        let w = self.width as usize;
        self.data[v as usize * w + u as usize] = id;
    }

    /// Tight inclusive pixel bounds of every nonzero id.
    pub fn instance_boxes(&self) -> BTreeMap<u32, Box2> {
        let mut bounds: BTreeMap<u32, [u32; 4]> = BTreeMap::new();
        for v in 0..self.height {
            for u in 0..self.width {
                let id = self.get(u, v) as u32;
                if id == 0 {
                    continue;
                }
                let b = bounds.entry(id).or_insert([u, v, u, v]);
                b[0] = b[0].min(u);
                b[1] = b[1].min(v);
                b[2] = b[2].max(u);
                b[3] = b[3].max(v);
            }
        }
        bounds
            .into_iter()
            .map(|(id, b)| (id, Box2::new(b[0] as f64, b[1] as f64, b[2] as f64, b[3] as f64)))
            .collect()
    }
}

/// A metric z-depth at an integer pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthSample {
    pub u: u32,
    pub v: u32,
    pub depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineObservation {
    pub instance_id: u32,
    pub segment: Segment2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub instance_id: u32,
    pub class_id: u32,
    pub bbox: Box2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: u32,
    /// Camera-to-world transform.
    pub pose: RigidTransform,
    pub rgb: RgbImage,
    pub mask: MaskImage,
    pub sparse_depth: Vec<DepthSample>,
    pub lines: Vec<LineObservation>,
    pub detections: Vec<Detection>,
}

impl Frame {
    pub fn validate(&self) -> Result<()> {
        if self.rgb.width != self.mask.width || self.rgb.height != self.mask.height {
            return Err(Error::InvalidInput(format!(
                "frame {}: mask {}x{} vs rgb {}x{}",
                self.frame_id, self.mask.width, self.mask.height, self.rgb.width, self.rgb.height
            )));
        }
        if let Some(d) = self.sparse_depth.iter().find(|d| !(d.depth > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "frame {}: non-positive depth {} at ({}, {})",
                self.frame_id, d.depth, d.u, d.v
            )));
        }
        if self.lines.iter().any(|l| l.segment.a == l.segment.b) {
            return Err(Error::InvalidInput(format!(
                "frame {}: line segment with coincident endpoints",
                self.frame_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub id: u32,
    pub class_id: u32,
    pub pose: ObjectPose,
    pub half_extents: Vec3,
    /// Object-frame surface.
    pub mesh: TriangleMesh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub intrinsics: CameraIntrinsics,
    pub frames: Vec<Frame>,
    pub gt_objects: Vec<GtObject>,
}

impl SceneBundle {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        for w in self.frames.windows(2) {
            if w[0].frame_id >= w[1].frame_id {
                return Err(Error::InvalidInput("frames not ordered by frame_id".into()));
            }
        }
        for f in &self.frames {
            f.validate()?;
        }
        Ok(())
    }

    pub fn gt_object(&self, id: u32) -> Option<&GtObject> {
        self.gt_objects.iter().find(|o| o.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_boxes_are_tight() {
        let mut m = MaskImage::new(10, 8);
        m.set(2, 3, 4);
        m.set(5, 6, 4);
        m.set(9, 0, 1);
        let b = m.instance_boxes();
        assert_eq!(b[&4], Box2::new(2.0, 3.0, 5.0, 6.0));
        assert_eq!(b[&1], Box2::new(9.0, 0.0, 9.0, 0.0));
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn frame_validation() {
        let mut f = Frame {
            frame_id: 0,
            pose: RigidTransform::identity(),
            rgb: RgbImage::new(4, 4),
            mask: MaskImage::new(4, 4),
            sparse_depth: vec![DepthSample { u: 1, v: 1, depth: 1.0 }],
            lines: vec![],
            detections: vec![],
        };
        f.validate().unwrap();
        f.sparse_depth[0].depth = 0.0;
        assert!(f.validate().is_err());
        f.sparse_depth.clear();
        f.lines.push(LineObservation {
            instance_id: 1,
            segment: Segment2::new([1.0, 1.0], [1.0, 1.0]),
        });
        assert!(f.validate().is_err());
        f.lines.clear();
        f.mask = MaskImage::new(3, 4);
        assert!(f.validate().is_err());
    }
}
