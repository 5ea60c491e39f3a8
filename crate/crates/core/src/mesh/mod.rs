//! Triangle meshes: isosurface extraction, world placement, similarity
//! alignment and reconstruction metrics.

mod align;
mod bvh;
mod marching_cubes;
mod metrics;
mod obj;
pub mod primitives;
mod tables;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, ObjectPose, Vec3};

pub use align::{align_similarity, Similarity};
pub use bvh::{closest_point_on_triangle, TriangleBvh};
pub use marching_cubes::{extract_mesh, marching_cubes, IsoConfig, ScalarGrid};
pub use metrics::{eval_metrics, nearest_distances_brute_force, sample_surface, MetricsReport};
pub use obj::{read_obj, write_obj, write_scene_obj};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFrame {
    Object,
    World,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub frame: MeshFrame,
    pub object_id: u32,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>, frame: MeshFrame, object_id: u32) -> Self {
        Self {
            vertices,
            faces,
            frame,
            object_id,
        }
    }

    pub fn empty(frame: MeshFrame, object_id: u32) -> Self {
        Self::new(Vec::new(), Vec::new(), frame, object_id)
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::InvalidInput(format!("face {i} index out of range")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidInput(format!("face {i} is degenerate")));
            }
        }
        Ok(())
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                (b - a).cross(&(c - a)).norm() * 0.5
            })
            .sum()
    }

    /// Applies `f` to every vertex, keeping topology and tags.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            ..self.clone()
        }
    }
}

/// Places an object-frame mesh in the world: `x ↦ R(yaw) x + t`.
pub fn to_world(mesh: &TriangleMesh, pose: &ObjectPose) -> Result<TriangleMesh> {
    if mesh.frame == MeshFrame::World {
        return Err(Error::InvalidInput(format!(
            "mesh of object {} is already in the world frame",
            mesh.object_id
        )));
    }
    let r = pose.rotation();
    let mut out = mesh.map_vertices(|v| r * v + pose.translation);
    out.frame = MeshFrame::World;
    Ok(out)
}
