use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tables::TRI_TABLE;
use super::{MeshFrame, TriangleMesh};
use crate::geometry::Vec3;
use crate::nerf::DensityField;

/// Scalar samples on a regular lattice, x varying fastest.
#[derive(Debug, Clone)]
pub struct ScalarGrid {
    pub dims: [usize; 3],
    pub origin: Vec3,
    pub spacing: Vec3,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    pub fn position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64).component_mul(&self.spacing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum IsoConfig {
    /// Density at which a voxel-diagonal segment reaches occupancy 0.5:
    /// `σ_iso = ln 2 / δ_voxel`.
    OccupancyHalf,
    Fixed(f64),
}

impl Default for IsoConfig {
    fn default() -> Self {
        IsoConfig::OccupancyHalf
    }
}

impl IsoConfig {
    pub fn level(&self, voxel_diagonal: f64) -> f64 {
        match *self {
            IsoConfig::OccupancyHalf => -(0.5f64).ln() / voxel_diagonal,
            IsoConfig::Fixed(v) => v,
        }
    }
}

// Bourke corner numbering.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Extracts the surface `{value = iso}` enclosing the region `value > iso`.
/// Vertices on shared lattice edges are welded, so closed level sets give
/// closed meshes.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64, frame: MeshFrame, object_id: u32) -> TriangleMesh {
    let [nx, ny, nz] = grid.dims;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut edge_vertex: HashMap<(usize, usize), u32> = HashMap::new();
    if nx < 2 || ny < 2 || nz < 2 {
        return TriangleMesh::new(vertices, faces, frame, object_id);
    }
    let lattice_index = |p: [usize; 3]| p[0] + nx * (p[1] + ny * p[2]);

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut values = [0.0; 8];
                let mut case = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    values[c] = grid.value(i + off[0], j + off[1], k + off[2]);
                    // Bourke's tables flag corners below the level; "outside" here.
                    if !(values[c] > iso) {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let mut local = [u32::MAX; 12];
                for (e, &[c0, c1]) in EDGES.iter().enumerate() {
                    let inside0 = values[c0] > iso;
                    let inside1 = values[c1] > iso;
                    if inside0 == inside1 {
                        continue;
                    }
                    let p0 = [i + CORNERS[c0][0], j + CORNERS[c0][1], k + CORNERS[c0][2]];
                    let p1 = [i + CORNERS[c1][0], j + CORNERS[c1][1], k + CORNERS[c1][2]];
                    let (lo, hi, f_lo, f_hi) = if lattice_index(p0) < lattice_index(p1) {
                        (p0, p1, values[c0], values[c1])
                    } else {
                        (p1, p0, values[c1], values[c0])
                    };
                    let axis = (0..3).find(|&a| lo[a] != hi[a]).unwrap();
                    let key = (lattice_index(lo), axis);
                    let idx = *edge_vertex.entry(key).or_insert_with(|| {
                        let t = (iso - f_lo) / (f_hi - f_lo);
                        let a = grid.position(lo[0], lo[1], lo[2]);
                        let b = grid.position(hi[0], hi[1], hi[2]);
                        vertices.push(a + (b - a) * t);
                        (vertices.len() - 1) as u32
                    });
                    local[e] = idx;
                }
                let row = &TRI_TABLE[case];
                let mut t = 0;
                while t < 16 && row[t] >= 0 {
                    let a = local[row[t] as usize];
                    let b = local[row[t + 1] as usize];
                    let c = local[row[t + 2] as usize];
                    // With inside/outside swapped relative to Bourke the table
                    // winding already points outward.
                    if a != b && b != c && a != c {
                        faces.push([a, b, c]);
                    }
                    t += 3;
                }
            }
        }
    }
    TriangleMesh::new(vertices, faces, frame, object_id)
}

/// Samples the density of `field` on a `resolution³` lattice spanning the
/// box `[-a, a]` (normalized `[0, 1]³`) and extracts its isosurface in
/// metric object coordinates.
///
/// The lattice is padded with one layer of zero density so that surfaces
/// touching the box close up.
pub fn extract_mesh<F: DensityField + ?Sized>(
    field: &F,
    resolution: usize,
    half_extents: &Vec3,
    iso: IsoConfig,
    object_id: u32,
) -> TriangleMesh {
    let res = resolution.max(2);
    let step = 1.0 / (res - 1) as f64;
    let mut normalized = Vec::with_capacity(res * res * res);
    for k in 0..res {
        for j in 0..res {
            for i in 0..res {
                normalized.push(Vec3::new(i as f64 * step, j as f64 * step, k as f64 * step));
            }
        }
    }
    let sigma = field.densities(&normalized);

    let padded = res + 2;
    let mut values = vec![0.0; padded * padded * padded];
    for k in 0..res {
        for j in 0..res {
            for i in 0..res {
                values[(i + 1) + padded * ((j + 1) + padded * (k + 1))] = sigma[i + res * (j + res * k)];
            }
        }
    }
    let spacing = half_extents * 2.0 * step;
    let grid = ScalarGrid {
        dims: [padded; 3],
        origin: -half_extents - spacing,
        spacing,
        values,
    };
    let level = iso.level(spacing.norm());
    marching_cubes(&grid, level, MeshFrame::Object, object_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::edge_face_counts;
    use crate::nerf::FnField;

    fn sphere_field(radius: f64) -> FnField<impl Fn(&Vec3) -> f64 + Sync> {
        FnField(move |u: &Vec3| {
            // Normalized [0,1]^3 mapped to [-0.5, 0.5]^3 (unit half-extents 0.5 box).
            if (u - Vec3::repeat(0.5)).norm() < radius {
                1.0e4
            } else {
                0.0
            }
        })
    }

    #[test]
    fn zero_field_gives_empty_mesh() {
        let f = FnField(|_: &Vec3| 0.0);
        let m = extract_mesh(&f, 16, &Vec3::repeat(0.5), IsoConfig::OccupancyHalf, 0);
        assert!(m.is_empty());
    }

    #[test]
    fn sphere_oracle_radius_and_watertight() {
        let res = 32;
        let m = extract_mesh(&sphere_field(0.3), res, &Vec3::repeat(0.5), IsoConfig::OccupancyHalf, 1);
        assert!(!m.is_empty());
        m.validate().unwrap();
        let voxel = 1.0 / (res - 1) as f64;
        for v in &m.vertices {
            assert!((v.norm() - 0.3).abs() <= 2.0 * voxel, "{}", v.norm());
        }
        for (edge, n) in edge_face_counts(&m) {
            assert_eq!(n, 2, "edge {edge:?}");
        }
        let volume: f64 = (0..m.faces.len())
            .map(|i| {
                let [a, b, c] = m.triangle(i);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum();
        assert!(volume > 0.0, "outward orientation expected");
    }

    #[test]
    fn field_touching_box_is_closed() {
        let f = FnField(|_: &Vec3| 1.0e4);
        let m = extract_mesh(&f, 8, &Vec3::new(0.2, 0.3, 0.4), IsoConfig::OccupancyHalf, 0);
        for (_, n) in edge_face_counts(&m) {
            assert_eq!(n, 2);
        }
    }

    #[test]
    fn iso_level_rule() {
        let d = 0.01;
        assert!((IsoConfig::OccupancyHalf.level(d) - std::f64::consts::LN_2 / d).abs() < 1e-9);
        assert_eq!(IsoConfig::Fixed(3.0).level(d), 3.0);
    }
}
