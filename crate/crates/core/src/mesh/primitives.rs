//! Closed triangle meshes of simple solids in their object frame
//! (vertical axis y, centered at the origin, outward winding).

use std::collections::HashMap;

use super::{MeshFrame, TriangleMesh};
use crate::geometry::Vec3;

struct Welder {
    vertices: Vec<Vec3>,
    index: HashMap<[u64; 3], u32>,
    faces: Vec<[u32; 3]>,
}

impl Welder {
    fn new() -> Self {
        Self {
            vertices: Vec::new(),
            index: HashMap::new(),
            faces: Vec::new(),
        }
    }

    fn vertex(&mut self, p: Vec3) -> u32 {
        // -0.0 and 0.0 must weld together.
        let key = [p.x + 0.0, p.y + 0.0, p.z + 0.0].map(f64::to_bits);
        *self.index.entry(key).or_insert_with(|| {
            self.vertices.push(p);
            (self.vertices.len() - 1) as u32
        })
    }

    fn tri(&mut self, a: Vec3, b: Vec3, c: Vec3) {
        let (ia, ib, ic) = (self.vertex(a), self.vertex(b), self.vertex(c));
        if ia != ib && ib != ic && ia != ic {
            self.faces.push([ia, ib, ic]);
        }
    }

    fn quad(&mut self, a: Vec3, b: Vec3, c: Vec3, d: Vec3) {
        self.tri(a, b, c);
        self.tri(a, c, d);
    }

    fn finish(self) -> TriangleMesh {
        TriangleMesh::new(self.vertices, self.faces, MeshFrame::Object, 0)
    }
}

/// Axis-aligned box with every face split into `subdivisions²` quads.
pub fn box_mesh(half_extents: &Vec3, subdivisions: usize) -> TriangleMesh {
    let n = subdivisions.max(1);
    let mut w = Welder::new();
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            let (u_axis, v_axis) = if sign > 0.0 {
                ((axis + 1) % 3, (axis + 2) % 3)
            } else {
                ((axis + 2) % 3, (axis + 1) % 3)
            };
            let point = |i: usize, j: usize| {
                let mut p = Vec3::zeros();
                p[axis] = sign * half_extents[axis];
                p[u_axis] = (2.0 * i as f64 / n as f64 - 1.0) * half_extents[u_axis];
                p[v_axis] = (2.0 * j as f64 / n as f64 - 1.0) * half_extents[v_axis];
                p
            };
            for i in 0..n {
                for j in 0..n {
                    w.quad(point(i, j), point(i + 1, j), point(i + 1, j + 1), point(i, j + 1));
                }
            }
        }
    }
    w.finish()
}

pub fn uv_sphere(radius: f64, slices: usize, stacks: usize) -> TriangleMesh {
    let slices = slices.max(3);
    let stacks = stacks.max(2);
    let mut w = Welder::new();
    let point = |i: usize, j: usize| {
        if j == 0 {
            return Vec3::new(0.0, -radius, 0.0);
        }
        if j == stacks {
            return Vec3::new(0.0, radius, 0.0);
        }
        let phi = std::f64::consts::PI * j as f64 / stacks as f64;
        let theta = 2.0 * std::f64::consts::PI * (i % slices) as f64 / slices as f64;
        Vec3::new(
            radius * phi.sin() * theta.cos(),
            -radius * phi.cos(),
            radius * phi.sin() * theta.sin(),
        )
    };
    for j in 0..stacks {
        for i in 0..slices {
            w.quad(point(i, j), point(i, j + 1), point(i + 1, j + 1), point(i + 1, j));
        }
    }
    w.finish()
}

/// Cylinder around the y axis.
pub fn cylinder(radius: f64, half_height: f64, segments: usize) -> TriangleMesh {
    let segments = segments.max(3);
    let mut w = Welder::new();
    let rim = |i: usize, y: f64| {
        let theta = 2.0 * std::f64::consts::PI * (i % segments) as f64 / segments as f64;
        Vec3::new(radius * theta.cos(), y, radius * theta.sin())
    };
    let bottom = Vec3::new(0.0, -half_height, 0.0);
    let top = Vec3::new(0.0, half_height, 0.0);
    for i in 0..segments {
        w.quad(
            rim(i, -half_height),
            rim(i, half_height),
            rim(i + 1, half_height),
            rim(i + 1, -half_height),
        );
        w.tri(bottom, rim(i, -half_height), rim(i + 1, -half_height));
        w.tri(top, rim(i + 1, half_height), rim(i, half_height));
    }
    w.finish()
}

/// Concave L-shaped block: an L profile in the x-y plane extruded along z,
/// filling `[-hx, hx] × [-hy, hy] × [-hz, hz]` minus a notch at the
/// `(+x, -y)` corner of relative size `notch` (0..1) per axis.
pub fn l_bracket(half_extents: &Vec3, notch: f64) -> TriangleMesh {
    let (hx, hy, hz) = (half_extents.x, half_extents.y, half_extents.z);
    let nx = hx - 2.0 * hx * notch;
    let ny = -hy + 2.0 * hy * notch;
    // Counter-clockwise seen from +z; (nx, hy) splits the top edge so the
    // two cap rectangles share it without a T-junction.
    let profile = [
        [-hx, -hy],
        [nx, -hy],
        [nx, ny],
        [hx, ny],
        [hx, hy],
        [nx, hy],
        [-hx, hy],
    ];
    let k = profile.len();
    let mut w = Welder::new();
    let p = |i: usize, z: f64| Vec3::new(profile[i % k][0], profile[i % k][1], z);
    for i in 0..k {
        w.quad(p(i, -hz), p(i + 1, -hz), p(i + 1, hz), p(i, hz));
    }
    let cap_tris = [[0, 1, 2], [0, 2, 5], [0, 5, 6], [2, 3, 4], [2, 4, 5]];
    for t in cap_tris {
        w.tri(p(t[0], hz), p(t[1], hz), p(t[2], hz));
        w.tri(p(t[0], -hz), p(t[2], -hz), p(t[1], -hz));
    }
    w.finish()
}

#[cfg(test)]
pub(crate) fn edge_face_counts(mesh: &TriangleMesh) -> HashMap<(u32, u32), usize> {
    let mut counts = HashMap::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts
}
