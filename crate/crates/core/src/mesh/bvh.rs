use super::TriangleMesh;
use crate::geometry::{Aabb, Vec3};

/// Closest point to `p` on triangle `abc` (Ericson, Real-Time Collision
/// Detection, 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Möller–Trumbore; returns the ray parameter of the hit.
fn ray_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = origin - tri[0];
    let u = tvec.dot(&pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    (t > 1e-12).then_some(t)
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    // Leaf: triangles [start, start + count); inner: children at `start` and `start + 1`.
    start: u32,
    count: u32,
}

/// Bounding-volume hierarchy over the triangles of a mesh for exact
/// nearest-point and first-hit queries.
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    triangles: Vec<[Vec3; 3]>,
    nodes: Vec<Node>,
}

const LEAF_SIZE: usize = 4;

impl TriangleBvh {
    pub fn new(mesh: &TriangleMesh) -> Self {
        let mut triangles: Vec<[Vec3; 3]> = (0..mesh.faces.len()).map(|i| mesh.triangle(i)).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        if !triangles.is_empty() {
            nodes.push(Node {
                bounds: Aabb::empty(),
                start: 0,
                count: 0,
            });
            let n = triangles.len();
            build(&mut triangles, &mut nodes, 0, 0, n);
        }
        Self { triangles, nodes }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Nearest surface point and its squared distance.
    pub fn closest_point(&self, p: &Vec3) -> Option<(Vec3, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (Vec3::zeros(), f64::INFINITY);
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            if node.bounds.distance_squared(p) >= best.1 {
                continue;
            }
            if node.count > 0 {
                let s = node.start as usize;
                for tri in &self.triangles[s..s + node.count as usize] {
                    let q = closest_point_on_triangle(p, &tri[0], &tri[1], &tri[2]);
                    let d = (q - p).norm_squared();
                    if d < best.1 {
                        best = (q, d);
                    }
                }
            } else {
                let (l, r) = (node.start as usize, node.start as usize + 1);
                let dl = self.nodes[l].bounds.distance_squared(p);
                let dr = self.nodes[r].bounds.distance_squared(p);
                // Visit the nearer child first.
                if dl < dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        Some(best)
    }

    /// First intersection along the ray, if any.
    pub fn ray_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, Vec3)> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut best: Option<(f64, Vec3)> = None;
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            let limit = best.map_or(f64::INFINITY, |b| b.0);
            if !slab_hit(&node.bounds, origin, &inv, limit) {
                continue;
            }
            if node.count > 0 {
                let s = node.start as usize;
                for tri in &self.triangles[s..s + node.count as usize] {
                    if let Some(t) = ray_triangle(origin, dir, tri) {
                        if best.is_none_or(|b| t < b.0) {
                            let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
                            best = Some((t, n));
                        }
                    }
                }
            } else {
                stack.push(node.start as usize);
                stack.push(node.start as usize + 1);
            }
        }
        best
    }
}

fn slab_hit(b: &Aabb, o: &Vec3, inv: &Vec3, limit: f64) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = limit;
    for k in 0..3 {
        let a = (b.min[k] - o[k]) * inv[k];
        let c = (b.max[k] - o[k]) * inv[k];
        let (lo, hi) = if a <= c { (a, c) } else { (c, a) };
        // NaN from 0 * inf (origin on a slab plane with a parallel ray) keeps the bound.
        if lo > t0 {
            t0 = lo;
        }
        if hi < t1 {
            t1 = hi;
        }
    }
    t0 <= t1
}

fn build(tris: &mut [[Vec3; 3]], nodes: &mut Vec<Node>, idx: usize, start: usize, end: usize) {
    let mut bounds = Aabb::empty();
    let mut centroids = Aabb::empty();
    for t in &tris[start..end] {
        for v in t {
            bounds.grow(v);
        }
        centroids.grow(&((t[0] + t[1] + t[2]) / 3.0));
    }
    nodes[idx].bounds = bounds;
    let count = end - start;
    if count <= LEAF_SIZE {
        nodes[idx].start = start as u32;
        nodes[idx].count = count as u32;
        return;
    }
    let extent = centroids.max - centroids.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let key = |t: &[Vec3; 3]| t[0][axis] + t[1][axis] + t[2][axis];
    tris[start..end].sort_by(|a, b| key(a).total_cmp(&key(b)));
    let mid = start + count / 2;
    let left = nodes.len();
    for _ in 0..2 {
        nodes.push(Node {
            bounds: Aabb::empty(),
            start: 0,
            count: 0,
        });
    }
    nodes[idx].start = left as u32;
    nodes[idx].count = 0;
    build(tris, nodes, left, start, mid);
    build(tris, nodes, left + 1, mid, end);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closest_point_matches_brute_force() {
        let mesh = primitives::uv_sphere(0.4, 16, 9);
        let bvh = TriangleBvh::new(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let brute = (0..mesh.faces.len())
                .map(|i| {
                    let [a, b, c] = mesh.triangle(i);
                    (closest_point_on_triangle(&p, &a, &b, &c) - p).norm_squared()
                })
                .fold(f64::INFINITY, f64::min);
            let (_, d) = bvh.closest_point(&p).unwrap();
            assert!((d - brute).abs() < 1e-15, "{d} vs {brute}");
        }
    }

    #[test]
    fn ray_hits_box_face() {
        let mesh = primitives::box_mesh(&Vec3::new(1.0, 1.0, 1.0), 2);
        let bvh = TriangleBvh::new(&mesh);
        let (t, n) = bvh.ray_hit(&Vec3::new(-5.0, 0.1, 0.2), &Vec3::x()).unwrap();
        assert!((t - 4.0).abs() < 1e-12);
        assert!((n - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!(bvh.ray_hit(&Vec3::new(-5.0, 3.0, 0.0), &Vec3::x()).is_none());
    }

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = (Vec3::zeros(), Vec3::x(), Vec3::y());
        assert_eq!(closest_point_on_triangle(&Vec3::new(-1.0, -1.0, 0.0), &a, &b, &c), a);
        assert_eq!(closest_point_on_triangle(&Vec3::new(0.25, 0.25, 2.0), &a, &b, &c), Vec3::new(0.25, 0.25, 0.0));
        let q = closest_point_on_triangle(&Vec3::new(1.0, 1.0, 0.0), &a, &b, &c);
        assert!((q - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }
}
