//! Box translation, yaw and size from the object's point cloud and the
//! line segments observed in its keyframes.

use std::borrow::Borrow;

use nalgebra::{Matrix2, SymmetricEigen};

use crate::dataset::Frame;
use crate::error::{Error, Result};
use crate::geometry::{
    canonical_yaw, nearest_corner_edges, project_segment, rotation_y, wrap_line_angle, Aabb, CameraIntrinsics,
    ObjectPose, RigidTransform, Segment2, Vec3,
};

use super::{ObjectLandmark, ObjSlamConfig};

/// Center of the world-frame bounds of the cloud.
pub fn estimate_translation(points: &[Vec3]) -> Result<Vec3> {
    if points.is_empty() {
        return Err(Error::Empty("object point cloud"));
    }
    let b = Aabb::from_points(points);
    Ok((b.max + b.min) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaYaw {
    pub yaw: f64,
    /// Set when the horizontal covariance has no dominant direction.
    pub degenerate: bool,
}

/// Dominant horizontal direction of the cloud as a canonical yaw.
pub fn estimate_yaw_pca(points: &[Vec3]) -> Result<PcaYaw> {
    if points.is_empty() {
        return Err(Error::Empty("object point cloud"));
    }
    let n = points.len() as f64;
    let (mx, mz) = points.iter().fold((0.0, 0.0), |(x, z), p| (x + p.x, z + p.z));
    let (mx, mz) = (mx / n, mz / n);
    let mut cov = Matrix2::zeros();
    for p in points {
        let (dx, dz) = (p.x - mx, p.z - mz);
        cov[(0, 0)] += dx * dx;
        cov[(0, 1)] += dx * dz;
        cov[(1, 1)] += dz * dz;
    }
    cov[(1, 0)] = cov[(0, 1)];
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let (l0, l1) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    let scale = l0.abs() + l1.abs();
    if scale <= f64::MIN_POSITIVE || (l0 - l1).abs() <= 1e-9 * scale {
        return Ok(PcaYaw {
            yaw: 0.0,
            degenerate: true,
        });
    }
    let v = if l0 > l1 { eig.eigenvectors.column(0) } else { eig.eigenvectors.column(1) };
    // The object x axis maps to (cos θ, -sin θ) in the (x, z) plane.
    let yaw = (-v[1]).atan2(v[0]);
    Ok(PcaYaw {
        yaw: canonical_yaw(yaw),
        degenerate: false,
    })
}

/// Object-frame bounds `(min, max)` of the cloud under pose `(t, θ)`.
fn object_bounds(points: &[Vec3], translation: &Vec3, yaw: f64) -> Aabb {
    let rt = rotation_y(yaw).transpose();
    let mut b = Aabb::empty();
    for p in points {
        b.grow(&(rt * (p - translation)));
    }
    b
}

/// Half extents of the object-frame bounds, inflated by `inflation` and
/// then floored at `floor`.
pub fn estimate_size(points: &[Vec3], translation: &Vec3, yaw: f64, inflation: f64, floor: f64) -> Result<Vec3> {
    if points.is_empty() {
        return Err(Error::Empty("object point cloud"));
    }
    let b = object_bounds(points, translation, yaw);
    Ok(((b.max - b.min) / 2.0 * inflation).map(|a| a.max(floor)))
}

/// Moves `translation` to the center of the object-frame bounds at `yaw`.
pub fn recenter(points: &[Vec3], translation: &Vec3, yaw: f64) -> Result<Vec3> {
    if points.is_empty() {
        return Err(Error::Empty("object point cloud"));
    }
    let b = object_bounds(points, translation, yaw);
    Ok(translation + rotation_y(yaw) * ((b.max + b.min) / 2.0))
}

/// Projects the three orthogonal box edges that leave the corner nearest
/// the camera. Individual edges outside the image are `None`.
pub fn project_box_edges(
    pose: &ObjectPose,
    half_extents: &Vec3,
    intrinsics: &CameraIntrinsics,
    camera_to_world: &RigidTransform,
) -> Result<[Option<Segment2>; 3]> {
    let edges = nearest_corner_edges(pose, half_extents, &camera_to_world.center());
    let behind = edges.iter().all(|(a, b)| {
        camera_to_world.inverse_apply(a).z <= 0.0 && camera_to_world.inverse_apply(b).z <= 0.0
    });
    if behind {
        return Err(Error::Degenerate("box is entirely behind the camera".into()));
    }
    Ok(edges.map(|(a, b)| project_segment(intrinsics, camera_to_world, &a, &b)))
}

/// One keyframe's camera and the observed segments of the object.
#[derive(Debug, Clone)]
pub struct LineView {
    pub camera_to_world: RigidTransform,
    pub lines: Vec<Segment2>,
}

/// The accumulated angle-error objective for a box of fixed center and size.
#[derive(Debug, Clone)]
pub struct LineYawProblem {
    pub translation: Vec3,
    pub half_extents: Vec3,
    pub intrinsics: CameraIntrinsics,
    pub views: Vec<LineView>,
    /// Largest angle difference that counts as a match, radians.
    pub slope_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YawCost {
    pub cost: f64,
    pub matched: usize,
}

impl LineYawProblem {
    /// Each visible projected edge pairs with its closest-in-angle observed
    /// line; unmatched edges pay the tolerance squared.
    pub fn cost(&self, yaw: f64) -> YawCost {
        let pose = ObjectPose::new(self.translation, yaw);
        let tol2 = self.slope_tolerance * self.slope_tolerance;
        let mut out = YawCost { cost: 0.0, matched: 0 };
        for view in &self.views {
            let Ok(edges) = project_box_edges(&pose, &self.half_extents, &self.intrinsics, &view.camera_to_world) else {
                continue;
            };
            for edge in edges.iter().flatten() {
                let g = edge.angle();
                let best = view
                    .lines
                    .iter()
                    .map(|l| wrap_line_angle(l.angle() - g).powi(2))
                    .fold(f64::INFINITY, f64::min);
                if best <= tol2 {
                    out.cost += best;
                    out.matched += 1;
                } else {
                    out.cost += tol2;
                }
            }
        }
        out
    }

    /// The 5° grid over `[-45°, 45°]` used for initialization.
    pub fn grid() -> [f64; 19] {
        std::array::from_fn(|k| (-45.0 + 5.0 * k as f64).to_radians())
    }

    /// Best grid sample refined by golden-section search on its ±5°
    /// neighbourhood. `None` when no line matches at any grid sample.
    pub fn solve(&self) -> Option<f64> {
        let grid = Self::grid();
        let costs: Vec<YawCost> = grid.iter().map(|&y| self.cost(y)).collect();
        if costs.iter().all(|c| c.matched == 0) {
            return None;
        }
        let (k, _) = costs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost).then(a.0.cmp(&b.0)))?;
        let step = 5f64.to_radians();
        let f = |y: f64| self.cost(y).cost;
        let (mut lo, mut hi) = (grid[k] - step, grid[k] + step);
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - r * (hi - lo);
        let mut x2 = lo + r * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        while hi - lo > 1e-7 {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - r * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + r * (hi - lo);
                f2 = f(x2);
            }
        }
        let refined = (lo + hi) / 2.0;
        // The piecewise objective can hide a better grid point from the bracket.
        let best = if f(refined) <= costs[k].cost { refined } else { grid[k] };
        Some(canonical_yaw(best))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YawEstimate {
    pub yaw: f64,
    /// False when the estimate came from the PCA fallback.
    pub from_lines: bool,
    pub pca_degenerate: bool,
}

/// Builds the line objective from the landmark's keyframes and solves it,
/// falling back to PCA when no observed line matches.
pub fn estimate_yaw_lines<F: Borrow<Frame>>(
    landmark: &ObjectLandmark,
    frames: &[F],
    intrinsics: &CameraIntrinsics,
    config: &ObjSlamConfig,
) -> Result<YawEstimate> {
    let pca = estimate_yaw_pca(&landmark.points)?;
    let views = landmark
        .keyframes
        .iter()
        .filter_map(|fid| {
            let frame: &Frame = frames.iter().map(|f| f.borrow()).find(|f| f.frame_id == *fid)?;
            let instance = *landmark.observations.get(fid)?;
            let lines: Vec<Segment2> = frame
                .lines
                .iter()
                .filter(|l| l.instance_id == instance)
                .map(|l| l.segment)
                .collect();
            (!lines.is_empty()).then(|| LineView {
                camera_to_world: frame.pose,
                lines,
            })
        })
        .collect::<Vec<_>>();
    let problem = LineYawProblem {
        translation: landmark.pose.translation,
        half_extents: landmark.half_extents,
        intrinsics: *intrinsics,
        views,
        slope_tolerance: config.slope_tolerance_deg.to_radians(),
    };
    Ok(match problem.solve() {
        Some(yaw) => YawEstimate {
            yaw,
            from_lines: true,
            pca_degenerate: pca.degenerate,
        },
        None => YawEstimate {
            yaw: pca.yaw,
            from_lines: false,
            pca_degenerate: pca.degenerate,
        },
    })
}

/// Full re-estimation after a keyframe: center from the cloud bounds, a
/// provisional box at the current yaw, the line-based yaw, then the final
/// size with the center moved to the middle of the object-frame bounds.
pub fn localize_landmark<F: Borrow<Frame>>(
    landmark: &mut ObjectLandmark,
    frames: &[F],
    intrinsics: &CameraIntrinsics,
    config: &ObjSlamConfig,
) -> Result<YawEstimate> {
    let pts = &landmark.points;
    let t = estimate_translation(pts)?;
    let prior = if landmark.keyframes.len() > 1 {
        landmark.pose.yaw
    } else {
        estimate_yaw_pca(pts)?.yaw
    };
    let t = recenter(pts, &t, prior)?;
    landmark.pose = ObjectPose::new(t, prior);
    landmark.half_extents = estimate_size(pts, &t, prior, config.box_inflation, config.size_floor)?;
    let est = estimate_yaw_lines(landmark, frames, intrinsics, config)?;
    let t = recenter(&landmark.points, &landmark.pose.translation, est.yaw)?;
    landmark.pose = ObjectPose::new(t, est.yaw);
    landmark.half_extents = estimate_size(&landmark.points, &t, est.yaw, config.box_inflation, config.size_floor)?;
    landmark.yaw_degenerate = !est.from_lines && est.pca_degenerate;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn translation_examples() {
        let t = estimate_translation(&[Vec3::zeros(), Vec3::repeat(2.0)]).unwrap();
        assert_eq!(t, Vec3::repeat(1.0));
        let p = Vec3::new(0.3, -1.0, 2.0);
        assert_eq!(estimate_translation(&[p]).unwrap(), p);
        assert!(estimate_translation(&[]).is_err());
    }

    #[test]
    fn pca_axis_aligned_and_rotated() {
        let pts: Vec<Vec3> = (0..50).map(|i| Vec3::new(i as f64 * 0.02, 0.0, ((i % 3) as f64) * 0.01)).collect();
        let y = estimate_yaw_pca(&pts).unwrap();
        assert!(y.yaw.abs() < 0.05 && !y.degenerate);
        let r = rotation_y(30f64.to_radians());
        let rotated: Vec<Vec3> = pts.iter().map(|p| r * p).collect();
        let y = estimate_yaw_pca(&rotated).unwrap();
        assert!((y.yaw - 30f64.to_radians() - (estimate_yaw_pca(&pts).unwrap().yaw)).abs() < 1e-9);
    }

    #[test]
    fn pca_isotropic_is_flagged() {
        let pts = [Vec3::x(), -Vec3::x(), Vec3::z(), -Vec3::z()];
        let y = estimate_yaw_pca(&pts).unwrap();
        assert_eq!(y.yaw, 0.0);
        assert!(y.degenerate);
        assert!(estimate_yaw_pca(&[Vec3::zeros(); 5]).unwrap().degenerate);
    }

    #[test]
    fn size_examples() {
        let pts = [Vec3::new(-1.0, -2.0, -3.0), Vec3::new(1.0, 2.0, 3.0)];
        let a = estimate_size(&pts, &Vec3::zeros(), 0.0, 1.0, 0.01).unwrap();
        assert_eq!(a, Vec3::new(1.0, 2.0, 3.0));
        let a = estimate_size(&[Vec3::repeat(4.0)], &Vec3::repeat(4.0), 0.3, 1.1, 0.01).unwrap();
        assert_eq!(a, Vec3::repeat(0.01));
        assert!(estimate_size(&[], &Vec3::zeros(), 0.0, 1.0, 0.01).is_err());
    }

    #[test]
    fn translation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec3> = (0..100).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let v = Vec3::new(0.5, -0.25, 2.0);
        let moved: Vec<Vec3> = pts.iter().map(|p| p + v).collect();
        let t0 = estimate_translation(&pts).unwrap();
        let t1 = estimate_translation(&moved).unwrap();
        assert!((t1 - t0 - v).norm() < 1e-12);
        let a0 = estimate_size(&pts, &t0, 0.2, 1.1, 0.01).unwrap();
        let a1 = estimate_size(&moved, &t1, 0.2, 1.1, 0.01).unwrap();
        assert!((a0 - a1).norm() < 1e-12);
    }

    #[test]
    fn vertical_edge_is_vertical() {
        let k = CameraIntrinsics::from_fov(640, 480, 60.0);
        let pose = ObjectPose::new(Vec3::new(0.0, 0.0, 5.0), 0.0);
        let e = project_box_edges(&pose, &Vec3::repeat(0.5), &k, &RigidTransform::identity()).unwrap();
        let vertical = e[1].unwrap();
        assert!((vertical.angle() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let behind = ObjectPose::new(Vec3::new(0.0, 0.0, -5.0), 0.0);
        assert!(project_box_edges(&behind, &Vec3::repeat(0.5), &k, &RigidTransform::identity()).is_err());
    }

    #[test]
    fn grid_is_five_degree_steps() {
        let g = LineYawProblem::grid();
        assert!((g[0].to_degrees() + 45.0).abs() < 1e-12);
        assert!((g[18].to_degrees() - 45.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| ((w[1] - w[0]).to_degrees() - 5.0).abs() < 1e-9));
    }
}
