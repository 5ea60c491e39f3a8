use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use romap_core::geometry::{
    canonical_yaw, cuboid_corners, yaw_distance, CameraIntrinsics, ObjectPose, RigidTransform, Segment2, Vec3,
};
use romap_core::objslam::*;

fn unit(rng: &mut impl Rng) -> Vec3 {
    let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
    v.normalize()
}

fn brute_path(tree: &EifTree, x: &Vec3) -> f64 {
    let mut i = 0;
    let mut depth = 0usize;
    loop {
        match &tree.nodes[i] {
            EifNode::Split {
                normal,
                offset,
                left,
                right,
            } => {
                let plane_point = normal * *offset;
                i = if (x - plane_point).dot(normal) < 0.0 { *left } else { *right };
                depth += 1;
            }
            EifNode::Leaf { size, .. } => {
                let n = *size as f64;
                let c = match size {
                    0 | 1 => 0.0,
                    2 => 1.0,
                    _ => 2.0 * ((n - 1.0).ln() + 0.5772156649015329) - 2.0 * (n - 1.0) / n,
                };
                return depth as f64 + c;
            }
        }
    }
}

#[test]
fn far_point_has_maximum_score() {
    for copies in [1usize, 2] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.0, 0.1).unwrap();
        let cluster: Vec<Vec3> =
            (0..200).map(|_| Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng))).collect();
        let mut pts = Vec::new();
        for _ in 0..copies {
            pts.extend(cluster.iter().copied());
        }
        let far = Vec3::new(1.0, 0.0, 0.0);
        pts.push(far);
        let forest = eif_fit(&pts, &EifConfig::default(), 5).unwrap();
        let c = average_path_length(forest.subsample_size);
        let scores: Vec<f64> = pts
            .iter()
            .map(|p| {
                let h = forest.trees.iter().map(|t| brute_path(t, p)).sum::<f64>() / forest.trees.len() as f64;
                let s = 2f64.powf(-h / c);
                assert!((s - eif_score(&forest, p).unwrap()).abs() < 1e-12);
                s
            })
            .collect();
        let argmax = (0..scores.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
        assert_eq!(argmax, pts.len() - 1, "copies {copies}");
    }
}

#[test]
fn planted_outlier_benchmark() {
    let radius = 0.05;
    let (mut tp, mut flagged, mut planted) = (0usize, 0usize, 0usize);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts: Vec<Vec3> = (0..180)
            .map(|_| unit(&mut rng) * radius * rng.random::<f64>().cbrt())
            .collect();
        let outliers: Vec<Vec3> = (0..20).map(|_| unit(&mut rng) * 5.0 * radius).collect();
        pts.extend(outliers);
        let cfg = EifConfig::default();
        let forest = eif_fit(&pts, &cfg, seed).unwrap();
        let scores: Vec<f64> = pts.iter().map(|p| eif_score(&forest, p).unwrap()).collect();
        let mean_in = scores[..180].iter().sum::<f64>() / 180.0;
        let mean_out = scores[180..].iter().sum::<f64>() / 20.0;
        assert!(mean_out > mean_in, "seed {seed}");

        let keep = outlier_filter(&pts, &cfg, seed).unwrap();
        let removed: Vec<usize> = (0..pts.len()).filter(|i| !keep.contains(i)).collect();
        flagged += removed.len();
        tp += removed.iter().filter(|&&i| i >= 180).count();
        planted += 20;
    }
    let recall = tp as f64 / planted as f64;
    let precision = tp as f64 / flagged.max(1) as f64;
    assert!(recall >= 0.9 && precision >= 0.8, "recall {recall} precision {precision}");
}

#[test]
fn box_surface_size_within_spacing() {
    let half = Vec3::new(0.3, 0.2, 0.1);
    let step = 0.01;
    let mut pts = Vec::new();
    let n = |h: f64| (2.0 * h / step).round() as i32;
    for i in 0..=n(half.x) {
        for j in 0..=n(half.y) {
            for k in 0..=n(half.z) {
                let p = Vec3::new(-half.x + i as f64 * step, -half.y + j as f64 * step, -half.z + k as f64 * step);
                let on_face = (0..3).any(|a| (p[a].abs() - half[a]).abs() < 1e-9);
                if on_face {
                    pts.push(p);
                }
            }
        }
    }
    let pose = ObjectPose::new(Vec3::new(1.0, -0.5, 2.0), 0.4);
    let world: Vec<Vec3> = pts.iter().map(|p| pose.to_world(p)).collect();
    let a = estimate_size(&world, &pose.translation, pose.yaw, 1.0, 0.01).unwrap();
    assert!((a - half).abs().max() <= step);
    // Box contains the whole cloud at unit inflation.
    let t = estimate_translation(&world).unwrap();
    let t = recenter(&world, &t, pose.yaw).unwrap();
    let a = estimate_size(&world, &t, pose.yaw, 1.0, 0.01).unwrap();
    let fitted = ObjectPose::new(t, pose.yaw);
    for p in &world {
        let q = fitted.to_object(p);
        assert!((0..3).all(|k| q[k].abs() <= a[k] + 1e-12));
    }
}

fn oracle_project(k: &CameraIntrinsics, cam: &RigidTransform, p_world: &Vec3) -> [f64; 2] {
    let p = cam.rotation.transpose() * (p_world - cam.translation);
    [k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy]
}

#[test]
fn edge_projection_matches_matrix_oracle() {
    let k = CameraIntrinsics::from_fov(640, 480, 70.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for _ in 0..200 {
        let pose = ObjectPose::new(
            Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.1..0.1), rng.random_range(-0.2..0.2)),
            rng.random_range(-1.5..1.5),
        );
        let half = Vec3::new(rng.random_range(0.03..0.1), rng.random_range(0.03..0.1), rng.random_range(0.03..0.1));
        let eye = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-0.8..-0.3), rng.random_range(0.8..1.2));
        let cam = RigidTransform::look_at(eye, pose.translation).unwrap();
        let segs = project_box_edges(&pose, &half, &k, &cam).unwrap();
        // Independent nearest corner: the one closest to the eye.
        let corners = cuboid_corners(&pose, &half);
        let ci = (0..8)
            .min_by(|&a, &b| (corners[a] - eye).norm().total_cmp(&(corners[b] - eye).norm()))
            .unwrap();
        let local = pose.rotation().transpose() * (corners[ci] - pose.translation);
        for (axis, seg) in segs.iter().enumerate() {
            let mut other = local;
            other[axis] = -other[axis];
            let a = oracle_project(&k, &cam, &(pose.rotation() * local + pose.translation));
            let b = oracle_project(&k, &cam, &(pose.rotation() * other + pose.translation));
            let inside = |p: [f64; 2]| p[0] >= 0.0 && p[0] <= 639.0 && p[1] >= 0.0 && p[1] <= 479.0;
            if inside(a) && inside(b) {
                let s = seg.unwrap();
                for (got, want) in [(s.a, a), (s.b, b)] {
                    assert!((got[0] - want[0]).abs() < 1e-6 && (got[1] - want[1]).abs() < 1e-6);
                }
                checked += 1;
            }
        }
    }
    assert!(checked > 300);
}

#[test]
fn yaw_change_commutes_with_rotating_edges() {
    let k = CameraIntrinsics::from_fov(640, 480, 70.0);
    let cam = RigidTransform::look_at(Vec3::new(0.4, -0.5, 1.0), Vec3::zeros()).unwrap();
    let half = Vec3::new(0.1, 0.08, 0.06);
    let (theta, delta) = (0.2, 0.1);
    let rotated = project_box_edges(&ObjectPose::new(Vec3::zeros(), theta + delta), &half, &k, &cam).unwrap();
    // Rotate the 3D edges of the θ box by Δ about the vertical, then project.
    let base = ObjectPose::new(Vec3::zeros(), theta);
    let corners = cuboid_corners(&base, &half);
    let rot = romap_core::geometry::rotation_y(delta);
    let moved: Vec<Vec3> = corners.iter().map(|c| rot * c).collect();
    let eye = cam.center();
    let ci = (0..8).min_by(|&a, &b| (moved[a] - eye).norm().total_cmp(&(moved[b] - eye).norm())).unwrap();
    for (axis, seg) in rotated.iter().enumerate() {
        let j = ci ^ (1 << axis);
        let want = Segment2::new(oracle_project(&k, &cam, &moved[ci]), oracle_project(&k, &cam, &moved[j]));
        let s = seg.unwrap();
        assert!((s.angle() - want.angle()).abs() < 1e-9);
    }
}

fn line_problem(yaw_gt: f64, half: Vec3) -> LineYawProblem {
    let k = CameraIntrinsics::from_fov(640, 480, 60.0);
    let t = Vec3::new(0.0, -half.y, 0.0);
    let gt = ObjectPose::new(t, yaw_gt);
    let views = (0..6)
        .map(|i| {
            let a = i as f64 * 1.1;
            let cam = RigidTransform::look_at(Vec3::new(0.9 * a.cos(), -0.5, 0.9 * a.sin()), t).unwrap();
            let lines = project_box_edges(&gt, &half, &k, &cam).unwrap().into_iter().flatten().collect();
            LineView {
                camera_to_world: cam,
                lines,
            }
        })
        .collect();
    LineYawProblem {
        translation: t,
        half_extents: half,
        intrinsics: k,
        views,
        slope_tolerance: 10f64.to_radians(),
    }
}

#[test]
fn noiseless_lines_recover_yaw() {
    let half = Vec3::new(0.08, 0.06, 0.05);
    let problem = line_problem(20f64.to_radians(), half);
    let yaw = problem.solve().unwrap();
    assert!(yaw_distance(yaw, 20f64.to_radians()) <= 0.5f64.to_radians(), "{}", yaw.to_degrees());
    let at_gt = problem.cost(20f64.to_radians()).cost;
    for g in LineYawProblem::grid() {
        assert!(at_gt <= problem.cost(g).cost + 1e-15);
    }
    for gt_deg in [-40.0f64, -12.0, 0.0, 33.0] {
        let p = line_problem(gt_deg.to_radians(), half);
        let y = p.solve().unwrap();
        assert!(yaw_distance(y, gt_deg.to_radians()) <= 0.5f64.to_radians(), "{gt_deg}: {}", y.to_degrees());
    }
}

#[test]
fn no_matching_lines_gives_none() {
    let half = Vec3::new(0.08, 0.06, 0.05);
    let mut p = line_problem(0.3, half);
    for v in &mut p.views {
        v.lines.clear();
    }
    assert!(p.solve().is_none());
}

#[test]
fn pca_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let pts: Vec<Vec3> = (0..40)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0) * 3.0, rng.random(), rng.random_range(-1.0..1.0)))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
        let mz = pts.iter().map(|p| p.z).sum::<f64>() / n;
        let sxx = pts.iter().map(|p| (p.x - mx).powi(2)).sum::<f64>() / n;
        let szz = pts.iter().map(|p| (p.z - mz).powi(2)).sum::<f64>() / n;
        let sxz = pts.iter().map(|p| (p.x - mx) * (p.z - mz)).sum::<f64>() / n;
        // Principal axis angle in the (x, z) plane; yaw is its negative.
        let phi = 0.5 * (2.0 * sxz).atan2(sxx - szz);
        let got = estimate_yaw_pca(&pts).unwrap();
        assert!(yaw_distance(got.yaw, canonical_yaw(-phi)) < 1e-9);
    }
}
