use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bvh::{closest_point_on_triangle, TriangleBvh};
use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRatio {
    pub threshold_cm: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean distance from reconstruction samples to the ground truth.
    pub accuracy_cm: f64,
    /// Mean distance from ground-truth samples to the reconstruction.
    pub completion_cm: f64,
    pub completion_ratio: Vec<CompletionRatio>,
    pub pred_samples: usize,
    pub gt_samples: usize,
}

/// Area-uniform surface samples.
pub fn sample_surface(mesh: &TriangleMesh, count: usize, rng: &mut impl Rng) -> Vec<Vec3> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for i in 0..mesh.faces.len() {
        let [a, b, c] = mesh.triangle(i);
        total += (b - a).cross(&(c - a)).norm() * 0.5;
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let target = rng.random::<f64>() * total;
            let face = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(face);
            let r1: f64 = rng.random::<f64>().sqrt();
            let r2: f64 = rng.random();
            a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2)
        })
        .collect()
}

/// Exact point-to-mesh distances by scanning every triangle.
pub fn nearest_distances_brute_force(points: &[Vec3], mesh: &TriangleMesh) -> Vec<f64> {
    points
        .iter()
        .map(|p| {
            (0..mesh.faces.len())
                .map(|i| {
                    let [a, b, c] = mesh.triangle(i);
                    (closest_point_on_triangle(p, &a, &b, &c) - p).norm()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn nearest_distances(points: &[Vec3], bvh: &TriangleBvh) -> Vec<f64> {
    points
        .iter()
        .map(|p| bvh.closest_point(p).map_or(f64::INFINITY, |(_, d2)| d2.sqrt()))
        .collect()
}

/// Accuracy, Completion and Completion Ratio between a reconstruction and
/// its ground truth. Both meshes are sampled with the same seed so that
/// swapping the arguments swaps accuracy and completion exactly.
pub fn eval_metrics(
    pred: &TriangleMesh,
    gt: &TriangleMesh,
    thresholds_m: &[f64],
    samples_per_mesh: usize,
    seed: u64,
) -> Result<MetricsReport> {
    if pred.is_empty() {
        return Err(Error::Empty("predicted mesh"));
    }
    if gt.is_empty() {
        return Err(Error::Empty("ground-truth mesh"));
    }
    let pred_pts = sample_surface(pred, samples_per_mesh, &mut ChaCha8Rng::seed_from_u64(seed));
    let gt_pts = sample_surface(gt, samples_per_mesh, &mut ChaCha8Rng::seed_from_u64(seed));
    if pred_pts.is_empty() {
        return Err(Error::Empty("predicted mesh surface"));
    }
    if gt_pts.is_empty() {
        return Err(Error::Empty("ground-truth mesh surface"));
    }
    let to_pred = nearest_distances(&gt_pts, &TriangleBvh::new(pred));
    let to_gt = nearest_distances(&pred_pts, &TriangleBvh::new(gt));
    Ok(report_from_distances(&to_gt, &to_pred, thresholds_m))
}

pub(crate) fn report_from_distances(pred_to_gt: &[f64], gt_to_pred: &[f64], thresholds_m: &[f64]) -> MetricsReport {
    let mean = |d: &[f64]| d.iter().sum::<f64>() / d.len() as f64;
    let completion_ratio = thresholds_m
        .iter()
        .map(|&t| CompletionRatio {
            threshold_cm: t * 100.0,
            percent: 100.0 * gt_to_pred.iter().filter(|&&d| d < t).count() as f64 / gt_to_pred.len() as f64,
        })
        .collect();
    MetricsReport {
        accuracy_cm: mean(pred_to_gt) * 100.0,
        completion_cm: mean(gt_to_pred) * 100.0,
        completion_ratio,
        pred_samples: pred_to_gt.len(),
        gt_samples: gt_to_pred.len(),
    }
}
