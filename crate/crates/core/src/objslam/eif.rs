use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EifConfig {
    pub tree_count: usize,
    pub subsample_size: usize,
    pub max_depth: usize,
    /// Points scoring above this are outliers.
    pub score_threshold: f64,
    /// Clouds smaller than this are not filtered.
    pub min_points: usize,
}

impl Default for EifConfig {
    fn default() -> Self {
        Self {
            tree_count: 100,
            subsample_size: 256,
            max_depth: 8,
            score_threshold: 0.55,
            min_points: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EifNode {
    /// Points with `x·normal < offset` go left.
    Split {
        normal: Vec3,
        offset: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
        depth: usize,
    },
}

impl EifNode {
    /// A point on the splitting plane.
    pub fn intercept(&self) -> Option<Vec3> {
        match self {
            EifNode::Split { normal, offset, .. } => Some(normal * *offset),
            EifNode::Leaf { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EifTree {
    pub nodes: Vec<EifNode>,
}

impl EifTree {
    /// Path length of `x`: edges to its leaf plus the expected remaining
    /// depth of the points that share the leaf.
    pub fn path_length(&self, x: &Vec3) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                EifNode::Split {
                    normal,
                    offset,
                    left,
                    right,
                } => idx = if x.dot(normal) < *offset { *left } else { *right },
                EifNode::Leaf { size, depth } => return *depth as f64 + average_path_length(*size),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EifForest {
    pub trees: Vec<EifTree>,
    /// Effective subsample size ψ used for normalization.
    pub subsample_size: usize,
    pub max_depth: usize,
}

/// Average unsuccessful-search path length of a binary search tree on `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + 0.577_215_664_901_532_9) - 2.0 * (n - 1.0) / n
        }
    }
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn build(nodes: &mut Vec<EifNode>, points: &[Vec3], idx: Vec<usize>, depth: usize, max_depth: usize, rng: &mut impl Rng) -> usize {
    let me = nodes.len();
    nodes.push(EifNode::Leaf { size: idx.len(), depth });
    if depth >= max_depth || idx.len() <= 1 {
        return me;
    }
    let normal = random_unit(rng);
    let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
        let p = points[i].dot(&normal);
        (lo.min(p), hi.max(p))
    });
    if !(hi > lo) {
        // All points coincide along every direction that matters.
        return me;
    }
    let offset = rng.random_range(lo..hi);
    let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| points[i].dot(&normal) < offset);
    let left = build(nodes, points, l, depth + 1, max_depth, rng);
    let right = build(nodes, points, r, depth + 1, max_depth, rng);
    nodes[me] = EifNode::Split {
        normal,
        offset,
        left,
        right,
    };
    me
}

/// Fits an extended isolation forest with random-slope hyperplane splits.
pub fn eif_fit(points: &[Vec3], config: &EifConfig, seed: u64) -> Result<EifForest> {
    if points.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "isolation forest needs at least 2 points, got {}",
            points.len()
        )));
    }
    if config.tree_count == 0 || config.subsample_size < 2 {
        return Err(Error::Config("isolation forest needs trees and a subsample of at least 2".into()));
    }
    let psi = config.subsample_size.min(points.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = (0..config.tree_count)
        .map(|_| {
            let idx = sample_indices(&mut rng, points.len(), psi).into_vec();
            let mut nodes = Vec::new();
            build(&mut nodes, points, idx, 0, config.max_depth, &mut rng);
            EifTree { nodes }
        })
        .collect();
    Ok(EifForest {
        trees,
        subsample_size: psi,
        max_depth: config.max_depth,
    })
}

/// Anomaly score `2^(-E[h(x)] / c(ψ))` in `[0, 1]`.
pub fn eif_score(forest: &EifForest, x: &Vec3) -> Result<f64> {
    if forest.trees.is_empty() {
        return Err(Error::InvalidInput("isolation forest has no trees".into()));
    }
    let mean = forest.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / forest.trees.len() as f64;
    Ok(2f64.powf(-mean / average_path_length(forest.subsample_size)))
}

/// Indices of the points kept after isolation-forest filtering. Below the
/// minimum point count everything is kept; at most half the points are dropped.
pub fn outlier_filter(points: &[Vec3], config: &EifConfig, seed: u64) -> Result<Vec<usize>> {
    if points.len() < config.min_points.max(2) {
        return Ok((0..points.len()).collect());
    }
    let forest = eif_fit(points, config, seed)?;
    let scores = points.iter().map(|p| eif_score(&forest, p)).collect::<Result<Vec<_>>>()?;
    let mut keep: Vec<usize> = (0..points.len()).filter(|&i| scores[i] <= config.score_threshold).collect();
    let min_keep = points.len().div_ceil(2);
    if keep.len() < min_keep {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        keep = order[..min_keep].to_vec();
        keep.sort_unstable();
    }
    Ok(keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizer_values() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        let c256 = average_path_length(256);
        assert!((c256 - 10.244).abs() < 1e-3, "{c256}");
    }

    #[test]
    fn identical_points_score_equally() {
        let pts = vec![Vec3::new(1.0, 2.0, 3.0); 2];
        let f = eif_fit(&pts, &EifConfig::default(), 0).unwrap();
        assert_eq!(eif_score(&f, &pts[0]).unwrap(), eif_score(&f, &pts[1]).unwrap());
    }

    #[test]
    fn fit_needs_two_points() {
        assert!(eif_fit(&[Vec3::zeros()], &EifConfig::default(), 0).is_err());
        let empty = EifForest {
            trees: vec![],
            subsample_size: 2,
            max_depth: 1,
        };
        assert!(eif_score(&empty, &Vec3::zeros()).is_err());
    }

    #[test]
    fn tree_structure_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec3> = (0..300).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let f = eif_fit(&pts, &EifConfig::default(), 2).unwrap();
        for t in &f.trees {
            let mut reached = vec![false; t.nodes.len()];
            reached[0] = true;
            for (i, n) in t.nodes.iter().enumerate() {
                match n {
                    EifNode::Split { normal, left, right, .. } => {
                        assert!((normal.norm() - 1.0).abs() < 1e-12);
                        assert!(*left > i && *right > i);
                        reached[*left] = true;
                        reached[*right] = true;
                    }
                    EifNode::Leaf { depth, .. } => assert!(*depth <= f.max_depth),
                }
            }
            assert!(reached.iter().all(|r| *r));
        }
    }

    #[test]
    fn small_clouds_bypass() {
        let pts: Vec<Vec3> = (0..19).map(|i| Vec3::repeat(i as f64)).collect();
        assert_eq!(outlier_filter(&pts, &EifConfig::default(), 0).unwrap().len(), 19);
        let same = vec![Vec3::repeat(0.5); 40];
        assert_eq!(outlier_filter(&same, &EifConfig::default(), 0).unwrap().len(), 40);
    }
}
