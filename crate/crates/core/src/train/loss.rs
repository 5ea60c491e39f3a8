use serde::{Deserialize, Serialize};

use crate::render::RayClass;

/// Per-iteration loss components and batch composition.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: u64,
    pub rgb: f64,
    pub depth: f64,
    pub random_color: f64,
    pub density: f64,
    pub total: f64,
    pub object_rays: usize,
    pub depth_rays: usize,
    pub background_rays: usize,
    pub occluder_rays: usize,
    /// Drawn pixels whose ray misses the object box.
    pub missed_rays: usize,
    /// Mean density over all background-ray samples.
    pub mean_background_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the depth term λ₁.
    pub depth: f64,
    /// Weight of the density term λ₂.
    pub density: f64,
    /// Use plain sums instead of per-ray-count means.
    pub raw_sums: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            depth: 0.5,
            density: 0.01,
            raw_sums: false,
        }
    }
}

/// Rendered output of one ray next to its supervision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayPrediction<'a> {
    pub class: RayClass,
    pub color: [f64; 3],
    pub depth: f64,
    /// Observed color for object rays, the random color for background rays.
    pub target_color: [f64; 3],
    pub target_depth: Option<f64>,
    pub sigmas: &'a [f64],
}

/// Gradient of the total loss with respect to one ray's rendered color and
/// depth, plus the direct density-term gradient on each of its samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RayLossGrad {
    pub d_color: [f64; 3],
    pub d_depth: f64,
    pub d_sigma: Vec<f64>,
}

/// Counts of each supervised ray set, used for normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BatchCounts {
    pub object: usize,
    pub depth: usize,
    pub background: usize,
    pub occluder: usize,
}

impl BatchCounts {
    pub fn of<'a>(preds: impl IntoIterator<Item = &'a RayPrediction<'a>>) -> Self {
        let mut c = Self::default();
        for p in preds {
            c.add(p.class, p.target_depth.is_some());
        }
        c
    }

    pub fn add(&mut self, class: RayClass, has_depth: bool) {
        match class {
            RayClass::Object => {
                self.object += 1;
                if has_depth {
                    self.depth += 1;
                }
            }
            RayClass::Background => self.background += 1,
            RayClass::Occluder => self.occluder += 1,
        }
    }
}

fn l2_with_grad(a: &[f64; 3], b: &[f64; 3]) -> (f64, [f64; 3]) {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if n > 0.0 {
        (n, [d[0] / n, d[1] / n, d[2] / n])
    } else {
        (0.0, [0.0; 3])
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Accumulates the four loss terms ray by ray once the batch composition is
/// known, so large batches can be processed in chunks.
#[derive(Debug, Clone)]
pub struct LossAccumulator {
    weights: LossWeights,
    scale_rgb: f64,
    scale_depth: f64,
    scale_rr: f64,
    /// Per background ray; the per-sample scale also divides by the sample count.
    scale_density: f64,
    counts: BatchCounts,
    rgb: f64,
    depth: f64,
    rr: f64,
    density: f64,
    background_sigma: f64,
    background_samples: usize,
}

impl LossAccumulator {
    pub fn new(counts: BatchCounts, weights: LossWeights) -> Self {
        let inv = |n: usize| if weights.raw_sums || n == 0 { 1.0 } else { 1.0 / n as f64 };
        Self {
            weights,
            scale_rgb: inv(counts.object),
            scale_depth: inv(counts.depth),
            scale_rr: inv(counts.background),
            scale_density: inv(counts.background),
            counts,
            rgb: 0.0,
            depth: 0.0,
            rr: 0.0,
            density: 0.0,
            background_sigma: 0.0,
            background_samples: 0,
        }
    }

    /// Adds one ray, writing the per-sample density gradient into `d_sigma`
    /// (cleared first) and returning the color and depth gradients.
    pub fn add_into(&mut self, p: &RayPrediction<'_>, d_sigma: &mut [f64]) -> ([f64; 3], f64) {
        d_sigma.iter_mut().for_each(|g| *g = 0.0);
        match p.class {
            RayClass::Object => {
                let (l, g) = l2_with_grad(&p.color, &p.target_color);
                self.rgb += l;
                let s = self.scale_rgb;
                let mut d_depth = 0.0;
                if let Some(target) = p.target_depth {
                    let e = p.depth - target;
                    self.depth += e.abs();
                    d_depth = self.weights.depth * self.scale_depth * sign(e);
                }
                ([g[0] * s, g[1] * s, g[2] * s], d_depth)
            }
            RayClass::Background => {
                let (l, g) = l2_with_grad(&p.color, &p.target_color);
                self.rr += l;
                let n = p.sigmas.len().max(1) as f64;
                let per_sample = if self.weights.raw_sums { 1.0 } else { self.scale_density / n };
                for (d, s) in d_sigma.iter_mut().zip(p.sigmas) {
                    self.density += s.abs();
                    self.background_sigma += s;
                    *d = self.weights.density * per_sample * sign(*s);
                }
                self.background_samples += p.sigmas.len();
                let s = self.scale_rr;
                ([g[0] * s, g[1] * s, g[2] * s], 0.0)
            }
            RayClass::Occluder => ([0.0; 3], 0.0),
        }
    }

    pub fn add(&mut self, p: &RayPrediction<'_>) -> RayLossGrad {
        let mut d_sigma = vec![0.0; p.sigmas.len()];
        let (d_color, d_depth) = self.add_into(p, &mut d_sigma);
        RayLossGrad {
            d_color,
            d_depth,
            d_sigma,
        }
    }

    pub fn finish(&self, iteration: u64, missed_rays: usize, samples_per_ray: usize) -> LossReport {
        let rgb = self.rgb * self.scale_rgb;
        let depth = self.depth * self.scale_depth;
        let random_color = self.rr * self.scale_rr;
        let density = if self.weights.raw_sums {
            self.density
        } else {
            self.density * self.scale_density / samples_per_ray.max(1) as f64
        };
        LossReport {
            iteration,
            rgb,
            depth,
            random_color,
            density,
            total: rgb + random_color + self.weights.depth * depth + self.weights.density * density,
            object_rays: self.counts.object,
            depth_rays: self.counts.depth,
            background_rays: self.counts.background,
            occluder_rays: self.counts.occluder,
            missed_rays,
            mean_background_sigma: if self.background_samples == 0 {
                0.0
            } else {
                self.background_sigma / self.background_samples as f64
            },
        }
    }
}

/// Losses and gradients for a complete batch.
pub fn compute_losses(preds: &[RayPrediction<'_>], weights: &LossWeights, iteration: u64) -> (LossReport, Vec<RayLossGrad>) {
    let mut acc = LossAccumulator::new(BatchCounts::of(preds), *weights);
    let grads = preds.iter().map(|p| acc.add(p)).collect();
    let n = preds.iter().find(|p| p.class == RayClass::Background).map_or(1, |p| p.sigmas.len());
    (acc.finish(iteration, 0, n), grads)
}
