use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::nerf::{adam_step, Gradients, OutputGrad};
use crate::render::volume::{composite, composite_backward};
use crate::render::{build_ray, over_background, over_background_backward, sample_uniform, RayClass};

use super::loss::{BatchCounts, LossAccumulator, LossReport, RayPrediction};
use super::{ObjectModel, TrainConfig, TrainingSnapshot};

struct PreparedRay {
    origin: Vec3,
    direction: Vec3,
    class: RayClass,
    target_color: [f64; 3],
    target_depth: Option<f64>,
    background: [f64; 3],
}

/// One optimizer step on rays drawn uniformly from the detection-box pixels
/// of every keyframe. Background rays are supervised with a fresh uniform
/// random color, which is also composited behind every ray when
/// `random_background` is set, so that only empty space reproduces it.
/// Occluder rays are dropped.
pub fn train_iteration(
    object: &mut ObjectModel,
    snapshot: &TrainingSnapshot,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LossReport> {
    if object.object_id != snapshot.object_id {
        return Err(Error::InvalidInput(format!(
            "model of object {} given a snapshot of object {}",
            object.object_id, snapshot.object_id
        )));
    }
    if snapshot.keyframes.is_empty() {
        return Err(Error::Empty("keyframe set"));
    }
    let intr = &snapshot.intrinsics;
    let mut cumulative = Vec::with_capacity(snapshot.keyframes.len());
    let mut ranges = Vec::with_capacity(snapshot.keyframes.len());
    let mut total = 0u64;
    for kf in &snapshot.keyframes {
        let (lo, hi) = kf.bbox.pixel_range(kf.frame.rgb.width, kf.frame.rgb.height);
        let w = (hi[0] - lo[0] + 1) as u64;
        total += w * (hi[1] - lo[1] + 1) as u64;
        cumulative.push(total);
        ranges.push((lo, w));
    }

    let n = config.samples_per_ray;
    let mut rays = Vec::with_capacity(config.rays_per_iteration);
    let mut distances = Vec::with_capacity(config.rays_per_iteration * n);
    let mut spacings = Vec::with_capacity(config.rays_per_iteration * n);
    let mut counts = BatchCounts::default();
    let mut missed = 0;
    for _ in 0..config.rays_per_iteration {
        let idx = rng.random_range(0..total);
        let k = cumulative.partition_point(|&c| c <= idx);
        let local = idx - if k == 0 { 0 } else { cumulative[k - 1] };
        let (lo, w) = ranges[k];
        let (u, v) = (lo[0] + (local % w) as u32, lo[1] + (local / w) as u32);
        let kf = &snapshot.keyframes[k];
        let Some(ray) = build_ray(&kf.frame, intr, &snapshot.pose, &snapshot.half_extents, kf.instance_id, &kf.depth, u, v) else {
            missed += 1;
            continue;
        };
        counts.add(ray.class, ray.has_depth());
        if ray.class == RayClass::Occluder {
            continue;
        }
        let s = sample_uniform(ray.t_near, ray.t_far, n, config.sampling, rng)?;
        let random: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let target_color = match ray.class {
            RayClass::Background => random,
            _ => ray.target_color,
        };
        let background = if config.random_background { random } else { [0.0; 3] };
        distances.extend_from_slice(&s.distances);
        spacings.extend_from_slice(&s.spacings);
        rays.push(PreparedRay {
            origin: ray.origin,
            direction: ray.direction,
            class: ray.class,
            target_color,
            target_depth: ray.target_depth,
            background,
        });
    }

    let mut acc = LossAccumulator::new(counts, config.loss_weights());
    let mut grads = match object.grads.take() {
        Some(g) if g.tables.len() == object.model.tables().len() && g.network.len() == object.model.network().len() => g,
        _ => Gradients::for_model(&object.model),
    };
    let model = &object.model;
    let chunk = config.chunk_rays;
    let mut points = Vec::with_capacity(chunk * n);
    let mut sigmas = vec![0.0; n];
    let mut colors = vec![[0.0; 3]; n];
    let mut weights = vec![0.0; n];
    let mut occ = vec![0.0; n];
    let mut trans = vec![0.0; n + 1];
    let mut direct = vec![0.0; n];
    let mut d_sigma = vec![0.0; n];
    let mut d_colors = vec![[0.0; 3]; n];
    let mut out_grads = Vec::with_capacity(chunk * n);
    let result = (|| -> Result<()> {
        for (ci, block) in rays.chunks(chunk).enumerate() {
            let base = ci * chunk;
            points.clear();
            for (ri, ray) in block.iter().enumerate() {
                for &t in &distances[(base + ri) * n..(base + ri + 1) * n] {
                    points.push(snapshot.normalize(&(ray.origin + ray.direction * t)));
                }
            }
            let (evals, cache) = model.forward(&points)?;
            out_grads.clear();
            for (ri, ray) in block.iter().enumerate() {
                let span = (base + ri) * n..(base + ri + 1) * n;
                let (dist, spc) = (&distances[span.clone()], &spacings[span]);
                for (j, e) in evals[ri * n..(ri + 1) * n].iter().enumerate() {
                    sigmas[j] = e.sigma;
                    colors[j] = e.color;
                }
                let (color, depth) = composite(&sigmas, &colors, dist, spc, &mut weights, &mut occ, &mut trans);
                let color = over_background(color, trans[n], ray.background);
                let pred = RayPrediction {
                    class: ray.class,
                    color,
                    depth,
                    target_color: ray.target_color,
                    target_depth: ray.target_depth,
                    sigmas: &sigmas,
                };
                let (gc, gd) = acc.add_into(&pred, &mut direct);
                composite_backward(&colors, dist, spc, &weights, &trans, gc, gd, &mut d_sigma, &mut d_colors);
                over_background_backward(spc, trans[n], ray.background, gc, &mut d_sigma);
                for j in 0..n {
                    out_grads.push(OutputGrad {
                        d_sigma: d_sigma[j] + direct[j],
                        d_color: d_colors[j],
                    });
                }
            }
            model.backward(&cache, &out_grads, &mut grads)?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        grads.clear();
        object.grads = Some(grads);
        return Err(e);
    }
    let stepped = if rays.is_empty() { Ok(()) } else { adam_step(&mut object.model, &grads, &config.adam) };
    grads.clear();
    object.grads = Some(grads);
    stepped?;
    object.iterations += 1;
    Ok(acc.finish(object.iterations, missed, n))
}
