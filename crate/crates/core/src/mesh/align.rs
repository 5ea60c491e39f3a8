use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, Vec3};

/// `q ≈ scale · rotation · p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Similarity {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }
}

/// Closed-form least-squares similarity between corresponding point sets
/// (Umeyama, via the SVD of the centered cross-covariance).
pub fn align_similarity(source: &[Vec3], target: &[Vec3]) -> Result<Similarity> {
    if source.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} source vs {} target points",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 3 {
        return Err(Error::Degenerate("similarity alignment needs at least 3 correspondences".into()));
    }
    let n = source.len() as f64;
    let mu_p = source.iter().sum::<Vec3>() / n;
    let mu_q = target.iter().sum::<Vec3>() / n;
    let mut cov = Mat3::zeros();
    let mut var_p = 0.0;
    for (p, q) in source.iter().zip(target) {
        let dp = p - mu_p;
        cov += (q - mu_q) * dp.transpose();
        var_p += dp.norm_squared();
    }
    cov /= n;
    var_p /= n;
    if var_p < 1e-18 {
        return Err(Error::Degenerate("source points coincide".into()));
    }
    let svd = SVD::new(cov, true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Degenerate("SVD failed".into())),
    };
    let sv = svd.singular_values;
    // Collinear sources leave two singular values at zero: rotation is not determined.
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted[1] <= 1e-12 * sorted[0].max(1e-300) {
        return Err(Error::Degenerate("correspondences are collinear".into()));
    }
    let mut s = Mat3::identity();
    if (u * vt).determinant() < 0.0 {
        // Flip the axis with the smallest singular value.
        let min_idx = (0..3).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).unwrap();
        s[(min_idx, min_idx)] = -1.0;
    }
    let rotation = u * s * vt;
    let trace: f64 = (0..3).map(|i| sv[i] * s[(i, i)]).sum();
    let scale = trace / var_p;
    let translation = mu_q - rotation * mu_p * scale;
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut impl Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn identical_sets() {
        let p = cloud(&mut ChaCha8Rng::seed_from_u64(1), 10);
        let s = align_similarity(&p, &p).unwrap();
        assert!((s.scale - 1.0).abs() < 1e-12);
        assert!((s.rotation - Mat3::identity()).norm() < 1e-12);
        assert!(s.translation.norm() < 1e-12);
    }

    #[test]
    fn scale_and_shift() {
        let p = cloud(&mut ChaCha8Rng::seed_from_u64(2), 10);
        let q: Vec<Vec3> = p.iter().map(|x| x * 2.0 + Vec3::x()).collect();
        let s = align_similarity(&p, &q).unwrap();
        assert!((s.scale - 2.0).abs() < 1e-9);
        assert!((s.translation - Vec3::x()).norm() < 1e-9);
        assert!((s.rotation - Mat3::identity()).norm() < 1e-9);
    }

    #[test]
    fn random_transform_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let p = cloud(&mut rng, 50);
            let axis = Unit::new_normalize(Vec3::new(rng.random(), rng.random(), rng.random::<f64>() + 0.1));
            let r = *Rotation3::from_axis_angle(&axis, rng.random_range(-3.0..3.0)).matrix();
            let scale = rng.random_range(0.2..5.0);
            let t = Vec3::new(rng.random(), rng.random(), rng.random());
            let q: Vec<Vec3> = p.iter().map(|x| r * x * scale + t).collect();
            let s = align_similarity(&p, &q).unwrap();
            assert!((s.scale - scale).abs() < 1e-6);
            assert!((s.rotation - r).norm() < 1e-6);
            assert!((s.translation - t).norm() < 1e-6);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let line: Vec<Vec3> = (0..5).map(|i| Vec3::x() * i as f64).collect();
        assert!(align_similarity(&line, &line).is_err());
        assert!(align_similarity(&line[..2], &line[..2]).is_err());
        let same = vec![Vec3::zeros(); 4];
        assert!(align_similarity(&same, &same).is_err());
    }
}
