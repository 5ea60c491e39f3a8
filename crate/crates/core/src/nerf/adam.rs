use serde::{Deserialize, Serialize};

use super::model::{Gradients, HashGridModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-15,
        }
    }
}

struct Corrections {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    bias1: f64,
    bias2: f64,
}

impl Corrections {
    fn new(cfg: &AdamConfig, step: u64) -> Self {
        let t = step as i32;
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            bias1: 1.0 - cfg.beta1.powi(t),
            bias2: 1.0 - cfg.beta2.powi(t),
        }
    }

    #[inline]
    fn update(&self, p: &mut f64, m: &mut f64, v: &mut f64, g: f64) {
        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
        let m_hat = *m / self.bias1;
        let v_hat = *v / self.bias2;
        *p -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
    }
}

/// One bias-corrected Adam step. Network parameters update densely; table
/// entries update only if the batch touched them, so untouched entries and
/// their moments stay bit-identical. The step counter is shared.
pub fn adam_step(model: &mut HashGridModel, grads: &Gradients, cfg: &AdamConfig) -> Result<()> {
    if grads.network.len() != model.network.len() || grads.tables.len() != model.tables.len() {
        return Err(Error::ShapeMismatch("gradient buffers sized for a different model".into()));
    }
    let f = model.encoding().features;
    if grads.network.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("network gradient".into()));
    }
    for &e in grads.touched_entries() {
        if grads.tables[e * f..(e + 1) * f].iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("hash table gradient at entry {e}")));
        }
    }
    model.step += 1;
    let c = Corrections::new(cfg, model.step);
    for i in 0..model.network.len() {
        c.update(
            &mut model.network[i],
            &mut model.m_network[i],
            &mut model.v_network[i],
            grads.network[i],
        );
    }
    for &e in grads.touched_entries() {
        for i in e * f..(e + 1) * f {
            c.update(&mut model.tables[i], &mut model.m_tables[i], &mut model.v_tables[i], grads.tables[i]);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::nerf::{ModelConfig, OutputGrad};

    fn small() -> ModelConfig {
        ModelConfig {
            levels: 2,
            features_per_level: 2,
            table_size_log2: 10,
            base_resolution: 4,
            finest_resolution: 16,
            hidden_width: 8,
            hidden_layers: 1,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn zero_gradients_leave_parameters() {
        let mut model = HashGridModel::new(small(), 3).unwrap();
        let before = model.clone();
        let grads = Gradients::for_model(&model);
        adam_step(&mut model, &grads, &AdamConfig::default()).unwrap();
        assert_eq!(model.tables, before.tables);
        assert_eq!(model.network, before.network);
        assert_eq!(model.step(), 1);
    }

    #[test]
    fn scalar_hand_computation() {
        let cfg = AdamConfig::default();
        let (mut p, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        let mut expected = 0.0;
        let (mut em, mut ev) = (0.0f64, 0.0f64);
        for t in 1..=5u64 {
            Corrections::new(&cfg, t).update(&mut p, &mut m, &mut v, 1.0);
            em = 0.9 * em + 0.1;
            ev = 0.99 * ev + 0.01;
            let mh = em / (1.0 - 0.9f64.powi(t as i32));
            let vh = ev / (1.0 - 0.99f64.powi(t as i32));
            expected -= 1e-2 * mh / (vh.sqrt() + 1e-15);
            if t == 1 {
                assert!((p + 1e-2 / (1.0 + 1e-15)).abs() < 1e-15);
            }
            assert!((p - expected).abs() <= 1e-15 * expected.abs(), "{p} vs {expected}");
        }
    }

    #[test]
    fn block_order_is_irrelevant() {
        let cfg = AdamConfig::default();
        let c = Corrections::new(&cfg, 3);
        let grads = [0.3, -1.2, 4.0, 0.0];
        let run = |order: [usize; 4]| {
            let mut p = [1.0, 2.0, 3.0, 4.0];
            let mut m = [0.1; 4];
            let mut v = [0.2; 4];
            for i in order {
                c.update(&mut p[i], &mut m[i], &mut v[i], grads[i]);
            }
            (p, m, v)
        };
        assert_eq!(run([0, 1, 2, 3]), run([2, 3, 0, 1]));
    }

    #[test]
    fn untouched_entries_stay_bit_identical() {
        let mut model = HashGridModel::new(small(), 5).unwrap();
        let before = model.clone();
        // Points confined to the low octant.
        let pts: Vec<Vec3> = (0..50).map(|i| Vec3::repeat(0.02 + 0.004 * i as f64)).collect();
        let (_, cache) = model.forward(&pts).unwrap();
        let mut grads = Gradients::for_model(&model);
        let up = vec![
            OutputGrad {
                d_sigma: 1.0,
                d_color: [0.5, -0.5, 0.2],
            };
            pts.len()
        ];
        model.backward(&cache, &up, &mut grads).unwrap();
        adam_step(&mut model, &grads, &AdamConfig::default()).unwrap();
        let f = model.encoding().features;
        let touched: std::collections::HashSet<usize> = grads.touched_entries().iter().copied().collect();
        let mut changed = 0;
        for e in 0..model.encoding().total_entries {
            let r = e * f..(e + 1) * f;
            if touched.contains(&e) {
                changed += (model.tables[r.clone()] != before.tables[r]) as usize;
            } else {
                assert_eq!(model.tables[r.clone()], before.tables[r.clone()]);
                assert!(model.m_tables[r.clone()].iter().all(|m| *m == 0.0));
                assert!(model.v_tables[r].iter().all(|v| *v == 0.0));
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn non_finite_gradient_rejected_without_update() {
        let mut model = HashGridModel::new(small(), 5).unwrap();
        let before = model.clone();
        let mut grads = Gradients::for_model(&model);
        grads.network[3] = f64::NAN;
        assert!(adam_step(&mut model, &grads, &AdamConfig::default()).is_err());
        assert_eq!(model, before);
    }
}
