use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::encoding::{HashEncoding, CORNER_COUNT};
use super::{sigmoid, softplus, ColorActivation, DensityActivation, DensityField, ModelConfig};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

const OUTPUTS: usize = 4;

/// Density and color of one sample point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEval {
    pub sigma: f64,
    pub color: [f64; 3],
}

/// Loss gradient with respect to one point's activated outputs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OutputGrad {
    pub d_sigma: f64,
    pub d_color: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    weights: usize,
    bias: usize,
}

/// Intermediates of a forward pass, consumed by [`HashGridModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    positions: Vec<Vec3>,
    features: Vec<f64>,
    /// Post-ReLU activations of each hidden layer, `batch × width`.
    hidden: Vec<Vec<f64>>,
    raw: Vec<f64>,
    fingerprint: (usize, usize),
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Raw network outputs `(density, r, g, b)` per point.
    pub fn raw_outputs(&self) -> &[f64] {
        &self.raw
    }
}

/// Accumulated parameter gradients. Table gradients are dense in memory
/// but only the entries listed in `touched` are ever non-zero.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub tables: Vec<f64>,
    pub network: Vec<f64>,
    touched_flag: Vec<bool>,
    touched: Vec<usize>,
}

impl Gradients {
    pub fn for_model(model: &HashGridModel) -> Self {
        Self {
            tables: vec![0.0; model.tables.len()],
            network: vec![0.0; model.network.len()],
            touched_flag: vec![false; model.encoding.total_entries],
            touched: Vec::new(),
        }
    }

    /// Table entries (not scalars) looked up since the last clear.
    pub fn touched_entries(&self) -> &[usize] {
        &self.touched
    }

    pub fn clear(&mut self) {
        let f = if self.touched_flag.is_empty() {
            0
        } else {
            self.tables.len() / self.touched_flag.len()
        };
        for &e in &self.touched {
            self.touched_flag[e] = false;
            self.tables[e * f..(e + 1) * f].iter_mut().for_each(|g| *g = 0.0);
        }
        self.touched.clear();
        self.network.iter_mut().for_each(|g| *g = 0.0);
    }

    fn mark(&mut self, entry: usize) {
        if !self.touched_flag[entry] {
            self.touched_flag[entry] = true;
            self.touched.push(entry);
        }
    }
}

/// Hash-grid encoding plus ReLU network, with optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct HashGridModel {
    config: ModelConfig,
    encoding: HashEncoding,
    layers: Vec<Layer>,
    pub(crate) tables: Vec<f64>,
    pub(crate) network: Vec<f64>,
    pub(crate) m_tables: Vec<f64>,
    pub(crate) v_tables: Vec<f64>,
    pub(crate) m_network: Vec<f64>,
    pub(crate) v_network: Vec<f64>,
    pub(crate) step: u64,
}

fn layout(config: &ModelConfig) -> (Vec<Layer>, usize) {
    let mut widths = vec![config.encoded_width()];
    widths.extend(std::iter::repeat_n(config.hidden_width, config.hidden_layers));
    widths.push(OUTPUTS);
    let mut offset = 0;
    let layers = widths
        .windows(2)
        .map(|w| {
            let layer = Layer {
                inputs: w[0],
                outputs: w[1],
                weights: offset,
                bias: offset + w[0] * w[1],
            };
            offset += w[0] * w[1] + w[1];
            layer
        })
        .collect();
    (layers, offset)
}

impl HashGridModel {
    /// Tables uniform in ±1e-4, weights uniform in ±1/sqrt(fan_in), zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut model = Self::zeroed(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in model.tables.iter_mut() {
            *t = rng.random_range(-1e-4..=1e-4);
        }
        for layer in &model.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in &mut model.network[layer.weights..layer.bias] {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(model)
    }

    /// All parameters and moments zero.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let encoding = HashEncoding::new(&config);
        let (layers, net_len) = layout(&config);
        let table_len = encoding.total_entries * encoding.features;
        Ok(Self {
            config,
            encoding,
            layers,
            tables: vec![0.0; table_len],
            network: vec![0.0; net_len],
            m_tables: vec![0.0; table_len],
            v_tables: vec![0.0; table_len],
            m_network: vec![0.0; net_len],
            v_network: vec![0.0; net_len],
            step: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn encoding(&self) -> &HashEncoding {
        &self.encoding
    }

    pub fn tables(&self) -> &[f64] {
        &self.tables
    }

    pub fn tables_mut(&mut self) -> &mut [f64] {
        &mut self.tables
    }

    pub fn network(&self) -> &[f64] {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut [f64] {
        &mut self.network
    }

    /// Number of optimizer steps taken.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn parameter_count(&self) -> usize {
        self.tables.len() + self.network.len()
    }

    /// First and second moments of the table entries, for locality checks.
    pub fn table_moments(&self) -> (&[f64], &[f64]) {
        (&self.m_tables, &self.v_tables)
    }

    pub fn hash_encode(&self, x: &Vec3) -> Vec<f64> {
        let mut out = vec![0.0; self.encoding.output_width()];
        self.encoding.encode_into(&self.tables, x, &mut out);
        out
    }

    fn check_network(&self) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            if self.network[layer.weights..layer.bias].iter().any(|w| !w.is_finite()) {
                return Err(Error::NonFinite(format!("network layer {i} weights")));
            }
            if self.network[layer.bias..layer.bias + layer.outputs]
                .iter()
                .any(|w| !w.is_finite())
            {
                return Err(Error::NonFinite(format!("network layer {i} biases")));
            }
        }
        Ok(())
    }

    /// Evaluates density and color at normalized positions (clamped to
    /// `[0, 1]³`), keeping what the backward pass needs.
    pub fn forward(&self, points: &[Vec3]) -> Result<(Vec<PointEval>, ForwardCache)> {
        if points.is_empty() {
            return Err(Error::Empty("forward batch"));
        }
        self.check_network()?;
        let batch = points.len();
        let width = self.encoding.output_width();
        let f = self.encoding.features;
        let positions: Vec<Vec3> = points.iter().map(|p| p.map(|c| c.clamp(0.0, 1.0))).collect();
        let mut features = vec![0.0; batch * width];
        for (p, row) in positions.iter().zip(features.chunks_exact_mut(width)) {
            self.encoding.encode_into(&self.tables, p, row);
        }
        if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
            let level = (bad % width) / f;
            return Err(Error::NonFinite(format!("hash table level {level}")));
        }

        let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() - 1);
        let mut raw = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            let input: &[f64] = if li == 0 { &features } else { &hidden[li - 1] };
            let mut out = vec![0.0; batch * layer.outputs];
            let bias = &self.network[layer.bias..layer.bias + layer.outputs];
            for row in out.chunks_exact_mut(layer.outputs) {
                row.copy_from_slice(bias);
            }
            // out (B×o) += in (B×i) · Wᵀ (i×o)
            gemm(
                batch,
                layer.inputs,
                layer.outputs,
                input,
                (layer.inputs, 1),
                &self.network[layer.weights..layer.bias],
                (1, layer.inputs),
                1.0,
                &mut out,
                (layer.outputs, 1),
            );
            if li + 1 < self.layers.len() {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
                hidden.push(out);
            } else {
                raw = out;
            }
        }

        let evals = raw
            .chunks_exact(OUTPUTS)
            .map(|r| PointEval {
                sigma: self.density_activation(r[0]),
                color: [self.color_activation(r[1]), self.color_activation(r[2]), self.color_activation(r[3])],
            })
            .collect();
        let cache = ForwardCache {
            positions,
            features,
            hidden,
            raw,
            fingerprint: (self.tables.len(), self.network.len()),
        };
        Ok((evals, cache))
    }

    fn density_activation(&self, x: f64) -> f64 {
        match self.config.density_activation {
            DensityActivation::Softplus => softplus(x),
            DensityActivation::Exp => x.min(80.0).exp(),
        }
    }

    fn density_derivative(&self, x: f64) -> f64 {
        match self.config.density_activation {
            DensityActivation::Softplus => sigmoid(x),
            DensityActivation::Exp => {
                if x > 80.0 {
                    0.0
                } else {
                    x.exp()
                }
            }
        }
    }

    fn color_activation(&self, x: f64) -> f64 {
        match self.config.color_activation {
            ColorActivation::Sigmoid => sigmoid(x),
        }
    }

    /// Reverse-mode pass: accumulates exact parameter gradients into `grads`.
    pub fn backward(&self, cache: &ForwardCache, output_grads: &[OutputGrad], grads: &mut Gradients) -> Result<()> {
        let batch = cache.len();
        if output_grads.len() != batch {
            return Err(Error::ShapeMismatch(format!(
                "{} output gradients for a batch of {batch}",
                output_grads.len()
            )));
        }
        if cache.fingerprint != (self.tables.len(), self.network.len()) {
            return Err(Error::ShapeMismatch("forward cache from a different model".into()));
        }
        if grads.tables.len() != self.tables.len() || grads.network.len() != self.network.len() {
            return Err(Error::ShapeMismatch("gradient buffers sized for a different model".into()));
        }

        let mut upstream = vec![0.0; batch * OUTPUTS];
        for ((d, raw), g) in upstream.chunks_exact_mut(OUTPUTS).zip(cache.raw.chunks_exact(OUTPUTS)).zip(output_grads) {
            d[0] = g.d_sigma * self.density_derivative(raw[0]);
            for k in 0..3 {
                let c = self.color_activation(raw[k + 1]);
                d[k + 1] = g.d_color[k] * c * (1.0 - c);
            }
        }

        for li in (0..self.layers.len()).rev() {
            let layer = self.layers[li];
            let input: &[f64] = if li == 0 { &cache.features } else { &cache.hidden[li - 1] };
            // dW (o×i) += upstreamᵀ (o×B) · input (B×i)
            gemm(
                layer.outputs,
                batch,
                layer.inputs,
                &upstream,
                (1, layer.outputs),
                input,
                (layer.inputs, 1),
                1.0,
                &mut grads.network[layer.weights..layer.bias],
                (layer.inputs, 1),
            );
            let db = &mut grads.network[layer.bias..layer.bias + layer.outputs];
            for row in upstream.chunks_exact(layer.outputs) {
                for (g, u) in db.iter_mut().zip(row) {
                    *g += u;
                }
            }
            // d input (B×i) = upstream (B×o) · W (o×i)
            let mut down = vec![0.0; batch * layer.inputs];
            gemm(
                batch,
                layer.outputs,
                layer.inputs,
                &upstream,
                (layer.outputs, 1),
                &self.network[layer.weights..layer.bias],
                (layer.inputs, 1),
                0.0,
                &mut down,
                (layer.inputs, 1),
            );
            if li > 0 {
                for (d, a) in down.iter_mut().zip(&cache.hidden[li - 1]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            upstream = down;
        }

        // Scatter feature gradients onto the grid corners.
        let width = self.encoding.output_width();
        let f = self.encoding.features;
        for (p, dfeat) in cache.positions.iter().zip(upstream.chunks_exact(width)) {
            for (l, level) in self.encoding.levels.iter().enumerate() {
                let (slots, weights) = self.encoding.corners(level, p);
                let g = &dfeat[l * f..(l + 1) * f];
                for c in 0..CORNER_COUNT {
                    let slot = slots[c];
                    grads.mark(slot);
                    let dst = &mut grads.tables[slot * f..(slot + 1) * f];
                    for k in 0..f {
                        dst[k] += weights[c] * g[k];
                    }
                }
            }
        }
        Ok(())
    }
}

impl DensityField for HashGridModel {
    fn densities(&self, normalized: &[Vec3]) -> Vec<f64> {
        let mut out = Vec::with_capacity(normalized.len());
        for chunk in normalized.chunks(4096) {
            match self.forward(chunk) {
                Ok((evals, _)) => out.extend(evals.iter().map(|e| e.sigma)),
                Err(_) => out.extend(std::iter::repeat_n(0.0, chunk.len())),
            }
        }
        out
    }
}

/// `c = a·b + beta·c` with explicit (row, column) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
    c_strides: (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent = |rows: usize, cols: usize, s: (usize, usize)| (rows - 1) * s.0 + (cols - 1) * s.1 + 1;
    assert!(k == 0 || a.len() >= extent(m, k, a_strides));
    assert!(k == 0 || b.len() >= extent(k, n, b_strides));
    assert!(c.len() >= extent(m, n, c_strides));
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            c_strides.0 as isize,
            c_strides.1 as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> ModelConfig {
        ModelConfig {
            levels: 1,
            features_per_level: 1,
            table_size_log2: 6,
            base_resolution: 2,
            finest_resolution: 2,
            hidden_width: 2,
            hidden_layers: 1,
            ..ModelConfig::default()
        }
    }

    fn small_config(layers: usize) -> ModelConfig {
        ModelConfig {
            levels: 3,
            features_per_level: 2,
            table_size_log2: 8,
            base_resolution: 2,
            finest_resolution: 16,
            hidden_width: 5,
            hidden_layers: layers,
            ..ModelConfig::default()
        }
    }

    fn randomize(model: &mut HashGridModel, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in model.tables.iter_mut() {
            *t = rng.random_range(-scale..scale);
        }
        for w in model.network.iter_mut() {
            *w = rng.random_range(-scale..scale);
        }
    }

    /// Scalar objective Σ a·σ + b·c used for gradient checks.
    fn objective(model: &HashGridModel, pts: &[Vec3], coef: &[OutputGrad]) -> f64 {
        let (evals, _) = model.forward(pts).unwrap();
        evals
            .iter()
            .zip(coef)
            .map(|(e, g)| g.d_sigma * e.sigma + (0..3).map(|k| g.d_color[k] * e.color[k]).sum::<f64>())
            .sum()
    }

    fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Vec3> {
        (0..n).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect()
    }

    fn random_coefs(rng: &mut impl Rng, n: usize) -> Vec<OutputGrad> {
        (0..n)
            .map(|_| OutputGrad {
                d_sigma: rng.random_range(-1.0..1.0),
                d_color: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            })
            .collect()
    }

    fn max_rel_error(model: &mut HashGridModel, pts: &[Vec3], coefs: &[OutputGrad], h: f64) -> f64 {
        let (_, cache) = model.forward(pts).unwrap();
        let mut grads = Gradients::for_model(model);
        model.backward(&cache, coefs, &mut grads).unwrap();
        let mut worst = 0.0f64;
        let mut check = |analytic: f64, numeric: f64| {
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(err);
        };
        for i in 0..model.network.len() {
            let orig = model.network[i];
            model.network[i] = orig + h;
            let up = objective(model, pts, coefs);
            model.network[i] = orig - h;
            let down = objective(model, pts, coefs);
            model.network[i] = orig;
            check(grads.network[i], (up - down) / (2.0 * h));
        }
        let f = model.encoding.features;
        for &e in grads.touched_entries() {
            for k in 0..f {
                let i = e * f + k;
                let orig = model.tables[i];
                model.tables[i] = orig + h;
                let up = objective(model, pts, coefs);
                model.tables[i] = orig - h;
                let down = objective(model, pts, coefs);
                model.tables[i] = orig;
                check(grads.tables[i], (up - down) / (2.0 * h));
            }
        }
        worst
    }

    #[test]
    fn zero_parameters_give_constant_output() {
        let model = HashGridModel::zeroed(ModelConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (evals, _) = model.forward(&random_points(&mut rng, 64)).unwrap();
        for e in evals {
            assert!((e.sigma - std::f64::consts::LN_2).abs() < 1e-15);
            assert_eq!(e.color, [0.5; 3]);
        }
    }

    #[test]
    fn sigma_nonnegative_and_colors_bounded() {
        let mut model = HashGridModel::new(small_config(2), 1).unwrap();
        randomize(&mut model, 2, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (evals, _) = model.forward(&random_points(&mut rng, 10_000)).unwrap();
        for e in evals {
            assert!(e.sigma >= 0.0);
            assert!(e.color.iter().all(|c| (0.0..=1.0).contains(c)));
        }
    }

    #[test]
    fn toy_model_full_jacobian() {
        let mut model = HashGridModel::new(toy_config(), 5).unwrap();
        randomize(&mut model, 6, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = random_points(&mut rng, 3);
        // One output component at a time gives every Jacobian row.
        for out in 0..4 {
            let coefs: Vec<OutputGrad> = (0..pts.len())
                .map(|_| {
                    let mut g = OutputGrad::default();
                    if out == 0 {
                        g.d_sigma = 1.0;
                    } else {
                        g.d_color[out - 1] = 1.0;
                    }
                    g
                })
                .collect();
            let err = max_rel_error(&mut model, &pts, &coefs, 1e-3);
            assert!(err < 1e-3, "output {out}: {err}");
        }
    }

    #[test]
    fn randomized_gradient_check() {
        for seed in 0..20 {
            let layers = 1 + (seed as usize % 3);
            let mut model = HashGridModel::new(small_config(layers), seed).unwrap();
            randomize(&mut model, 100 + seed, 0.8);
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let pts = random_points(&mut rng, 6);
            let coefs = random_coefs(&mut rng, 6);
            let err = max_rel_error(&mut model, &pts, &coefs, 1e-5);
            assert!(err < 1e-3, "seed {seed}: {err}");
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let model = HashGridModel::new(small_config(1), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = random_points(&mut rng, 10);
        let (_, cache) = model.forward(&pts).unwrap();
        let mut grads = Gradients::for_model(&model);
        model.backward(&cache, &vec![OutputGrad::default(); 10], &mut grads).unwrap();
        assert!(grads.network.iter().all(|g| *g == 0.0));
        assert!(grads.tables.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn corner_gradient_scales_with_weight() {
        // With every table entry equal the encoded feature is independent of x,
        // so the upstream factor is fixed and only the trilinear weight varies.
        let mut model = HashGridModel::new(toy_config(), 1).unwrap();
        randomize(&mut model, 9, 1.0);
        model.tables.iter_mut().for_each(|t| *t = 0.3);
        let level = model.encoding.levels[0];
        let slot = model.encoding.vertex_slot(&level, [0, 0, 0]);
        let grad_at = |x: Vec3| {
            let (_, cache) = model.forward(&[x]).unwrap();
            let mut g = Gradients::for_model(&model);
            let d = OutputGrad {
                d_sigma: 1.0,
                d_color: [0.0; 3],
            };
            model.backward(&cache, &[d], &mut g).unwrap();
            g.tables[slot]
        };
        // Resolution 2: w000 = (1 - 2x)(1 - 2y)(1 - 2z).
        let x1 = Vec3::new(0.1, 0.1, 0.1);
        let x2 = Vec3::new(0.3, 0.1, 0.1);
        let (g1, g2) = (grad_at(x1), grad_at(x2));
        assert!(g1.abs() > 1e-6);
        assert!((g2 - 0.5 * g1).abs() < 1e-12 * g1.abs(), "{g1} {g2}");
        // Each corner receives weight × the same upstream factor.
        let (_, cache) = model.forward(&[x1]).unwrap();
        let mut g = Gradients::for_model(&model);
        model
            .backward(&cache, &[OutputGrad { d_sigma: 1.0, d_color: [0.0; 3] }], &mut g)
            .unwrap();
        let (slots, weights) = model.encoding.corners(&level, &x1);
        let u = g.tables[slots[0]] / weights[0];
        for c in 0..CORNER_COUNT {
            assert!((g.tables[slots[c]] - u * weights[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let model = HashGridModel::new(small_config(1), 0).unwrap();
        let pts = vec![Vec3::repeat(0.5); 4];
        let (_, cache) = model.forward(&pts).unwrap();
        let mut grads = Gradients::for_model(&model);
        assert!(model.backward(&cache, &[OutputGrad::default(); 3], &mut grads).is_err());
        let other = HashGridModel::new(small_config(2), 0).unwrap();
        let mut other_grads = Gradients::for_model(&other);
        assert!(model.backward(&cache, &[OutputGrad::default(); 4], &mut other_grads).is_err());
    }

    #[test]
    fn non_finite_parameter_is_named() {
        let mut model = HashGridModel::new(small_config(1), 0).unwrap();
        model.network[0] = f64::NAN;
        let err = model.forward(&[Vec3::repeat(0.5)]).unwrap_err();
        assert!(err.to_string().contains("layer 0 weights"), "{err}");

        let mut model = HashGridModel::new(small_config(1), 0).unwrap();
        model.tables.iter_mut().for_each(|t| *t = f64::INFINITY);
        let err = model.forward(&[Vec3::repeat(0.5)]).unwrap_err();
        assert!(err.to_string().contains("hash table level 0"), "{err}");
    }

    #[test]
    fn forward_is_deterministic() {
        let model = HashGridModel::new(ModelConfig::default(), 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 300);
        let (a, _) = model.forward(&pts).unwrap();
        let (b, _) = model.forward(&pts).unwrap();
        assert_eq!(a, b);
    }
}
