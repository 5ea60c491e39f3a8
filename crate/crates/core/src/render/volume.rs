use crate::error::{Error, Result};

/// Composited color and depth of one ray with per-sample weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderResult {
    pub color: [f64; 3],
    pub depth: f64,
    pub weights: Vec<f64>,
    pub occupancies: Vec<f64>,
    /// `T_i = ∏_{j<i} (1 - o_j)` for `i = 0..=N`; the last entry is the
    /// probability of passing every sample.
    pub transmittance: Vec<f64>,
}

impl RenderResult {
    pub fn opacity(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Gradients of a scalar loss through one rendered ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderGrad {
    pub d_sigma: Vec<f64>,
    pub d_color: Vec<[f64; 3]>,
}

/// Alpha compositing: `o_i = 1 - exp(-σ_i δ_i)`, `w_i = T_i o_i`,
/// `Ĉ = Σ w_i c_i`, `D̂ = Σ w_i d_i`.
pub fn volume_render(sigmas: &[f64], colors: &[[f64; 3]], distances: &[f64], spacings: &[f64]) -> Result<RenderResult> {
    let n = sigmas.len();
    if colors.len() != n || distances.len() != n || spacings.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} densities, {} colors, {} distances, {} spacings",
            colors.len(),
            distances.len(),
            spacings.len()
        )));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0)) {
        return Err(Error::InvalidInput(format!("density {s} is negative or NaN")));
    }
    let mut weights = vec![0.0; n];
    let mut occupancies = vec![0.0; n];
    let mut transmittance = vec![0.0; n + 1];
    let (color, depth) = composite(sigmas, colors, distances, spacings, &mut weights, &mut occupancies, &mut transmittance);
    Ok(RenderResult {
        color,
        depth,
        weights,
        occupancies,
        transmittance,
    })
}

/// Allocation-free compositing core; inputs are assumed validated.
#[inline]
pub(crate) fn composite(
    sigmas: &[f64],
    colors: &[[f64; 3]],
    distances: &[f64],
    spacings: &[f64],
    weights: &mut [f64],
    occupancies: &mut [f64],
    transmittance: &mut [f64],
) -> ([f64; 3], f64) {
    let mut t = 1.0;
    let mut color = [0.0; 3];
    let mut depth = 0.0;
    for i in 0..sigmas.len() {
        transmittance[i] = t;
        let o = -(-sigmas[i] * spacings[i]).exp_m1();
        let w = t * o;
        occupancies[i] = o;
        weights[i] = w;
        for k in 0..3 {
            color[k] += w * colors[i][k];
        }
        depth += w * distances[i];
        t *= 1.0 - o;
    }
    transmittance[sigmas.len()] = t;
    (color, depth)
}

/// Backward pass given upstream gradients `∂L/∂Ĉ` and `∂L/∂D̂`:
/// `∂L/∂σ_k = δ_k (T_{k+1} s_k - Σ_{i>k} w_i s_i)` with `s_i = g_C·c_i + g_D d_i`,
/// and `∂L/∂c_i = w_i g_C`.
pub fn volume_render_backward(
    result: &RenderResult,
    colors: &[[f64; 3]],
    distances: &[f64],
    spacings: &[f64],
    d_color: [f64; 3],
    d_depth: f64,
) -> RenderGrad {
    let n = result.weights.len();
    let mut grad = RenderGrad {
        d_sigma: vec![0.0; n],
        d_color: vec![[0.0; 3]; n],
    };
    composite_backward(
        colors,
        distances,
        spacings,
        &result.weights,
        &result.transmittance,
        d_color,
        d_depth,
        &mut grad.d_sigma,
        &mut grad.d_color,
    );
    grad
}

#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn composite_backward(
    colors: &[[f64; 3]],
    distances: &[f64],
    spacings: &[f64],
    weights: &[f64],
    transmittance: &[f64],
    d_color: [f64; 3],
    d_depth: f64,
    d_sigma: &mut [f64],
    d_colors: &mut [[f64; 3]],
) {
    let mut suffix = 0.0;
    for k in (0..weights.len()).rev() {
        let c = &colors[k];
        let s = d_color[0] * c[0] + d_color[1] * c[1] + d_color[2] * c[2] + d_depth * distances[k];
        d_sigma[k] = spacings[k] * (transmittance[k + 1] * s - suffix);
        suffix += weights[k] * s;
        for j in 0..3 {
            d_colors[k][j] = weights[k] * d_color[j];
        }
    }
}

/// Adds a background color behind the samples: `Ĉ + T_N b`.
pub fn over_background(color: [f64; 3], transmittance_end: f64, background: [f64; 3]) -> [f64; 3] {
    [
        color[0] + transmittance_end * background[0],
        color[1] + transmittance_end * background[1],
        color[2] + transmittance_end * background[2],
    ]
}

/// Density gradient of the background term, `∂(T_N g_C·b)/∂σ_k = -δ_k T_N g_C·b`,
/// added into `d_sigma`.
pub fn over_background_backward(spacings: &[f64], transmittance_end: f64, background: [f64; 3], d_color: [f64; 3], d_sigma: &mut [f64]) {
    let s = transmittance_end * (d_color[0] * background[0] + d_color[1] * background[1] + d_color[2] * background[2]);
    for (d, dt) in d_sigma.iter_mut().zip(spacings) {
        *d -= dt * s;
    }
}
