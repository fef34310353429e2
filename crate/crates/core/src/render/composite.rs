use crate::math::Vec3;
use crate::{Error, Result};

/// Result of compositing one ray. `alpha[i]` covers the interval `[t_i, t_{i+1}]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Composite {
    pub color: Vec3,
    pub alpha: Vec<f64>,
    /// transmittance reaching the final sample
    pub tau: f64,
    /// transmittance before each interval
    pub gamma: Vec<f64>,
}

impl Composite {
    /// Clothing opacity excluding the terminal term.
    pub fn mask(&self) -> f64 {
        self.alpha.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeGrad {
    pub colors: Vec<Vec3>,
    pub densities: Vec<f64>,
    pub end_color: Vec3,
}

fn check(depths: &[f64], colors: &[Vec3], densities: &[f64]) -> Result<()> {
    if depths.len() < 2 || colors.len() + 1 < depths.len() || densities.len() + 1 < depths.len() {
        return Err(Error::Contract("compositing needs a color and density per interval".into()));
    }
    if densities[..depths.len() - 1].iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::Contract("negative or undefined density".into()));
    }
    Ok(())
}

/// Alpha-composites the samples before the last depth, then adds `end_color` weighted by
/// the remaining transmittance.
pub fn composite(depths: &[f64], colors: &[Vec3], densities: &[f64], end_color: &Vec3) -> Result<Composite> {
    check(depths, colors, densities)?;
    let n = depths.len() - 1;
    let mut alpha = Vec::with_capacity(n);
    let mut gamma = Vec::with_capacity(n);
    let mut trans = 1.0;
    let mut color = Vec3::zeros();
    for i in 0..n {
        let e = (-densities[i] * (depths[i + 1] - depths[i])).exp();
        let a = trans * (1.0 - e);
        gamma.push(trans);
        alpha.push(a);
        color += colors[i] * a;
        trans *= e;
    }
    color += end_color * trans;
    Ok(Composite { color, alpha, tau: trans, gamma })
}

/// Gradients of `d_color · C + d_mask · S` with respect to sample colors, densities and the
/// terminal color. Depths are treated as constants.
pub fn composite_backward(depths: &[f64], colors: &[Vec3], end_color: &Vec3, fwd: &Composite, d_color: &Vec3, d_mask: f64) -> CompositeGrad {
    let n = fwd.alpha.len();
    let mut d_colors = Vec::with_capacity(n);
    let mut d_densities = vec![0.0; n];
    let mut suffix = fwd.tau * d_color.dot(end_color);
    for k in (0..n).rev() {
        let delta = depths[k + 1] - depths[k];
        let g = d_color.dot(&colors[k]);
        let kept = fwd.gamma[k] - fwd.alpha[k];
        d_densities[k] = delta * (kept * g - suffix) + d_mask * delta * fwd.tau;
        suffix += fwd.alpha[k] * g;
    }
    for k in 0..n {
        d_colors.push(d_color * fwd.alpha[k]);
    }
    CompositeGrad { colors: d_colors, densities: d_densities, end_color: d_color * fwd.tau }
}
