use rand::Rng;

/// Source of uniform draws in `[0, 1)`; lets tests pin draws to bin midpoints.
pub trait Uniform {
    fn next(&mut self) -> f64;
}

impl<R: Rng> Uniform for R {
    fn next(&mut self) -> f64 {
        self.gen::<f64>()
    }
}

/// Always returns 0.5.
pub struct Midpoint;

impl Uniform for Midpoint {
    fn next(&mut self) -> f64 {
        0.5
    }
}

/// One uniform draw per equal-width bin of `[near, far]`, ascending. With `pin_last` the
/// final depth is replaced by `far` (the surface hit).
pub fn stratified_samples<U: Uniform + ?Sized>(near: f64, far: f64, n: usize, pin_last: bool, rng: &mut U) -> Vec<f64> {
    assert!(n >= 2, "need at least two samples per ray");
    let width = (far - near) / n as f64;
    let mut t: Vec<f64> = (0..n).map(|i| near + (i as f64 + rng.next()) * width).collect();
    if pin_last {
        t[n - 1] = far;
    }
    t
}

/// Inverse-CDF draws over the intervals `[t_i, t_{i+1}]` with probability proportional to
/// `weights[i]`; falls back to interval length when every weight is zero.
pub fn importance_resample<U: Uniform + ?Sized>(depths: &[f64], weights: &[f64], n_fine: usize, rng: &mut U) -> Vec<f64> {
    if n_fine == 0 || depths.len() < 2 {
        return Vec::new();
    }
    let bins = depths.len() - 1;
    let mut w: Vec<f64> = weights[..bins].iter().map(|v| v.max(0.0)).collect();
    let mut total: f64 = w.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        w = depths.windows(2).map(|p| p[1] - p[0]).collect();
        total = w.iter().sum();
    }
    let mut cdf = Vec::with_capacity(bins + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for v in &w {
        acc += v / total;
        cdf.push(acc);
    }
    cdf[bins] = 1.0;
    let mut out = Vec::with_capacity(n_fine);
    let mut bin = 0;
    for j in 0..n_fine {
        let u = (j as f64 + rng.next()) / n_fine as f64;
        while bin + 1 < bins && cdf[bin + 1] <= u {
            bin += 1;
        }
        while w[bin] == 0.0 && bin + 1 < bins {
            bin += 1;
        }
        let span = cdf[bin + 1] - cdf[bin];
        let f = if span > 0.0 { ((u - cdf[bin]) / span).clamp(0.0, 1.0) } else { 0.5 };
        out.push(depths[bin] + f * (depths[bin + 1] - depths[bin]));
    }
    out
}

/// Sorted union of two depth sets.
pub fn merge_depths(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    all
}
