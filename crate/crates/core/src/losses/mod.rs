//! Reconstruction, segmentation, body-fitting and regularization objectives.

use serde::{Deserialize, Serialize};

use crate::body_model::Region;
use crate::math::Vec3;
use crate::render::{Image, Mask};
use crate::{Error, Result};

/// Pixels the body silhouette may cover without penalty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InsideRegion {
    /// clothing mask only
    Clothing,
    /// clothing mask or visible body-part mask
    #[default]
    ClothingOrSkin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub vol: f64,
    pub mrf: f64,
    pub clothing: f64,
    pub silhouette: f64,
    pub bodymask: f64,
    pub skin: f64,
    pub inside: f64,
    pub skininside: f64,
    pub edge: f64,
    pub offset: f64,
    /// body : face : hand
    pub region_ratio: [f64; 3],
    pub huber_delta: f64,
    pub inside_region: InsideRegion,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            vol: 1.0,
            mrf: 0.0005,
            clothing: 0.5,
            silhouette: 0.001,
            bodymask: 30.0,
            skin: 1.0,
            inside: 40.0,
            skininside: 0.01,
            edge: 500.0,
            offset: 400.0,
            region_ratio: [2.0, 3.0, 12.0],
            huber_delta: 1.0,
            inside_region: InsideRegion::ClothingOrSkin,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.vol, self.mrf, self.clothing, self.silhouette, self.bodymask, self.skin, self.inside,
            self.skininside, self.edge, self.offset, self.region_ratio[0], self.region_ratio[1], self.region_ratio[2],
        ];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || !(self.huber_delta > 0.0) {
            return Err(Error::invalid("loss weights must be finite and non-negative, huber delta positive"));
        }
        if !(self.region_ratio[0] > 0.0) {
            return Err(Error::invalid("body region weight must be positive"));
        }
        Ok(())
    }

    /// Per-vertex offset weights, normalized so the body region weighs 1.
    pub fn region_weight(&self, r: Region) -> f64 {
        let i = match r {
            Region::Body => 0,
            Region::Face => 1,
            Region::Hand => 2,
        };
        self.region_ratio[i] / self.region_ratio[0]
    }
}

/// Input image with its clothed-body, clothing and visible-body-part masks.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameObservation {
    pub image: Image,
    pub mask: Mask,
    pub clothing: Mask,
    pub body: Mask,
}

impl FrameObservation {
    /// Thresholds masks at one half and clips the clothing and body-part masks to the
    /// clothed-body mask. Returns the number of clipped pixels.
    pub fn new(image: Image, mask: Mask, clothing: Mask, body: Mask) -> Result<(Self, usize)> {
        let (w, h) = (image.width, image.height);
        for m in [&mask, &clothing, &body] {
            if (m.width, m.height) != (w, h) {
                return Err(Error::Dimension { what: "mask size", expected: w * h, got: m.width * m.height });
            }
        }
        let binarize = |mut m: Mask| {
            m.values.iter_mut().for_each(|v| *v = if *v >= 0.5 { 1.0 } else { 0.0 });
            m
        };
        let mask = binarize(mask);
        let mut clothing = binarize(clothing);
        let mut body = binarize(body);
        let mut clipped = 0;
        for p in 0..w * h {
            for m in [&mut clothing, &mut body] {
                if m.values[p] > mask.values[p] {
                    m.values[p] = 0.0;
                    clipped += 1;
                }
            }
        }
        if clipped > 0 {
            log::warn!("{clipped} mask pixels fell outside the clothed-body mask and were cleared");
        }
        Ok((Self { image, mask, clothing, body }, clipped))
    }

    pub fn n_pixels(&self) -> usize {
        self.image.pixels.len()
    }
}

pub fn huber(x: f64, delta: f64) -> f64 {
    let a = x.abs();
    if a <= delta {
        0.5 * x * x
    } else {
        delta * (a - 0.5 * delta)
    }
}

pub fn huber_derivative(x: f64, delta: f64) -> f64 {
    x.clamp(-delta, delta)
}

/// Mean Huber penalty of `residuals`; writes `scale * d mean / d residual` into `grad`.
pub fn huber_mean(residuals: &[f64], delta: f64, scale: f64, grad: Option<&mut [f64]>) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    let n = residuals.len() as f64;
    if let Some(g) = grad {
        for (g, r) in g.iter_mut().zip(residuals) {
            *g = scale * huber_derivative(*r, delta) / n;
        }
    }
    residuals.iter().map(|r| huber(*r, delta)).sum::<f64>() / n
}

fn unflatten(v: &[f64]) -> Vec<Vec3> {
    v.chunks(3).map(Vec3::from_column_slice).collect()
}

/// Plug-in perceptual objective added to the reconstruction term.
pub trait PerceptualLoss: Sync {
    /// Loss value and its gradient with respect to the rendered colors.
    fn evaluate(&self, rendered: &[Vec3], target: &[Vec3]) -> (f64, Vec<Vec3>);
}

/// `λ_vol · Huber(rendered − target)` plus the optional perceptual term.
pub fn recon_loss(rendered: &[Vec3], target: &[Vec3], w: &LossWeights, perceptual: Option<&dyn PerceptualLoss>) -> (f64, Vec<Vec3>) {
    let res: Vec<f64> = rendered.iter().zip(target).flat_map(|(a, b)| [a.x - b.x, a.y - b.y, a.z - b.z]).collect();
    let mut g = vec![0.0; res.len()];
    let mut value = w.vol * huber_mean(&res, w.huber_delta, w.vol, Some(&mut g));
    let mut grad = unflatten(&g);
    if let (Some(p), true) = (perceptual, w.mrf > 0.0) {
        let (v, pg) = p.evaluate(rendered, target);
        value += w.mrf * v;
        for (a, b) in grad.iter_mut().zip(pg) {
            *a += b * w.mrf;
        }
    }
    (value, grad)
}

/// `λ_clothing · mean |rendered − target|`.
pub fn clothing_mask_loss(rendered: &[f64], target: &[f64], w: &LossWeights) -> (f64, Vec<f64>) {
    if rendered.is_empty() {
        return (0.0, Vec::new());
    }
    let n = rendered.len() as f64;
    let value = rendered.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let grad = rendered
        .iter()
        .zip(target)
        .map(|(a, b)| {
            let d = a - b;
            if d > 0.0 {
                w.clothing / n
            } else if d < 0.0 {
                -w.clothing / n
            } else {
                0.0
            }
        })
        .collect();
    (w.clothing * value, grad)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BodyTerms {
    pub silhouette: f64,
    pub bodymask: f64,
    pub skin: f64,
    pub inside: f64,
    pub skininside: f64,
}

impl BodyTerms {
    pub fn sum(&self) -> f64 {
        self.silhouette + self.bodymask + self.skin + self.inside + self.skininside
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BodyLosses {
    pub terms: BodyTerms,
    pub d_color: Vec<Vec3>,
    pub d_silhouette: Vec<f64>,
}

/// Mean F_t color over the hand vertices, or `None` when the asset marks no hands.
pub fn hand_color(colors: &[Vec3], hand_vertices: &[usize]) -> Option<Vec3> {
    if hand_vertices.is_empty() {
        return None;
    }
    let sum = hand_vertices.iter().fold(Vec3::zeros(), |acc, i| acc + colors[*i]);
    Some(sum / hand_vertices.len() as f64)
}

/// Silhouette, part-mask, skin-color, inside and skin-inside terms over the raster images.
pub fn body_losses(color: &[Vec3], silhouette: &[f64], obs: &FrameObservation, c_hand: Option<Vec3>, w: &LossWeights) -> BodyLosses {
    let n = silhouette.len();
    let delta = w.huber_delta;
    let (s, sc, sb) = (&obs.mask.values, &obs.clothing.values, &obs.body.values);
    let mut d_sil = vec![0.0; n];
    let mut d_col = vec![0.0; 3 * n];
    let mut g = vec![0.0; n];
    let mut g3 = vec![0.0; 3 * n];
    let mut terms = BodyTerms::default();

    let res: Vec<f64> = (0..n).map(|p| silhouette[p] - s[p]).collect();
    terms.silhouette = w.silhouette * huber_mean(&res, delta, w.silhouette, Some(&mut g));
    d_sil.iter_mut().zip(&g).for_each(|(a, b)| *a += b);

    let res: Vec<f64> = (0..n).map(|p| sb[p] * silhouette[p] - sb[p]).collect();
    terms.bodymask = w.bodymask * huber_mean(&res, delta, w.bodymask, Some(&mut g));
    (0..n).for_each(|p| d_sil[p] += g[p] * sb[p]);

    let res: Vec<f64> = (0..3 * n).map(|k| sb[k / 3] * (color[k / 3][k % 3] - obs.image.pixels[k / 3][k % 3])).collect();
    terms.skin = w.skin * huber_mean(&res, delta, w.skin, Some(&mut g3));
    (0..3 * n).for_each(|k| d_col[k] += g3[k] * sb[k / 3]);

    let allowed: Vec<f64> = match w.inside_region {
        InsideRegion::Clothing => sc.clone(),
        InsideRegion::ClothingOrSkin => (0..n).map(|p| sc[p].max(sb[p])).collect(),
    };
    let res: Vec<f64> = (0..n).map(|p| (silhouette[p] - allowed[p]).max(0.0)).collect();
    terms.inside = w.inside * huber_mean(&res, delta, w.inside, Some(&mut g));
    (0..n).for_each(|p| {
        if silhouette[p] - allowed[p] > 0.0 {
            d_sil[p] += g[p];
        }
    });

    match c_hand {
        Some(c) => {
            let res: Vec<f64> = (0..3 * n).map(|k| sc[k / 3] * (color[k / 3][k % 3] - c[k % 3])).collect();
            terms.skininside = w.skininside * huber_mean(&res, delta, w.skininside, Some(&mut g3));
            (0..3 * n).for_each(|k| d_col[k] += g3[k] * sc[k / 3]);
        }
        None => log::warn!("no hand vertices; skin-inside term skipped"),
    }
    BodyLosses { terms, d_color: unflatten(&d_col), d_silhouette: d_sil }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Regularizer {
    pub edge: f64,
    pub offset: f64,
    pub d_with_offsets: Vec<Vec3>,
    pub d_base: Vec<Vec3>,
    pub d_offsets: Vec<Vec3>,
}

/// Relative edge-length change between the template with and without offsets, and the
/// region-weighted offset magnitude.
pub fn regularizers(with_offsets: &[Vec3], base: &[Vec3], edges: &[[usize; 2]], offsets: &[Vec3], regions: &[Region], w: &LossWeights) -> Regularizer {
    let nv = offsets.len();
    let mut r = Regularizer {
        edge: 0.0,
        offset: 0.0,
        d_with_offsets: vec![Vec3::zeros(); nv],
        d_base: vec![Vec3::zeros(); nv],
        d_offsets: vec![Vec3::zeros(); nv],
    };
    if !edges.is_empty() {
        let ne = edges.len() as f64;
        let mut sum = 0.0;
        for &[i, j] in edges {
            let eo = with_offsets[i] - with_offsets[j];
            let eb = base[i] - base[j];
            let (lo, lb) = (eo.norm(), eb.norm());
            if lb == 0.0 {
                continue;
            }
            let rel = (lo - lb) / lb;
            sum += rel * rel;
            let g = w.edge * 2.0 * rel / ne;
            if lo > 0.0 {
                let d = eo * (g / (lb * lo));
                r.d_with_offsets[i] += d;
                r.d_with_offsets[j] -= d;
            }
            let d = eb * (-g * lo / (lb * lb * lb));
            r.d_base[i] += d;
            r.d_base[j] -= d;
        }
        r.edge = w.edge * (sum / ne);
    }
    if nv > 0 {
        let mut sum = 0.0;
        for i in 0..nv {
            let rw = w.region_weight(regions[i]);
            sum += rw * offsets[i].norm_squared();
            r.d_offsets[i] = offsets[i] * (2.0 * w.offset * rw / nv as f64);
        }
        r.offset = w.offset * (sum / nv as f64);
    }
    r
}

/// Per-term values of one iteration's objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub recon: f64,
    pub clothing: f64,
    pub silhouette: f64,
    pub bodymask: f64,
    pub skin: f64,
    pub inside: f64,
    pub skininside: f64,
    pub edge: f64,
    pub offset: f64,
}

impl LossReport {
    pub fn total(&self) -> f64 {
        self.recon + self.clothing + self.silhouette + self.bodymask + self.skin + self.inside + self.skininside + self.edge + self.offset
    }

    pub fn with_body(mut self, b: &BodyTerms) -> Self {
        self.silhouette = b.silhouette;
        self.bodymask = b.bodymask;
        self.skin = b.skin;
        self.inside = b.inside;
        self.skininside = b.skininside;
        self
    }

    pub fn add(&mut self, o: &LossReport) {
        self.recon += o.recon;
        self.clothing += o.clothing;
        self.silhouette += o.silhouette;
        self.bodymask += o.bodymask;
        self.skin += o.skin;
        self.inside += o.inside;
        self.skininside += o.skininside;
        self.edge += o.edge;
        self.offset += o.offset;
    }

    pub fn is_finite(&self) -> bool {
        self.total().is_finite()
    }
}
