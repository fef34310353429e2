use rayon::prelude::*;

use crate::body_model::{blend_shapes, pose_backward, pose_body_traced, BodyParams, BodyUpstream, PoseTrace, PosedBody};
use crate::canonical::{CanonicalFrame, CanonicalGrads, CanonicalSample};
use crate::fields::{eval_deformation, eval_radiance, Field, FieldGrads, FieldSet, FieldTape};
use crate::losses::{body_losses, clothing_mask_loss, hand_color, recon_loss, regularizers, FrameObservation, LossReport, LossWeights, PerceptualLoss};
use crate::math::Vec3;
use crate::render::{
    composite, composite_backward, importance_resample, merge_depths, plan_raster, rasterize_backward, rasterize_with, ray_rng,
    stratified_samples, surface_color, Background, Bvh, CameraGrad, Composite, Hit, RasterPlan, RenderConfig, Ray,
};
use crate::{Error, Result};

use super::{BodyContext, FramePose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    One,
    Two,
}

/// Discrete decisions of one frame evaluation: hits, sample depths, neighbour sets, raster
/// coverage and the hand color target. Filled by the first evaluation and reused after, so
/// repeated evaluations differ only through continuous parameters.
#[derive(Clone, Debug, Default)]
pub struct FramePlan {
    pub pixels: Vec<usize>,
    pub seed: u64,
    pub raster: Option<RasterPlan>,
    pub rays: Option<Vec<RayPlan>>,
    pub hand_color: Option<Option<Vec3>>,
}

#[derive(Clone, Debug)]
pub struct RayPlan {
    pub hit: Option<Hit>,
    pub coarse: Vec<f64>,
    pub fine: Option<Vec<f64>>,
    pub coarse_neighbors: Vec<Vec<usize>>,
    pub fine_neighbors: Vec<Vec<usize>>,
}

impl FramePlan {
    pub fn new(pixels: Vec<usize>, seed: u64) -> Self {
        Self { pixels, seed, ..Default::default() }
    }
}

pub struct EvalOptions<'a> {
    pub stage: Stage,
    pub weights: &'a LossWeights,
    pub render: &'a RenderConfig,
    pub deformation: bool,
    pub perceptual: Option<&'a dyn PerceptualLoss>,
    pub want_grad: bool,
}

/// Gradients of one frame's objective.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameGrads {
    pub fields: FieldGrads,
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub camera: CameraGrad,
    /// gradient with respect to the vertex offsets produced by the offset field
    pub offsets: Vec<Vec3>,
}

struct SampleRecord {
    canonical: CanonicalSample,
    deformation: Option<FieldTape>,
    tape: FieldTape,
    color: Vec3,
    density: f64,
}

struct PassRecord {
    depths: Vec<f64>,
    samples: Vec<SampleRecord>,
    end: Vec3,
    comp: Composite,
}

struct RayRecord {
    pixel: usize,
    hit: Option<Hit>,
    coarse: PassRecord,
    fine: Option<PassRecord>,
}

struct ChunkGrads {
    coarse: Vec<f64>,
    fine: Vec<f64>,
    deformation: Vec<f64>,
    canonical: CanonicalGrads,
    conditioning: Vec<Vec3>,
    colors: Vec<Vec3>,
    camera: CameraGrad,
}

impl ChunkGrads {
    fn zeros(fields: &FieldSet, nv: usize) -> Self {
        Self {
            coarse: vec![0.0; fields.coarse.n_params()],
            fine: vec![0.0; fields.fine.n_params()],
            deformation: vec![0.0; fields.deformation.n_params()],
            canonical: CanonicalGrads::zeros(nv),
            conditioning: vec![Vec3::zeros(); nv],
            colors: vec![Vec3::zeros(); nv],
            camera: CameraGrad::default(),
        }
    }

    fn add(&mut self, o: &ChunkGrads) {
        for (a, b) in [(&mut self.coarse, &o.coarse), (&mut self.fine, &o.fine), (&mut self.deformation, &o.deformation)] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.canonical.add(&o.canonical);
        self.conditioning.iter_mut().zip(&o.conditioning).for_each(|(x, y)| *x += y);
        self.colors.iter_mut().zip(&o.colors).for_each(|(x, y)| *x += y);
        self.camera.add(&o.camera);
    }
}

const RAYS_PER_CHUNK: usize = 8;

struct Volume<'a> {
    frame: &'a CanonicalFrame,
    fields: &'a FieldSet,
    conditioning: Option<&'a [Vec3]>,
    sigma: f64,
    k: usize,
}

impl Volume<'_> {
    fn sample(&self, x: &Vec3, neighbors: &[usize], fine: bool) -> Result<SampleRecord> {
        let canonical = self.frame.canonicalize_with(x, neighbors, self.sigma)?;
        let (query, deformation) = match self.conditioning {
            Some(cond) => {
                let mut tape = FieldTape::default();
                let d = eval_deformation(&self.fields.deformation, &canonical.canonical, &cond[neighbors[0]], Some(&mut tape));
                (canonical.canonical + d, Some(tape))
            }
            None => (canonical.canonical, None),
        };
        let field: &Field = if fine { &self.fields.fine } else { &self.fields.coarse };
        let mut tape = FieldTape::default();
        let (color, density) = eval_radiance(field, &query, Some(&mut tape));
        Ok(SampleRecord { canonical, deformation, tape, color, density })
    }

    fn pass(&self, ray: &Ray, depths: Vec<f64>, neighbors: &mut Vec<Vec<usize>>, n_eval: usize, fine: bool, end: impl Fn(&[SampleRecord]) -> Vec3) -> Result<PassRecord> {
        let plan_given = !neighbors.is_empty();
        let mut samples = Vec::with_capacity(n_eval);
        for i in 0..n_eval {
            let x = ray.at(depths[i]);
            if !plan_given {
                neighbors.push(self.frame.knn(&x, self.k).indices);
            }
            samples.push(self.sample(&x, &neighbors[i], fine)?);
        }
        let colors: Vec<Vec3> = samples.iter().map(|s| s.color).collect();
        let densities: Vec<f64> = samples.iter().map(|s| s.density).collect();
        let end = end(&samples);
        let comp = composite(&depths, &colors, &densities, &end)?;
        Ok(PassRecord { depths, samples, end, comp })
    }
}

fn n_evaluated(n_depths: usize, hit: bool, background: Background) -> usize {
    if !hit && background == Background::FarSample {
        n_depths
    } else {
        n_depths - 1
    }
}

/// Loss and gradients of one frame, with the offsets produced by the offset field.
pub fn evaluate_frame(
    ctx: &BodyContext,
    fields: &FieldSet,
    beta: &[f64],
    pose: &FramePose,
    obs: &FrameObservation,
    plan: &mut FramePlan,
    opts: &EvalOptions,
) -> Result<(LossReport, Option<FrameGrads>)> {
    let template = &ctx.asset.template;
    let mut tapes = vec![FieldTape::default(); template.len()];
    let offsets: Vec<Vec3> = template
        .iter()
        .zip(tapes.iter_mut())
        .map(|(t, tape)| Vec3::from_column_slice(&fields.offset.forward(t, Some(tape))))
        .collect();
    let (report, grads) = evaluate_frame_with_offsets(ctx, fields, beta, pose, obs, plan, opts, offsets)?;
    let Some(mut grads) = grads else { return Ok((report, None)) };
    for (i, d) in grads.offsets.iter().enumerate() {
        if *d != Vec3::zeros() {
            fields.offset.backward(&tapes[i], d.as_slice(), &mut grads.fields.offset)?;
        }
    }
    Ok((report, Some(grads)))
}

/// As [`evaluate_frame`] but with the vertex offsets supplied directly; the offset field's
/// own gradient is left at zero and `FrameGrads::offsets` carries the offset gradient.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_frame_with_offsets(
    ctx: &BodyContext,
    fields: &FieldSet,
    beta: &[f64],
    pose: &FramePose,
    obs: &FrameObservation,
    plan: &mut FramePlan,
    opts: &EvalOptions,
    offsets: Vec<Vec3>,
) -> Result<(LossReport, Option<FrameGrads>)> {
    let asset = &*ctx.asset;
    let nv = asset.n_vertices();
    let (w, h) = (obs.image.width, obs.image.height);
    let rcfg = opts.render;
    let weights = match opts.stage {
        Stage::One => LossWeights { mrf: 0.0, ..opts.weights.clone() },
        Stage::Two => opts.weights.clone(),
    };
    let mut tex_tapes = vec![FieldTape::default(); nv];
    let colors: Vec<Vec3> = asset
        .template
        .iter()
        .zip(tex_tapes.iter_mut())
        .map(|(t, tape)| Vec3::from_column_slice(&fields.texture.forward(t, Some(tape))))
        .collect();

    let params = BodyParams { beta: beta.to_vec(), theta: pose.theta.clone(), psi: pose.psi.clone(), offsets: offsets.clone() };
    let (posed, trace) = pose_body_traced(&params, asset)?;
    if !posed.vertices.iter().all(|v| v.iter().all(|c| c.is_finite())) {
        return Err(Error::NonFinite("posed vertices"));
    }
    let use_deformation = opts.deformation && opts.stage == Stage::Two;
    let conditioning: Option<(PosedBody, PoseTrace, BodyParams)> = if use_deformation {
        let mut p = BodyParams::zeros(asset);
        p.theta = pose.theta.clone();
        let (b, t) = pose_body_traced(&p, asset)?;
        Some((b, t, p))
    } else {
        None
    };
    let frame = CanonicalFrame::new(ctx.asset.clone(), ctx.canonical.clone(), &posed)?;
    let camera = pose.camera;

    // mesh losses
    let bvh = Bvh::build(&posed.vertices, &asset.faces);
    if plan.raster.is_none() {
        plan.raster = Some(plan_raster(&bvh, &camera, w, h, rcfg.near, rcfg.far));
    }
    let raster_plan = plan.raster.as_ref().unwrap();
    let raster = rasterize_with(raster_plan, &posed.vertices, &asset.faces, &colors, &camera, rcfg.tau_soft);
    let c_hand = *plan.hand_color.get_or_insert_with(|| hand_color(&colors, &asset.hand_vertices));
    let body = body_losses(&raster.color, &raster.silhouette, obs, c_hand, &weights);

    let blend = blend_shapes(&params, asset)?;
    let base: Vec<Vec3> = (0..nv).map(|i| asset.template_vertex(i) + blend[i]).collect();
    let with: Vec<Vec3> = (0..nv).map(|i| base[i] + offsets[i]).collect();
    let reg = regularizers(&with, &base, &ctx.edges, &offsets, &asset.regions, &weights);

    // volume rays
    let volume = Volume {
        frame: &frame,
        fields,
        conditioning: conditioning.as_ref().map(|c| c.0.vertices.as_slice()),
        sigma: ctx.sigma,
        k: ctx.k,
    };
    let planned = plan.rays.take();
    let chunks: Vec<(usize, usize)> = (0..plan.pixels.len()).step_by(RAYS_PER_CHUNK).map(|s| (s, (s + RAYS_PER_CHUNK).min(plan.pixels.len()))).collect();
    let results: Vec<Result<Vec<(RayRecord, RayPlan)>>> = chunks
        .par_iter()
        .map(|&(s, e)| {
            (s..e)
                .map(|r| {
                    let pixel = plan.pixels[r];
                    let given = planned.as_ref().map(|p| p[r].clone());
                    trace_ray(&volume, &bvh, &colors, &camera, w, h, rcfg, pixel, plan.seed, given)
                })
                .collect()
        })
        .collect();
    let mut records = Vec::with_capacity(plan.pixels.len());
    let mut ray_plans = Vec::with_capacity(plan.pixels.len());
    for chunk in results {
        for (rec, rp) in chunk? {
            records.push(rec);
            ray_plans.push(rp);
        }
    }
    plan.rays = Some(ray_plans);

    let target_mask = match opts.stage {
        Stage::One => &obs.mask.values,
        Stage::Two => &obs.clothing.values,
    };
    let targets: Vec<Vec3> = records.iter().map(|r| obs.image.pixels[r.pixel]).collect();
    let mask_targets: Vec<f64> = records.iter().map(|r| target_mask[r.pixel]).collect();
    let coarse_colors: Vec<Vec3> = records.iter().map(|r| r.coarse.comp.color).collect();
    let coarse_masks: Vec<f64> = records.iter().map(|r| r.coarse.comp.mask()).collect();
    let (recon_c, d_recon_c) = recon_loss(&coarse_colors, &targets, &weights, opts.perceptual);
    let (cloth_c, d_cloth_c) = clothing_mask_loss(&coarse_masks, &mask_targets, &weights);
    let has_fine = records.first().is_some_and(|r| r.fine.is_some());
    let (recon_f, d_recon_f, cloth_f, d_cloth_f) = if has_fine {
        let fc: Vec<Vec3> = records.iter().map(|r| r.fine.as_ref().unwrap().comp.color).collect();
        let fm: Vec<f64> = records.iter().map(|r| r.fine.as_ref().unwrap().comp.mask()).collect();
        let (a, b) = recon_loss(&fc, &targets, &weights, opts.perceptual);
        let (c, d) = clothing_mask_loss(&fm, &mask_targets, &weights);
        (a, b, c, d)
    } else {
        (0.0, Vec::new(), 0.0, Vec::new())
    };

    let report = LossReport {
        recon: recon_c + recon_f,
        clothing: cloth_c + cloth_f,
        edge: reg.edge,
        offset: reg.offset,
        ..Default::default()
    }
    .with_body(&body.terms);
    if !opts.want_grad {
        return Ok((report, None));
    }

    // volume backward, reduced in fixed chunk order
    let partials: Vec<Result<ChunkGrads>> = chunks
        .par_iter()
        .map(|&(s, e)| {
            let mut g = ChunkGrads::zeros(fields, nv);
            for r in s..e {
                let rec = &records[r];
                backward_pass(&volume, &rec.coarse, rec.hit.as_ref(), &asset.faces, &d_recon_c[r], d_cloth_c[r], false, rcfg.background, &mut g)
                    .and_then(|dxy| {
                        let mut dxy = dxy;
                        if let Some(fine) = &rec.fine {
                            let f = backward_pass(&volume, fine, rec.hit.as_ref(), &asset.faces, &d_recon_f[r], d_cloth_f[r], true, rcfg.background, &mut g)?;
                            dxy[0] += f[0];
                            dxy[1] += f[1];
                        }
                        g.camera.add(&camera.pixel_to_world_grad(rec.pixel % w, rec.pixel / w, w, h, dxy));
                        Ok(())
                    })?;
            }
            Ok(g)
        })
        .collect();
    let mut vol = ChunkGrads::zeros(fields, nv);
    for p in partials {
        vol.add(&p?);
    }

    let rg = rasterize_backward(raster_plan, &posed.vertices, &asset.faces, &camera, rcfg.tau_soft, &raster, &body.d_color, &body.d_silhouette);
    let mut d_vertices = rg.vertices;
    d_vertices.iter_mut().zip(&vol.canonical.vertices).for_each(|(a, b)| *a += b);
    let upstream = BodyUpstream {
        vertices: Some(d_vertices),
        transforms: Some(frame.transform_grads(&vol.canonical.blended)),
        shaped_template: Some(reg.d_with_offsets.clone()),
        blend: Some(reg.d_base.clone()),
    };
    let bg = pose_backward(&params, asset, &trace, &upstream);
    let mut theta = bg.theta;
    if let Some((_, t, p)) = &conditioning {
        let cg = pose_backward(p, asset, t, &BodyUpstream { vertices: Some(vol.conditioning.clone()), ..Default::default() });
        theta.iter_mut().zip(&cg.theta).for_each(|(a, b)| *a += b);
    }
    let d_offsets: Vec<Vec3> = bg.offsets.iter().zip(&reg.d_offsets).map(|(a, b)| a + b).collect();

    let mut field_grads = FieldGrads::zeros(fields);
    field_grads.coarse = vol.coarse;
    field_grads.fine = vol.fine;
    field_grads.deformation = vol.deformation;
    let mut d_colors = rg.colors;
    d_colors.iter_mut().zip(&vol.colors).for_each(|(a, b)| *a += b);
    for (i, d) in d_colors.iter().enumerate() {
        if *d != Vec3::zeros() {
            fields.texture.backward(&tex_tapes[i], d.as_slice(), &mut field_grads.texture)?;
        }
    }
    let mut cam = rg.camera;
    cam.add(&vol.camera);
    Ok((report, Some(FrameGrads { fields: field_grads, beta: bg.beta, theta, camera: cam, offsets: d_offsets })))
}

#[allow(clippy::too_many_arguments)]
fn trace_ray(
    volume: &Volume,
    bvh: &Bvh,
    colors: &[Vec3],
    camera: &crate::render::Camera,
    w: usize,
    h: usize,
    rcfg: &RenderConfig,
    pixel: usize,
    seed: u64,
    given: Option<RayPlan>,
) -> Result<(RayRecord, RayPlan)> {
    let ray = camera.generate_ray(pixel % w, pixel / w, w, h, rcfg.near, rcfg.far);
    let mut rng = ray_rng(seed, pixel as u64);
    let mut rp = match given {
        Some(p) => p,
        None => {
            let hit = bvh.intersect(&ray);
            let far = hit.map_or(ray.far, |x| x.t);
            RayPlan {
                hit,
                coarse: stratified_samples(ray.near, far, rcfg.n_coarse, hit.is_some(), &mut rng),
                fine: None,
                coarse_neighbors: Vec::new(),
                fine_neighbors: Vec::new(),
            }
        }
    };
    let hit = rp.hit;
    let surface = hit.map(|x| surface_color(&x, bvh.faces(), colors));
    let end = |samples: &[SampleRecord]| match surface {
        Some(c) => c,
        None => match rcfg.background {
            Background::Black => Vec3::zeros(),
            Background::FarSample => samples.last().map_or(Vec3::zeros(), |s| s.color),
        },
    };
    let n_eval = n_evaluated(rp.coarse.len(), hit.is_some(), rcfg.background);
    let coarse = volume.pass(&ray, rp.coarse.clone(), &mut rp.coarse_neighbors, n_eval, false, end)?;
    let fine = if rcfg.n_fine > 0 {
        let depths = match &rp.fine {
            Some(d) => d.clone(),
            None => {
                let extra = importance_resample(&coarse.depths, &coarse.comp.alpha, rcfg.n_fine, &mut rng);
                let d = merge_depths(&coarse.depths, &extra);
                rp.fine = Some(d.clone());
                d
            }
        };
        let n_eval = n_evaluated(depths.len(), hit.is_some(), rcfg.background);
        Some(volume.pass(&ray, depths, &mut rp.fine_neighbors, n_eval, true, end)?)
    } else {
        None
    };
    Ok((RayRecord { pixel, hit, coarse, fine }, rp))
}

/// Backpropagates one compositing pass; returns the gradient of the ray origin's x and y.
#[allow(clippy::too_many_arguments)]
fn backward_pass(
    volume: &Volume,
    pass: &PassRecord,
    hit: Option<&Hit>,
    faces: &[[usize; 3]],
    d_color: &Vec3,
    d_mask: f64,
    fine: bool,
    background: Background,
    g: &mut ChunkGrads,
) -> Result<[f64; 2]> {
    let colors: Vec<Vec3> = pass.samples.iter().map(|s| s.color).collect();
    let cg = composite_backward(&pass.depths, &colors, &pass.end, &pass.comp, d_color, d_mask);
    let mut d_sample_color = cg.colors.clone();
    match hit {
        Some(h) => {
            let f = faces[h.face];
            for k in 0..3 {
                g.colors[f[k]] += cg.end_color * h.bary[k];
            }
        }
        None if background == Background::FarSample => {
            d_sample_color.push(cg.end_color);
        }
        None => {}
    }
    let field = if fine { &volume.fields.fine } else { &volume.fields.coarse };
    let mut dxy = [0.0; 2];
    for (i, s) in pass.samples.iter().enumerate() {
        let dc = d_sample_color.get(i).copied().unwrap_or_else(Vec3::zeros);
        let ds = cg.densities.get(i).copied().unwrap_or(0.0);
        if dc == Vec3::zeros() && ds == 0.0 {
            continue;
        }
        let grad = if fine { &mut g.fine } else { &mut g.coarse };
        let dq = field.backward(&s.tape, &[dc.x, dc.y, dc.z, ds], grad)?;
        let mut d_canonical = Vec3::new(dq[0], dq[1], dq[2]);
        if let Some(tape) = &s.deformation {
            let din = volume.fields.deformation.backward(tape, &dq, &mut g.deformation)?;
            d_canonical += Vec3::new(din[0], din[1], din[2]);
            g.conditioning[s.canonical.neighbors[0]] += Vec3::new(din[3], din[4], din[5]);
        }
        let dx = volume.frame.backward(&s.canonical, &d_canonical, volume.sigma, &mut g.canonical);
        dxy[0] += dx.x;
        dxy[1] += dx.y;
    }
    Ok(dxy)
}
