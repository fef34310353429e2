use std::path::Path;
use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fields::{FieldGrads, FieldId};
use crate::losses::{FrameObservation, LossReport, LossWeights};
use crate::render::ray_rng;
use crate::{Error, Result};

use super::objective::{evaluate_frame, EvalOptions, FramePlan, Stage};
use super::{AvatarState, BodyContext, GroupRates, RaySampling, RunConfig};

/// One row of the training log.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub stage: u8,
    pub iteration: usize,
    pub total: f64,
    pub recon: f64,
    pub clothing: f64,
    pub silhouette: f64,
    pub bodymask: f64,
    pub skin: f64,
    pub inside: f64,
    pub skininside: f64,
    pub edge: f64,
    pub offset: f64,
    pub grad_norm: f64,
    pub millis: f64,
}

impl IterationLog {
    fn new(stage: Stage, iteration: usize, r: &LossReport, grad_norm: f64, millis: f64) -> Self {
        Self {
            stage: stage_number(stage),
            iteration,
            total: r.total(),
            recon: r.recon,
            clothing: r.clothing,
            silhouette: r.silhouette,
            bodymask: r.bodymask,
            skin: r.skin,
            inside: r.inside,
            skininside: r.skininside,
            edge: r.edge,
            offset: r.offset,
            grad_norm,
            millis,
        }
    }

    pub fn write_csv(path: &Path, rows: &[IterationLog]) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Vec<IterationLog>> {
        let mut r = csv::Reader::from_path(path)?;
        r.deserialize().map(|row| row.map_err(Error::from)).collect()
    }
}

fn stage_number(stage: Stage) -> u8 {
    match stage {
        Stage::One => 1,
        Stage::Two => 2,
    }
}

/// Picks `n` distinct training pixels of `obs`, sorted by index.
pub fn sample_pixels<R: Rng>(obs: &FrameObservation, n: usize, sampling: RaySampling, rng: &mut R) -> Vec<usize> {
    let (w, h) = (obs.image.width, obs.image.height);
    let candidates: Vec<usize> = match sampling {
        RaySampling::Uniform => (0..w * h).collect(),
        RaySampling::MaskBox { dilate } => {
            let inside: Vec<usize> = (0..w * h).filter(|&p| obs.mask.values[p] > 0.5).collect();
            if inside.is_empty() {
                (0..w * h).collect()
            } else {
                let (mut x0, mut x1, mut y0, mut y1) = (w, 0, h, 0);
                for p in inside {
                    let (x, y) = (p % w, p / w);
                    x0 = x0.min(x);
                    x1 = x1.max(x);
                    y0 = y0.min(y);
                    y1 = y1.max(y);
                }
                let (x0, y0) = (x0.saturating_sub(dilate), y0.saturating_sub(dilate));
                let (x1, y1) = ((x1 + dilate).min(w - 1), (y1 + dilate).min(h - 1));
                (y0..=y1).flat_map(|y| (x0..=x1).map(move |x| y * w + x)).collect()
            }
        }
    };
    if n >= candidates.len() {
        return candidates;
    }
    let mut picked: Vec<usize> = index::sample(rng, candidates.len(), n).into_iter().map(|i| candidates[i]).collect();
    picked.sort_unstable();
    picked
}

fn active_fields(stage: Stage, cfg: &RunConfig) -> Vec<FieldId> {
    FieldId::ALL
        .into_iter()
        .filter(|id| *id != FieldId::Deformation || (stage == Stage::Two && cfg.ablation.deformation))
        .collect()
}

fn scale(v: &mut [f64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Runs one optimization stage, calling `on_iteration` after every update.
///
/// A non-finite loss, gradient or updated parameter stops the run with
/// [`Error::Diverged`]; `state` then holds the last finite parameters, and they are also
/// written to `checkpoint` when one is given.
pub fn fit_stage(
    state: &mut AvatarState,
    observations: &[FrameObservation],
    cfg: &RunConfig,
    stage: Stage,
    checkpoint: Option<&Path>,
    mut on_iteration: impl FnMut(&IterationLog, &AvatarState),
) -> Result<Vec<IterationLog>> {
    cfg.validate()?;
    if observations.len() != state.frames.len() || observations.is_empty() {
        return Err(Error::invalid(format!(
            "{} observations for {} frame poses",
            observations.len(),
            state.frames.len()
        )));
    }
    let ctx = BodyContext::new(&state.asset, &state.canonical)?;
    let schedule = match stage {
        Stage::One => &cfg.schedule.stage1,
        Stage::Two => &cfg.schedule.stage2,
    };
    let rates = GroupRates {
        deformation: if cfg.ablation.deformation { schedule.rates.deformation } else { 0.0 },
        pose: if cfg.ablation.pose_refinement { schedule.rates.pose } else { 0.0 },
        ..schedule.rates
    };
    let weights = LossWeights { mrf: if cfg.ablation.mrf { cfg.weights.mrf } else { 0.0 }, ..cfg.weights.clone() };
    let opts = EvalOptions {
        stage,
        weights: &weights,
        render: &cfg.render,
        deformation: cfg.ablation.deformation,
        perceptual: None,
        want_grad: true,
    };
    let fields = active_fields(stage, cfg);
    let n_batch = cfg.schedule.frames_per_batch.min(observations.len());
    let rays_per_frame = cfg.schedule.rays_per_iteration.div_ceil(n_batch);
    let stream_base = (stage_number(stage) as u64) << 48;
    let mut logs = Vec::with_capacity(schedule.iterations);

    for it in 0..schedule.iterations {
        let start = Instant::now();
        let iteration = state.iteration;
        let mut rng = ray_rng(cfg.schedule.seed, stream_base | iteration as u64);
        let batch: Vec<usize> = index::sample(&mut rng, observations.len(), n_batch).into_vec();

        let mut report = LossReport::default();
        let mut field_grads = FieldGrads::zeros(&state.fields);
        let mut beta_grad = vec![0.0; state.beta.len()];
        let mut frame_grads: Vec<(usize, Vec<f64>)> = Vec::with_capacity(n_batch);
        for &f in &batch {
            let pixels = sample_pixels(&observations[f], rays_per_frame, cfg.schedule.ray_sampling, &mut rng);
            let mut plan = FramePlan::new(pixels, rng.gen());
            let (r, g) = evaluate_frame(&ctx, &state.fields, &state.beta, &state.frames[f], &observations[f], &mut plan, &opts)
                .map_err(|e| match e {
                    Error::NonFinite(_) | Error::Contract(_) => Error::Diverged { iteration },
                    e => e,
                })?;
            let g = g.expect("gradients requested");
            report.add(&r);
            field_grads.add(&g.fields);
            beta_grad.iter_mut().zip(&g.beta).for_each(|(a, b)| *a += b);
            let mut pose = g.theta;
            pose.extend([g.camera.s, g.camera.t[0], g.camera.t[1]]);
            frame_grads.push((f, pose));
        }
        let inv = 1.0 / n_batch as f64;
        let report = scaled_report(&report, inv);
        for id in FieldId::ALL {
            scale(field_grads.get_mut(id), inv);
        }
        scale(&mut beta_grad, inv);
        frame_grads.iter_mut().for_each(|(_, g)| scale(g, inv));

        // global norm over the groups that will move
        let mut norm2: f64 = fields.iter().filter(|id| rates.field(**id) > 0.0).map(|id| sq_norm(field_grads.get(*id))).sum();
        if rates.shape > 0.0 {
            norm2 += sq_norm(&beta_grad);
        }
        if rates.pose > 0.0 {
            norm2 += frame_grads.iter().map(|(_, g)| sq_norm(g)).sum::<f64>();
        }
        let grad_norm = norm2.sqrt();
        if !report.is_finite() || !grad_norm.is_finite() {
            return diverged(state, checkpoint, iteration);
        }
        let clip = if grad_norm > cfg.schedule.clip_norm { cfg.schedule.clip_norm / grad_norm } else { 1.0 };

        let previous = state.clone();
        let adam = &cfg.schedule.adam;
        for (slot, id) in FieldId::ALL.into_iter().enumerate() {
            if !fields.contains(&id) {
                continue;
            }
            let g = field_grads.get_mut(id);
            scale(g, clip);
            state.optimizer.fields[slot].step(state.fields.get_mut(id).params_mut(), g, rates.field(id), adam);
        }
        scale(&mut beta_grad, clip);
        state.optimizer.beta.step(&mut state.beta, &beta_grad, rates.shape, adam);
        for (f, g) in &mut frame_grads {
            scale(g, clip);
            let mut flat = state.frames[*f].flat();
            state.optimizer.frames[*f].step(&mut flat, g, rates.pose, adam);
            state.frames[*f].set_flat(&flat);
        }
        if !state.all_finite() || state.frames.iter().any(|f| !(f.camera.s > 0.0)) {
            *state = previous;
            return diverged(state, checkpoint, iteration);
        }
        state.iteration += 1;

        let log = IterationLog::new(stage, iteration, &report, grad_norm, start.elapsed().as_secs_f64() * 1e3);
        on_iteration(&log, state);
        logs.push(log);
        if let Some(path) = checkpoint {
            let every = cfg.schedule.checkpoint_every;
            if (every > 0 && (it + 1) % every == 0) || it + 1 == schedule.iterations {
                state.save(path)?;
            }
        }
    }
    Ok(logs)
}

fn scaled_report(r: &LossReport, s: f64) -> LossReport {
    LossReport {
        recon: r.recon * s,
        clothing: r.clothing * s,
        silhouette: r.silhouette * s,
        bodymask: r.bodymask * s,
        skin: r.skin * s,
        inside: r.inside * s,
        skininside: r.skininside * s,
        edge: r.edge * s,
        offset: r.offset * s,
    }
}

fn diverged(state: &AvatarState, checkpoint: Option<&Path>, iteration: usize) -> Result<Vec<IterationLog>> {
    log::error!("optimization diverged at iteration {iteration}");
    if let Some(path) = checkpoint {
        state.save(path)?;
    }
    Err(Error::Diverged { iteration })
}

pub fn fit_stage1(state: &mut AvatarState, observations: &[FrameObservation], cfg: &RunConfig, checkpoint: Option<&Path>, on_iteration: impl FnMut(&IterationLog, &AvatarState)) -> Result<Vec<IterationLog>> {
    fit_stage(state, observations, cfg, Stage::One, checkpoint, on_iteration)
}

pub fn fit_stage2(state: &mut AvatarState, observations: &[FrameObservation], cfg: &RunConfig, checkpoint: Option<&Path>, on_iteration: impl FnMut(&IterationLog, &AvatarState)) -> Result<Vec<IterationLog>> {
    fit_stage(state, observations, cfg, Stage::Two, checkpoint, on_iteration)
}
