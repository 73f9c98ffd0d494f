//! Staged per-pixel material estimation.
//!
//! Every masked pixel is an independent problem over its unconstrained
//! parameters (see [`crate::gradients`]). A stage optimizes only its own
//! channels with Adam; the others are pinned by the stage's
//! [`ControlPolicy`]. Gradients come from forward-mode dual numbers.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gradients::{
    channel_params, decode_anchored, decode_normal_f64, logistic, squashed, Anchor, Dual, PixelParams, Real, DISP,
    NX, NY, NZ_EPS, PARAM_COUNT,
};
use crate::image::RadianceImage;
use crate::lighting::{build_fixed_rig, sample_random_light, DirectionalLight, DEFAULT_FIXED_INTENSITY};
use crate::losses::{default_policy, ControlPolicy, LossReport, LossWeights, Source, Stage};
use crate::material::{encode_normal, validate_maps, Channel, MaterialMaps, MaterialSample};
use crate::math::{dot, normalize};
use crate::shader::{prepare_lights, shade_light, shade_prepared, PreparedLight, ShadingInputs};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Default learning rate in unconstrained parameter space.
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;

/// Default iterations per stage, in stage order.
pub const DEFAULT_ITERATIONS: [usize; 4] = [300, 300, 300, 200];

/// Directions closer than this (in cosine distance) are the same light.
const DIRECTION_MATCH_TOL: f64 = 1e-9;

/// What a stage is fitted against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Reference maps are known; the stage minimizes its full training loss.
    TrainingLoss,
    /// Only observed renders are known.
    ObservationOnly,
}

/// Settings for one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageConfig {
    pub stage: Stage,
    pub iterations: usize,
    pub learning_rate: f64,
    pub policy: ControlPolicy,
    pub mode: Mode,
    pub weights: LossWeights,
}

impl StageConfig {
    /// Stage with its default policy and unit weights.
    pub fn new(stage: Stage, iterations: usize, learning_rate: f64, mode: Mode) -> Self {
        Self {
            stage,
            iterations,
            learning_rate,
            policy: default_policy(stage),
            mode,
            weights: LossWeights::default(),
        }
    }

    pub fn with_policy(mut self, policy: ControlPolicy) -> Result<Self> {
        if policy.stage() != self.stage {
            return Err(Error::Config(format!(
                "policy for {} used in {} stage",
                policy.stage(),
                self.stage
            )));
        }
        self.policy = policy;
        Ok(self)
    }

    pub fn with_weights(mut self, weights: LossWeights) -> Self {
        self.weights = weights;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config(format!("{} stage needs at least one iteration", self.stage)));
        }
        // A zero rate is accepted: it leaves every pixel where it started.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if self.policy.stage() != self.stage {
            return Err(Error::Config("policy stage does not match stage".into()));
        }
        Ok(())
    }
}

/// The default progressive schedule.
pub fn default_schedule(mode: Mode) -> Vec<StageConfig> {
    Stage::ALL
        .into_iter()
        .zip(DEFAULT_ITERATIONS)
        .map(|(stage, n)| StageConfig::new(stage, n, DEFAULT_LEARNING_RATE, mode))
        .collect()
}

/// Renders of the true scene, one per light.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    width: usize,
    height: usize,
    mask: Vec<bool>,
    observations: Vec<(DirectionalLight, RadianceImage)>,
}

impl ObservationSet {
    pub fn new(
        width: usize,
        height: usize,
        mask: Vec<bool>,
        observations: Vec<(DirectionalLight, RadianceImage)>,
    ) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::Dimension(format!(
                "mask has {} entries for a {width}x{height} frame",
                mask.len()
            )));
        }
        for (k, (light, img)) in observations.iter().enumerate() {
            if img.width() != width || img.height() != height || img.channels() != 3 {
                return Err(Error::Dimension(format!(
                    "observation {k} is {}x{}x{}, expected {width}x{height}x3",
                    img.width(),
                    img.height(),
                    img.channels()
                )));
            }
            if observations[..k].iter().any(|(l, _)| same_direction(l, light)) {
                return Err(Error::Config(format!("observation {k} repeats an earlier light")));
            }
        }
        Ok(Self {
            width,
            height,
            mask,
            observations,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn observations(&self) -> &[(DirectionalLight, RadianceImage)] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Observations ordered like the fixed rig. Errors if any fixed light
    /// has no observation.
    pub fn fixed_rig_subset(&self) -> Result<Vec<&(DirectionalLight, RadianceImage)>> {
        build_fixed_rig(DEFAULT_FIXED_INTENSITY)
            .iter()
            .enumerate()
            .map(|(k, fixed)| {
                self.observations
                    .iter()
                    .find(|(l, _)| same_direction(l, fixed))
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "no observation for fixed light {k} (direction {:?})",
                            fixed.direction
                        ))
                    })
            })
            .collect()
    }
}

fn same_direction(a: &DirectionalLight, b: &DirectionalLight) -> bool {
    1.0 - dot(normalize(a.direction), normalize(b.direction)) <= DIRECTION_MATCH_TOL
}

/// What the estimator fits against.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Reference(&'a MaterialMaps),
    Observations(&'a ObservationSet),
}

impl Target<'_> {
    pub fn mode(&self) -> Mode {
        match self {
            Target::Reference(_) => Mode::TrainingLoss,
            Target::Observations(_) => Mode::ObservationOnly,
        }
    }

    fn frame(&self) -> (usize, usize, &[bool]) {
        match self {
            Target::Reference(m) => (m.width(), m.height(), &m.mask),
            Target::Observations(o) => (o.width, o.height, &o.mask),
        }
    }
}

/// Per-step losses of one stage and its deterministic before/after loss.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTrace {
    pub stage: Stage,
    /// Loss at the start of each step, before that step's update.
    pub reports: Vec<LossReport>,
    /// Stage loss over the fixed lights only, before the stage.
    pub initial_fixed_loss: f64,
    /// The same loss after the stage.
    pub final_fixed_loss: f64,
    /// Not part of any deterministic output.
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub maps: MaterialMaps,
    pub stages: Vec<StageTrace>,
}

impl EstimationResult {
    /// All stage traces as CSV.
    pub fn traces_csv(&self) -> String {
        let mut out = String::from(LossReport::CSV_HEADER);
        out.push('\n');
        for st in &self.stages {
            for (step, r) in st.reports.iter().enumerate() {
                out.push_str(&r.csv_row(st.stage, step));
                out.push('\n');
            }
        }
        out
    }

    pub fn total_wall_time(&self) -> Duration {
        self.stages.iter().map(|s| s.wall_time).sum()
    }
}

/// Starting maps for estimation: flat normal, gray diffuse, medium
/// roughness, low specular, no subsurface, mid displacement.
pub fn init_estimate(width: usize, height: usize, mask: Vec<bool>) -> Result<MaterialMaps> {
    MaterialMaps::uniform(width, height, mask, MaterialSample::default())
}

/// Material seen while evaluating a stage: optimized channels from
/// `optimized`, reference channels from `reference`, fixed channels constant.
fn policy_sample(policy: &ControlPolicy, optimized: &MaterialSample, reference: &MaterialSample) -> MaterialSample {
    let mut out = *reference;
    for ch in Channel::ALL {
        match policy.source(ch) {
            Source::Reference => {}
            Source::Optimized => match ch {
                Channel::Normal => out.normal = optimized.normal,
                Channel::Diffuse => out.diffuse = optimized.diffuse,
                Channel::Roughness => out.roughness = optimized.roughness,
                Channel::Specular => out.specular = optimized.specular,
                Channel::Sss => out.sss = optimized.sss,
                Channel::Displacement => out.displacement = optimized.displacement,
            },
            Source::Fixed(v) => match ch {
                Channel::Normal => {}
                Channel::Diffuse => out.diffuse = [v; 3],
                Channel::Roughness => out.roughness = v,
                Channel::Specular => out.specular = v,
                Channel::Sss => out.sss = v,
                Channel::Displacement => out.displacement = v,
            },
        }
    }
    out
}

fn shading_sample(mut s: MaterialSample) -> ShadingInputs<f64> {
    s.normal = normalize(s.normal);
    ShadingInputs {
        n: s.normal,
        d: s.diffuse,
        r: s.roughness,
        s: s.specular,
        sss: s.sss,
    }
}

#[inline(always)]
fn abs_t<T: Real>(x: T) -> T {
    let v = x.value();
    if v > 0.0 {
        x
    } else if v < 0.0 {
        -x
    } else {
        T::constant(0.0)
    }
}

/// Shared, per-stage part of the per-pixel problem.
struct Kernel<'a> {
    active: [bool; PARAM_COUNT],
    slots: [Option<usize>; PARAM_COUNT],
    params: Vec<usize>,
    channels: &'a [Channel],
    fixed: Vec<PreparedLight>,
    /// One extra light per step (training mode only).
    random: Vec<PreparedLight>,
    iterations: usize,
    learning_rate: f64,
    weights: LossWeights,
    training: bool,
}

/// Per-pixel inputs.
struct PixelData {
    anchor: Anchor,
    stored_normal: [f64; 3],
    base: MaterialSample,
    /// Reference values of the optimized channels (training mode).
    reference: Option<MaterialSample>,
    /// Stored reference normal, encoded (training mode).
    reference_normal: [f64; 3],
    /// Reference-side shading inputs (training mode).
    reference_inputs: Option<ShadingInputs<f64>>,
    targets: Vec<[f64; 3]>,
}

struct PixelOutcome {
    best: [f64; PARAM_COUNT],
    initial_fixed: f64,
    best_fixed: f64,
    /// (pixel term, rendering term) at the start of each step.
    trace: Vec<[f64; 2]>,
}

impl Kernel<'_> {
    /// Pixel term, fixed-light rendering term, and the stochastic light's
    /// rendering term at parameters `t`.
    #[inline(always)]
    fn terms<const N: usize>(
        &self,
        px: &PixelData,
        t: &[f64; PARAM_COUNT],
        step: usize,
    ) -> (Dual<N>, Dual<N>, Dual<N>) {
        let inputs: ShadingInputs<Dual<N>> = decode_anchored(t, &self.slots, &self.active, &px.base, Some(&px.anchor));
        let mut fixed = Dual::<N>::constant(0.0);
        for (light, target) in self.fixed.iter().zip(&px.targets) {
            let r = shade_light(&inputs, light);
            for c in 0..3 {
                fixed = fixed + abs_t(r[c] - target[c]);
            }
        }
        fixed = fixed / 3.0;
        let mut random = Dual::<N>::constant(0.0);
        let mut pixel = Dual::<N>::constant(0.0);
        if let (Some(reference), Some(ref_inputs)) = (&px.reference, &px.reference_inputs) {
            if let Some(light) = self.random.get(step) {
                let target = shade_light(ref_inputs, light);
                let r = shade_light(&inputs, light);
                for c in 0..3 {
                    random = random + abs_t(r[c] - target[c]);
                }
                random = random / 3.0;
            }
            pixel = self.pixel_term(px, reference, &inputs, t);
        }
        (pixel, fixed, random)
    }

    #[inline(always)]
    fn pixel_term<const N: usize>(
        &self,
        px: &PixelData,
        reference: &MaterialSample,
        inputs: &ShadingInputs<Dual<N>>,
        t: &[f64; PARAM_COUNT],
    ) -> Dual<N> {
        let mut sum = Dual::<N>::constant(0.0);
        for &ch in self.channels {
            let term = match ch {
                Channel::Normal => {
                    let at_anchor = t[NX] == px.anchor.t[NX] && t[NY] == px.anchor.t[NY];
                    let mut acc = Dual::<N>::constant(0.0);
                    for c in 0..3 {
                        let mut e = inputs.n[c] * 0.5 + 0.5;
                        if at_anchor {
                            e = e.with_value(px.stored_normal[c]);
                        }
                        acc = acc + abs_t(e - px.reference_normal[c]);
                    }
                    acc / 3.0
                }
                Channel::Diffuse => {
                    let mut acc = Dual::<N>::constant(0.0);
                    for c in 0..3 {
                        acc = acc + abs_t(inputs.d[c] - reference.diffuse[c]);
                    }
                    acc / 3.0
                }
                Channel::Roughness => abs_t(inputs.r - reference.roughness),
                Channel::Specular => abs_t(inputs.s - reference.specular),
                Channel::Sss => abs_t(inputs.sss - reference.sss),
                Channel::Displacement => {
                    let mut d: Dual<N> = squashed(t[DISP], self.slots[DISP]);
                    if t[DISP] == px.anchor.t[DISP] {
                        d = d.with_value(px.anchor.value.displacement);
                    }
                    abs_t(d - reference.displacement)
                }
            };
            sum = sum + term;
        }
        sum / self.channels.len() as f64
    }

    fn run<const N: usize>(&self, px: &PixelData) -> PixelOutcome {
        let mut t = px.anchor.t;
        let (mut m, mut v) = ([0.0; N], [0.0; N]);
        let mut trace = Vec::with_capacity(self.iterations);
        let w = self.weights;
        let mut best = t;
        let mut best_fixed = f64::INFINITY;
        let mut initial_fixed = 0.0;
        for step in 0..=self.iterations {
            let (pixel, fixed, random) = self.terms::<N>(px, &t, step);
            // Deterministic part of the loss, used to keep the best iterate.
            let det = w.pixel * pixel.value + w.render * fixed.value;
            if step == 0 {
                initial_fixed = det;
            }
            if det < best_fixed {
                best_fixed = det;
                best = t;
            }
            if step == self.iterations {
                break;
            }
            trace.push([pixel.value, fixed.value + random.value]);
            let loss = pixel * w.pixel + (fixed + random) * w.render;
            let k = (step + 1) as i32;
            let (c1, c2) = (1.0 - ADAM_BETA1.powi(k), 1.0 - ADAM_BETA2.powi(k));
            for (slot, &p) in self.params.iter().enumerate() {
                let g = loss.partials[slot];
                m[slot] = ADAM_BETA1 * m[slot] + (1.0 - ADAM_BETA1) * g;
                v[slot] = ADAM_BETA2 * v[slot] + (1.0 - ADAM_BETA2) * g * g;
                t[p] -= self.learning_rate * (m[slot] / c1) / ((v[slot] / c2).sqrt() + ADAM_EPS);
            }
            if self.active[NX] && t[NX] * t[NX] + t[NY] * t[NY] > 1.0 - NZ_EPS {
                let mut pp = PixelParams { t };
                pp.renormalize_normal();
                t = pp.t;
            }
        }
        PixelOutcome {
            best,
            initial_fixed,
            best_fixed,
            trace,
        }
    }
}

/// Write optimized parameters back, keeping stored values for parameters
/// that never moved.
fn write_back(maps: &mut MaterialMaps, i: usize, kernel: &Kernel, anchor: &Anchor, t: &[f64; PARAM_COUNT]) {
    let mut s = maps.sample(i);
    let moved = |k: usize| t[k] != anchor.t[k];
    for &ch in kernel.channels {
        match ch {
            Channel::Normal => {
                if moved(NX) || moved(NY) {
                    let n = decode_normal_f64(t[NX], t[NY]);
                    maps.normal.pixel_mut(i).copy_from_slice(&encode_normal(n));
                }
                continue;
            }
            Channel::Diffuse => {
                for (c, &k) in channel_params(ch).iter().enumerate() {
                    if moved(k) {
                        s.diffuse[c] = logistic(t[k]);
                    }
                }
            }
            _ => {
                let k = channel_params(ch)[0];
                if moved(k) {
                    let val = logistic(t[k]);
                    match ch {
                        Channel::Roughness => s.roughness = val,
                        Channel::Specular => s.specular = val,
                        Channel::Sss => s.sss = val,
                        _ => s.displacement = val,
                    }
                }
            }
        }
        maps.channel_mut(ch)
            .pixel_mut(i)
            .copy_from_slice(&channel_values(&s, ch));
    }
}

fn channel_values(s: &MaterialSample, ch: Channel) -> Vec<f64> {
    match ch {
        Channel::Normal => encode_normal(s.normal).to_vec(),
        Channel::Diffuse => s.diffuse.to_vec(),
        Channel::Roughness => vec![s.roughness],
        Channel::Specular => vec![s.specular],
        Channel::Sss => vec![s.sss],
        Channel::Displacement => vec![s.displacement],
    }
}

/// Run one stage from `current`. Channels the stage does not optimize are
/// returned unchanged.
pub fn optimize_stage(
    current: &MaterialMaps,
    cfg: &StageConfig,
    target: Target<'_>,
    rig_seed: u64,
) -> Result<(MaterialMaps, StageTrace)> {
    let start = Instant::now();
    cfg.validate()?;
    if cfg.mode != target.mode() {
        return Err(Error::Config(format!(
            "{:?} stage given a {:?} target",
            cfg.mode,
            target.mode()
        )));
    }
    let violations = validate_maps(current);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    let (w, h, mask) = target.frame();
    if current.width() != w || current.height() != h || current.mask != mask {
        return Err(Error::Dimension("estimate and target frames differ".into()));
    }
    if let Target::Reference(r) = target {
        let v = validate_maps(r);
        if !v.is_empty() {
            return Err(Error::Validation(v));
        }
    }

    let channels = cfg.stage.optimized_channels();
    let mut active = [false; PARAM_COUNT];
    let mut slots = [None; PARAM_COUNT];
    let mut params = Vec::new();
    for &ch in channels {
        for &k in channel_params(ch) {
            active[k] = true;
        }
    }
    for k in 0..PARAM_COUNT {
        if active[k] {
            slots[k] = Some(params.len());
            params.push(k);
        }
    }

    let (fixed, observed) = match target {
        Target::Reference(_) => (prepare_lights(&build_fixed_rig(DEFAULT_FIXED_INTENSITY)), Vec::new()),
        Target::Observations(o) => {
            let subset = o.fixed_rig_subset()?;
            let lights = prepare_lights(subset.iter().map(|(l, _)| l));
            (lights, subset.into_iter().map(|(_, img)| img).collect())
        }
    };
    let random = match target {
        Target::Reference(_) => {
            prepare_lights(&(0..cfg.iterations as u64).map(|s| sample_random_light(rig_seed, s)).collect::<Vec<_>>())
        }
        Target::Observations(_) => Vec::new(),
    };
    let kernel = Kernel {
        active,
        slots,
        params,
        channels,
        fixed,
        random,
        iterations: cfg.iterations,
        learning_rate: cfg.learning_rate,
        weights: cfg.weights,
        training: matches!(target, Target::Reference(_)),
    };

    let pixels: Vec<usize> = (0..w * h).filter(|&i| mask[i]).collect();
    let pixel_data = |i: usize| -> PixelData {
        let cur = current.sample(i);
        let stored_normal = {
            let e = current.normal.pixel(i);
            [e[0], e[1], e[2]]
        };
        match target {
            Target::Reference(r) => {
                let rs = r.sample(i);
                let base = policy_sample(&cfg.policy, &cur, &rs);
                let ref_side = policy_sample(&cfg.policy, &rs, &rs);
                let ref_inputs = shading_sample(ref_side);
                let targets = kernel.fixed.iter().map(|l| shade_light(&ref_inputs, l)).collect();
                let e = r.normal.pixel(i);
                PixelData {
                    anchor: Anchor::new(&cur),
                    stored_normal,
                    base: with_unit_normal(base),
                    reference: Some(rs),
                    reference_normal: [e[0], e[1], e[2]],
                    reference_inputs: Some(ref_inputs),
                    targets,
                }
            }
            Target::Observations(_) => PixelData {
                anchor: Anchor::new(&cur),
                stored_normal,
                base: with_unit_normal(policy_sample(&cfg.policy, &cur, &cur)),
                reference: None,
                reference_normal: [0.0; 3],
                reference_inputs: None,
                targets: observed
                    .iter()
                    .map(|img| {
                        let p = img.pixel(i);
                        [p[0], p[1], p[2]]
                    })
                    .collect(),
            },
        }
    };
    let run = |i: &usize| -> PixelOutcome {
        let px = pixel_data(*i);
        match kernel.params.len() {
            3 => kernel.run::<3>(&px),
            9 => kernel.run::<9>(&px),
            n => unreachable!("stage with {n} parameters"),
        }
    };
    let outcomes: Vec<PixelOutcome> = pixels.par_iter().map(run).collect();

    let mut maps = current.clone();
    for (&i, out) in pixels.iter().zip(&outcomes) {
        let anchor = Anchor::new(&current.sample(i));
        write_back(&mut maps, i, &kernel, &anchor, &out.best);
    }

    let count = pixels.len();
    let inv = 1.0 / count as f64;
    let mut reports = Vec::with_capacity(cfg.iterations);
    for step in 0..cfg.iterations {
        let (mut pixel, mut render) = (0.0, 0.0);
        for out in &outcomes {
            pixel += out.trace[step][0];
            render += out.trace[step][1];
        }
        let (pixel, render) = (pixel * inv, render * inv);
        let (plain, cpr) = if cfg.stage == Stage::Finetune || !kernel.training {
            (render, 0.0)
        } else {
            (0.0, render)
        };
        let pixel = if kernel.training { pixel } else { 0.0 };
        reports.push(LossReport::new(pixel, plain, cpr, cfg.weights, count));
    }
    let initial_fixed_loss = outcomes.iter().map(|o| o.initial_fixed).sum::<f64>() * inv;
    let final_fixed_loss = outcomes.iter().map(|o| o.best_fixed).sum::<f64>() * inv;

    Ok((
        maps,
        StageTrace {
            stage: cfg.stage,
            reports,
            initial_fixed_loss,
            final_fixed_loss,
            wall_time: start.elapsed(),
        },
    ))
}

fn with_unit_normal(mut s: MaterialSample) -> MaterialSample {
    s.normal = normalize(s.normal);
    s
}

/// Run `schedule` in order from [`init_estimate`]. Stages must be in
/// progressive order and each may appear at most once.
pub fn run_progressive(target: Target<'_>, rig_seed: u64, schedule: &[StageConfig]) -> Result<EstimationResult> {
    for pair in schedule.windows(2) {
        if pair[0].stage >= pair[1].stage {
            return Err(Error::Config(format!(
                "schedule out of order: {} before {}",
                pair[0].stage, pair[1].stage
            )));
        }
    }
    let (w, h, mask) = target.frame();
    let mut maps = init_estimate(w, h, mask.to_vec())?;
    let mut stages = Vec::with_capacity(schedule.len());
    for cfg in schedule {
        let (next, trace) = optimize_stage(&maps, cfg, target, rig_seed)?;
        maps = next;
        stages.push(trace);
    }
    Ok(EstimationResult { maps, stages })
}

/// One finetune stage over all channels from [`init_estimate`].
pub fn run_joint_baseline(
    target: Target<'_>,
    rig_seed: u64,
    iterations: usize,
    learning_rate: f64,
) -> Result<EstimationResult> {
    if iterations == 0 {
        let (w, h, mask) = target.frame();
        return Ok(EstimationResult {
            maps: init_estimate(w, h, mask.to_vec())?,
            stages: Vec::new(),
        });
    }
    let cfg = StageConfig::new(Stage::Finetune, iterations, learning_rate, target.mode());
    run_progressive(target, rig_seed, &[cfg])
}

/// Sum over the fixed-rig observations of the masked mean L1 between the
/// render of `maps` and the observed image.
pub fn observation_loss(maps: &MaterialMaps, obs: &ObservationSet) -> Result<f64> {
    let subset = obs.fixed_rig_subset()?;
    let mask = &obs.mask;
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::Parameter("mask selects no pixels".into()));
    }
    let lights = prepare_lights(subset.iter().map(|(l, _)| l));
    let mut total = 0.0;
    for (light, (_, img)) in lights.iter().zip(&subset) {
        let mut sum = 0.0;
        for i in (0..mask.len()).filter(|&i| mask[i]) {
            let r = shade_prepared(&shading_sample(maps.sample(i)), std::slice::from_ref(light));
            let o = img.pixel(i);
            sum += (0..3).map(|c| (r[c] - o[c]).abs()).sum::<f64>() / 3.0;
        }
        total += sum / count as f64;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::total_policy_loss;
    use crate::shader::{render_image, CameraModel};
    use crate::lighting::LightRig;

    fn observe(maps: &MaterialMaps) -> ObservationSet {
        let cam = CameraModel::for_frame(maps.width(), maps.height());
        let obs = build_fixed_rig(DEFAULT_FIXED_INTENSITY)
            .iter()
            .map(|l| (*l, render_image(maps, &LightRig::single(*l), &cam).unwrap()))
            .collect();
        ObservationSet::new(maps.width(), maps.height(), maps.mask.clone(), obs).unwrap()
    }

    fn truth(w: usize, h: usize) -> MaterialMaps {
        let mut m = init_estimate(w, h, vec![true; w * h]).unwrap();
        for i in 0..w * h {
            let f = i as f64 / (w * h) as f64;
            let a = (10.0 + 20.0 * f).to_radians();
            m.set_sample(
                i,
                &MaterialSample {
                    normal: [a.sin() * 0.6, a.sin() * 0.8, a.cos()],
                    diffuse: [0.2 + 0.5 * f, 0.6, 0.8 - 0.4 * f],
                    roughness: 0.3 + 0.3 * f,
                    specular: 0.4,
                    sss: 0.1 * f,
                    displacement: 0.4,
                },
            );
        }
        m
    }

    #[test]
    fn init_is_uniform_and_valid() {
        let m = init_estimate(5, 4, vec![true; 20]).unwrap();
        assert!(validate_maps(&m).is_empty());
        assert!((1..20).all(|i| m.sample(i) == m.sample(0)));
    }

    #[test]
    fn zero_rate_returns_input() {
        let t = truth(4, 4);
        let obs = observe(&t);
        let cur = init_estimate(4, 4, vec![true; 16]).unwrap();
        for stage in Stage::ALL {
            let cfg = StageConfig::new(stage, 1, 0.0, Mode::ObservationOnly);
            let (out, _) = optimize_stage(&cur, &cfg, Target::Observations(&obs), 3).unwrap();
            assert_eq!(out, cur);
        }
    }

    #[test]
    fn starting_at_reference_stays_put() {
        let t = truth(4, 4);
        for stage in Stage::ALL {
            let cfg = StageConfig::new(stage, 20, 0.05, Mode::TrainingLoss);
            let (out, trace) = optimize_stage(&t, &cfg, Target::Reference(&t), 1).unwrap();
            assert!(trace.reports.iter().all(|r| r.total == 0.0), "{stage}");
            for (a, b) in out.normal.data().iter().zip(t.normal.data()) {
                assert!((a - b).abs() <= 1e-9);
            }
            assert_eq!(out, t);
        }
    }

    #[test]
    fn channel_isolation() {
        let t = truth(4, 4);
        let obs = observe(&t);
        let cur = init_estimate(4, 4, vec![true; 16]).unwrap();
        for stage in [Stage::Geometry, Stage::Albedo, Stage::Rss] {
            let cfg = StageConfig::new(stage, 10, 0.05, Mode::ObservationOnly);
            let (out, _) = optimize_stage(&cur, &cfg, Target::Observations(&obs), 3).unwrap();
            for ch in Channel::ALL {
                if !stage.optimized_channels().contains(&ch) {
                    assert_eq!(out.channel(ch), cur.channel(ch), "{stage} touched {ch}");
                } else if ch != Channel::Displacement {
                    assert_ne!(out.channel(ch), cur.channel(ch), "{stage} left {ch}");
                }
            }
        }
    }

    #[test]
    fn final_loss_not_above_initial() {
        let t = truth(4, 4);
        let obs = observe(&t);
        let res = run_progressive(Target::Observations(&obs), 2, &default_schedule(Mode::ObservationOnly)).unwrap();
        for st in &res.stages {
            assert!(st.final_fixed_loss <= st.initial_fixed_loss, "{}", st.stage);
        }
        assert!(validate_maps(&res.maps).is_empty());
        let res = run_progressive(
            Target::Reference(&t),
            2,
            &default_schedule(Mode::TrainingLoss)
                .into_iter()
                .map(|mut c| {
                    c.iterations = 40;
                    c
                })
                .collect::<Vec<_>>(),
        )
        .unwrap();
        for st in &res.stages {
            assert!(st.final_fixed_loss <= st.initial_fixed_loss, "{}", st.stage);
        }
    }

    #[test]
    fn training_trace_matches_loss_module() {
        // The trace's first entry, minus the stochastic light, equals the
        // loss module evaluated on the fixed rig.
        let t = truth(3, 3);
        let cur = init_estimate(3, 3, vec![true; 9]).unwrap();
        let cam = CameraModel::for_frame(3, 3);
        for stage in Stage::ALL {
            let cfg = StageConfig::new(stage, 1, 0.05, Mode::TrainingLoss);
            let (_, trace) = optimize_stage(&cur, &cfg, Target::Reference(&t), 5).unwrap();
            let fixed = total_policy_loss(
                &cfg.policy,
                &cur,
                &t,
                &build_fixed_rig(DEFAULT_FIXED_INTENSITY),
                &cam,
                cfg.weights,
            )
            .unwrap();
            assert!((trace.initial_fixed_loss - fixed.total).abs() < 1e-12, "{stage}");
            let mut rig = build_fixed_rig(DEFAULT_FIXED_INTENSITY);
            rig.push(sample_random_light(5, 0));
            let full = total_policy_loss(&cfg.policy, &cur, &t, &rig, &cam, cfg.weights).unwrap();
            assert!((trace.reports[0].total - full.total).abs() < 1e-12, "{stage}");
        }
    }

    #[test]
    fn observation_trace_matches_observation_loss() {
        let t = truth(3, 3);
        let obs = observe(&t);
        let cur = init_estimate(3, 3, vec![true; 9]).unwrap();
        let cfg = StageConfig::new(Stage::Finetune, 1, 0.05, Mode::ObservationOnly);
        let (_, trace) = optimize_stage(&cur, &cfg, Target::Observations(&obs), 0).unwrap();
        let want = observation_loss(&cur, &obs).unwrap();
        assert!((trace.reports[0].total - want).abs() < 1e-12);
        assert_eq!(observation_loss(&t, &obs).unwrap(), 0.0);
    }

    #[test]
    fn missing_fixed_light_is_config_error() {
        let t = truth(2, 2);
        let mut obs = observe(&t);
        obs.observations.pop();
        let cur = init_estimate(2, 2, vec![true; 4]).unwrap();
        let cfg = StageConfig::new(Stage::Albedo, 1, 0.05, Mode::ObservationOnly);
        let err = optimize_stage(&cur, &cfg, Target::Observations(&obs), 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn schedule_order_enforced() {
        let t = truth(2, 2);
        let sched = [
            StageConfig::new(Stage::Albedo, 1, 0.05, Mode::TrainingLoss),
            StageConfig::new(Stage::Geometry, 1, 0.05, Mode::TrainingLoss),
        ];
        assert!(matches!(run_progressive(Target::Reference(&t), 0, &sched), Err(Error::Config(_))));
    }

    #[test]
    fn mode_mismatch_rejected() {
        let t = truth(2, 2);
        let cfg = StageConfig::new(Stage::Albedo, 1, 0.05, Mode::ObservationOnly);
        assert!(optimize_stage(&t, &cfg, Target::Reference(&t), 0).is_err());
    }

    #[test]
    fn joint_baseline_zero_iterations_is_init() {
        let t = truth(3, 2);
        let r = run_joint_baseline(Target::Reference(&t), 0, 0, 0.05).unwrap();
        assert_eq!(r.maps, init_estimate(3, 2, vec![true; 6]).unwrap());
    }

    #[test]
    fn finetune_only_schedule_equals_joint_baseline() {
        let t = truth(3, 3);
        let obs = observe(&t);
        let a = run_joint_baseline(Target::Observations(&obs), 4, 30, 0.05).unwrap();
        let sched = [StageConfig::new(Stage::Finetune, 30, 0.05, Mode::ObservationOnly)];
        let b = run_progressive(Target::Observations(&obs), 4, &sched).unwrap();
        assert_eq!(a.maps, b.maps);
        assert_eq!(a.traces_csv(), b.traces_csv());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let t = truth(6, 6);
        let obs = observe(&t);
        let sched: Vec<_> = default_schedule(Mode::ObservationOnly)
            .into_iter()
            .map(|mut c| {
                c.iterations = 25;
                c
            })
            .collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_progressive(Target::Observations(&obs), 9, &sched).unwrap())
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a.maps, b.maps);
        assert_eq!(a.traces_csv(), b.traces_csv());
    }

    #[test]
    fn single_pixel_albedo_matches_grid_search() {
        // Diffuse-only pixel with known normal; the albedo stage's fixed
        // specular is zero so the observation model matches the truth.
        let truth_d = [200.0 / 512.0, 77.0 / 512.0, 430.0 / 512.0];
        let a = 25f64.to_radians();
        let n = [a.sin(), 0.0, a.cos()];
        let sample = MaterialSample {
            normal: n,
            diffuse: truth_d,
            roughness: 0.8,
            specular: 0.0,
            sss: 0.0,
            displacement: 0.5,
        };
        let t = MaterialMaps::uniform(1, 1, vec![true], sample).unwrap();
        let obs = observe(&t);
        let mut cur = t.clone();
        cur.diffuse.data_mut().copy_from_slice(&[0.5; 3]);
        let policy = default_policy(Stage::Albedo).with_fixed(Channel::Specular, 0.0).unwrap();
        let cfg = StageConfig::new(Stage::Albedo, 300, 0.05, Mode::ObservationOnly)
            .with_policy(policy)
            .unwrap();
        let (out, _) = optimize_stage(&cur, &cfg, Target::Observations(&obs), 0).unwrap();

        // Oracle: the loss separates per color channel, so the grid search
        // over [0,1]^3 reduces to three 1-D searches.
        let rig = build_fixed_rig(DEFAULT_FIXED_INTENSITY);
        let mut probe = sample;
        let mut best = [0.0; 3];
        for c in 0..3 {
            let mut best_loss = f64::INFINITY;
            for g in 0..=512 {
                let d = g as f64 / 512.0;
                probe.diffuse[c] = d;
                let mut m = t.clone();
                m.set_sample(0, &probe);
                let loss: f64 = rig
                    .iter()
                    .zip(obs.observations())
                    .map(|(l, (_, img))| {
                        let r = crate::shader::shade_pixel(
                            &crate::shader::PixelMaterial::from_sample(&probe, [0.0; 3]),
                            &LightRig::single(*l),
                        );
                        (r[c] - img.pixel(0)[c]).abs()
                    })
                    .sum();
                if loss < best_loss {
                    best_loss = loss;
                    best[c] = d;
                }
            }
        }
        let got = out.sample(0).diffuse;
        for c in 0..3 {
            assert!((got[c] - best[c]).abs() <= 1e-3, "channel {c}: {} vs {}", got[c], best[c]);
        }
    }
}
