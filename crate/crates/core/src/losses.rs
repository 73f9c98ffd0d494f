//! Stage losses: pixel-wise L1 on material maps, multi-light rendering
//! loss, and the controlled-rendering loss that renders both sides with the
//! same substituted channels.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lighting::LightRig;
use crate::material::{validate_maps, Channel, MaterialMaps};
use crate::shader::{prepare_lights, render_unchecked, CameraModel};

/// Optimization stage. The derived order is the progressive schedule order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Geometry,
    Albedo,
    Rss,
    Finetune,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Geometry, Stage::Albedo, Stage::Rss, Stage::Finetune];

    /// Channels a stage optimizes.
    pub fn optimized_channels(self) -> &'static [Channel] {
        match self {
            Stage::Geometry => &[Channel::Normal, Channel::Displacement],
            Stage::Albedo => &[Channel::Diffuse],
            Stage::Rss => &[Channel::Roughness, Channel::Specular, Channel::Sss],
            Stage::Finetune => &Channel::ALL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Geometry => "geometry",
            Stage::Albedo => "albedo",
            Stage::Rss => "rss",
            Stage::Finetune => "finetune",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown stage '{s}'")))
    }
}

/// Where a channel's values come from while a stage is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    Optimized,
    /// Constant value on every masked pixel (gray for diffuse).
    Fixed(f64),
    /// Taken from the reference material set.
    Reference,
}

/// Per-channel sources for one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPolicy {
    stage: Stage,
    sources: [Source; 6],
}

fn channel_slot(ch: Channel) -> usize {
    Channel::ALL.iter().position(|&c| c == ch).unwrap()
}

impl ControlPolicy {
    /// Builds a policy from sources listed in [`Channel::ALL`] order.
    ///
    /// The optimized set must be exactly the stage's channels, and fixed
    /// values must lie in [0, 1]. Normals cannot be fixed.
    pub fn new(stage: Stage, sources: [Source; 6]) -> Result<Self> {
        for (ch, src) in Channel::ALL.into_iter().zip(sources) {
            let must_optimize = stage.optimized_channels().contains(&ch);
            match src {
                Source::Optimized if !must_optimize => {
                    return Err(Error::Config(format!("{stage} stage cannot optimize {ch}")));
                }
                Source::Fixed(_) | Source::Reference if must_optimize => {
                    return Err(Error::Config(format!("{stage} stage must optimize {ch}")));
                }
                Source::Fixed(_) if ch == Channel::Normal => {
                    return Err(Error::Config("normal channel cannot be fixed".into()));
                }
                Source::Fixed(v) if !(0.0..=1.0).contains(&v) => {
                    return Err(Error::Config(format!("fixed value {v} for {ch} outside [0, 1]")));
                }
                _ => {}
            }
        }
        Ok(Self { stage, sources })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn source(&self, ch: Channel) -> Source {
        self.sources[channel_slot(ch)]
    }

    /// Copy of this policy with one channel's fixed value replaced.
    pub fn with_fixed(&self, ch: Channel, value: f64) -> Result<Self> {
        let mut sources = self.sources;
        sources[channel_slot(ch)] = Source::Fixed(value);
        Self::new(self.stage, sources)
    }

    /// Material set whose optimized channels come from `optimized`,
    /// reference channels from `reference`, and fixed channels are constant.
    pub fn compose(&self, optimized: &MaterialMaps, reference: &MaterialMaps) -> Result<MaterialMaps> {
        optimized.check_aligned(reference, "policy composition")?;
        let mut out = reference.clone();
        for ch in Channel::ALL {
            match self.source(ch) {
                Source::Optimized => *out.channel_mut(ch) = optimized.channel(ch).clone(),
                Source::Reference => {}
                Source::Fixed(v) => {
                    let mask = out.mask.clone();
                    let img = out.channel_mut(ch);
                    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
                        img.pixel_mut(i).fill(v);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Controlled-material policy used by each stage.
pub fn default_policy(stage: Stage) -> ControlPolicy {
    use Source::*;
    // Order: normal, diffuse, roughness, specular, sss, displacement.
    let sources = match stage {
        Stage::Geometry => [Optimized, Reference, Fixed(0.2), Fixed(0.5), Reference, Optimized],
        Stage::Albedo => [Reference, Optimized, Fixed(0.8), Fixed(0.03), Reference, Reference],
        Stage::Rss => [Reference, Reference, Optimized, Optimized, Optimized, Reference],
        Stage::Finetune => [Optimized; 6],
    };
    ControlPolicy::new(stage, sources).expect("default policies are valid")
}

fn masked_mean<F: Fn(usize) -> f64>(mask: &[bool], per_pixel: F) -> Result<f64> {
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::Parameter("mask selects no pixels".into()));
    }
    let mut sum = 0.0;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        sum += per_pixel(i);
    }
    Ok(sum / count as f64)
}

/// Mean absolute difference of one channel over masked pixels and
/// components. Normals are stored encoded, so they compare in [0, 1] form.
fn channel_l1(pred: &MaterialMaps, reference: &MaterialMaps, ch: Channel) -> Result<f64> {
    let (a, b) = (pred.channel(ch), reference.channel(ch));
    let k = ch.components() as f64;
    masked_mean(&pred.mask, |i| {
        let (pa, pb) = (a.pixel(i), b.pixel(i));
        pa.iter().zip(pb).map(|(x, y)| (x - y).abs()).sum::<f64>() / k
    })
}

/// Mean over `channels` of the per-channel masked L1 distance.
pub fn l1_map_loss(pred: &MaterialMaps, reference: &MaterialMaps, channels: &[Channel]) -> Result<f64> {
    pred.check_aligned(reference, "pixel loss")?;
    if channels.is_empty() {
        return Err(Error::Parameter("pixel loss needs at least one channel".into()));
    }
    let mut sum = 0.0;
    for &ch in channels {
        sum += channel_l1(pred, reference, ch)?;
    }
    Ok(sum / channels.len() as f64)
}

fn check_valid(m: &MaterialMaps) -> Result<()> {
    let v = validate_maps(m);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(v))
    }
}

/// Sum over lights of the masked mean L1 between single-light renders.
pub fn multi_illum_render_loss(
    pred: &MaterialMaps,
    reference: &MaterialMaps,
    rig: &LightRig,
    cam: &CameraModel,
) -> Result<f64> {
    pred.check_aligned(reference, "rendering loss")?;
    if rig.is_empty() {
        return Err(Error::Parameter("rendering loss needs at least one light".into()));
    }
    check_valid(pred)?;
    check_valid(reference)?;
    let mut total = 0.0;
    for light in rig {
        let lights = prepare_lights([light]);
        let a = render_unchecked(pred, &lights, cam);
        let b = render_unchecked(reference, &lights, cam);
        total += masked_mean(&pred.mask, |i| {
            let (pa, pb) = (a.pixel(i), b.pixel(i));
            (0..3).map(|c| (pa[c] - pb[c]).abs()).sum::<f64>() / 3.0
        })?;
    }
    Ok(total)
}

/// Rendering loss where both sides share the policy's fixed and reference
/// channels, so only optimized channels can differ.
pub fn cpr_loss(
    pred: &MaterialMaps,
    reference: &MaterialMaps,
    policy: &ControlPolicy,
    rig: &LightRig,
    cam: &CameraModel,
) -> Result<f64> {
    if policy.stage() == Stage::Finetune {
        return Err(Error::Config(
            "controlled rendering loss is undefined for the finetune stage".into(),
        ));
    }
    let lhs = policy.compose(pred, reference)?;
    let rhs = policy.compose(reference, reference)?;
    multi_illum_render_loss(&lhs, &rhs, rig, cam)
}

/// Relative weights of the pixel and rendering terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub pixel: f64,
    pub render: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pixel: 1.0,
            render: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(pixel: f64, render: f64) -> Result<Self> {
        if !(pixel >= 0.0 && render >= 0.0 && pixel.is_finite() && render.is_finite()) {
            return Err(Error::Parameter(format!(
                "loss weights must be finite and non-negative, got ({pixel}, {render})"
            )));
        }
        Ok(Self { pixel, render })
    }
}

/// Unweighted terms and the weighted total of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub pixel: f64,
    /// Plain multi-light rendering term (finetune).
    pub render: f64,
    /// Controlled rendering term (geometry, albedo, rss).
    pub cpr: f64,
    pub total: f64,
    pub masked_count: usize,
}

impl LossReport {
    pub fn new(pixel: f64, render: f64, cpr: f64, weights: LossWeights, masked_count: usize) -> Self {
        Self {
            pixel,
            render,
            cpr,
            total: weights.pixel * pixel + weights.render * (render + cpr),
            masked_count,
        }
    }

    /// The rendering-type term, whichever kind the stage uses.
    pub fn render_term(&self) -> f64 {
        self.render + self.cpr
    }

    pub const CSV_HEADER: &'static str = "stage,step,pixel_term,render_term,total";

    pub fn csv_row(&self, stage: Stage, step: usize) -> String {
        format!(
            "{stage},{step},{:.9e},{:.9e},{:.9e}",
            self.pixel,
            self.render_term(),
            self.total
        )
    }
}

/// Full stage objective with the stage's default policy.
pub fn total_stage_loss(
    stage: Stage,
    pred: &MaterialMaps,
    reference: &MaterialMaps,
    rig: &LightRig,
    cam: &CameraModel,
    weights: LossWeights,
) -> Result<LossReport> {
    total_policy_loss(&default_policy(stage), pred, reference, rig, cam, weights)
}

/// Full stage objective under an explicit policy.
pub fn total_policy_loss(
    policy: &ControlPolicy,
    pred: &MaterialMaps,
    reference: &MaterialMaps,
    rig: &LightRig,
    cam: &CameraModel,
    weights: LossWeights,
) -> Result<LossReport> {
    let stage = policy.stage();
    let pixel = l1_map_loss(pred, reference, stage.optimized_channels())?;
    let (render, cpr) = if stage == Stage::Finetune {
        (multi_illum_render_loss(pred, reference, rig, cam)?, 0.0)
    } else {
        (0.0, cpr_loss(pred, reference, policy, rig, cam)?)
    };
    Ok(LossReport::new(pixel, render, cpr, weights, pred.masked_count()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lighting::{build_fixed_rig, DirectionalLight};
    use crate::material::MaterialSample;
    use crate::shader::{shade_pixel, PixelMaterial};

    fn flat(w: usize, h: usize, s: MaterialSample) -> MaterialMaps {
        MaterialMaps::uniform(w, h, vec![true; w * h], s).unwrap()
    }

    fn sample() -> MaterialSample {
        MaterialSample {
            normal: [0.0, 0.0, 1.0],
            diffuse: [0.6, 0.4, 0.3],
            roughness: 0.5,
            specular: 0.3,
            sss: 0.2,
            displacement: 0.5,
        }
    }

    fn cam() -> CameraModel {
        CameraModel::for_frame(4, 4)
    }

    fn tilted(deg: f64) -> [f64; 3] {
        let a = deg.to_radians();
        [a.sin(), 0.0, a.cos()]
    }

    #[test]
    fn default_policies_match_stage_recipes() {
        let g = default_policy(Stage::Geometry);
        assert_eq!(g.source(Channel::Roughness), Source::Fixed(0.2));
        assert_eq!(g.source(Channel::Specular), Source::Fixed(0.5));
        assert_eq!(g.source(Channel::Diffuse), Source::Reference);
        assert_eq!(g.source(Channel::Sss), Source::Reference);
        let a = default_policy(Stage::Albedo);
        assert_eq!(a.source(Channel::Roughness), Source::Fixed(0.8));
        assert_eq!(a.source(Channel::Specular), Source::Fixed(0.03));
        for ch in [Channel::Normal, Channel::Sss, Channel::Displacement] {
            assert_eq!(a.source(ch), Source::Reference);
        }
        let r = default_policy(Stage::Rss);
        for ch in [Channel::Normal, Channel::Displacement, Channel::Diffuse] {
            assert_eq!(r.source(ch), Source::Reference);
        }
        let f = default_policy(Stage::Finetune);
        assert!(Channel::ALL.iter().all(|&c| f.source(c) == Source::Optimized));
    }

    #[test]
    fn policy_rejects_wrong_optimized_set() {
        use Source::*;
        let bad = [Optimized, Optimized, Fixed(0.2), Fixed(0.5), Reference, Optimized];
        assert!(ControlPolicy::new(Stage::Geometry, bad).is_err());
        let missing = [Reference, Reference, Fixed(0.2), Fixed(0.5), Reference, Optimized];
        assert!(ControlPolicy::new(Stage::Geometry, missing).is_err());
        let out_of_box = [Reference, Optimized, Fixed(1.5), Fixed(0.03), Reference, Reference];
        assert!(ControlPolicy::new(Stage::Albedo, out_of_box).is_err());
    }

    #[test]
    fn stage_parse_and_order() {
        assert_eq!("RSS".parse::<Stage>().unwrap(), Stage::Rss);
        assert!("foo".parse::<Stage>().is_err());
        assert!(Stage::Geometry < Stage::Albedo && Stage::Rss < Stage::Finetune);
    }

    #[test]
    fn l1_zero_and_constant_offset() {
        let r = flat(3, 3, sample());
        assert_eq!(l1_map_loss(&r, &r, &Channel::ALL).unwrap(), 0.0);
        let mut rs = sample();
        rs.diffuse = [0.5; 3];
        let mut ps = rs;
        ps.diffuse = [0.75; 3];
        let v = l1_map_loss(&flat(3, 3, ps), &flat(3, 3, rs), &[Channel::Diffuse]).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn l1_two_channels_is_mean_of_singles() {
        let r = flat(2, 2, sample());
        let mut p = r.clone();
        for i in 0..4 {
            let mut s = p.sample(i);
            s.roughness = 0.1 * i as f64;
            s.diffuse[1] = 0.9 - 0.2 * i as f64;
            p.set_sample(i, &s);
        }
        let a = l1_map_loss(&p, &r, &[Channel::Roughness]).unwrap();
        let b = l1_map_loss(&p, &r, &[Channel::Diffuse]).unwrap();
        let both = l1_map_loss(&p, &r, &[Channel::Roughness, Channel::Diffuse]).unwrap();
        assert!((both - 0.5 * (a + b)).abs() < 1e-15);
        // hand-computed: roughness |0.5 - {0, .1, .2, .3}| mean = 0.35
        assert!((a - 0.35).abs() < 1e-15);
    }

    #[test]
    fn l1_normals_compared_encoded() {
        let mut ps = sample();
        ps.normal = [1.0, 0.0, 0.0];
        let v = l1_map_loss(&flat(1, 1, ps), &flat(1, 1, sample()), &[Channel::Normal]).unwrap();
        // encoded (1, .5, .5) vs (.5, .5, 1)
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn l1_dimension_mismatch() {
        assert!(l1_map_loss(&flat(2, 2, sample()), &flat(3, 2, sample()), &[Channel::Sss]).is_err());
    }

    #[test]
    fn render_loss_zero_and_empty_rig() {
        let r = flat(4, 4, sample());
        let rig = build_fixed_rig(5.0);
        assert_eq!(multi_illum_render_loss(&r, &r, &rig, &cam()).unwrap(), 0.0);
        assert!(multi_illum_render_loss(&r, &r, &LightRig::new(vec![]), &cam()).is_err());
    }

    #[test]
    fn render_loss_matches_single_pixel_shading() {
        // Independent evaluation: shade each pixel directly.
        let mut ps = sample();
        ps.roughness = 0.3;
        ps.normal = tilted(20.0);
        let (p, r) = (flat(2, 2, ps), flat(2, 2, sample()));
        let rig = build_fixed_rig(5.0);
        let loss = multi_illum_render_loss(&p, &r, &rig, &cam()).unwrap();
        let mut want = 0.0;
        for l in &rig {
            let one = LightRig::single(*l);
            let a = shade_pixel(&PixelMaterial::from_sample(&ps, [0.0; 3]), &one);
            let b = shade_pixel(&PixelMaterial::from_sample(&sample(), [0.0; 3]), &one);
            want += (0..3).map(|c| (a[c] - b[c]).abs()).sum::<f64>() / 3.0;
        }
        assert!((loss - want).abs() < 1e-12 * want);
    }

    #[test]
    fn render_loss_additive_over_rig_partition() {
        let mut p = flat(4, 4, sample());
        for i in 0..16 {
            let mut s = p.sample(i);
            s.normal = tilted(i as f64 * 3.0);
            s.specular = i as f64 / 16.0;
            p.set_sample(i, &s);
        }
        let r = flat(4, 4, sample());
        let rig = build_fixed_rig(5.0);
        let (a, b) = rig.lights().split_at(13);
        let whole = multi_illum_render_loss(&p, &r, &rig, &cam()).unwrap();
        let la = multi_illum_render_loss(&p, &r, &LightRig::new(a.to_vec()), &cam()).unwrap();
        let lb = multi_illum_render_loss(&p, &r, &LightRig::new(b.to_vec()), &cam()).unwrap();
        assert!((whole - (la + lb)).abs() < 1e-12);
    }

    #[test]
    fn render_loss_linear_in_diffuse_scale() {
        let mut refm = flat(4, 4, sample());
        for i in 0..16 {
            let mut s = refm.sample(i);
            s.specular = 0.0;
            s.sss = 0.0;
            s.diffuse = [0.2 + 0.04 * i as f64, 0.5, 0.9 - 0.03 * i as f64];
            s.normal = tilted(2.0 * i as f64);
            refm.set_sample(i, &s);
        }
        let mut half = refm.clone();
        let mut black = refm.clone();
        for i in 0..16 {
            let mut s = refm.sample(i);
            s.diffuse = s.diffuse.map(|d| d * 0.5);
            half.set_sample(i, &s);
            s.diffuse = [0.0; 3];
            black.set_sample(i, &s);
        }
        let rig = build_fixed_rig(5.0);
        let lh = multi_illum_render_loss(&half, &refm, &rig, &cam()).unwrap();
        let lb = multi_illum_render_loss(&black, &refm, &rig, &cam()).unwrap();
        assert!(lb > 0.0);
        assert!((lh - 0.5 * lb).abs() < 1e-12 * lb);
    }

    #[test]
    fn cpr_ignores_fixed_channel_differences() {
        let r = flat(4, 4, sample());
        let mut p = r.clone();
        for i in 0..16 {
            let mut s = p.sample(i);
            s.roughness = 0.9;
            p.set_sample(i, &s);
        }
        let rig = build_fixed_rig(5.0);
        let pol = default_policy(Stage::Geometry);
        assert_eq!(cpr_loss(&p, &r, &pol, &rig, &cam()).unwrap(), 0.0);
        assert_eq!(cpr_loss(&r, &r, &pol, &rig, &cam()).unwrap(), 0.0);
    }

    #[test]
    fn cpr_bit_invariant_to_non_optimized_channels() {
        let r = flat(4, 4, sample());
        let mut p = r.clone();
        for i in 0..16 {
            let mut s = p.sample(i);
            s.normal = tilted(i as f64);
            p.set_sample(i, &s);
        }
        let mut q = p.clone();
        for i in 0..16 {
            let mut s = q.sample(i);
            s.diffuse = [0.1, 0.9, 0.05];
            s.sss = 0.7;
            s.roughness = 0.05;
            q.set_sample(i, &s);
        }
        let rig = build_fixed_rig(5.0);
        let pol = default_policy(Stage::Geometry);
        let a = cpr_loss(&p, &r, &pol, &rig, &cam()).unwrap();
        let b = cpr_loss(&q, &r, &pol, &rig, &cam()).unwrap();
        assert!(a > 0.0);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn cpr_rejects_finetune() {
        let r = flat(2, 2, sample());
        let pol = default_policy(Stage::Finetune);
        assert!(cpr_loss(&r, &r, &pol, &build_fixed_rig(5.0), &cam()).is_err());
    }

    #[test]
    fn glossy_control_amplifies_normal_error() {
        let r = flat(4, 4, sample());
        let mut ps = sample();
        ps.normal = tilted(10.0);
        let p = flat(4, 4, ps);
        let rig = build_fixed_rig(5.0);
        let glossy = default_policy(Stage::Geometry);
        let matte = glossy
            .with_fixed(Channel::Roughness, 0.8)
            .and_then(|p| p.with_fixed(Channel::Specular, 0.03))
            .unwrap();
        let lg = cpr_loss(&p, &r, &glossy, &rig, &cam()).unwrap();
        let lm = cpr_loss(&p, &r, &matte, &rig, &cam()).unwrap();
        assert!(lm > 0.0 && lg > lm, "glossy {lg} matte {lm}");
    }

    #[test]
    fn total_loss_weightings() {
        let r = flat(4, 4, sample());
        let mut ps = sample();
        ps.normal = tilted(15.0);
        ps.displacement = 0.7;
        let p = flat(4, 4, ps);
        let rig = build_fixed_rig(5.0);
        let zero = total_stage_loss(Stage::Geometry, &r, &r, &rig, &cam(), LossWeights::new(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(zero.total, 0.0);
        let chans = Stage::Geometry.optimized_channels();
        let pix = total_stage_loss(Stage::Geometry, &p, &r, &rig, &cam(), LossWeights::new(1.0, 0.0).unwrap()).unwrap();
        assert_eq!(pix.total, l1_map_loss(&p, &r, chans).unwrap());
        let both = total_stage_loss(Stage::Geometry, &p, &r, &rig, &cam(), LossWeights::default()).unwrap();
        let cpr = cpr_loss(&p, &r, &default_policy(Stage::Geometry), &rig, &cam()).unwrap();
        assert!((both.total - (pix.total + cpr)).abs() < 1e-12);
        assert_eq!(both.masked_count, 16);
        let fine = total_stage_loss(Stage::Finetune, &p, &r, &rig, &cam(), LossWeights::default()).unwrap();
        let ren = multi_illum_render_loss(&p, &r, &rig, &cam()).unwrap();
        let l1 = l1_map_loss(&p, &r, &Channel::ALL).unwrap();
        assert!((fine.total - (l1 + ren)).abs() < 1e-12);
        assert_eq!(fine.cpr, 0.0);
    }

    #[test]
    fn rejects_negative_weights() {
        assert!(LossWeights::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn csv_row_layout() {
        let r = LossReport::new(0.5, 0.0, 0.25, LossWeights::default(), 4);
        let row = r.csv_row(Stage::Albedo, 3);
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[0], "albedo");
        assert_eq!(f[1], "3");
        assert_eq!(f[4].parse::<f64>().unwrap(), 0.75);
    }

    #[test]
    fn single_light_render_loss_with_below_horizon_light_is_zero() {
        let mut ps = sample();
        ps.diffuse = [0.1; 3];
        let rig = LightRig::single(DirectionalLight::gray([0.0, 0.6, -0.8], 5.0));
        let v = multi_illum_render_loss(&flat(2, 2, ps), &flat(2, 2, sample()), &rig, &cam()).unwrap();
        assert_eq!(v, 0.0);
    }
}
