//! Per-pixel derivatives of shaded radiance.
//!
//! A pixel is described by nine unconstrained parameters, in this order:
//! `nx, ny, disp, dr, dg, db, r, s, sss`. The normal is completed as
//! `nz = sqrt(max(eps, 1 - nx^2 - ny^2))` and normalized; every other
//! channel passes through the logistic function so it stays inside (0, 1).
//! Derivatives are propagated in forward mode with [`Dual`] numbers.

mod dual;

pub use dual::{Dual, Real};

use std::f64::consts::PI;

use rand::Rng;

use crate::lighting::{DirectionalLight, LightRig};
use crate::material::{Channel, MaterialSample};
use crate::math::{dot, Vec3};
use crate::rng::{self, Purpose};
use crate::shader::{prepare_lights, shade_pixel, shade_prepared, PixelMaterial, ShadingInputs};

/// Number of unconstrained parameters per pixel.
pub const PARAM_COUNT: usize = 9;

pub const NX: usize = 0;
pub const NY: usize = 1;
pub const DISP: usize = 2;
pub const DR: usize = 3;
pub const DG: usize = 4;
pub const DB: usize = 5;
pub const ROUGH: usize = 6;
pub const SPEC: usize = 7;
pub const SSS: usize = 8;

/// Names of the parameters, in index order.
pub const PARAM_NAMES: [&str; PARAM_COUNT] = ["nx", "ny", "disp", "dr", "dg", "db", "r", "s", "sss"];

/// Floor under `1 - nx^2 - ny^2` before the square root.
pub const NZ_EPS: f64 = 1e-6;

/// Box values are clamped into `[LOGIT_EPS, 1 - LOGIT_EPS]` before taking
/// the logit, so that channels stored at exactly 0 or 1 stay reachable.
pub const LOGIT_EPS: f64 = 1e-4;

/// Parameter indices owned by a material channel.
pub fn channel_params(ch: Channel) -> &'static [usize] {
    match ch {
        Channel::Normal => &[NX, NY],
        Channel::Displacement => &[DISP],
        Channel::Diffuse => &[DR, DG, DB],
        Channel::Roughness => &[ROUGH],
        Channel::Specular => &[SPEC],
        Channel::Sss => &[SSS],
    }
}

#[inline]
pub fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

#[inline]
pub fn logit(v: f64) -> f64 {
    let v = v.clamp(LOGIT_EPS, 1.0 - LOGIT_EPS);
    (v / (1.0 - v)).ln()
}

/// Unconstrained parameters of one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelParams {
    pub t: [f64; PARAM_COUNT],
}

impl PixelParams {
    pub fn from_sample(m: &MaterialSample) -> Self {
        let n = m.normal;
        Self {
            t: [
                n[0],
                n[1],
                logit(m.displacement),
                logit(m.diffuse[0]),
                logit(m.diffuse[1]),
                logit(m.diffuse[2]),
                logit(m.roughness),
                logit(m.specular),
                logit(m.sss),
            ],
        }
    }

    /// Decoded material values.
    pub fn decode(&self) -> MaterialSample {
        let all = [true; PARAM_COUNT];
        let inputs: ShadingInputs<f64> = decode_inputs(&self.t, &ALL_SLOTS, &all, &MaterialSample::default());
        MaterialSample {
            normal: inputs.n,
            diffuse: inputs.d,
            roughness: inputs.r,
            specular: inputs.s,
            sss: inputs.sss,
            displacement: logistic(self.t[DISP]),
        }
    }

    /// Re-express the normal parameters as the components of the decoded,
    /// normalized normal so that `nx^2 + ny^2 <= 1`.
    pub fn renormalize_normal(&mut self) {
        let n = decode_normal_f64(self.t[NX], self.t[NY]);
        self.t[NX] = n[0];
        self.t[NY] = n[1];
    }
}

const ALL_SLOTS: [Option<usize>; PARAM_COUNT] = [
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
];

pub(crate) fn decode_normal_f64(nx: f64, ny: f64) -> Vec3 {
    let n: [f64; 3] = decode_normal(nx, ny, None, None);
    n
}

#[inline(always)]
pub(crate) fn decode_normal<T: Real>(nx: f64, ny: f64, sx: Option<usize>, sy: Option<usize>) -> [T; 3] {
    let x = T::variable(nx, sx, 1.0);
    let y = T::variable(ny, sy, 1.0);
    let nz = (T::constant(1.0) - x * x - y * y).max_const(NZ_EPS).sqrt();
    let inv = (x * x + y * y + nz * nz).sqrt().recip();
    [x * inv, y * inv, nz * inv]
}

#[inline(always)]
pub(crate) fn squashed<T: Real>(t: f64, slot: Option<usize>) -> T {
    let s = logistic(t);
    T::variable(s, slot, s * (1.0 - s))
}

/// Starting point of an optimization. While a parameter still equals its
/// starting value it decodes to the stored material value exactly, so an
/// estimate that starts on its target has exactly zero residual.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Anchor {
    pub t: [f64; PARAM_COUNT],
    /// Stored values, with the normal already normalized.
    pub value: MaterialSample,
}

impl Anchor {
    pub fn new(sample: &MaterialSample) -> Self {
        let mut value = *sample;
        value.normal = crate::math::normalize(value.normal);
        Self {
            t: PixelParams::from_sample(sample).t,
            value,
        }
    }
}

/// Shading inputs where parameter `k` is decoded from `t[k]` when
/// `active[k]`, and taken from `base` otherwise. `slots[k]` names the dual
/// partial that parameter `k` feeds.
#[inline(always)]
pub(crate) fn decode_inputs<T: Real>(
    t: &[f64; PARAM_COUNT],
    slots: &[Option<usize>; PARAM_COUNT],
    active: &[bool; PARAM_COUNT],
    base: &MaterialSample,
) -> ShadingInputs<T> {
    decode_anchored(t, slots, active, base, None)
}

#[inline(always)]
pub(crate) fn decode_anchored<T: Real>(
    t: &[f64; PARAM_COUNT],
    slots: &[Option<usize>; PARAM_COUNT],
    active: &[bool; PARAM_COUNT],
    base: &MaterialSample,
    anchor: Option<&Anchor>,
) -> ShadingInputs<T> {
    let at_anchor = |k: usize| anchor.filter(|a| a.t[k] == t[k]).map(|a| a.value);
    let n = if active[NX] {
        let n = decode_normal::<T>(t[NX], t[NY], slots[NX], slots[NY]);
        match (at_anchor(NX), at_anchor(NY)) {
            (Some(a), Some(_)) => [0, 1, 2].map(|i| n[i].with_value(a.normal[i])),
            _ => n,
        }
    } else {
        base.normal.map(T::constant)
    };
    let box_param = |k: usize, stored: fn(&MaterialSample) -> f64| -> T {
        let v = squashed::<T>(t[k], slots[k]);
        match at_anchor(k) {
            Some(a) => v.with_value(stored(&a)),
            None => v,
        }
    };
    let d = [DR, DG, DB].map(|k| {
        if active[k] {
            match k {
                DR => box_param(k, |m| m.diffuse[0]),
                DG => box_param(k, |m| m.diffuse[1]),
                _ => box_param(k, |m| m.diffuse[2]),
            }
        } else {
            T::constant(base.diffuse[k - DR])
        }
    });
    ShadingInputs {
        n,
        d,
        r: if active[ROUGH] { box_param(ROUGH, |m| m.roughness) } else { T::constant(base.roughness) },
        s: if active[SPEC] { box_param(SPEC, |m| m.specular) } else { T::constant(base.specular) },
        sss: if active[SSS] { box_param(SSS, |m| m.sss) } else { T::constant(base.sss) },
    }
}

/// Radiance and its 3x9 Jacobian with respect to the unconstrained
/// parameters. Row `c` holds the partials of color channel `c`.
pub fn shade_pixel_with_partials(params: &PixelParams, rig: &LightRig) -> ([f64; 3], [[f64; PARAM_COUNT]; 3]) {
    let lights = prepare_lights(rig);
    let inputs: ShadingInputs<Dual<PARAM_COUNT>> =
        decode_inputs(&params.t, &ALL_SLOTS, &[true; PARAM_COUNT], &MaterialSample::default());
    let out = shade_prepared(&inputs, &lights);
    (out.map(|c| c.value), out.map(|c| c.partials))
}

fn shade_decoded(params: &PixelParams, rig: &LightRig) -> [f64; 3] {
    let m = params.decode();
    shade_pixel(&PixelMaterial::from_sample(&m, [0.0; 3]), rig)
}

/// Central-difference Jacobian of the plain shader.
pub fn finite_difference_jacobian(params: &PixelParams, rig: &LightRig, h: f64) -> [[f64; PARAM_COUNT]; 3] {
    let mut jac = [[0.0; PARAM_COUNT]; 3];
    for k in 0..PARAM_COUNT {
        let mut plus = *params;
        let mut minus = *params;
        plus.t[k] += h;
        minus.t[k] -= h;
        let fp = shade_decoded(&plus, rig);
        let fm = shade_decoded(&minus, rig);
        for c in 0..3 {
            jac[c][k] = (fp[c] - fm[c]) / (2.0 * h);
        }
    }
    jac
}

/// Largest relative error between the analytic Jacobian and central
/// differences with step `h`, over all 27 entries. The denominator is
/// `max(|analytic|, 1e-6)`.
pub fn finite_difference_check(params: &PixelParams, rig: &LightRig, h: f64) -> f64 {
    let (_, analytic) = shade_pixel_with_partials(params, rig);
    let numeric = finite_difference_jacobian(params, rig, h);
    let mut worst = 0.0f64;
    for c in 0..3 {
        for k in 0..PARAM_COUNT {
            let a = analytic[c][k];
            let err = (numeric[c][k] - a).abs() / a.abs().max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

/// Distance below which a configuration counts as sitting on a kink.
pub const KINK_MARGIN: f64 = 1e-3;

/// Whether `params` under `rig` keeps clear of every non-differentiable
/// point: the cosine clamp, the normal completion floor and the GGX width
/// floor.
pub fn is_away_from_kinks(params: &PixelParams, rig: &LightRig) -> bool {
    let [nx, ny] = [params.t[NX], params.t[NY]];
    if 1.0 - nx * nx - ny * ny < NZ_EPS + KINK_MARGIN {
        return false;
    }
    let r = logistic(params.t[ROUGH]);
    if (r - crate::shader::ALPHA_MIN.sqrt()).abs() < KINK_MARGIN {
        return false;
    }
    let n = params.decode().normal;
    rig.iter().all(|l| dot(n, l.direction).abs() > KINK_MARGIN)
}

/// A seeded random pixel configuration for gradient checks: a normal within
/// 70 degrees of the view axis, box parameters with unconstrained values in
/// [-3, 3], and four random upper-hemisphere lights. Configurations near a
/// kink are redrawn.
pub fn random_config(seed: u64, index: u64) -> (PixelParams, LightRig) {
    let mut rng = rng::stream(seed, Purpose::GradCheck, index);
    loop {
        let cos_max = 70f64.to_radians().cos();
        let z: f64 = rng.random_range(cos_max..1.0);
        let phi: f64 = rng.random_range(0.0..2.0 * PI);
        let rxy = (1.0 - z * z).sqrt();
        let mut t = [0.0; PARAM_COUNT];
        t[NX] = rxy * phi.cos();
        t[NY] = rxy * phi.sin();
        for v in &mut t[DISP..] {
            *v = rng.random_range(-3.0..3.0);
        }
        let params = PixelParams { t };
        let lights = (0..4)
            .map(|_| {
                let z: f64 = rng.random_range(0.0..1.0);
                let phi: f64 = rng.random_range(0.0..2.0 * PI);
                let r = (1.0 - z * z).sqrt();
                DirectionalLight::gray([r * phi.cos(), r * phi.sin(), z], rng.random_range(3.0..8.0))
            })
            .collect();
        let rig = LightRig::new(lights);
        if is_away_from_kinks(&params, &rig) {
            return (params, rig);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shader::shade_pixel;

    fn diffuse_config(t_d: f64) -> PixelParams {
        let mut t = [0.0; PARAM_COUNT];
        t[DR] = t_d;
        t[DG] = 0.3;
        t[DB] = -0.7;
        t[ROUGH] = 0.2;
        t[SPEC] = -40.0;
        t[SSS] = -40.0;
        PixelParams { t }
    }

    #[test]
    fn value_matches_plain_shader() {
        for i in 0..200 {
            let (p, rig) = random_config(1, i);
            let (v, _) = shade_pixel_with_partials(&p, &rig);
            let m = p.decode();
            let plain = shade_pixel(&PixelMaterial::from_sample(&m, [0.0; 3]), &rig);
            for c in 0..3 {
                assert!((v[c] - plain[c]).abs() <= 1e-12 * plain[c].abs().max(1e-300));
            }
        }
    }

    #[test]
    fn diffuse_partial_closed_form() {
        // Light along n, s = sss ~ 0: R = I d / pi, so dR/dt = (I / pi) s'(t).
        let intensity = 4.0;
        let rig = LightRig::single(DirectionalLight::gray([0.0, 0.0, 1.0], intensity));
        let p = diffuse_config(0.8);
        let (_, jac) = shade_pixel_with_partials(&p, &rig);
        let s = logistic(0.8);
        let expect = intensity / PI * s * (1.0 - s);
        assert!((jac[0][DR] - expect).abs() < 1e-12 * expect);
        assert_eq!(jac[0][DG], 0.0);
        assert_eq!(jac[1][DR], 0.0);
        // Normal incidence zeroes every (1 - cos)^5 term and the Fresnel
        // weight, so roughness cannot change the result.
        let (v, _) = shade_pixel_with_partials(&p, &rig);
        for c in 0..3 {
            assert!(jac[c][ROUGH].abs() < 1e-12 * v[c]);
            assert_eq!(jac[c][DISP], 0.0);
        }
    }

    #[test]
    fn specular_partial_at_normal_incidence() {
        // F = F0 = 0.08 s, G = 1 and D = 1 / (pi alpha^2) at h = n, so
        // dR/dt_s = I * 0.08 / (4 pi alpha^2) * s'(t_s).
        let intensity = 2.0;
        let rig = LightRig::single(DirectionalLight::gray([0.0, 0.0, 1.0], intensity));
        let mut p = diffuse_config(0.0);
        p.t[SPEC] = 0.4;
        let (_, jac) = shade_pixel_with_partials(&p, &rig);
        let r = logistic(p.t[ROUGH]);
        let alpha = r * r;
        let sp = logistic(0.4) * (1.0 - logistic(0.4));
        let expect = intensity * 0.08 / (4.0 * PI * alpha * alpha) * sp;
        for c in 0..3 {
            assert!((jac[c][SPEC] - expect).abs() < 1e-10 * expect, "{} vs {expect}", jac[c][SPEC]);
        }
    }

    #[test]
    fn sss_column_vanishes_where_lobes_agree() {
        // Along a light at polar angle theta (normal = view = +Z) the blend
        // derivative is proportional to (subsurface - burley). Find the
        // angle where the two lobes agree by bisection on the plain shader;
        // at low roughness the subsurface lobe overtakes Burley near grazing.
        let lobe_gap = |theta: f64, t_sss: f64| {
            let mut p = diffuse_config(0.0);
            p.t[ROUGH] = logit(0.1);
            p.t[SSS] = t_sss;
            let rig = LightRig::single(DirectionalLight::gray([theta.sin(), 0.0, theta.cos()], 1.0));
            shade_decoded(&p, &rig)[0]
        };
        let gap = |theta: f64| lobe_gap(theta, 40.0) - lobe_gap(theta, -40.0);
        let (mut lo, mut hi) = (0.01, 1.55);
        assert!(gap(lo) * gap(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gap(lo) * gap(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let theta = 0.5 * (lo + hi);
        let mut p = diffuse_config(0.0);
        p.t[ROUGH] = logit(0.1);
        p.t[SSS] = 0.0;
        let at = |theta: f64| {
            let rig = LightRig::single(DirectionalLight::gray([theta.sin(), 0.0, theta.cos()], 1.0));
            shade_pixel_with_partials(&p, &rig)
        };
        let (v, jac) = at(theta);
        let (_, off_root) = at(0.3);
        assert!(off_root[0][SSS].abs() > 1e-3 * v[0]);
        assert!(jac[0][SSS].abs() < 1e-10 * v[0], "{}", jac[0][SSS]);
    }

    #[test]
    fn random_configs_match_finite_differences() {
        let mut worst = 0.0f64;
        for i in 0..300 {
            let (p, rig) = random_config(42, i);
            worst = worst.max(finite_difference_check(&p, &rig, 1e-4));
        }
        assert!(worst <= 1e-3, "{worst}");
    }

    #[test]
    fn black_config_has_zero_jacobian() {
        let p = diffuse_config(0.1);
        let rig = LightRig::new(vec![
            DirectionalLight::gray([0.0, 0.6, -0.8], 5.0),
            DirectionalLight::gray([-0.8, 0.0, -0.6], 5.0),
        ]);
        let (v, jac) = shade_pixel_with_partials(&p, &rig);
        assert_eq!(v, [0.0; 3]);
        assert!(jac.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(finite_difference_check(&p, &rig, 1e-4), 0.0);
    }

    #[test]
    fn central_differences_converge_quadratically() {
        let (p, rig) = random_config(3, 0);
        let (_, analytic) = shade_pixel_with_partials(&p, &rig);
        let abs_err = |h: f64| {
            let fd = finite_difference_jacobian(&p, &rig, h);
            let mut e = 0.0f64;
            for c in 0..3 {
                for k in 0..PARAM_COUNT {
                    e = e.max((fd[c][k] - analytic[c][k]).abs());
                }
            }
            e
        };
        let (e2, e3, e4) = (abs_err(1e-2), abs_err(1e-3), abs_err(1e-4));
        assert!(e3 < e2 && e4 < e3, "{e2} {e3} {e4}");
        // O(h^2): a decade in h buys roughly two decades in error.
        assert!(e3 < e2 / 30.0, "{e2} {e3}");
    }

    #[test]
    fn lights_add_linearly() {
        let (p, rig) = random_config(8, 1);
        let (_, total) = shade_pixel_with_partials(&p, &rig);
        let mut sum = [[0.0; PARAM_COUNT]; 3];
        for l in &rig {
            let (_, j) = shade_pixel_with_partials(&p, &LightRig::single(*l));
            for c in 0..3 {
                for k in 0..PARAM_COUNT {
                    sum[c][k] += j[c][k];
                }
            }
        }
        for c in 0..3 {
            for k in 0..PARAM_COUNT {
                assert!((sum[c][k] - total[c][k]).abs() <= 1e-12 * total[c][k].abs().max(1e-12));
            }
        }
    }

    #[test]
    fn decode_round_trip() {
        let m = MaterialSample {
            normal: crate::math::normalize([0.2, -0.1, 0.9]),
            diffuse: [0.1, 0.5, 0.9],
            roughness: 0.3,
            specular: 0.7,
            sss: 0.05,
            displacement: 0.6,
        };
        let back = PixelParams::from_sample(&m).decode();
        for c in 0..3 {
            assert!((back.normal[c] - m.normal[c]).abs() < 1e-12);
            assert!((back.diffuse[c] - m.diffuse[c]).abs() < 1e-12);
        }
        assert!((back.roughness - 0.3).abs() < 1e-12);
        assert!((back.displacement - 0.6).abs() < 1e-12);
    }

    #[test]
    fn renormalize_projects_into_disk() {
        let mut p = PixelParams { t: [0.9, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0] };
        p.renormalize_normal();
        assert!(p.t[NX] * p.t[NX] + p.t[NY] * p.t[NY] <= 1.0);
        let n = p.decode().normal;
        assert!((crate::math::length(n) - 1.0).abs() < 1e-12);
        assert!(n[2] > 0.0);
    }
}
