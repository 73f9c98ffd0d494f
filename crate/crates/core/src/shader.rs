//! Disney-style BSDF and direct-light rendering of material maps.
//!
//! The BSDF combines a Burley diffuse lobe, the Disney subsurface
//! approximation blended in by the `sss` weight, and a GGX/Smith specular
//! lobe with Schlick Fresnel (`F0 = 0.08 * specular`). The reflection
//! integral is evaluated as a sum over directional lights with no occlusion,
//! so each pixel's radiance depends only on its own material.

use std::f64::consts::PI;

use image::RgbImage;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gradients::Real;
use crate::image::RadianceImage;
use crate::lighting::{DirectionalLight, LightRig};
use crate::material::{validate_maps, MaterialMaps, MaterialSample};
use crate::math::{add, dot, length, normalize, Vec3};

/// Lower bound on the GGX width `alpha = roughness^2`.
pub const ALPHA_MIN: f64 = 1e-4;

/// Orthographic view direction (toward the camera).
pub const VIEW_DIR: Vec3 = [0.0, 0.0, 1.0];

const UNIT_TOLERANCE: f64 = 1e-3;

/// Orthographic camera looking down -Z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    /// World units spanned by the image width.
    pub extent_x: f64,
    /// World units spanned by the image height.
    pub extent_y: f64,
    /// World units spanned by displacement 0..1.
    pub z_range: f64,
}

impl CameraModel {
    pub fn new(extent_x: f64, extent_y: f64, z_range: f64) -> Result<Self> {
        if !(extent_x > 0.0 && extent_y > 0.0 && z_range > 0.0) {
            return Err(Error::Parameter(format!(
                "camera extents must be positive, got ({extent_x}, {extent_y}, {z_range})"
            )));
        }
        Ok(Self {
            extent_x,
            extent_y,
            z_range,
        })
    }

    /// Two world units across the image width, square pixels, and a depth
    /// range of 0.5.
    pub fn for_frame(width: usize, height: usize) -> Self {
        Self {
            extent_x: 2.0,
            extent_y: 2.0 * height as f64 / width as f64,
            z_range: 0.5,
        }
    }
}

/// Camera-space position of pixel `(u, v)` with displacement `disp`.
/// Larger displacement is nearer the camera.
pub fn reconstruct_position(
    u: usize,
    v: usize,
    disp: f64,
    cam: &CameraModel,
    width: usize,
    height: usize,
) -> Result<Vec3> {
    if u >= width || v >= height {
        return Err(Error::Parameter(format!(
            "pixel ({u}, {v}) outside {width}x{height} frame"
        )));
    }
    if !(0.0..=1.0).contains(&disp) {
        return Err(Error::Parameter(format!("displacement {disp} outside [0, 1]")));
    }
    Ok(position_unchecked(u, v, disp, cam, width, height))
}

#[inline]
pub(crate) fn position_unchecked(u: usize, v: usize, disp: f64, cam: &CameraModel, width: usize, height: usize) -> Vec3 {
    let x = ((u as f64 + 0.5) / width as f64 * 2.0 - 1.0) * cam.extent_x / 2.0;
    let y = (1.0 - (v as f64 + 0.5) / height as f64 * 2.0) * cam.extent_y / 2.0;
    let z = (disp - 0.5) * cam.z_range;
    [x, y, z]
}

/// Material of a single shading point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelMaterial {
    pub n: Vec3,
    pub d: [f64; 3],
    pub r: f64,
    pub s: f64,
    pub sss: f64,
    /// Camera-space position. Directional lights with an orthographic view
    /// make shading independent of it.
    pub p: Vec3,
}

impl PixelMaterial {
    pub fn from_sample(m: &MaterialSample, p: Vec3) -> Self {
        Self {
            n: m.normal,
            d: m.diffuse,
            r: m.roughness,
            s: m.specular,
            sss: m.sss,
            p,
        }
    }

    pub(crate) fn inputs(&self) -> ShadingInputs<f64> {
        ShadingInputs {
            n: self.n,
            d: self.d,
            r: self.r,
            s: self.s,
            sss: self.sss,
        }
    }
}

/// The material quantities the BSDF depends on, over any [`Real`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct ShadingInputs<T> {
    pub n: [T; 3],
    pub d: [T; 3],
    pub r: T,
    pub s: T,
    pub sss: T,
}

#[inline(always)]
fn dot_t<T: Real>(a: &[T; 3], b: Vec3) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline(always)]
fn smith_g1<T: Real>(ndw: T, a2: T) -> T {
    let one = T::constant(1.0);
    ndw * 2.0 / (ndw + (a2 + (one - a2) * ndw * ndw).sqrt())
}

/// Light-dependent constants for a fixed `(wi, wo)` pair.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LightGeometry {
    pub wi: Vec3,
    pub wo: Vec3,
    pub h: Vec3,
    /// `h . wi`, equal to `h . wo`.
    pub h_dot: f64,
    /// Schlick weight `(1 - h . wo)^5`.
    pub schlick: f64,
}

impl LightGeometry {
    #[inline]
    pub fn new(wi: Vec3, wo: Vec3) -> Self {
        let sum = add(wi, wo);
        let len = length(sum);
        // wi = -wo has no half vector; any choice gives zero below.
        let h = if len > 0.0 { [sum[0] / len, sum[1] / len, sum[2] / len] } else { wo };
        let h_dot = dot(h, wo);
        Self {
            wi,
            wo,
            h,
            h_dot,
            schlick: (1.0 - h_dot).powi(5),
        }
    }
}

/// BSDF value for one light geometry.
#[inline(always)]
pub(crate) fn bsdf<T: Real>(m: &ShadingInputs<T>, g: &LightGeometry) -> [T; 3] {
    let zero = T::constant(0.0);
    let one = T::constant(1.0);
    let ndl = dot_t(&m.n, g.wi);
    let ndv = dot_t(&m.n, g.wo);
    if ndl.value() <= 0.0 || ndv.value() <= 0.0 {
        return [zero; 3];
    }
    let ndh = dot_t(&m.n, g.h);
    let hh = g.h_dot * g.h_dot;

    // GGX / Smith / Schlick specular.
    let alpha = (m.r * m.r).max_const(ALPHA_MIN);
    let a2 = alpha * alpha;
    let t = ndh * ndh * (a2 - 1.0) + 1.0;
    let distribution = a2 / (t * t * PI);
    let f0 = m.s * 0.08;
    let fresnel = f0 + (one - f0) * g.schlick;
    let shadowing = smith_g1(ndl, a2) * smith_g1(ndv, a2);
    let specular = distribution * fresnel * shadowing / (ndl * ndv * 4.0);

    // Burley diffuse and the subsurface lobe share the (1 - cos)^5 weights.
    let fl = (one - ndl).powi(5);
    let fv = (one - ndv).powi(5);
    let fd90 = m.r * (2.0 * hh) + 0.5;
    let burley = (one + (fd90 - 1.0) * fl) * (one + (fd90 - 1.0) * fv);
    let fss90 = m.r * hh;
    let fss = (one + (fss90 - 1.0) * fl) * (one + (fss90 - 1.0) * fv);
    let subsurface = (fss * ((ndl + ndv).recip() - 0.5) + 0.5) * 1.25;
    let lobe = (one - m.sss) * burley + m.sss * subsurface;

    [
        m.d[0] * lobe / PI + specular,
        m.d[1] * lobe / PI + specular,
        m.d[2] * lobe / PI + specular,
    ]
}

/// Per-light constants for the fixed orthographic view.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PreparedLight {
    pub geometry: LightGeometry,
    pub intensity: [f64; 3],
}

pub(crate) fn prepare_lights<'a>(lights: impl IntoIterator<Item = &'a DirectionalLight>) -> Vec<PreparedLight> {
    lights
        .into_iter()
        .map(|l| PreparedLight {
            geometry: LightGeometry::new(l.direction, VIEW_DIR),
            intensity: l.intensity,
        })
        .collect()
}

/// Radiance from one prepared light.
#[inline(always)]
pub(crate) fn shade_light<T: Real>(m: &ShadingInputs<T>, light: &PreparedLight) -> [T; 3] {
    let cos = dot_t(&m.n, light.geometry.wi);
    if cos.value() <= 0.0 {
        return [T::constant(0.0); 3];
    }
    let f = bsdf(m, &light.geometry);
    [
        f[0] * cos * light.intensity[0],
        f[1] * cos * light.intensity[1],
        f[2] * cos * light.intensity[2],
    ]
}

#[inline(always)]
pub(crate) fn shade_prepared<T: Real>(m: &ShadingInputs<T>, lights: &[PreparedLight]) -> [T; 3] {
    let mut acc = [T::constant(0.0); 3];
    for light in lights {
        let l = shade_light(m, light);
        acc = [acc[0] + l[0], acc[1] + l[1], acc[2] + l[2]];
    }
    acc
}

fn check_unit(w: Vec3, what: &str) -> Result<()> {
    let len = length(w);
    if (len - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::Parameter(format!("{what} has length {len}, expected 1")));
    }
    Ok(())
}

/// Evaluate the BSDF for incoming `wi` and outgoing `wo` (both pointing away
/// from the surface). Zero when either lies below the surface.
pub fn eval_bsdf(m: &PixelMaterial, wi: Vec3, wo: Vec3) -> Result<[f64; 3]> {
    check_unit(wi, "wi")?;
    check_unit(wo, "wo")?;
    Ok(bsdf(&m.inputs(), &LightGeometry::new(wi, wo)))
}

/// Outgoing radiance toward the camera: the sum over lights of intensity
/// times BSDF times clamped cosine.
pub fn shade_pixel(m: &PixelMaterial, rig: &LightRig) -> [f64; 3] {
    shade_prepared(&m.inputs(), &prepare_lights(rig))
}

/// Render every masked pixel of `maps` under `rig`; unmasked pixels are black.
pub fn render_image(maps: &MaterialMaps, rig: &LightRig, cam: &CameraModel) -> Result<RadianceImage> {
    let violations = validate_maps(maps);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(render_unchecked(maps, &prepare_lights(rig), cam))
}

pub(crate) fn render_unchecked(maps: &MaterialMaps, lights: &[PreparedLight], cam: &CameraModel) -> RadianceImage {
    let (w, h) = (maps.width(), maps.height());
    let mut out = RadianceImage::new(w, h, 3);
    out.data_mut()
        .par_chunks_mut(3)
        .enumerate()
        .for_each(|(i, px)| {
            if !maps.mask[i] {
                return;
            }
            let sample = maps.sample(i);
            let p = position_unchecked(i % w, i / w, sample.displacement, cam, w, h);
            let mut m = PixelMaterial::from_sample(&sample, p);
            m.n = normalize(m.n);
            px.copy_from_slice(&shade_prepared(&m.inputs(), lights));
        });
    out
}

/// sRGB opto-electronic transfer of a linear value in [0, 1].
pub fn srgb_encode(v: f64) -> f64 {
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Exposure, clamp, sRGB transfer and 8-bit quantization.
pub fn to_srgb8(img: &RadianceImage, exposure: f64) -> Result<RgbImage> {
    if !(exposure > 0.0) {
        return Err(Error::Parameter(format!("exposure must be positive, got {exposure}")));
    }
    if img.channels() != 3 {
        return Err(Error::Parameter("previews need an RGB image".into()));
    }
    let bytes = img
        .data()
        .iter()
        .map(|&v| (srgb_encode((exposure * v).clamp(0.0, 1.0)) * 255.0).round() as u8)
        .collect();
    Ok(RgbImage::from_raw(img.width() as u32, img.height() as u32, bytes).expect("buffer sized from image"))
}
