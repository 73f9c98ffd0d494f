//! Directional light rigs and environment-map light extraction.
//!
//! The training rig is 36 fixed lights spaced 10 degrees apart in the XOZ
//! and YOZ planes plus one light drawn uniformly over the upper hemisphere.
//! Camera space has +Z pointing toward the viewer; every direction points
//! from the surface toward the light.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::FloatImage;
use crate::math::{angle_between, length, Vec3};
use crate::rng::{self, Purpose};

/// Grayscale intensity used for the fixed lights unless overridden.
pub const DEFAULT_FIXED_INTENSITY: f64 = 5.0;

/// Range of the random light's grayscale intensity.
pub const RANDOM_INTENSITY_RANGE: (f64, f64) = (3.0, 8.0);

/// Number of fixed lights in the training rig.
pub const FIXED_RIG_SIZE: usize = 36;

/// A light at infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalLight {
    /// Unit vector from the surface toward the light.
    pub direction: Vec3,
    /// RGB radiance scale.
    pub intensity: [f64; 3],
}

impl DirectionalLight {
    pub fn new(direction: Vec3, intensity: [f64; 3]) -> Self {
        Self { direction, intensity }
    }

    pub fn gray(direction: Vec3, intensity: f64) -> Self {
        Self::new(direction, [intensity; 3])
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.direction, self.intensity.map(|c| c * k))
    }
}

/// An ordered set of directional lights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LightRig {
    lights: Vec<DirectionalLight>,
}

impl LightRig {
    pub fn new(lights: Vec<DirectionalLight>) -> Self {
        Self { lights }
    }

    pub fn single(light: DirectionalLight) -> Self {
        Self { lights: vec![light] }
    }

    pub fn lights(&self) -> &[DirectionalLight] {
        &self.lights
    }

    pub fn len(&self) -> usize {
        self.lights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lights.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DirectionalLight> {
        self.lights.iter()
    }

    pub fn push(&mut self, light: DirectionalLight) {
        self.lights.push(light);
    }

    /// Every light's intensity multiplied by `k`.
    pub fn scaled(&self, k: f64) -> LightRig {
        LightRig::new(self.lights.iter().map(|l| l.scaled(k)).collect())
    }

    /// Smallest angle between any two lights, in radians.
    pub fn min_separation(&self) -> f64 {
        let mut min = f64::INFINITY;
        for (i, a) in self.lights.iter().enumerate() {
            for b in &self.lights[i + 1..] {
                min = min.min(angle_between(a.direction, b.direction));
            }
        }
        min
    }

    /// Text dump: one `dx dy dz ir ig ib` line per light, 9 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.lights {
            let [dx, dy, dz] = l.direction;
            let [r, g, b] = l.intensity;
            writeln!(s, "{dx:.8e} {dy:.8e} {dz:.8e} {r:.8e} {g:.8e} {b:.8e}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lights = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parameter(format!("rig line {}: {e}", n + 1)))?;
            if v.len() != 6 {
                return Err(Error::Parameter(format!(
                    "rig line {} has {} fields, expected 6",
                    n + 1,
                    v.len()
                )));
            }
            lights.push(DirectionalLight::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]));
        }
        Ok(Self { lights })
    }
}

impl<'a> IntoIterator for &'a LightRig {
    type Item = &'a DirectionalLight;
    type IntoIter = std::slice::Iter<'a, DirectionalLight>;

    fn into_iter(self) -> Self::IntoIter {
        self.lights.iter()
    }
}

/// The 36 fixed lights: angles 0..=180 degrees in 10 degree steps within the
/// XOZ plane, then the same within the YOZ plane, each plane skipping the
/// shared zenith.
pub fn build_fixed_rig(intensity: f64) -> LightRig {
    let mut lights = Vec::with_capacity(FIXED_RIG_SIZE);
    for plane in 0..2 {
        for step in 0..=18 {
            if step == 9 {
                continue;
            }
            let theta = (10.0 * step as f64).to_radians();
            let (s, c) = theta.sin_cos();
            let dir = if plane == 0 { [c, 0.0, s] } else { [0.0, c, s] };
            lights.push(DirectionalLight::gray(dir, intensity));
        }
    }
    LightRig { lights }
}

/// A light uniform over the upper hemisphere's solid angle, with grayscale
/// intensity uniform in [3, 8]. Fully determined by `(seed, counter)`.
pub fn sample_random_light(seed: u64, counter: u64) -> DirectionalLight {
    let [u1, u2, u3] = rng::uniforms::<3>(seed, Purpose::RandomLight, counter);
    random_light_from_uniforms(u1, u2, u3)
}

fn random_light_from_uniforms(u1: f64, u2: f64, u3: f64) -> DirectionalLight {
    let z = u1;
    let phi = 2.0 * PI * u2;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let (lo, hi) = RANDOM_INTENSITY_RANGE;
    DirectionalLight::gray([r * phi.cos(), r * phi.sin(), z], lo + (hi - lo) * u3)
}

/// Lights used to score relighting: drawn like the random light but from a
/// stream no optimization run ever touches.
pub fn heldout_rig(count: usize) -> LightRig {
    LightRig::new(
        (0..count as u64)
            .map(|i| {
                let [u1, u2, u3] = rng::uniforms::<3>(HELDOUT_SEED, Purpose::HeldOutLights, i);
                random_light_from_uniforms(u1, u2, u3)
            })
            .collect(),
    )
}

/// Seed of [`heldout_rig`].
pub const HELDOUT_SEED: u64 = 0x5eed;

/// Number of held-out lights used by evaluation.
pub const HELDOUT_COUNT: usize = 8;

/// Fixed rig followed by the random light for optimization step `step`.
pub fn build_training_rig(seed: u64, step: u64, fixed_intensity: f64) -> LightRig {
    let mut rig = build_fixed_rig(fixed_intensity);
    rig.push(sample_random_light(seed, step));
    rig
}

/// Equirectangular radiance map, `width == 2 * height`. Texel `(u, v)` covers
/// polar angle `pi * [v, v+1] / H` from +Z and azimuth `2 pi * [u, u+1] / W`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentMap {
    image: FloatImage,
}

impl EnvironmentMap {
    pub fn new(image: FloatImage) -> Result<Self> {
        if image.channels() != 3 {
            return Err(Error::Parameter("environment maps are RGB".into()));
        }
        if image.height() == 0 || image.width() != 2 * image.height() {
            return Err(Error::Parameter(format!(
                "lat-long maps need width = 2 x height, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        if image.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Parameter("environment radiance must be finite and non-negative".into()));
        }
        Ok(Self { image })
    }

    /// A constant-radiance map.
    pub fn uniform(height: usize, radiance: [f64; 3]) -> Self {
        let mut image = FloatImage::new(2 * height, height, 3);
        for i in 0..image.pixel_count() {
            image.pixel_mut(i).copy_from_slice(&radiance);
        }
        Self { image }
    }

    pub fn image(&self) -> &FloatImage {
        &self.image
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    /// Solid angle of any texel in row `v`.
    pub fn texel_solid_angle(&self, v: usize) -> f64 {
        let h = self.height() as f64;
        let dphi = 2.0 * PI / self.width() as f64;
        dphi * ((PI * v as f64 / h).cos() - (PI * (v + 1) as f64 / h).cos())
    }

    /// Direction through the center of texel `(u, v)`.
    pub fn texel_direction(&self, u: usize, v: usize) -> Vec3 {
        let theta = PI * (v as f64 + 0.5) / self.height() as f64;
        let phi = 2.0 * PI * (u as f64 + 0.5) / self.width() as f64;
        spherical(theta.cos(), phi)
    }
}

fn spherical(z: f64, phi: f64) -> Vec3 {
    let r = (1.0 - z * z).max(0.0).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

/// Approximate `env` by `k` directional lights.
///
/// With `k` equal to the texel count every texel becomes its own light.
/// Otherwise the sphere is cut into `k` equal-area cells (bands of equal
/// height in `z`, each split evenly in azimuth); each texel's power
/// (radiance times solid angle) goes to the cell containing its center, and
/// the cell's light points through the cell center. Total power is conserved
/// for every `k`.
pub fn envmap_to_lights(env: &EnvironmentMap, k: usize) -> Result<LightRig> {
    let (w, h) = (env.width(), env.height());
    let texels = w * h;
    if k == 0 || k > texels {
        return Err(Error::Parameter(format!(
            "light count {k} must be in 1..={texels} for a {w}x{h} map"
        )));
    }
    if k == texels {
        let mut lights = Vec::with_capacity(texels);
        for v in 0..h {
            let omega = env.texel_solid_angle(v);
            for u in 0..w {
                let l = env.image.pixel(v * w + u);
                lights.push(DirectionalLight::new(
                    env.texel_direction(u, v),
                    [l[0] * omega, l[1] * omega, l[2] * omega],
                ));
            }
        }
        return Ok(LightRig { lights });
    }

    let bands = (((k as f64) / 2.0).sqrt().round() as usize).clamp(1, k);
    let per_band: Vec<usize> = (0..bands).map(|b| k / bands + usize::from(b < k % bands)).collect();
    let first_cell: Vec<usize> = per_band
        .iter()
        .scan(0, |acc, &n| {
            let start = *acc;
            *acc += n;
            Some(start)
        })
        .collect();

    let mut power = vec![[0.0f64; 3]; k];
    for v in 0..h {
        let omega = env.texel_solid_angle(v);
        let z = (PI * (v as f64 + 0.5) / h as f64).cos();
        let band = ((((1.0 - z) / 2.0) * bands as f64) as usize).min(bands - 1);
        for u in 0..w {
            let phi = 2.0 * PI * (u as f64 + 0.5) / w as f64;
            let cols = per_band[band];
            let col = (((phi / (2.0 * PI)) * cols as f64) as usize).min(cols - 1);
            let cell = first_cell[band] + col;
            let l = env.image.pixel(v * w + u);
            for c in 0..3 {
                power[cell][c] += l[c] * omega;
            }
        }
    }

    let mut lights = Vec::with_capacity(k);
    for band in 0..bands {
        let z_mid = 1.0 - 2.0 * (band as f64 + 0.5) / bands as f64;
        let cols = per_band[band];
        for col in 0..cols {
            let phi_mid = 2.0 * PI * (col as f64 + 0.5) / cols as f64;
            lights.push(DirectionalLight::new(
                spherical(z_mid, phi_mid),
                power[first_cell[band] + col],
            ));
        }
    }
    Ok(LightRig { lights })
}

/// True when every direction in the rig is unit length to `tol`.
pub fn all_unit(rig: &LightRig, tol: f64) -> bool {
    rig.iter().all(|l| (length(l.direction) - 1.0).abs() <= tol)
}
