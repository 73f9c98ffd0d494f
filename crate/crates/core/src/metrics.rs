//! PSNR and the evaluation report.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::FloatImage;
use crate::lighting::LightRig;
use crate::material::{decode_normal, Channel, MaterialMaps, RegionLabels};
use crate::math::{angle_between, Vec3};
use crate::shader::{render_image, CameraModel};

/// Reported PSNR when two images agree exactly.
pub const PSNR_CAP: f64 = 99.0;

/// Masked PSNR in dB over all channels. Returns [`PSNR_CAP`] on zero error.
pub fn psnr(a: &FloatImage, b: &FloatImage, mask: &[bool], max_value: f64) -> Result<f64> {
    a.check_same_shape(b, "psnr")?;
    if mask.len() != a.pixel_count() {
        return Err(Error::Dimension(format!(
            "mask has {} entries for {} pixels",
            mask.len(),
            a.pixel_count()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in (0..a.pixel_count()).filter(|&i| mask[i]) {
        for (x, y) in a.pixel(i).iter().zip(b.pixel(i)) {
            sum += (x - y) * (x - y);
        }
        count += a.channels();
    }
    if count == 0 {
        return Err(Error::Parameter("psnr needs at least one masked pixel".into()));
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok(10.0 * (max_value * max_value / mse).log10())
}

/// Material and relighting PSNRs with their means.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// PSNR per material channel, in [`Channel::ALL`] order.
    pub materials: [f64; 6],
    /// PSNR per held-out light.
    pub relighting: Vec<f64>,
    pub material_mean: f64,
    pub relight_mean: f64,
    /// Mean of the material and relighting means.
    pub total_mean: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl EvalReport {
    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = Channel::ALL.iter().map(|c| c.label().to_string()).collect();
        cols.extend((0..self.relighting.len()).map(|i| format!("light_{i}")));
        cols.extend(["material_mean", "relight_mean", "total_mean"].map(String::from));
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let values: Vec<String> = self
            .materials
            .iter()
            .chain(&self.relighting)
            .chain([&self.material_mean, &self.relight_mean, &self.total_mean])
            .map(|v| format!("{v:.4}"))
            .collect();
        let mut s = String::new();
        writeln!(s, "{}", self.csv_header()).unwrap();
        writeln!(s, "{}", values.join(",")).unwrap();
        s
    }
}

/// Compare `pred` with `gt` map by map (normals in encoded space) and by
/// rendering both under each held-out light.
pub fn eval_report(pred: &MaterialMaps, gt: &MaterialMaps, heldout: &LightRig, cam: &CameraModel) -> Result<EvalReport> {
    pred.check_aligned(gt, "eval_report")?;
    let mut materials = [0.0; 6];
    for (slot, ch) in materials.iter_mut().zip(Channel::ALL) {
        *slot = psnr(pred.channel(ch), gt.channel(ch), &gt.mask, 1.0)?;
    }
    let mut relighting = Vec::with_capacity(heldout.len());
    for light in heldout {
        let single = LightRig::single(*light);
        let a = render_image(pred, &single, cam)?;
        let b = render_image(gt, &single, cam)?;
        relighting.push(psnr(&a, &b, &gt.mask, 1.0)?);
    }
    let material_mean = mean(&materials);
    let relight_mean = if relighting.is_empty() { material_mean } else { mean(&relighting) };
    Ok(EvalReport {
        materials,
        relighting,
        material_mean,
        relight_mean,
        total_mean: 0.5 * (material_mean + relight_mean),
    })
}

fn normal_at(m: &MaterialMaps, i: usize) -> Vec3 {
    let e = m.normal.pixel(i);
    decode_normal([e[0], e[1], e[2]])
}

/// Mean angle in degrees between decoded normals over masked pixels.
pub fn mean_normal_angle_deg(pred: &MaterialMaps, gt: &MaterialMaps) -> Result<f64> {
    pred.check_aligned(gt, "normal angle")?;
    let idx: Vec<usize> = (0..gt.pixel_count()).filter(|&i| gt.mask[i]).collect();
    if idx.is_empty() {
        return Err(Error::Parameter("no masked pixels".into()));
    }
    let total: f64 = idx
        .iter()
        .map(|&i| angle_between(normal_at(pred, i), normal_at(gt, i)).to_degrees())
        .sum();
    Ok(total / idx.len() as f64)
}

/// Fraction of pixels selected by `select` where both label sets agree.
pub fn label_agreement(pred: &RegionLabels, truth: &RegionLabels, select: &[bool]) -> Result<f64> {
    if pred.width() != truth.width() || pred.height() != truth.height() || select.len() != truth.as_slice().len() {
        return Err(Error::Dimension("label frames differ".into()));
    }
    let mut hit = 0usize;
    let mut n = 0usize;
    for (i, &s) in select.iter().enumerate() {
        if s {
            n += 1;
            hit += usize::from(pred.get(i) == truth.get(i));
        }
    }
    if n == 0 {
        return Err(Error::Parameter("no pixels selected".into()));
    }
    Ok(hit as f64 / n as f64)
}
