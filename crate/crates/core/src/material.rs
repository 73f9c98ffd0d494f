//! Per-pixel material maps, the four-category value table, validation,
//! nearest-category classification and category-level editing.

use std::fmt;

use crate::error::{Error, Result};
use crate::image::FloatImage;

/// Tolerance on the decoded normal length of a masked pixel.
pub const NORMAL_NORM_TOLERANCE: f64 = 1e-3;

/// The four dielectric material categories, in their fixed iteration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MaterialCategory {
    Hair,
    Skin,
    Fabric,
    Leather,
}

/// Specular, roughness and subsurface weight for one category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryParams {
    pub specular: f64,
    pub roughness: f64,
    pub sss: f64,
}

const CATEGORY_TABLE: [CategoryParams; 4] = [
    CategoryParams {
        specular: 0.239,
        roughness: 0.500,
        sss: 0.00,
    },
    CategoryParams {
        specular: 0.184,
        roughness: 0.400,
        sss: 0.08,
    },
    CategoryParams {
        specular: 0.263,
        roughness: 0.850,
        sss: 0.00,
    },
    CategoryParams {
        specular: 0.224,
        roughness: 0.250,
        sss: 0.00,
    },
];

impl MaterialCategory {
    pub const ALL: [MaterialCategory; 4] = [
        MaterialCategory::Hair,
        MaterialCategory::Skin,
        MaterialCategory::Fabric,
        MaterialCategory::Leather,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn params(self) -> CategoryParams {
        CATEGORY_TABLE[self.index()]
    }

    pub fn name(self) -> &'static str {
        match self {
            MaterialCategory::Hair => "Hair",
            MaterialCategory::Skin => "Skin",
            MaterialCategory::Fabric => "Fabric",
            MaterialCategory::Leather => "Leather",
        }
    }
}

impl fmt::Display for MaterialCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MaterialCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parameter(format!("unknown material category '{s}'")))
    }
}

/// Returns `(specular, roughness, sss)` for a category.
pub fn category_params(cat: MaterialCategory) -> (f64, f64, f64) {
    let p = cat.params();
    (p.specular, p.roughness, p.sss)
}

/// The six estimated material channels, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    Normal,
    Diffuse,
    Roughness,
    Specular,
    Sss,
    Displacement,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::Normal,
        Channel::Diffuse,
        Channel::Roughness,
        Channel::Specular,
        Channel::Sss,
        Channel::Displacement,
    ];

    pub fn components(self) -> usize {
        match self {
            Channel::Normal | Channel::Diffuse => 3,
            _ => 1,
        }
    }

    /// Short label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Channel::Normal => "N",
            Channel::Diffuse => "D",
            Channel::Roughness => "R",
            Channel::Specular => "S",
            Channel::Sss => "SSS",
            Channel::Displacement => "Disp",
        }
    }

    /// File stem inside a map bundle directory.
    pub fn file_stem(self) -> &'static str {
        match self {
            Channel::Normal => "normal",
            Channel::Diffuse => "diffuse",
            Channel::Roughness => "roughness",
            Channel::Specular => "specular",
            Channel::Sss => "sss",
            Channel::Displacement => "disp",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_stem())
    }
}

/// Decoded material of a single pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialSample {
    pub normal: [f64; 3],
    pub diffuse: [f64; 3],
    pub roughness: f64,
    pub specular: f64,
    pub sss: f64,
    pub displacement: f64,
}

impl Default for MaterialSample {
    fn default() -> Self {
        Self {
            normal: [0.0, 0.0, 1.0],
            diffuse: [0.5; 3],
            roughness: 0.5,
            specular: 0.1,
            sss: 0.0,
            displacement: 0.5,
        }
    }
}

pub fn encode_normal(n: [f64; 3]) -> [f64; 3] {
    n.map(|c| c * 0.5 + 0.5)
}

pub fn decode_normal(e: [f64; 3]) -> [f64; 3] {
    e.map(|c| c * 2.0 - 1.0)
}

/// Screen-space material maps. Normals are stored encoded as `n * 0.5 + 0.5`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialMaps {
    width: usize,
    height: usize,
    pub normal: FloatImage,
    pub diffuse: FloatImage,
    pub roughness: FloatImage,
    pub specular: FloatImage,
    pub sss: FloatImage,
    pub displacement: FloatImage,
    pub mask: Vec<bool>,
}

impl MaterialMaps {
    /// All-zero maps with an empty mask.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            normal: FloatImage::new(width, height, 3),
            diffuse: FloatImage::new(width, height, 3),
            roughness: FloatImage::new(width, height, 1),
            specular: FloatImage::new(width, height, 1),
            sss: FloatImage::new(width, height, 1),
            displacement: FloatImage::new(width, height, 1),
            mask: vec![false; width * height],
        }
    }

    /// Maps with `sample` on every pixel where `mask` is set and zeros elsewhere.
    pub fn uniform(width: usize, height: usize, mask: Vec<bool>, sample: MaterialSample) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::Dimension(format!(
                "mask has {} entries for a {width}x{height} frame",
                mask.len()
            )));
        }
        let mut maps = Self::new(width, height);
        maps.mask = mask;
        for i in 0..width * height {
            if maps.mask[i] {
                maps.set_sample(i, &sample);
            }
        }
        Ok(maps)
    }

    /// Assemble maps from channel images, checking that every buffer agrees on
    /// the frame size and channel count.
    pub fn from_parts(
        normal: FloatImage,
        diffuse: FloatImage,
        roughness: FloatImage,
        specular: FloatImage,
        sss: FloatImage,
        displacement: FloatImage,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let (width, height) = (normal.width(), normal.height());
        let maps = Self {
            width,
            height,
            normal,
            diffuse,
            roughness,
            specular,
            sss,
            displacement,
            mask,
        };
        maps.check_buffers()?;
        Ok(maps)
    }

    fn check_buffers(&self) -> Result<()> {
        for ch in Channel::ALL {
            let img = self.channel(ch);
            if img.width() != self.width || img.height() != self.height || img.channels() != ch.components() {
                return Err(Error::Dimension(format!(
                    "channel {ch} is {}x{}x{}, expected {}x{}x{}",
                    img.width(),
                    img.height(),
                    img.channels(),
                    self.width,
                    self.height,
                    ch.components()
                )));
            }
        }
        if self.mask.len() != self.width * self.height {
            return Err(Error::Dimension(format!(
                "mask has {} entries for a {}x{} frame",
                self.mask.len(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn same_frame(&self, other: &MaterialMaps) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_aligned(&self, other: &MaterialMaps, what: &str) -> Result<()> {
        if !self.same_frame(other) {
            return Err(Error::Dimension(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        if self.mask != other.mask {
            return Err(Error::Dimension(format!("{what}: masks differ")));
        }
        Ok(())
    }

    pub fn channel(&self, ch: Channel) -> &FloatImage {
        match ch {
            Channel::Normal => &self.normal,
            Channel::Diffuse => &self.diffuse,
            Channel::Roughness => &self.roughness,
            Channel::Specular => &self.specular,
            Channel::Sss => &self.sss,
            Channel::Displacement => &self.displacement,
        }
    }

    pub fn channel_mut(&mut self, ch: Channel) -> &mut FloatImage {
        match ch {
            Channel::Normal => &mut self.normal,
            Channel::Diffuse => &mut self.diffuse,
            Channel::Roughness => &mut self.roughness,
            Channel::Specular => &mut self.specular,
            Channel::Sss => &mut self.sss,
            Channel::Displacement => &mut self.displacement,
        }
    }

    /// The decoded material at linear pixel index `i`.
    pub fn sample(&self, i: usize) -> MaterialSample {
        let e = self.normal.pixel(i);
        let d = self.diffuse.pixel(i);
        MaterialSample {
            normal: decode_normal([e[0], e[1], e[2]]),
            diffuse: [d[0], d[1], d[2]],
            roughness: self.roughness.data()[i],
            specular: self.specular.data()[i],
            sss: self.sss.data()[i],
            displacement: self.displacement.data()[i],
        }
    }

    pub fn set_sample(&mut self, i: usize, s: &MaterialSample) {
        self.normal.pixel_mut(i).copy_from_slice(&encode_normal(s.normal));
        self.diffuse.pixel_mut(i).copy_from_slice(&s.diffuse);
        self.roughness.data_mut()[i] = s.roughness;
        self.specular.data_mut()[i] = s.specular;
        self.sss.data_mut()[i] = s.sss;
        self.displacement.data_mut()[i] = s.displacement;
    }
}

/// One broken invariant found by [`validate_maps`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Channel name, or `"frame"` for buffer-shape problems.
    pub channel: String,
    pub pixel: Option<(usize, usize)>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pixel {
            Some((x, y)) => write!(f, "{} at ({x}, {y}): {}", self.channel, self.rule),
            None => write!(f, "{}: {}", self.channel, self.rule),
        }
    }
}

/// Check every invariant of `m`. Never aborts; an empty list means valid.
pub fn validate_maps(m: &MaterialMaps) -> Vec<Violation> {
    let mut out = Vec::new();
    if let Err(e) = m.check_buffers() {
        out.push(Violation {
            channel: "frame".into(),
            pixel: None,
            rule: e.to_string(),
        });
        return out;
    }
    let w = m.width;
    for i in 0..m.pixel_count() {
        let at = Some((i % w, i / w));
        if !m.mask[i] {
            for ch in Channel::ALL {
                if m.channel(ch).pixel(i).iter().any(|&v| v != 0.0) {
                    out.push(Violation {
                        channel: ch.to_string(),
                        pixel: at,
                        rule: "unmasked pixel must be zero".into(),
                    });
                }
            }
            continue;
        }
        for ch in Channel::ALL {
            if m.channel(ch).pixel(i).iter().any(|v| !(0.0..=1.0).contains(v)) {
                out.push(Violation {
                    channel: ch.to_string(),
                    pixel: at,
                    rule: "value outside [0, 1]".into(),
                });
            }
        }
        let e = m.normal.pixel(i);
        let n = decode_normal([e[0], e[1], e[2]]);
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if !((norm - 1.0).abs() <= NORMAL_NORM_TOLERANCE) {
            out.push(Violation {
                channel: Channel::Normal.to_string(),
                pixel: at,
                rule: format!("decoded normal has length {norm:.6}"),
            });
        }
        if n[2] < 0.0 {
            out.push(Violation {
                channel: Channel::Normal.to_string(),
                pixel: at,
                rule: "decoded normal faces away from the camera".into(),
            });
        }
    }
    out
}

/// Per-pixel category labels aligned with a [`MaterialMaps`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionLabels {
    width: usize,
    height: usize,
    labels: Vec<Option<MaterialCategory>>,
}

impl RegionLabels {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![None; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, i: usize) -> Option<MaterialCategory> {
        self.labels[i]
    }

    pub fn set(&mut self, i: usize, cat: Option<MaterialCategory>) {
        self.labels[i] = cat;
    }

    pub fn as_slice(&self) -> &[Option<MaterialCategory>] {
        &self.labels
    }

    /// Labels as a one-channel image: category index, or -1 for unlabeled.
    pub fn to_image(&self) -> FloatImage {
        let data = self
            .labels
            .iter()
            .map(|l| l.map_or(-1.0, |c| c.index() as f64))
            .collect();
        FloatImage::from_vec(self.width, self.height, 1, data).expect("label buffer matches frame")
    }

    pub fn from_image(img: &FloatImage) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::Dimension("label images have one channel".into()));
        }
        let labels = img
            .data()
            .iter()
            .map(|&v| {
                if v < 0.0 {
                    Ok(None)
                } else {
                    MaterialCategory::from_index(v as usize)
                        .map(Some)
                        .ok_or_else(|| Error::Parameter(format!("label value {v} is not a category")))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            width: img.width(),
            height: img.height(),
            labels,
        })
    }
}

/// Nearest category in unweighted `(roughness, specular, sss)` space. Ties go
/// to the earlier category.
pub fn nearest_category(roughness: f64, specular: f64, sss: f64) -> MaterialCategory {
    let mut best = MaterialCategory::Hair;
    let mut best_d = f64::INFINITY;
    for cat in MaterialCategory::ALL {
        let p = cat.params();
        let d = (roughness - p.roughness).powi(2) + (specular - p.specular).powi(2) + (sss - p.sss).powi(2);
        if d < best_d {
            best = cat;
            best_d = d;
        }
    }
    best
}

/// Label every masked pixel with its nearest category.
pub fn classify_materials(m: &MaterialMaps) -> RegionLabels {
    let mut labels = RegionLabels::new(m.width, m.height);
    for i in 0..m.pixel_count() {
        if m.mask[i] {
            labels.labels[i] = Some(nearest_category(
                m.roughness.data()[i],
                m.specular.data()[i],
                m.sss.data()[i],
            ));
        }
    }
    labels
}

/// Replace the category parameters of every pixel labeled `target` with the
/// row of `new`, optionally tinting its diffuse albedo.
pub fn apply_category_edit(
    m: &MaterialMaps,
    labels: &RegionLabels,
    target: MaterialCategory,
    new: MaterialCategory,
    tint: Option<[f64; 3]>,
) -> Result<MaterialMaps> {
    if labels.width != m.width || labels.height != m.height {
        return Err(Error::Dimension(format!(
            "labels are {}x{}, maps are {}x{}",
            labels.width, labels.height, m.width, m.height
        )));
    }
    let row = new.params();
    let mut out = m.clone();
    for i in 0..m.pixel_count() {
        if labels.labels[i] != Some(target) {
            continue;
        }
        out.roughness.data_mut()[i] = row.roughness;
        out.specular.data_mut()[i] = row.specular;
        out.sss.data_mut()[i] = row.sss;
        if let Some(t) = tint {
            for (d, k) in out.diffuse.pixel_mut(i).iter_mut().zip(t) {
                *d = (*d * k).clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}
