//! Portable float maps, PNG previews and on-disk map bundles.
//!
//! PFM layout: `PF` (RGB) or `Pf` (gray), then `width height`, then a
//! negative scale marking little-endian data, each on its own line,
//! followed by 32-bit floats with rows stored bottom to top.

use std::fs;
use std::path::Path;

use crate::error::{Error, PfmError, Result};
use crate::estimator::ObservationSet;
use crate::image::{FloatImage, RadianceImage};
use crate::lighting::LightRig;
use crate::material::{Channel, MaterialMaps};
use crate::shader::to_srgb8;

pub fn encode_pfm(img: &FloatImage) -> Result<Vec<u8>> {
    let tag = match img.channels() {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::Parameter(format!("PFM holds 1 or 3 channels, not {c}"))),
    };
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let mut out = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * c * 4);
    for y in (0..h).rev() {
        let row = &img.data()[y * w * c..(y + 1) * w * c];
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Split off one newline-terminated header line.
fn header_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str, PfmError> {
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| PfmError::MalformedHeader("unterminated header line".into()))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end])
        .map(str::trim)
        .map_err(|_| PfmError::MalformedHeader("header is not ASCII".into()))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<FloatImage, PfmError> {
    let mut pos = 0;
    let channels = match header_line(bytes, &mut pos)? {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(PfmError::MalformedHeader(format!("unknown magic '{other}'"))),
    };
    let dims = header_line(bytes, &mut pos)?;
    let parsed: Vec<usize> = dims
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| PfmError::MalformedHeader(format!("bad dimensions '{dims}'")))?;
    let [w, h] = parsed[..] else {
        return Err(PfmError::MalformedHeader(format!("bad dimensions '{dims}'")));
    };
    let scale_line = header_line(bytes, &mut pos)?;
    let scale: f64 = scale_line
        .parse()
        .map_err(|_| PfmError::MalformedHeader(format!("bad scale '{scale_line}'")))?;
    if scale > 0.0 {
        return Err(PfmError::BigEndian);
    }
    if !(scale < 0.0) {
        return Err(PfmError::MalformedHeader(format!("bad scale '{scale_line}'")));
    }

    let payload = &bytes[pos..];
    let expected = w * h * channels * 4;
    if payload.len() != expected {
        let other = 4 - channels;
        if w * h > 0 && payload.len() == w * h * other * 4 {
            return Err(PfmError::ChannelCount {
                expected: channels,
                found: other,
            });
        }
        if payload.len() < expected {
            return Err(PfmError::Truncated {
                expected,
                found: payload.len(),
            });
        }
        return Err(PfmError::MalformedHeader(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }

    let mut data = vec![0.0f64; w * h * channels];
    let row_len = w * channels;
    for (file_row, chunk) in payload.chunks_exact(row_len * 4).enumerate() {
        let y = h - 1 - file_row;
        for (x, b) in chunk.chunks_exact(4).enumerate() {
            data[y * row_len + x] = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
        }
    }
    Ok(FloatImage::from_vec(w, h, channels, data).expect("sized from header"))
}

pub fn write_pfm(path: impl AsRef<Path>, img: &FloatImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pfm(img)?).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<FloatImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_pfm(&bytes)?)
}

/// Write an 8-bit sRGB PNG of `img` after scaling by `exposure`.
pub fn write_png_preview(path: impl AsRef<Path>, img: &RadianceImage, exposure: f64) -> Result<()> {
    let path = path.as_ref();
    let rgb = to_srgb8(img, exposure)?;
    rgb.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Png {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

pub const MASK_FILE: &str = "mask.pfm";

/// Write `maps` as `normal.pfm`, `diffuse.pfm`, `roughness.pfm`,
/// `specular.pfm`, `sss.pfm`, `disp.pfm` and `mask.pfm` under `dir`.
pub fn write_bundle(dir: impl AsRef<Path>, maps: &MaterialMaps) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for ch in Channel::ALL {
        write_pfm(dir.join(format!("{}.pfm", ch.file_stem())), maps.channel(ch))?;
    }
    let mask = maps.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let mask = FloatImage::from_vec(maps.width(), maps.height(), 1, mask)?;
    write_pfm(dir.join(MASK_FILE), &mask)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<bool>)> {
    let img = read_pfm(path.as_ref())?;
    if img.channels() != 1 {
        return Err(Error::Dimension("mask must be single-channel".into()));
    }
    Ok((img.width(), img.height(), img.data().iter().map(|&v| v > 0.5).collect()))
}

pub fn read_bundle(dir: impl AsRef<Path>) -> Result<MaterialMaps> {
    let dir = dir.as_ref();
    let load = |ch: Channel| read_pfm(dir.join(format!("{}.pfm", ch.file_stem())));
    let (_, _, mask) = read_mask(dir.join(MASK_FILE))?;
    MaterialMaps::from_parts(
        load(Channel::Normal)?,
        load(Channel::Diffuse)?,
        load(Channel::Roughness)?,
        load(Channel::Specular)?,
        load(Channel::Sss)?,
        load(Channel::Displacement)?,
        mask,
    )
}

pub const LIGHTS_FILE: &str = "lights.txt";
pub const OBS_DIR: &str = "obs";

fn obs_path(dir: &Path, k: usize) -> std::path::PathBuf {
    dir.join(OBS_DIR).join(format!("obs_{k:02}.pfm"))
}

/// Write `obs` under `dir`: `lights.txt`, `mask.pfm`, and `obs/obs_XX.pfm`
/// in light order.
pub fn write_observations(dir: impl AsRef<Path>, obs: &ObservationSet) -> Result<()> {
    let dir = dir.as_ref();
    let sub = dir.join(OBS_DIR);
    fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    let rig = LightRig::new(obs.observations().iter().map(|(l, _)| *l).collect());
    let lights = dir.join(LIGHTS_FILE);
    fs::write(&lights, rig.to_text()).map_err(|e| Error::io(&lights, e))?;
    let mask = obs.mask().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    write_pfm(dir.join(MASK_FILE), &FloatImage::from_vec(obs.width(), obs.height(), 1, mask)?)?;
    for (k, (_, img)) in obs.observations().iter().enumerate() {
        write_pfm(obs_path(dir, k), img)?;
    }
    Ok(())
}

/// Read an observation set written by [`write_observations`].
pub fn read_observations(dir: impl AsRef<Path>) -> Result<ObservationSet> {
    let dir = dir.as_ref();
    let lights = dir.join(LIGHTS_FILE);
    let text = fs::read_to_string(&lights).map_err(|e| Error::io(&lights, e))?;
    let rig = LightRig::from_text(&text)?;
    let (w, h, mask) = read_mask(dir.join(MASK_FILE))?;
    let observations = rig
        .iter()
        .enumerate()
        .map(|(k, l)| Ok((*l, read_pfm(obs_path(dir, k))?)))
        .collect::<Result<Vec<_>>>()?;
    ObservationSet::new(w, h, mask, observations)
}
