//! Dense float images shared by material channels, renders and observations.

use crate::error::{Error, Result};

/// Row-major, interleaved float image. Row 0 is the top of the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

/// A three-channel linear radiance image.
pub type RadianceImage = FloatImage;

impl FloatImage {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(channels > 0, "images need at least one channel");
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || data.len() != width * height * channels {
            return Err(Error::Dimension(format!(
                "buffer of {} values cannot hold a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// The channel values of the pixel at linear index `i = y * width + x`.
    #[inline]
    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.channels..(i + 1) * self.channels]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_shape(&self, other: &FloatImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn check_same_shape(&self, other: &FloatImage, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Multiply every value by `k`.
    pub fn scaled(&self, k: f64) -> FloatImage {
        FloatImage {
            data: self.data.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }
}
