//! In-memory rasters shared by the codecs, data generation and metrics.

use crate::{Error, Result};

/// 8-bit class-id image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRaster {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl LabelRaster {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::invalid(format!(
                "label buffer has {} values, expected {height}x{width}",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, label: u8) -> Self {
        Self {
            height,
            width,
            data: vec![label; height * width],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, label: u8) {
        self.data[r * self.width + c] = label;
    }
}

/// Linear RGB image with channels in `[0, 1]`, row-major, channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::invalid(format!(
                "rgb buffer has {} values, expected {height}x{width}x3",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    pub fn pixel(&self, r: usize, c: usize) -> [f64; 3] {
        let k = (r * self.width + c) * 3;
        [self.data[k], self.data[k + 1], self.data[k + 2]]
    }

    pub fn set_pixel(&mut self, r: usize, c: usize, rgb: [f64; 3]) {
        let k = (r * self.width + c) * 3;
        self.data[k..k + 3].copy_from_slice(&rgb);
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, bytes.iter().map(|b| *b as f64 / 255.0).collect())
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}
