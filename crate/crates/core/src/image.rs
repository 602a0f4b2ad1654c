//! Grayscale images: 8-bit storage, unit-scaled float views, binary PGM I/O
//! and a deterministic synthetic test image.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};

/// An 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} pixels cannot form a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, level: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![level; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn to_unit(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
        }
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let img = image::ImageReader::open(path)?
            .with_guessed_format()?
            .decode()?
            .to_luma8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }

    /// Writes a binary (P5) PGM.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        PnmEncoder::new(file)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(
                &self.pixels,
                self.width as u32,
                self.height as u32,
                ExtendedColorType::L8,
            )?;
        Ok(())
    }
}

/// A grayscale image with real-valued pixels on the unit intensity scale
/// (8-bit level `v` maps to `v / 255`). Values are not clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} values cannot form a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, level: f64) -> Self {
        Self {
            width,
            height,
            data: vec![level; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "image sizes differ: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.ensure_same_shape(other)?;
        Ok(Image {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Euclidean norm of the pixel vector.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `‖self − other‖`.
    pub fn distance(&self, other: &Image) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Rounds to the nearest 8-bit level, clamping to `[0, 255]`.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self
                .data
                .iter()
                .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect(),
        }
    }
}

/// Deterministic test image: a diagonal gradient background with a few
/// solid shapes and two sinusoidal texture bands.
pub fn synthetic_image(width: usize, height: usize) -> GrayImage {
    let (w, h) = (width as f64, height as f64);
    let mut pixels = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let (x, y) = ((c as f64 + 0.5) / w, (r as f64 + 0.5) / h);
            let mut v = 40.0 + 150.0 * (0.6 * x + 0.4 * y);
            // texture bands
            if (0.08..0.22).contains(&y) {
                v = 128.0 + 90.0 * (2.0 * std::f64::consts::PI * 12.0 * x).sin();
            }
            if (0.80..0.92).contains(&y) {
                v = 128.0 + 70.0 * (2.0 * std::f64::consts::PI * (6.0 * x + 20.0 * y)).sin();
            }
            // disc
            if (x - 0.3).powi(2) + (y - 0.5).powi(2) < 0.15f64.powi(2) {
                v = 230.0;
            }
            // rectangle
            if (0.55..0.85).contains(&x) && (0.35..0.6).contains(&y) {
                v = 25.0;
            }
            // triangle
            if y > 0.62 && y < 0.78 && (x - 0.7).abs() < (y - 0.62) * 0.9 {
                v = 200.0;
            }
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage {
        width,
        height,
        pixels,
    }
}
