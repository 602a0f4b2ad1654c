use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const BITS_PER_PIXEL: usize = 8;

/// An 8-bit image split into bit planes. Plane `k` (0-based) holds bit `k` of
/// every pixel in row-major order, so plane 0 is the LSB (weight 1) and
/// plane 7 the MSB (weight 128).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPlaneSource {
    width: usize,
    height: usize,
    planes: Vec<Vec<bool>>,
}

impl BitPlaneSource {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_streams(&self) -> usize {
        self.planes.len()
    }

    pub fn planes(&self) -> &[Vec<bool>] {
        &self.planes
    }

    pub fn plane(&self, k: usize) -> &[bool] {
        &self.planes[k]
    }

    pub fn from_planes(width: usize, height: usize, planes: Vec<Vec<bool>>) -> Result<Self> {
        if planes.len() != BITS_PER_PIXEL {
            return Err(Error::UnsupportedBitDepth(planes.len()));
        }
        if let Some(bad) = planes.iter().find(|p| p.len() != width * height) {
            return Err(Error::Dimension(format!(
                "plane has {} bits, expected {}",
                bad.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            planes,
        })
    }

    pub fn combine(&self) -> GrayImage {
        combine_bit_planes(&self.planes, self.width, self.height)
            .expect("planes validated on construction")
    }
}

pub fn split_bit_planes(image: &GrayImage, n_streams: usize) -> Result<BitPlaneSource> {
    if n_streams != BITS_PER_PIXEL {
        return Err(Error::UnsupportedBitDepth(n_streams));
    }
    let planes = (0..n_streams)
        .map(|k| image.pixels().iter().map(|&p| (p >> k) & 1 == 1).collect())
        .collect();
    Ok(BitPlaneSource {
        width: image.width(),
        height: image.height(),
        planes,
    })
}

/// `pixel = Σ_k 2^k · bit_k` over 0-based planes.
pub fn combine_bit_planes(planes: &[Vec<bool>], width: usize, height: usize) -> Result<GrayImage> {
    if planes.len() != BITS_PER_PIXEL {
        return Err(Error::UnsupportedBitDepth(planes.len()));
    }
    let n = width * height;
    if planes.iter().any(|p| p.len() != n) {
        return Err(Error::Dimension(format!("all planes must have {n} bits")));
    }
    let pixels = (0..n)
        .map(|i| {
            planes
                .iter()
                .enumerate()
                .fold(0u8, |acc, (k, p)| acc | ((p[i] as u8) << k))
        })
        .collect();
    GrayImage::new(width, height, pixels)
}
