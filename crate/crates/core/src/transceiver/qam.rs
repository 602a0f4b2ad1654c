use num_complex::Complex64;

use crate::error::Result;
use crate::link::QamParams;

/// Square Gray-labelled M-QAM with unit average symbol energy.
///
/// A label's high half of bits selects the in-phase level and the low half
/// the quadrature level, each Gray-coded along its axis.
#[derive(Debug, Clone, PartialEq)]
pub struct QamConstellation {
    order: u32,
    bits_per_symbol: usize,
    side: usize,
    // amplitude of each axis level index, ascending
    levels: Vec<f64>,
    points: Vec<Complex64>,
}

/// Symbols together with the number of zero bits appended to fill the last
/// symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulated {
    pub symbols: Vec<Complex64>,
    pub pad_bits: usize,
}

impl QamConstellation {
    pub fn new(order: u32) -> Result<Self> {
        let params = QamParams::new(order)?;
        let bits_per_symbol = params.bits_per_symbol() as usize;
        let side = 1usize << (bits_per_symbol / 2);
        // E|x|² = 2(M−1)/3 · scale² for levels ±1, ±3, ...
        let scale = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
        let levels: Vec<f64> = (0..side)
            .map(|i| (2.0 * i as f64 - (side as f64 - 1.0)) * scale)
            .collect();
        let half = bits_per_symbol / 2;
        let mask = (1usize << half) - 1;
        let points = (0..order as usize)
            .map(|label| {
                let i = gray_decode(label >> half);
                let q = gray_decode(label & mask);
                Complex64::new(levels[i], levels[q])
            })
            .collect();
        Ok(Self {
            order,
            bits_per_symbol,
            side,
            levels,
            points,
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    /// Constellation points indexed by label.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn map_label(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Label of the nearest constellation point. For a square grid the
    /// minimum-distance decision separates into two per-axis decisions.
    pub fn slice(&self, y: Complex64) -> usize {
        let half = self.bits_per_symbol / 2;
        (gray_encode(self.nearest_level(y.re)) << half) | gray_encode(self.nearest_level(y.im))
    }

    fn nearest_level(&self, v: f64) -> usize {
        let spacing = self.levels[1] - self.levels[0];
        let idx = ((v - self.levels[0]) / spacing).round();
        if idx.is_nan() {
            0
        } else {
            idx.clamp(0.0, (self.side - 1) as f64) as usize
        }
    }

    /// Maps bits to symbols, most significant label bit first. The tail is
    /// zero-padded to a whole symbol.
    pub fn modulate(&self, bits: &[bool]) -> Modulated {
        let m = self.bits_per_symbol;
        let pad_bits = (m - bits.len() % m) % m;
        let symbols = bits
            .chunks(m)
            .map(|chunk| {
                let label = (0..m).fold(0usize, |acc, i| {
                    (acc << 1) | chunk.get(i).copied().unwrap_or(false) as usize
                });
                self.points[label]
            })
            .collect();
        Modulated { symbols, pad_bits }
    }

    /// Minimum-distance detection. Returns `symbols.len() · log₂M` bits,
    /// including any padding.
    pub fn demodulate(&self, symbols: &[Complex64]) -> Vec<bool> {
        let mut bits = Vec::with_capacity(symbols.len() * self.bits_per_symbol);
        for &y in symbols {
            self.push_label_bits(self.slice(y), &mut bits);
        }
        bits
    }

    pub(crate) fn push_label_bits(&self, label: usize, out: &mut Vec<bool>) {
        for i in (0..self.bits_per_symbol).rev() {
            out.push((label >> i) & 1 == 1);
        }
    }
}

fn gray_encode(n: usize) -> usize {
    n ^ (n >> 1)
}

fn gray_decode(mut g: usize) -> usize {
    let mut n = g;
    while g > 0 {
        g >>= 1;
        n ^= g;
    }
    n
}
