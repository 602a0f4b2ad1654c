use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::bitplane::BitPlaneSource;
use super::qam::QamConstellation;
use crate::channel::{complex_normal, ChannelSet};
use crate::error::{Error, Result};
use crate::link::effective_gains;
use crate::precoding::Precoder;
use crate::seed::SeedSpec;

/// Effective gains with magnitude below this are treated as undetectable.
pub const UNDETECTABLE_GAIN: f64 = 1e-12;

const BLOCK_SYMBOLS: usize = 2048;

/// Which scalar the receiver divides by before slicing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Equalizer {
    /// Genie-aided: the true effective gain `h_k^H f_k √p`.
    #[default]
    TrueGain,
    /// The transmitter-side estimate `ĥ_k^H f_k √p`.
    KnownGain,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameOptions {
    pub equalizer: Equalizer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub received: BitPlaneSource,
    pub bit_errors: Vec<u64>,
    pub bits_per_stream: usize,
    /// Empirical BER per stream; 0.5 for undetectable streams.
    pub ber: Vec<f64>,
    pub undetectable: Vec<bool>,
}

impl FrameResult {
    pub fn mean_ber(&self) -> f64 {
        self.ber.iter().sum::<f64>() / self.ber.len() as f64
    }
}

/// Sends plane `k` to user `k` over the true channel:
/// `y_k = Σ_j h_k^H f_j √p x_j + v_k`, `v_k ~ CN(0, σ_n²)`.
///
/// Symbol times are processed in fixed-size blocks; block `b` draws its
/// noise from `seed.derive(b)`, so the result does not depend on thread
/// count.
#[allow(clippy::too_many_arguments)]
pub fn transmit_frame(
    source: &BitPlaneSource,
    channel: &ChannelSet,
    precoder: &Precoder,
    tx_power: f64,
    noise_var: f64,
    constellation: &QamConstellation,
    seed: SeedSpec,
    options: FrameOptions,
) -> Result<FrameResult> {
    let k_users = channel.n_users();
    if source.n_streams() != k_users {
        return Err(Error::Dimension(format!(
            "{} streams but {k_users} users",
            source.n_streams()
        )));
    }
    if precoder.matrix().shape() != channel.h_true().shape() {
        return Err(Error::Dimension("precoder does not match channel".into()));
    }
    if !(tx_power > 0.0) || !(noise_var >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need p > 0 and σ_n² >= 0 (p = {tx_power}, σ_n² = {noise_var})"
        )));
    }

    let amp = tx_power.sqrt();
    let gains = effective_gains(channel.h_true(), precoder.matrix()) * Complex64::new(amp, 0.0);
    let eq_gains: Vec<Complex64> = match options.equalizer {
        Equalizer::TrueGain => (0..k_users).map(|k| gains[(k, k)]).collect(),
        Equalizer::KnownGain => {
            let known = effective_gains(channel.h_known(), precoder.matrix());
            (0..k_users).map(|k| known[(k, k)] * amp).collect()
        }
    };
    let undetectable: Vec<bool> = eq_gains
        .iter()
        .map(|g| g.norm() < UNDETECTABLE_GAIN)
        .collect();

    let streams: Vec<_> = source
        .planes()
        .iter()
        .map(|p| constellation.modulate(p))
        .collect();
    let n_symbols = streams.iter().map(|s| s.symbols.len()).max().unwrap_or(0);
    let zero = Complex64::new(0.0, 0.0);
    let symbol_at = |k: usize, t: usize| streams[k].symbols.get(t).copied().unwrap_or(zero);
    let noise_std = noise_var.sqrt();
    let n_blocks = n_symbols.div_ceil(BLOCK_SYMBOLS);

    let blocks: Vec<Vec<Vec<bool>>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed.derive(b as u64).rng();
            let lo = b * BLOCK_SYMBOLS;
            let hi = ((b + 1) * BLOCK_SYMBOLS).min(n_symbols);
            let mut out =
                vec![Vec::with_capacity((hi - lo) * constellation.bits_per_symbol()); k_users];
            let mut x = vec![zero; k_users];
            for t in lo..hi {
                for (k, xk) in x.iter_mut().enumerate() {
                    *xk = symbol_at(k, t);
                }
                for k in 0..k_users {
                    let mut y = complex_normal(&mut rng, noise_std);
                    for (j, xj) in x.iter().enumerate() {
                        y += gains[(k, j)] * xj;
                    }
                    let label = if undetectable[k] {
                        rng.random_range(0..constellation.order() as usize)
                    } else {
                        constellation.slice(y / eq_gains[k])
                    };
                    constellation.push_label_bits(label, &mut out[k]);
                }
            }
            out
        })
        .collect();

    let bits_per_stream = source.width() * source.height();
    let mut planes = vec![Vec::with_capacity(n_symbols * constellation.bits_per_symbol()); k_users];
    for block in blocks {
        for (plane, bits) in planes.iter_mut().zip(block) {
            plane.extend(bits);
        }
    }
    let mut bit_errors = Vec::with_capacity(k_users);
    let mut ber = Vec::with_capacity(k_users);
    for (k, plane) in planes.iter_mut().enumerate() {
        plane.truncate(bits_per_stream);
        let errs = plane
            .iter()
            .zip(source.plane(k))
            .filter(|(a, b)| a != b)
            .count() as u64;
        bit_errors.push(errs);
        ber.push(if undetectable[k] {
            0.5
        } else {
            errs as f64 / bits_per_stream as f64
        });
    }
    Ok(FrameResult {
        received: BitPlaneSource::from_planes(source.width(), source.height(), planes)?,
        bit_errors,
        bits_per_stream,
        ber,
        undetectable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel_set, CMatrix};
    use crate::image::synthetic_image;
    use crate::precoding::{mf_precoder, zf_precoder};
    use crate::transceiver::split_bit_planes;

    fn source() -> BitPlaneSource {
        split_bit_planes(&synthetic_image(40, 30), 8).unwrap()
    }

    #[test]
    fn zf_noiseless_is_error_free() {
        let ch = draw_channel_set(16, 8, 0.0, SeedSpec::new(1, 1)).unwrap();
        let p = zf_precoder(ch.h_known()).unwrap();
        let c = QamConstellation::new(4).unwrap();
        let r = transmit_frame(
            &source(),
            &ch,
            &p,
            1.0,
            0.0,
            &c,
            SeedSpec::new(2, 0),
            FrameOptions::default(),
        )
        .unwrap();
        assert!(r.bit_errors.iter().all(|&e| e == 0));
        assert_eq!(r.received, source());
        assert_eq!(r.bits_per_stream, 1200);
    }

    #[test]
    fn deterministic() {
        let ch = draw_channel_set(16, 8, 0.1, SeedSpec::new(1, 1)).unwrap();
        let p = mf_precoder(ch.h_known()).unwrap();
        let c = QamConstellation::new(16).unwrap();
        let run = || {
            transmit_frame(
                &source(),
                &ch,
                &p,
                10.0,
                1.0,
                &c,
                SeedSpec::new(5, 3),
                FrameOptions::default(),
            )
            .unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.bit_errors.iter().any(|&e| e > 0));
        assert_eq!(a.received.width(), 40);
        assert_eq!(a.received.planes().iter().map(Vec::len).max(), Some(1200));
    }

    #[test]
    fn undetectable_user_gets_half_ber() {
        let mut known = CMatrix::zeros(8, 8);
        for k in 0..8 {
            known[(k, k)] = Complex64::new(1.0, 0.0);
        }
        let mut truth = known.clone();
        truth[(3, 3)] = Complex64::new(0.0, 0.0);
        let ch = ChannelSet::from_parts(known, truth, 0.01).unwrap();
        let p = zf_precoder(ch.h_known()).unwrap();
        let c = QamConstellation::new(4).unwrap();
        let r = transmit_frame(
            &source(),
            &ch,
            &p,
            1.0,
            1e-4,
            &c,
            SeedSpec::new(0, 0),
            FrameOptions::default(),
        )
        .unwrap();
        assert!(r.undetectable[3]);
        assert_eq!(r.ber[3], 0.5);
        assert!(r.undetectable.iter().filter(|&&u| u).count() == 1);
        // With the estimate-based equalizer the receiver still divides by a
        // nonzero gain and only sees noise.
        let opts = FrameOptions {
            equalizer: Equalizer::KnownGain,
        };
        let r =
            transmit_frame(&source(), &ch, &p, 1.0, 1e-4, &c, SeedSpec::new(0, 0), opts).unwrap();
        assert!(!r.undetectable[3]);
        assert_eq!(r.bit_errors[0], 0);
    }

    #[test]
    fn stream_count_mismatch() {
        let ch = draw_channel_set(16, 4, 0.0, SeedSpec::new(1, 1)).unwrap();
        let p = zf_precoder(ch.h_known()).unwrap();
        let c = QamConstellation::new(4).unwrap();
        let r = transmit_frame(
            &source(),
            &ch,
            &p,
            1.0,
            1.0,
            &c,
            SeedSpec::new(0, 0),
            FrameOptions::default(),
        );
        assert!(matches!(r, Err(Error::Dimension(_))));
    }
}
