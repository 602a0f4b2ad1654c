//! Analytic link quantities: the power/interference decomposition under
//! imperfect CSI, average SINR, the M-QAM BER approximation and the
//! expected per-pixel distortion of bit-plane transmission.

use rayon::prelude::*;

use crate::channel::{CMatrix, ChannelSet};
use crate::error::{Error, Result};
use crate::precoding::Precoder;
use crate::seed::SeedSpec;

/// Square M-QAM parameters of the BER approximation `α·Q(β√γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QamParams {
    order: u32,
    alpha: f64,
    beta: f64,
}

impl QamParams {
    pub fn new(order: u32) -> Result<Self> {
        let bits = order.trailing_zeros();
        if order < 4 || !order.is_power_of_two() || !bits.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "QAM order must be a square power of two >= 4, got {order}"
            )));
        }
        let m = order as f64;
        Ok(Self {
            order,
            alpha: 4.0 / bits as f64 * (1.0 - 1.0 / m.sqrt()),
            beta: (3.0 / (m - 1.0)).sqrt(),
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.order.trailing_zeros()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Per-user power and interference terms, all averaged over the CSI error.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    pub p_precode: Vec<f64>,
    pub i_precode: Vec<f64>,
    pub i_error: Vec<f64>,
    pub sinr: Vec<f64>,
    pub tx_power: f64,
    pub noise_var: f64,
    pub err_var: f64,
}

impl LinkBudget {
    pub fn n_users(&self) -> usize {
        self.sinr.len()
    }

    /// `E[P_k] = P_k^precode + p σ_e²`.
    pub fn expected_desired(&self, k: usize) -> f64 {
        self.p_precode[k] + self.tx_power * self.err_var
    }

    /// `E[I_k] = I_k^precode + I_k^error`.
    pub fn expected_interference(&self, k: usize) -> f64 {
        self.i_precode[k] + self.i_error[k]
    }

    pub fn ber(&self, qam: &QamParams) -> Vec<f64> {
        self.sinr
            .iter()
            .map(|&g| ber_from_sinr(g, qam).expect("SINR is nonnegative by construction"))
            .collect()
    }
}

/// Matrix of effective gains `G[k, j] = h_k^H f_j`.
pub(crate) fn effective_gains(h: &CMatrix, f: &CMatrix) -> CMatrix {
    h.ad_mul(f)
}

/// Analytic link budget from the transmitter-known channel.
pub fn link_budget(
    channel: &ChannelSet,
    precoder: &Precoder,
    tx_power: f64,
    noise_var: f64,
) -> Result<LinkBudget> {
    check_link_inputs(channel, precoder, tx_power, noise_var)?;
    let k_users = channel.n_users();
    let g = effective_gains(channel.h_known(), precoder.matrix());
    let sigma_e2 = channel.err_var();
    let i_err = tx_power * (k_users as f64 - 1.0) * sigma_e2;
    let mut budget = LinkBudget {
        p_precode: Vec::with_capacity(k_users),
        i_precode: Vec::with_capacity(k_users),
        i_error: vec![i_err; k_users],
        sinr: Vec::with_capacity(k_users),
        tx_power,
        noise_var,
        err_var: sigma_e2,
    };
    for k in 0..k_users {
        let (desired, interference) = row_powers(&g, k, tx_power);
        budget.p_precode.push(desired);
        budget.i_precode.push(interference);
        budget
            .sinr
            .push((desired + tx_power * sigma_e2) / (interference + i_err + noise_var));
    }
    Ok(budget)
}

fn row_powers(g: &CMatrix, k: usize, tx_power: f64) -> (f64, f64) {
    let desired = tx_power * g[(k, k)].norm_sqr();
    let interference = tx_power
        * (0..g.ncols())
            .filter(|&j| j != k)
            .map(|j| g[(k, j)].norm_sqr())
            .sum::<f64>();
    (desired, interference)
}

fn check_link_inputs(
    channel: &ChannelSet,
    precoder: &Precoder,
    tx_power: f64,
    noise_var: f64,
) -> Result<()> {
    if channel.h_known().shape() != precoder.matrix().shape() {
        return Err(Error::Dimension(format!(
            "channel is {:?} but precoder is {:?}",
            channel.h_known().shape(),
            precoder.matrix().shape()
        )));
    }
    if !(tx_power > 0.0) || !(noise_var > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "transmit power and noise variance must be positive (p = {tx_power}, σ_n² = {noise_var})"
        )));
    }
    Ok(())
}

/// A Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    /// True when `value` lies within `rel` relative error or `n_se` standard
    /// errors of the mean.
    pub fn agrees_with(&self, value: f64, rel: f64, n_se: f64) -> bool {
        let diff = (self.mean - value).abs();
        diff <= rel * value.abs() || diff <= n_se * self.std_err
    }
}

/// Monte-Carlo estimates of `E[P_k]` and `E[I_k]` over fresh error draws
/// with `Ĥ` (and hence the precoder) held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLinkBudget {
    pub desired: Vec<Estimate>,
    pub interference: Vec<Estimate>,
    pub n_trials: usize,
    pub tx_power: f64,
    pub noise_var: f64,
}

impl EmpiricalLinkBudget {
    pub fn sinr(&self) -> Vec<f64> {
        self.desired
            .iter()
            .zip(&self.interference)
            .map(|(p, i)| p.mean / (i.mean + self.noise_var))
            .collect()
    }
}

const EMPIRICAL_BLOCKS: usize = 64;

/// Trial `t` uses the error realization `channel.redraw_error(seed.with_trial(t))`.
pub fn empirical_link_budget(
    channel: &ChannelSet,
    precoder: &Precoder,
    tx_power: f64,
    noise_var: f64,
    n_trials: usize,
    seed: SeedSpec,
) -> Result<EmpiricalLinkBudget> {
    check_link_inputs(channel, precoder, tx_power, noise_var)?;
    if n_trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let k_users = channel.n_users();
    // Moments are taken about the error-free powers to avoid cancellation.
    let known = effective_gains(channel.h_known(), precoder.matrix());
    let shift: Vec<(f64, f64)> = (0..k_users)
        .map(|k| row_powers(&known, k, tx_power))
        .collect();
    // [sum ΔP, sum ΔP², sum ΔI, sum ΔI²] per user, accumulated per block and
    // then reduced in a fixed order so results do not depend on scheduling.
    let block_len = n_trials.div_ceil(EMPIRICAL_BLOCKS);
    let blocks: Vec<Vec<[f64; 4]>> = (0..EMPIRICAL_BLOCKS)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![[0.0; 4]; k_users];
            let lo = b * block_len;
            let hi = ((b + 1) * block_len).min(n_trials);
            for t in lo..hi {
                let g = if channel.err_var() == 0.0 {
                    known.clone()
                } else {
                    let draw = channel.redraw_error(seed.with_trial(t as u64));
                    effective_gains(draw.h_true(), precoder.matrix())
                };
                for (k, a) in acc.iter_mut().enumerate() {
                    let (p, i) = row_powers(&g, k, tx_power);
                    let (p, i) = (p - shift[k].0, i - shift[k].1);
                    a[0] += p;
                    a[1] += p * p;
                    a[2] += i;
                    a[3] += i * i;
                }
            }
            acc
        })
        .collect();
    let n = n_trials as f64;
    let mut desired = Vec::with_capacity(k_users);
    let mut interference = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let mut s = [0.0; 4];
        for block in &blocks {
            for (x, y) in s.iter_mut().zip(block[k]) {
                *x += y;
            }
        }
        desired.push(moments(s[0], s[1], n, shift[k].0));
        interference.push(moments(s[2], s[3], n, shift[k].1));
    }
    Ok(EmpiricalLinkBudget {
        desired,
        interference,
        n_trials,
        tx_power,
        noise_var,
    })
}

fn moments(sum: f64, sum_sq: f64, n: f64, shift: f64) -> Estimate {
    let mean = sum / n;
    let var = if n > 1.0 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Estimate {
        mean: shift + mean,
        std_err: (var / n).sqrt(),
    }
}

/// Gaussian tail probability `Q(x) = ½ erfc(x/√2)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// `α·Q(β√γ)`, clamped to `[0, 1]`.
pub fn ber_from_sinr(sinr: f64, qam: &QamParams) -> Result<f64> {
    if !(sinr >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "SINR must be >= 0, got {sinr}"
        )));
    }
    Ok((qam.alpha * q_function(qam.beta * sinr.sqrt())).clamp(0.0, 1.0))
}

/// `Σ_k 2^{k-1} BER_k`: expected absolute per-pixel error in 8-bit intensity
/// units, assuming at most one bit error per pixel. Stream 0 is the LSB.
pub fn expected_distortion(bers: &[f64], n_streams: usize) -> Result<f64> {
    if bers.len() != n_streams {
        return Err(Error::Dimension(format!(
            "expected {n_streams} BER values, got {}",
            bers.len()
        )));
    }
    if let Some(b) = bers.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        return Err(Error::InvalidParameter(format!("BER {b} outside [0, 1]")));
    }
    Ok(bers
        .iter()
        .enumerate()
        .map(|(k, b)| (1u64 << k) as f64 * b)
        .sum())
}
