//! Precoder construction timing and log-log scaling fits.

use std::fmt::Write as _;

use super::sweep::fmt_f64;
use crate::error::{Error, Result};
use crate::precoding::{precoder_cost_probe, Scheme};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scheme: Scheme,
    pub n_users: usize,
    pub n_tx: usize,
    pub median_ns: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of `ln(time)` against `ln(K)` per scheme.
    pub slopes: Vec<(Scheme, f64)>,
}

impl BenchTable {
    pub fn slope(&self, scheme: Scheme) -> Option<f64> {
        self.slopes
            .iter()
            .find(|(s, _)| *s == scheme)
            .map(|(_, v)| *v)
    }

    pub fn median_ns(&self, scheme: Scheme, n_users: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.n_users == n_users)
            .map(|r| r.median_ns)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,k,n_tx,median_ns\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.scheme.name(),
                r.n_users,
                r.n_tx,
                fmt_f64(r.median_ns)
            );
        }
        for (s, slope) in &self.slopes {
            let _ = writeln!(out, "# loglog_slope,{},{}", s.name(), fmt_f64(*slope));
        }
        out
    }
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least two points to fit a slope".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("x values are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

/// Times both precoders for every `K` in `k_grid` with `N_t = ratio·K`.
pub fn run_complexity_bench(
    k_grid: &[usize],
    antenna_ratio: usize,
    repetitions: usize,
) -> Result<BenchTable> {
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for scheme in Scheme::ALL {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &k in k_grid {
            let n_tx = k * antenna_ratio;
            let t = precoder_cost_probe(scheme, n_tx, k, repetitions)?;
            let ns = (t.as_nanos() as f64).max(1.0);
            rows.push(BenchRow {
                scheme,
                n_users: k,
                n_tx,
                median_ns: ns,
            });
            xs.push((k as f64).ln());
            ys.push(ns.ln());
        }
        if xs.len() >= 2 {
            slopes.push((scheme, fit_slope(&xs, &ys)?));
        }
    }
    Ok(BenchTable { rows, slopes })
}
