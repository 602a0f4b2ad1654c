//! Matched-filter and zero-forcing linear precoders.

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix};
use num_complex::Complex64;

use crate::channel::{draw_channel_set, CMatrix};
use crate::error::{Error, Result};
use crate::seed::SeedSpec;

/// Default rejection threshold for the 1-norm condition number of `Ĥ^H Ĥ`.
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Mf,
    Zf,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::Mf, Scheme::Zf];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Mf => "MF",
            Scheme::Zf => "ZF",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mf" => Ok(Scheme::Mf),
            "zf" => Ok(Scheme::Zf),
            _ => Err(Error::InvalidParameter(format!(
                "unknown precoding scheme `{s}`"
            ))),
        }
    }
}

/// A unit-column-norm precoding matrix together with the channel estimate
/// it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    matrix_f: CMatrix,
    scheme: Scheme,
    source_channel: CMatrix,
}

impl Precoder {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix_f
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn source_channel(&self) -> &CMatrix {
        &self.source_channel
    }

    pub fn n_tx(&self) -> usize {
        self.matrix_f.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.matrix_f.ncols()
    }
}

/// Builds the precoder for `scheme` with the default conditioning limit.
pub fn build_precoder(scheme: Scheme, h_known: &CMatrix) -> Result<Precoder> {
    match scheme {
        Scheme::Mf => mf_precoder(h_known),
        Scheme::Zf => zf_precoder(h_known),
    }
}

/// `f_k = ĥ_k / ‖ĥ_k‖`.
pub fn mf_precoder(h_known: &CMatrix) -> Result<Precoder> {
    let mut f = h_known.clone();
    for (k, mut col) in f.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateChannel { column: k });
        }
        col.unscale_mut(norm);
    }
    Ok(Precoder {
        matrix_f: f,
        scheme: Scheme::Mf,
        source_channel: h_known.clone(),
    })
}

pub fn zf_precoder(h_known: &CMatrix) -> Result<Precoder> {
    zf_precoder_with_limit(h_known, DEFAULT_CONDITION_LIMIT)
}

/// `f_k = Ĥ â_k / ‖Ĥ â_k‖` where `â_k` is column `k` of `(Ĥ^H Ĥ)^{-1}`.
///
/// The Gram inverse is obtained from a Cholesky factorization. The exact
/// 1-norm condition number `‖G‖₁‖G⁻¹‖₁` is checked against `condition_limit`.
pub fn zf_precoder_with_limit(h_known: &CMatrix, condition_limit: f64) -> Result<Precoder> {
    let (n_tx, k) = h_known.shape();
    if n_tx < k {
        return Err(Error::Dimension(format!(
            "ZF needs N_t >= K, got N_t = {n_tx}, K = {k}"
        )));
    }
    if let Some(col) = h_known.column_iter().position(|c| c.norm_squared() == 0.0) {
        return Err(Error::DegenerateChannel { column: col });
    }
    let gram = gram_matrix(h_known);
    let singular = |condition| Error::Singular {
        condition,
        limit: condition_limit,
    };
    let chol = Cholesky::new(gram.clone()).ok_or_else(|| singular(f64::INFINITY))?;
    let inv = chol.inverse();
    let condition = one_norm(&gram) * one_norm(&inv);
    if !condition.is_finite() || condition > condition_limit {
        return Err(singular(condition));
    }
    let mut f = complex_product(h_known, &inv);
    for (col_idx, mut col) in f.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateChannel { column: col_idx });
        }
        col.unscale_mut(norm);
    }
    Ok(Precoder {
        matrix_f: f,
        scheme: Scheme::Zf,
        source_channel: h_known.clone(),
    })
}

fn split(m: &CMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

fn join(re: &DMatrix<f64>, im: &DMatrix<f64>) -> CMatrix {
    re.zip_map(im, Complex64::new)
}

/// `Ĥ^H Ĥ` through real matrix products, which use a blocked kernel.
fn gram_matrix(h: &CMatrix) -> CMatrix {
    let (re, im) = split(h);
    let (re_t, im_t) = (re.transpose(), im.transpose());
    let mut g = join(&(&re_t * &re + &im_t * &im), &(&re_t * &im - &im_t * &re));
    for i in 0..g.nrows() {
        g[(i, i)].im = 0.0;
    }
    g
}

fn complex_product(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    join(&(&ar * &br - &ai * &bi), &(&ar * &bi + &ai * &br))
}

fn one_norm(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z: &Complex64| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Median wall time of building one precoder of the given size.
///
/// One channel is drawn up front; only precoder construction is timed.
pub fn precoder_cost_probe(
    scheme: Scheme,
    n_tx: usize,
    n_users: usize,
    repetitions: usize,
) -> Result<Duration> {
    if repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be >= 1".into()));
    }
    let channel = draw_channel_set(
        n_tx,
        n_users,
        0.0,
        SeedSpec::new(0xBE4C, (n_tx * 100_003 + n_users) as u64),
    )?;
    let h = channel.h_known();
    // Warm-up so the first sample does not pay for page faults.
    black_box(build_precoder(scheme, h)?);
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        let p = build_precoder(scheme, black_box(h))?;
        samples.push(start.elapsed());
        black_box(p);
    }
    samples.sort_unstable();
    Ok(samples[samples.len() / 2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channel_set;
    use nalgebra::dmatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn mf_examples() {
        let h = dmatrix![c(1.0, 0.0); c(0.0, 0.0)];
        let p = mf_precoder(&h).unwrap();
        assert_eq!(p.matrix()[(0, 0)], c(1.0, 0.0));

        let h = dmatrix![c(3.0, 0.0); c(0.0, 4.0)];
        let f = mf_precoder(&h).unwrap().matrix().clone();
        assert!((f[(0, 0)] - c(0.6, 0.0)).norm() < 1e-15);
        assert!((f[(1, 0)] - c(0.0, 0.8)).norm() < 1e-15);
    }

    #[test]
    fn unit_columns_random() {
        let ch = draw_channel_set(16, 8, 0.0, SeedSpec::new(11, 0)).unwrap();
        for scheme in Scheme::ALL {
            let p = build_precoder(scheme, ch.h_known()).unwrap();
            for col in p.matrix().column_iter() {
                assert!((col.norm_squared() - 1.0).abs() < 1e-12);
            }
            assert_eq!(p.scheme(), scheme);
            assert_eq!(p.source_channel(), ch.h_known());
        }
    }

    #[test]
    fn zero_column_rejected() {
        let h = dmatrix![c(1.0, 0.0), c(0.0, 0.0); c(0.0, 0.0), c(0.0, 0.0)];
        assert!(matches!(
            mf_precoder(&h),
            Err(Error::DegenerateChannel { column: 1 })
        ));
        assert!(matches!(
            zf_precoder(&h),
            Err(Error::DegenerateChannel { column: 1 })
        ));
    }

    #[test]
    fn duplicate_columns_are_singular() {
        let ch = draw_channel_set(4, 2, 0.0, SeedSpec::new(2, 0)).unwrap();
        let mut h = ch.h_known().clone();
        let first = h.column(0).clone_owned();
        h.set_column(1, &first);
        match zf_precoder(&h) {
            Err(Error::Singular { condition, limit }) => {
                assert!(condition > limit);
                assert_eq!(limit, DEFAULT_CONDITION_LIMIT);
            }
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn condition_limit_is_configurable() {
        let h = dmatrix![c(1.0, 0.0), c(1.0, 0.0); c(0.0, 0.0), c(1e-3, 0.0)];
        // cond(G) is about 4e6 here.
        assert!(zf_precoder(&h).is_ok());
        assert!(matches!(
            zf_precoder_with_limit(&h, 1e3),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn zf_more_users_than_antennas() {
        let h = CMatrix::from_element(2, 3, c(1.0, 0.0));
        assert!(matches!(zf_precoder(&h), Err(Error::Dimension(_))));
    }

    #[test]
    fn probe_smoke() {
        let t = precoder_cost_probe(Scheme::Mf, 16, 8, 1000).unwrap();
        assert!(t > Duration::ZERO);
        assert!(precoder_cost_probe(Scheme::Zf, 16, 8, 0).is_err());
    }

    #[test]
    fn scheme_parse() {
        assert_eq!("zf".parse::<Scheme>().unwrap(), Scheme::Zf);
        assert_eq!("MF".parse::<Scheme>().unwrap(), Scheme::Mf);
        assert!("mmse".parse::<Scheme>().is_err());
    }
}
