//! Rayleigh downlink channels with imperfect transmitter-side CSI.
//!
//! The transmitter knows `ĥ_k ~ CN(0, I/N_t)`; the true channel is
//! `h_k = ĥ_k + e_k` with an independent error `e_k ~ CN(0, σ_e² I)`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed::SeedSpec;

pub type CMatrix = DMatrix<Complex64>;

/// True channel, transmitter-known channel and the error variance that
/// separates them. Columns are users, rows are transmit antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    h_true: CMatrix,
    h_known: CMatrix,
    err_var: f64,
}

impl ChannelSet {
    /// Builds a channel set from explicit matrices.
    pub fn from_parts(h_known: CMatrix, h_true: CMatrix, err_var: f64) -> Result<Self> {
        check_sizes(h_known.nrows(), h_known.ncols(), err_var)?;
        if h_true.shape() != h_known.shape() {
            return Err(Error::Dimension(format!(
                "true channel is {:?}, known channel is {:?}",
                h_true.shape(),
                h_known.shape()
            )));
        }
        Ok(Self {
            h_true,
            h_known,
            err_var,
        })
    }

    /// Perfect-CSI channel set: the transmitter knows `h` exactly.
    pub fn perfect(h: CMatrix) -> Result<Self> {
        Self::from_parts(h.clone(), h, 0.0)
    }

    pub fn n_tx(&self) -> usize {
        self.h_known.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.h_known.ncols()
    }

    pub fn h_true(&self) -> &CMatrix {
        &self.h_true
    }

    pub fn h_known(&self) -> &CMatrix {
        &self.h_known
    }

    pub fn err_var(&self) -> f64 {
        self.err_var
    }

    /// The error matrix `E = H − Ĥ`.
    pub fn error(&self) -> CMatrix {
        &self.h_true - &self.h_known
    }

    /// Keeps `Ĥ` and draws a fresh error realization from `seed`.
    pub fn redraw_error(&self, seed: SeedSpec) -> ChannelSet {
        let mut rng = seed.rng();
        let h_true = add_error(&self.h_known, self.err_var, &mut rng);
        ChannelSet {
            h_true,
            h_known: self.h_known.clone(),
            err_var: self.err_var,
        }
    }

    /// Writes the set as text: a header line `N_t K err_var`, then `N_t`
    /// rows of `Ĥ`, then `N_t` rows of `H`, each entry formatted `re+imj`.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.n_tx(), self.n_users(), self.err_var);
        for m in [&self.h_known, &self.h_true] {
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|c| format_complex(m[(r, c)])).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or("empty file")?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(format!("bad header `{header}`"));
        }
        let n_tx: usize = fields[0].parse().map_err(|e| format!("N_t: {e}"))?;
        let k: usize = fields[1].parse().map_err(|e| format!("K: {e}"))?;
        let err_var: f64 = fields[2].parse().map_err(|e| format!("err_var: {e}"))?;
        let mut read = |name: &str| -> std::result::Result<CMatrix, String> {
            let mut m = CMatrix::zeros(n_tx, k);
            for r in 0..n_tx {
                let line = lines.next().ok_or(format!("{name}: missing row {r}"))?;
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != k {
                    return Err(format!(
                        "{name}: row {r} has {} entries, expected {k}",
                        toks.len()
                    ));
                }
                for (c, t) in toks.iter().enumerate() {
                    m[(r, c)] = parse_complex(t).ok_or(format!("{name}: bad entry `{t}`"))?;
                }
            }
            Ok(m)
        };
        let h_known = read("known")?;
        let h_true = read("true")?;
        Self::from_parts(h_known, h_true, err_var).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }
}

/// Draws `Ĥ` with i.i.d. `CN(0, 1/N_t)` entries and `H = Ĥ + E` with
/// i.i.d. `CN(0, σ_e²)` error entries.
pub fn draw_channel_set(
    n_tx: usize,
    n_users: usize,
    err_var: f64,
    seed: SeedSpec,
) -> Result<ChannelSet> {
    check_sizes(n_tx, n_users, err_var)?;
    let mut rng = seed.rng();
    let std = (1.0 / n_tx as f64).sqrt();
    let h_known = CMatrix::from_fn(n_tx, n_users, |_, _| complex_normal(&mut rng, std));
    let h_true = add_error(&h_known, err_var, &mut rng);
    Ok(ChannelSet {
        h_true,
        h_known,
        err_var,
    })
}

fn add_error<R: Rng>(h_known: &CMatrix, err_var: f64, rng: &mut R) -> CMatrix {
    // Always consume the error draws so that Ĥ and the unit-variance error
    // directions are shared across error variances for a given seed.
    let std = err_var.sqrt();
    let e = CMatrix::from_fn(h_known.nrows(), h_known.ncols(), |_, _| {
        complex_normal(rng, 1.0)
    });
    if err_var == 0.0 {
        h_known.clone()
    } else {
        h_known + e * Complex64::new(std, 0.0)
    }
}

/// Circularly-symmetric complex Gaussian with `E|z|² = std²`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, std: f64) -> Complex64 {
    let s = std * std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

fn check_sizes(n_tx: usize, n_users: usize, err_var: f64) -> Result<()> {
    if n_users == 0 {
        return Err(Error::Dimension("need at least one user".into()));
    }
    if n_tx < n_users {
        return Err(Error::Dimension(format!(
            "N_t = {n_tx} < K = {n_users}: zero-forcing needs at least as many antennas as users"
        )));
    }
    if !(err_var >= 0.0 && err_var.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "error variance must be finite and >= 0, got {err_var}"
        )));
    }
    Ok(())
}

fn format_complex(z: Complex64) -> String {
    let mut s = String::new();
    let _ = write!(s, "{}", z.re);
    if z.im.is_sign_negative() {
        let _ = write!(s, "-{}j", -z.im);
    } else {
        let _ = write!(s, "+{}j", z.im);
    }
    s
}

fn parse_complex(tok: &str) -> Option<Complex64> {
    let body = tok.strip_suffix('j')?;
    // The separator is the last sign that is not part of an exponent and not
    // the leading sign of the real part.
    let bytes = body.as_bytes();
    let split = (1..bytes.len()).rev().find(|&i| {
        (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E')
    })?;
    let re: f64 = body[..split].parse().ok()?;
    let im: f64 = body[split..].parse().ok()?;
    Some(Complex64::new(re, im))
}
