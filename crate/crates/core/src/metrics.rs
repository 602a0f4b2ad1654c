//! Image-quality metrics, oriented so that lower is better.
//!
//! Pixels are compared on the unit intensity scale; SSIM internally works on
//! the 8-bit scale so its stabilizing constants keep their usual values.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::inference::run_shell;
use crate::seed::SeedSpec;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 999.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 8,
            k1: 0.01,
            k2: 0.03,
            data_range: 255.0,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    /// One-line description for output metadata.
    pub fn describe(&self) -> String {
        format!(
            "ssim: uniform {w}x{w} sliding windows (stride 1), population moments, C1=({k1}*{r})^2, C2=({k2}*{r})^2",
            w = self.window,
            k1 = self.k1,
            k2 = self.k2,
            r = self.data_range
        )
    }
}

/// `10·log₁₀(1/MSE)` on unit-scaled pixels, i.e. `10·log₁₀(255²/MSE)` on
/// 8-bit pixels. Zero MSE returns [`PSNR_CAP_DB`].
pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    reference.ensure_same_shape(test)?;
    let mse = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.len() as f64;
    if mse == 0.0 {
        Ok(PSNR_CAP_DB)
    } else {
        Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
    }
}

/// Mean absolute error on unit-scaled pixels.
pub fn mae(reference: &Image, test: &Image) -> Result<f64> {
    reference.ensure_same_shape(test)?;
    Ok(reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / reference.len() as f64)
}

/// Summed-area table with a zero top row and left column.
struct Integral {
    width: usize,
    data: Vec<f64>,
}

impl Integral {
    fn new(w: usize, h: usize, f: impl Fn(usize) -> f64) -> Self {
        let stride = w + 1;
        let mut data = vec![0.0; stride * (h + 1)];
        for r in 0..h {
            let mut row = 0.0;
            for c in 0..w {
                row += f(r * w + c);
                data[(r + 1) * stride + c + 1] = data[r * stride + c + 1] + row;
            }
        }
        Self {
            width: stride,
            data,
        }
    }

    fn window_sum(&self, r: usize, c: usize, size: usize) -> f64 {
        let s = self.width;
        self.data[(r + size) * s + c + size]
            - self.data[r * s + c + size]
            - self.data[(r + size) * s + c]
            + self.data[r * s + c]
    }
}

/// Mean SSIM over all `window × window` windows.
pub fn ssim(reference: &Image, test: &Image, config: &SsimConfig) -> Result<f64> {
    reference.ensure_same_shape(test)?;
    let (w, h, win) = (reference.width(), reference.height(), config.window);
    if win == 0 || w < win || h < win {
        return Err(Error::Dimension(format!(
            "image {w}x{h} is smaller than the {win}x{win} SSIM window"
        )));
    }
    let scale = config.data_range;
    let x = reference.data();
    let y = test.data();
    let sx = Integral::new(w, h, |i| x[i] * scale);
    let sy = Integral::new(w, h, |i| y[i] * scale);
    let sxx = Integral::new(w, h, |i| (x[i] * scale).powi(2));
    let syy = Integral::new(w, h, |i| (y[i] * scale).powi(2));
    let sxy = Integral::new(w, h, |i| x[i] * y[i] * scale * scale);
    let n = (win * win) as f64;
    let (c1, c2) = (config.c1(), config.c2());
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=(h - win) {
        for c in 0..=(w - win) {
            let mx = sx.window_sum(r, c, win) / n;
            let my = sy.window_sum(r, c, win) / n;
            let vx = (sxx.window_sum(r, c, win) / n - mx * mx).max(0.0);
            let vy = (syy.window_sum(r, c, win) / n - my * my).max(0.0);
            let cxy = sxy.window_sum(r, c, win) / n - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// A scorer run as a shell command. `{ref}` and `{test}` are replaced with
/// PGM paths; the command prints one real number.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalMetric {
    pub name: String,
    pub template: String,
}

impl ExternalMetric {
    pub fn evaluate(&self, reference: &Image, test: &Image) -> Result<f64> {
        reference.ensure_same_shape(test)?;
        let dir = tempfile::tempdir()?;
        let rp = dir.path().join("ref.pgm");
        let tp = dir.path().join("test.pgm");
        reference.to_gray().write_pgm(&rp)?;
        test.to_gray().write_pgm(&tp)?;
        let stdout = run_shell(
            &self.template,
            &[
                ("{ref}", rp.to_string_lossy().as_ref()),
                ("{test}", tp.to_string_lossy().as_ref()),
            ],
        )?;
        stdout
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::ExternalCommand {
                command: self.template.clone(),
                reason: format!(
                    "expected one number on stdout, got `{}` ({e})",
                    stdout.trim()
                ),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub neg_psnr: f64,
    /// `1 − max(SSIM, 0)`, so always within `[0, 1]`.
    pub one_minus_ssim: f64,
    pub mae: f64,
    pub external: Option<(String, f64)>,
}

pub fn metric_report(
    reference: &Image,
    test: &Image,
    ssim_config: &SsimConfig,
    external: Option<&ExternalMetric>,
) -> Result<MetricReport> {
    let external = match external {
        Some(m) => Some((m.name.clone(), m.evaluate(reference, test)?)),
        None => None,
    };
    Ok(MetricReport {
        neg_psnr: -psnr(reference, test)?,
        one_minus_ssim: 1.0 - ssim(reference, test, ssim_config)?.max(0.0),
        mae: mae(reference, test)?,
        external,
    })
}

/// Built-in lower-is-better metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mae,
    NegPsnr,
    OneMinusSsim,
}

impl Metric {
    pub fn evaluate(self, test: &Image, reference: &Image) -> Result<f64> {
        match self {
            Metric::Mae => mae(reference, test),
            Metric::NegPsnr => Ok(-psnr(reference, test)?),
            Metric::OneMinusSsim => {
                Ok(1.0 - ssim(reference, test, &SsimConfig::default())?.max(0.0))
            }
        }
    }

    /// Analytic Lipschitz constant in the first argument with respect to
    /// the Euclidean norm of an `n_pixels` image, where one exists.
    /// PSNR is not globally Lipschitz and SSIM has no simple closed form;
    /// use [`metric_lipschitz_probe`] for those.
    pub fn analytic_lipschitz(self, n_pixels: usize) -> Option<f64> {
        match self {
            Metric::Mae => Some(1.0 / (n_pixels as f64).sqrt()),
            Metric::NegPsnr | Metric::OneMinusSsim => None,
        }
    }
}

/// Largest sampled `|M(u,s) − M(v,s)| / ‖u − v‖` over `samples` random
/// pairs around `reference`, with perturbations of Euclidean size `scale`.
pub fn metric_lipschitz_probe(
    metric: impl Fn(&Image, &Image) -> Result<f64>,
    reference: &Image,
    samples: usize,
    scale: f64,
    seed: SeedSpec,
) -> Result<f64> {
    let mut rng = seed.rng();
    let (w, h) = (reference.width(), reference.height());
    let mut perturb = |base: &Image| -> Result<Image> {
        let noise: Vec<f64> = (0..w * h)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
        let noise = Image::new(w, h, noise.into_iter().map(|v| v / norm * scale).collect())?;
        base.zip_map(&noise, |a, b| a + b)
    };
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let u = perturb(reference)?;
        let v = perturb(&u)?;
        let gap = u.distance(&v)?;
        if gap == 0.0 {
            continue;
        }
        let ratio = (metric(&u, reference)? - metric(&v, reference)?).abs() / gap;
        best = best.max(ratio);
    }
    Ok(best)
}
