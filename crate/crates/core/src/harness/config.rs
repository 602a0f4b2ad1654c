//! Flat `key = value` experiment configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{GrayImage, Image};
use crate::inference::ContractionOperator;
use crate::metrics::ExternalMetric;
use crate::precoding::DEFAULT_CONDITION_LIMIT;
use crate::transceiver::Equalizer;

/// How the receiver-side reconstruction operator is built for a given
/// clean source image.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSpec {
    Identity,
    /// Affine contraction towards a flat image of the given unit level.
    AffineFlat {
        factor: f64,
        level: f64,
    },
    /// Affine contraction towards the clean source shifted by `offset`.
    AffineSource {
        factor: f64,
        offset: f64,
    },
    Smoothing {
        strength: f64,
    },
    External {
        template: String,
    },
}

impl OperatorSpec {
    pub fn build(&self, source: &Image) -> Result<ContractionOperator> {
        let (w, h) = (source.width(), source.height());
        match self {
            OperatorSpec::Identity => Ok(ContractionOperator::identity()),
            OperatorSpec::AffineFlat { factor, level } => {
                ContractionOperator::affine(Image::filled(w, h, *level), *factor)
            }
            OperatorSpec::AffineSource { factor, offset } => {
                ContractionOperator::affine(source.map(|v| v + offset), *factor)
            }
            OperatorSpec::Smoothing { strength } => ContractionOperator::smoothing(*strength),
            OperatorSpec::External { template } => {
                Ok(ContractionOperator::external(template.clone()))
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            OperatorSpec::Identity => "identity".into(),
            OperatorSpec::AffineFlat { factor, level } => format!("affine:{factor}:flat:{level}"),
            OperatorSpec::AffineSource { factor, offset } => {
                format!("affine:{factor}:source:{offset}")
            }
            OperatorSpec::Smoothing { strength } => format!("smoothing:{strength}"),
            OperatorSpec::External { template } => format!("external:{template}"),
        }
    }
}

impl FromStr for OperatorSpec {
    type Err = Error;

    /// `identity`, `smoothing:<λ>`, `affine:<ρ₀>:flat:<level>`,
    /// `affine:<ρ₀>:source:<offset>` or `external:<command template>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad operator `{s}`"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        if let Some(template) = s.strip_prefix("external:") {
            if !template.contains("{in}") || !template.contains("{out}") {
                return Err(Error::Config(
                    "external operator template needs {in} and {out}".into(),
                ));
            }
            return Ok(OperatorSpec::External {
                template: template.trim().to_string(),
            });
        }
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        match parts.as_slice() {
            ["identity"] => Ok(OperatorSpec::Identity),
            ["smoothing", l] => Ok(OperatorSpec::Smoothing { strength: num(l)? }),
            ["affine", f, "flat", level] => Ok(OperatorSpec::AffineFlat {
                factor: num(f)?,
                level: num(level)?,
            }),
            ["affine", f, "source", off] => Ok(OperatorSpec::AffineSource {
                factor: num(f)?,
                offset: num(off)?,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricSet {
    pub mae: bool,
    pub psnr: bool,
    pub ssim: bool,
}

impl FromStr for MetricSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = MetricSet {
            mae: false,
            psnr: false,
            ssim: false,
        };
        for name in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match name {
                "mae" => set.mae = true,
                "psnr" => set.psnr = true,
                "ssim" => set.ssim = true,
                other => return Err(Error::Config(format!("unknown metric `{other}`"))),
            }
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_tx: usize,
    pub n_users: usize,
    pub qam_order: u32,
    pub noise_var: f64,
    pub snr_grid: Vec<f64>,
    /// Error variances in dB; `-inf` stands for perfect CSI.
    pub err_var_grid: Vec<f64>,
    pub fixed_snr: f64,
    pub n_channel_trials: usize,
    pub n_frames: usize,
    pub operator: OperatorSpec,
    pub metrics: MetricSet,
    pub external_metric: Option<ExternalMetric>,
    pub master_seed: u64,
    pub output: PathBuf,
    pub image_path: Option<PathBuf>,
    pub image_size: usize,
    pub workers: usize,
    pub equalizer: Equalizer,
    pub condition_limit: f64,
    pub interference_trials: usize,
    pub bench_k_grid: Vec<usize>,
    pub bench_antenna_ratio: usize,
    pub bench_repetitions: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_tx: 16,
            n_users: 8,
            qam_order: 4,
            noise_var: 1.0,
            snr_grid: (0..=10).map(|i| -5.0 + 2.5 * i as f64).collect(),
            err_var_grid: (0..=10).map(|i| -20.0 + 2.0 * i as f64).collect(),
            fixed_snr: 15.0,
            n_channel_trials: 10,
            n_frames: 1,
            operator: OperatorSpec::Smoothing { strength: 1.0 },
            metrics: MetricSet {
                mae: true,
                psnr: true,
                ssim: true,
            },
            external_metric: None,
            master_seed: 20_250_101,
            output: PathBuf::from("results.csv"),
            image_path: None,
            image_size: 64,
            workers: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
            equalizer: Equalizer::TrueGain,
            condition_limit: DEFAULT_CONDITION_LIMIT,
            interference_trials: 10_000,
            bench_k_grid: vec![32, 64, 128, 256, 512],
            bench_antenna_ratio: 2,
            bench_repetitions: 100,
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| Error::Config(format!("{key}: cannot parse `{t}`")))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

/// Grid values may be given as a list or as `start:step:stop`.
fn parse_grid(key: &str, value: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = value.split(':').collect();
    if parts.len() == 3 {
        let (start, step, stop): (f64, f64, f64) = (
            parse_one(key, parts[0].trim())?,
            parse_one(key, parts[1].trim())?,
            parse_one(key, parts[2].trim())?,
        );
        if !(step > 0.0) || stop < start {
            return Err(Error::Config(format!("{key}: bad range `{value}`")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + step * i as f64).collect());
    }
    parse_list(key, value)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let mut value = value.trim();
            // Commands may legitimately contain `#`, everything else may carry
            // a trailing comment.
            if !matches!(key, "operator" | "external_metric") {
                if let Some(idx) = value.find(" #") {
                    value = value[..idx].trim();
                }
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n_tx" => self.n_tx = parse_one(key, value)?,
            "n_users" => self.n_users = parse_one(key, value)?,
            "qam_order" => self.qam_order = parse_one(key, value)?,
            "noise_var" => self.noise_var = parse_one(key, value)?,
            "snr_grid" => self.snr_grid = parse_grid(key, value)?,
            "err_var_grid" => self.err_var_grid = parse_grid(key, value)?,
            "fixed_snr" => self.fixed_snr = parse_one(key, value)?,
            "n_channel_trials" => self.n_channel_trials = parse_one(key, value)?,
            "n_frames" => self.n_frames = parse_one(key, value)?,
            "operator" => self.operator = value.parse()?,
            "metrics" => self.metrics = value.parse()?,
            "external_metric" => {
                self.external_metric = if value.is_empty() {
                    None
                } else {
                    Some(ExternalMetric {
                        name: self
                            .external_metric
                            .as_ref()
                            .map(|m| m.name.clone())
                            .unwrap_or_else(|| "external".into()),
                        template: value.to_string(),
                    })
                }
            }
            "external_metric_name" => {
                if let Some(m) = self.external_metric.as_mut() {
                    m.name = value.to_string();
                } else {
                    return Err(Error::Config(
                        "external_metric_name given before external_metric".into(),
                    ));
                }
            }
            "master_seed" => self.master_seed = parse_one(key, value)?,
            "output" => self.output = PathBuf::from(value),
            "image_path" => self.image_path = (!value.is_empty()).then(|| PathBuf::from(value)),
            "image_size" => self.image_size = parse_one(key, value)?,
            "workers" => self.workers = parse_one(key, value)?,
            "equalizer" => {
                self.equalizer = match value {
                    "true" => Equalizer::TrueGain,
                    "known" => Equalizer::KnownGain,
                    _ => {
                        return Err(Error::Config(format!(
                            "equalizer must be `true` or `known`, got `{value}`"
                        )))
                    }
                }
            }
            "condition_limit" => self.condition_limit = parse_one(key, value)?,
            "interference_trials" => self.interference_trials = parse_one(key, value)?,
            "bench_k_grid" => self.bench_k_grid = parse_list(key, value)?,
            "bench_antenna_ratio" => self.bench_antenna_ratio = parse_one(key, value)?,
            "bench_repetitions" => self.bench_repetitions = parse_one(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.snr_grid.is_empty() || self.err_var_grid.is_empty() {
            return fail("grids must be non-empty".into());
        }
        if self.snr_grid.iter().any(|v| !v.is_finite()) {
            return fail("snr_grid values must be finite".into());
        }
        if self
            .err_var_grid
            .iter()
            .any(|v| v.is_nan() || *v == f64::INFINITY)
        {
            return fail("err_var_grid values must be finite or -inf".into());
        }
        if self.n_channel_trials == 0 || self.n_frames == 0 || self.interference_trials == 0 {
            return fail("trial counts must be >= 1".into());
        }
        if self.n_users != crate::transceiver::BITS_PER_PIXEL {
            return fail(format!(
                "n_users must be 8: each user carries one bit plane of an 8-bit image (got {})",
                self.n_users
            ));
        }
        if self.n_tx < self.n_users {
            return fail(format!(
                "n_tx ({}) must be >= n_users ({})",
                self.n_tx, self.n_users
            ));
        }
        if let Err(e) = crate::link::QamParams::new(self.qam_order) {
            return fail(e.to_string());
        }
        if !(self.noise_var > 0.0) || !self.fixed_snr.is_finite() {
            return fail("noise_var must be > 0 and fixed_snr finite".into());
        }
        if self.image_size < 8 && self.image_path.is_none() {
            return fail("image_size must be >= 8 (SSIM window)".into());
        }
        if self.workers == 0 {
            return fail("workers must be >= 1".into());
        }
        if self.bench_k_grid.is_empty()
            || self.bench_k_grid.contains(&0)
            || self.bench_antenna_ratio == 0
        {
            return fail("bench sizes must be >= 1".into());
        }
        if self.bench_repetitions == 0 {
            return fail("bench_repetitions must be >= 1".into());
        }
        Ok(())
    }

    /// Transmit power for an SNR given in dB.
    pub fn tx_power(&self, snr_db: f64) -> f64 {
        self.noise_var * db_to_linear(snr_db)
    }

    pub fn source_image(&self) -> Result<GrayImage> {
        match &self.image_path {
            Some(p) => GrayImage::read_pgm(p),
            None => Ok(crate::image::synthetic_image(
                self.image_size,
                self.image_size,
            )),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
