//! Contraction-operator proxies for a generative receiver and the
//! performance bounds that follow from their Lipschitz constant `ρ` and
//! reconstruction bias `δ_ε`.
//!
//! Image norms are Euclidean norms of the unit-scaled pixel vector.

use std::f64::consts::PI;
use std::process::Command;
use std::sync::{Condvar, Mutex};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::{GrayImage, Image};
use crate::link::QamParams;
use crate::seed::SeedSpec;

/// Anything that maps a received image to a reconstruction.
pub trait Reconstructor: Sync {
    fn reconstruct(&self, noisy: &Image) -> Result<Image>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    Identity,
    /// `G(u) = a + ρ₀(u − a)`.
    SyntheticAffine {
        anchor: Image,
        factor: f64,
    },
    /// Closed-form MAP estimate under a quadratic smoothness prior,
    /// `argmin_x ½‖x − u‖² + (λ/2)‖∇x‖²`, with reflecting borders.
    SmoothingDenoiser {
        strength: f64,
    },
    /// Shell command with `{in}` and `{out}` placeholders for PGM paths.
    ExternalCommand {
        template: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionOperator {
    pub kind: OperatorKind,
    pub declared_rho: Option<f64>,
}

impl ContractionOperator {
    pub fn identity() -> Self {
        Self {
            kind: OperatorKind::Identity,
            declared_rho: Some(1.0),
        }
    }

    pub fn affine(anchor: Image, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "affine factor must lie in (0, 1], got {factor}"
            )));
        }
        Ok(Self {
            kind: OperatorKind::SyntheticAffine { anchor, factor },
            declared_rho: Some(factor),
        })
    }

    pub fn smoothing(strength: f64) -> Result<Self> {
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "smoothing strength must be >= 0, got {strength}"
            )));
        }
        Ok(Self {
            kind: OperatorKind::SmoothingDenoiser { strength },
            declared_rho: Some(1.0),
        })
    }

    pub fn external(template: impl Into<String>) -> Self {
        Self {
            kind: OperatorKind::ExternalCommand {
                template: template.into(),
            },
            declared_rho: None,
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            OperatorKind::Identity => "identity".into(),
            OperatorKind::SyntheticAffine { factor, .. } => format!("affine({factor})"),
            OperatorKind::SmoothingDenoiser { strength } => format!("smoothing({strength})"),
            OperatorKind::ExternalCommand { .. } => "external".into(),
        }
    }
}

impl Reconstructor for ContractionOperator {
    fn reconstruct(&self, noisy: &Image) -> Result<Image> {
        apply_operator(self, noisy)
    }
}

/// `outer ∘ inner`.
pub struct Composition<'a> {
    pub outer: &'a dyn Reconstructor,
    pub inner: &'a dyn Reconstructor,
}

impl Reconstructor for Composition<'_> {
    fn reconstruct(&self, noisy: &Image) -> Result<Image> {
        self.outer.reconstruct(&self.inner.reconstruct(noisy)?)
    }
}

pub fn apply_operator(op: &ContractionOperator, noisy: &Image) -> Result<Image> {
    match &op.kind {
        OperatorKind::Identity => Ok(noisy.clone()),
        OperatorKind::SyntheticAffine { anchor, factor } => {
            anchor.zip_map(noisy, |a, u| a + factor * (u - a))
        }
        OperatorKind::SmoothingDenoiser { strength } => Ok(smooth(noisy, *strength)),
        OperatorKind::ExternalCommand { template } => run_external_operator(template, noisy),
    }
}

/// Orthonormal DCT-II basis (rows are basis vectors) and the matching
/// eigenvalues `2 − 2cos(πj/n)` of the reflecting-border path Laplacian.
fn dct_basis(n: usize) -> (DMatrix<f64>, Vec<f64>) {
    let basis = DMatrix::from_fn(n, n, |j, i| {
        let c = if j == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        c * (PI * j as f64 * (i as f64 + 0.5) / n as f64).cos()
    });
    let eig = (0..n)
        .map(|j| 2.0 - 2.0 * (PI * j as f64 / n as f64).cos())
        .collect();
    (basis, eig)
}

fn smooth(u: &Image, strength: f64) -> Image {
    if strength == 0.0 {
        return u.clone();
    }
    let (h, w) = (u.height(), u.width());
    let (ch, eh) = dct_basis(h);
    let (cw, ew) = dct_basis(w);
    let x = DMatrix::from_row_slice(h, w, u.data());
    let mut coeffs = &ch * x * cw.transpose();
    for r in 0..h {
        for c in 0..w {
            coeffs[(r, c)] /= 1.0 + strength * (eh[r] + ew[c]);
        }
    }
    let out = ch.transpose() * coeffs * &cw;
    let mut data = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            data.push(out[(r, c)]);
        }
    }
    Image::new(w, h, data).expect("shape preserved")
}

static EXTERNAL_SLOTS: Mutex<(usize, usize)> = Mutex::new((0, 1));
static EXTERNAL_FREED: Condvar = Condvar::new();

/// Caps how many external operator or metric commands run at once.
pub fn set_external_concurrency(limit: usize) {
    let mut slots = EXTERNAL_SLOTS.lock().unwrap_or_else(|e| e.into_inner());
    slots.1 = limit.max(1);
    EXTERNAL_FREED.notify_all();
}

struct SlotGuard;

impl SlotGuard {
    fn acquire() -> Self {
        let mut slots = EXTERNAL_SLOTS.lock().unwrap_or_else(|e| e.into_inner());
        while slots.0 >= slots.1 {
            slots = EXTERNAL_FREED
                .wait(slots)
                .unwrap_or_else(|e| e.into_inner());
        }
        slots.0 += 1;
        SlotGuard
    }
}

impl Drop for SlotGuard {
    fn drop(&mut self) {
        let mut slots = EXTERNAL_SLOTS.lock().unwrap_or_else(|e| e.into_inner());
        slots.0 -= 1;
        EXTERNAL_FREED.notify_one();
    }
}

/// Runs `template` through `sh -c` after substituting placeholders, and
/// returns its standard output. Non-zero exit is an error.
pub(crate) fn run_shell(template: &str, substitutions: &[(&str, &str)]) -> Result<String> {
    let mut command = template.to_string();
    for (key, value) in substitutions {
        command = command.replace(key, &shell_quote(value));
    }
    let _slot = SlotGuard::acquire();
    let fail = |reason: String| Error::ExternalCommand {
        command: command.clone(),
        reason,
    };
    let output = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .output()
        .map_err(|e| fail(e.to_string()))?;
    if !output.status.success() {
        return Err(fail(format!(
            "exit status {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    Ok(String::from_utf8_lossy(&output.stdout).into_owned())
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn run_external_operator(template: &str, noisy: &Image) -> Result<Image> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("in.pgm");
    let output = dir.path().join("out.pgm");
    noisy.to_gray().write_pgm(&input)?;
    run_shell(
        template,
        &[
            ("{in}", input.to_string_lossy().as_ref()),
            ("{out}", output.to_string_lossy().as_ref()),
        ],
    )?;
    let result = GrayImage::read_pgm(&output).map_err(|e| Error::ExternalCommand {
        command: template.to_string(),
        reason: format!("unreadable output image: {e}"),
    })?;
    if result.width() != noisy.width() || result.height() != noisy.height() {
        return Err(Error::ExternalCommand {
            command: template.to_string(),
            reason: format!(
                "output is {}x{}, expected {}x{}",
                result.width(),
                result.height(),
                noisy.width(),
                noisy.height()
            ),
        });
    }
    Ok(result.to_unit())
}

/// Minimum number of probe pairs accepted by [`estimate_rho`].
pub const MIN_PROBE_PAIRS: usize = 100;

/// Random perturbation direction with unit Euclidean norm. Pair `i` cycles
/// through white noise, a constant offset and a smooth low-frequency wave,
/// so both high- and low-frequency gains of the operator are probed.
fn unit_direction<R: Rng>(rng: &mut R, w: usize, h: usize, i: usize) -> Image {
    let data: Vec<f64> = match i % 3 {
        0 => (0..w * h)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect(),
        1 => vec![if rng.random::<bool>() { 1.0 } else { -1.0 }; w * h],
        _ => {
            let fx = rng.random_range(0.0..2.0);
            let fy = rng.random_range(0.0..2.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            (0..w * h)
                .map(|p| {
                    let (x, y) = ((p % w) as f64 / w as f64, (p / w) as f64 / h as f64);
                    (PI * (fx * x + fy * y) + phase).cos()
                })
                .collect()
        }
    };
    let img = Image::new(w, h, data).expect("sized above");
    let n = img.norm();
    if n == 0.0 {
        img
    } else {
        img.map(|v| v / n)
    }
}

/// Largest sampled ratio `‖G(u) − G(v)‖ / ‖u − v‖`, a lower bound on the
/// Lipschitz constant. Pair `i` starts from `probes[i % probes.len()]`
/// plus a random offset, and `v` is `u` moved by `scale` along a random
/// direction. Pairs with `u = v` are skipped.
pub fn estimate_rho(
    op: &dyn Reconstructor,
    probes: &[Image],
    scale: f64,
    n_pairs: usize,
    seed: SeedSpec,
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one probe image".into(),
        ));
    }
    if n_pairs < MIN_PROBE_PAIRS {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_PROBE_PAIRS} probe pairs, got {n_pairs}"
        )));
    }
    let mut rng = seed.rng();
    let mut best: f64 = 0.0;
    for i in 0..n_pairs {
        let base = &probes[i % probes.len()];
        let (w, h) = (base.width(), base.height());
        let jitter = unit_direction(&mut rng, w, h, i + 1);
        let u = base.zip_map(&jitter, |a, b| a + scale * b)?;
        let step = unit_direction(&mut rng, w, h, i);
        let v = u.zip_map(&step, |a, b| a + scale * b)?;
        let input_gap = u.distance(&v)?;
        if input_gap == 0.0 {
            continue;
        }
        let ratio = op.reconstruct(&u)?.distance(&op.reconstruct(&v)?)? / input_gap;
        best = best.max(ratio);
    }
    Ok(best)
}

/// Mean of `‖G(s + n) − s‖` where `n` is a random white-noise perturbation
/// with `‖n‖ = ε` exactly. Trial `t` uses `clean[t % clean.len()]`.
pub fn estimate_bias(
    op: &dyn Reconstructor,
    clean: &[Image],
    epsilon: f64,
    n_trials: usize,
    seed: SeedSpec,
) -> Result<f64> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "error level must be >= 0, got {epsilon}"
        )));
    }
    if clean.is_empty() || n_trials == 0 {
        return Err(Error::InvalidParameter(
            "need clean images and at least one trial".into(),
        ));
    }
    let mut rng = seed.rng();
    let mut total = 0.0;
    for t in 0..n_trials {
        let s = &clean[t % clean.len()];
        let noisy = if epsilon == 0.0 {
            s.clone()
        } else {
            let dir = unit_direction(&mut rng, s.width(), s.height(), 0);
            s.zip_map(&dir, |a, b| a + epsilon * b)?
        };
        total += op.reconstruct(&noisy)?.distance(s)?;
    }
    Ok(total / n_trials as f64)
}

/// Contraction factor, reference error level, bias at that level and the
/// metric's Lipschitz constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceProfile {
    pub rho: f64,
    pub epsilon: f64,
    pub delta_eps: f64,
    pub metric_lipschitz: f64,
}

impl InferenceProfile {
    pub fn new(rho: f64, epsilon: f64, delta_eps: f64, metric_lipschitz: f64) -> Result<Self> {
        let finite = [rho, epsilon, delta_eps, metric_lipschitz]
            .iter()
            .all(|v| v.is_finite());
        if !finite
            || !(rho > 0.0 && rho <= 1.0)
            || epsilon < 0.0
            || delta_eps < 0.0
            || !(metric_lipschitz > 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "invalid profile: ρ = {rho}, ε = {epsilon}, δ = {delta_eps}, ℓ_M = {metric_lipschitz}"
            )));
        }
        Ok(Self {
            rho,
            epsilon,
            delta_eps,
            metric_lipschitz,
        })
    }
}

/// `M(s,s) + ρℓ_M(E‖ŝ − s‖ + ε) + ℓ_M δ_ε`.
///
/// The fields are not re-validated, so `ρ = 0` may be passed through a
/// struct literal to isolate the bias term.
pub fn semantic_bound(profile: &InferenceProfile, metric_floor: f64, expected_err: f64) -> f64 {
    let l = profile.metric_lipschitz;
    metric_floor + profile.rho * l * (expected_err + profile.epsilon) + l * profile.delta_eps
}

/// `M(s,s) + ℓ_M E‖ŝ − s‖`: the bound for plain identity reconstruction.
pub fn identity_bound(metric_floor: f64, metric_lipschitz: f64, expected_err: f64) -> f64 {
    metric_floor + metric_lipschitz * expected_err
}

/// `ρε/(1−ρ) + δ_ε/(1−ρ)`. Below this expected error the identity bound is
/// tighter than the inference bound.
pub fn inferiority_threshold(profile: &InferenceProfile) -> Result<f64> {
    if profile.rho >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "threshold undefined for a non-contraction (ρ = {})",
            profile.rho
        )));
    }
    let gap = 1.0 - profile.rho;
    Ok(profile.rho * profile.epsilon / gap + profile.delta_eps / gap)
}

/// Upper estimate of `∂E[M]/∂γ_k` for bit plane `plane` (0-based, weight
/// `2^plane`):
///
/// `−ρ ℓ_M · 2^plane α / (2√(2π) β) · exp(−β²γ/2) · γ^{-1/2}`.
///
/// `β` sits in the denominator here, while a direct differentiation of
/// `α Q(β√γ)` puts it in the numerator; the two agree only for `β = 1`
/// (4-QAM).
pub fn sinr_sensitivity(
    profile: &InferenceProfile,
    qam: &QamParams,
    sinr: f64,
    plane: usize,
) -> Result<f64> {
    if !(sinr > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "SINR must be > 0, got {sinr}"
        )));
    }
    let (alpha, beta) = (qam.alpha(), qam.beta());
    let weight = (1u64 << plane) as f64;
    let scale = weight * alpha / (2.0 * (2.0 * PI).sqrt() * beta);
    Ok(
        -profile.rho * profile.metric_lipschitz * scale * (-beta * beta * sinr / 2.0).exp()
            / sinr.sqrt(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::synthetic_image;

    fn profile(rho: f64, eps: f64, delta: f64) -> InferenceProfile {
        InferenceProfile::new(rho, eps, delta, 1.0).unwrap()
    }

    fn total_variation(img: &Image) -> f64 {
        let (w, h) = (img.width(), img.height());
        let mut tv = 0.0;
        for r in 0..h {
            for c in 0..w {
                if c + 1 < w {
                    tv += (img.get(r, c + 1) - img.get(r, c)).abs();
                }
                if r + 1 < h {
                    tv += (img.get(r + 1, c) - img.get(r, c)).abs();
                }
            }
        }
        tv
    }

    #[test]
    fn identity_and_affine_examples() {
        let img = synthetic_image(16, 12).to_unit();
        assert_eq!(
            apply_operator(&ContractionOperator::identity(), &img).unwrap(),
            img
        );

        let op = ContractionOperator::affine(Image::filled(4, 4, 128.0 / 255.0), 0.5).unwrap();
        let out = apply_operator(&op, &Image::filled(4, 4, 0.0)).unwrap();
        assert!(out.data().iter().all(|&v| (v * 255.0 - 64.0).abs() < 1e-12));
        assert!(apply_operator(&op, &Image::filled(5, 4, 0.0)).is_err());
        assert!(ContractionOperator::affine(img.clone(), 1.5).is_err());
    }

    #[test]
    fn smoothing_reduces_tv_on_impulses() {
        let mut img = Image::filled(24, 20, 0.4);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            if i % 37 == 0 {
                *v = 1.0;
            } else if i % 53 == 0 {
                *v = 0.0;
            }
        }
        let op = ContractionOperator::smoothing(2.0).unwrap();
        let out = apply_operator(&op, &img).unwrap();
        assert!(out
            .data()
            .iter()
            .all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        assert!(total_variation(&out) < total_variation(&img));
        // λ = 0 is the identity.
        let same = apply_operator(&ContractionOperator::smoothing(0.0).unwrap(), &img).unwrap();
        assert_eq!(same, img);
    }

    #[test]
    fn smoothing_preserves_constants() {
        let img = Image::filled(9, 7, 0.3);
        let out = apply_operator(&ContractionOperator::smoothing(5.0).unwrap(), &img).unwrap();
        assert!(out.distance(&img).unwrap() < 1e-12);
    }

    #[test]
    fn rho_estimates() {
        let probes = vec![synthetic_image(16, 16).to_unit()];
        let anchor = Image::filled(16, 16, 0.2);
        let affine = ContractionOperator::affine(anchor, 0.3).unwrap();
        let r = estimate_rho(&affine, &probes, 0.05, 100, SeedSpec::new(1, 0)).unwrap();
        assert!((r - 0.3).abs() < 1e-10, "{r}");
        let r = estimate_rho(
            &ContractionOperator::identity(),
            &probes,
            0.05,
            100,
            SeedSpec::new(1, 0),
        )
        .unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let smooth = ContractionOperator::smoothing(1.5).unwrap();
        let r = estimate_rho(&smooth, &probes, 0.05, 120, SeedSpec::new(1, 0)).unwrap();
        assert!(r <= 1.0 + 1e-9 && r > 0.5, "{r}");
        assert!(estimate_rho(&smooth, &probes, 0.05, 99, SeedSpec::new(1, 0)).is_err());
    }

    #[test]
    fn composition_is_submultiplicative() {
        let probes = vec![synthetic_image(12, 12).to_unit()];
        let a = ContractionOperator::affine(Image::filled(12, 12, 0.5), 0.6).unwrap();
        let b = ContractionOperator::smoothing(0.8).unwrap();
        let s = SeedSpec::new(4, 0);
        let ra = estimate_rho(&a, &probes, 0.1, 150, s).unwrap();
        let rb = estimate_rho(&b, &probes, 0.1, 150, s).unwrap();
        let comp = Composition {
            outer: &a,
            inner: &b,
        };
        let rc = estimate_rho(&comp, &probes, 0.1, 150, s).unwrap();
        assert!(rc <= ra * rb + 1e-9, "{rc} vs {ra}·{rb}");
    }

    #[test]
    fn bias_examples() {
        let s = synthetic_image(16, 16).to_unit();
        let clean = vec![s.clone()];
        let d = estimate_bias(
            &ContractionOperator::identity(),
            &clean,
            0.0,
            10,
            SeedSpec::new(0, 0),
        )
        .unwrap();
        assert_eq!(d, 0.0);

        let anchor = Image::filled(16, 16, 0.5);
        let expected = 0.6 * s.distance(&anchor).unwrap();
        let op = ContractionOperator::affine(anchor, 0.4).unwrap();
        let d = estimate_bias(&op, &clean, 0.0, 5, SeedSpec::new(0, 0)).unwrap();
        assert!((d - expected).abs() < 1e-12);

        let flat = vec![Image::filled(10, 10, 0.7)];
        let d = estimate_bias(
            &ContractionOperator::smoothing(3.0).unwrap(),
            &flat,
            0.0,
            3,
            SeedSpec::new(0, 0),
        )
        .unwrap();
        assert!(d < 1e-12);

        // Identity bias at level ε is exactly ε.
        let d = estimate_bias(
            &ContractionOperator::identity(),
            &clean,
            0.25,
            7,
            SeedSpec::new(0, 0),
        )
        .unwrap();
        assert!((d - 0.25).abs() < 1e-12);
        assert!(estimate_bias(&op, &clean, -1.0, 1, SeedSpec::new(0, 0)).is_err());
    }

    #[test]
    fn bound_arithmetic() {
        let p = InferenceProfile {
            rho: 0.0,
            epsilon: 0.2,
            delta_eps: 0.05,
            metric_lipschitz: 2.0,
        };
        assert!((semantic_bound(&p, 0.1, 0.7) - (0.1 + 2.0 * 0.05)).abs() < 1e-15);
        let p = profile(0.5, 0.1, 0.05);
        assert!((semantic_bound(&p, 0.0, 0.3) - 0.25).abs() < 1e-15);
        assert_eq!(identity_bound(0.4, 1.0, 0.0), 0.4);
        assert!((identity_bound(0.0, 1.0, 0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn threshold_examples() {
        assert!((inferiority_threshold(&profile(0.5, 0.1, 0.05)).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(inferiority_threshold(&profile(0.5, 0.0, 0.0)).unwrap(), 0.0);
        assert!(inferiority_threshold(&profile(1.0, 0.1, 0.1)).is_err());
        assert!(InferenceProfile::new(1.2, 0.0, 0.0, 1.0).is_err());
        assert!(InferenceProfile::new(0.5, -0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn sensitivity_scaling() {
        let q = QamParams::new(16).unwrap();
        let zero = InferenceProfile {
            rho: 0.0,
            ..profile(0.5, 0.0, 0.0)
        };
        assert_eq!(sinr_sensitivity(&zero, &q, 3.0, 4).unwrap(), 0.0);
        let a = sinr_sensitivity(&profile(0.25, 0.0, 0.0), &q, 3.0, 4).unwrap();
        let b = sinr_sensitivity(&profile(0.5, 0.0, 0.0), &q, 3.0, 4).unwrap();
        assert!(a < 0.0);
        assert!((b - 2.0 * a).abs() <= 1e-12 * b.abs());
        assert!(sinr_sensitivity(&profile(0.5, 0.0, 0.0), &q, 0.0, 1).is_err());
    }

    #[test]
    fn external_operator_roundtrip() {
        let img = synthetic_image(10, 6);
        let op = ContractionOperator::external("cp {in} {out}");
        let out = apply_operator(&op, &img.to_unit()).unwrap();
        assert_eq!(out.to_gray(), img);

        let failing = ContractionOperator::external("exit 3");
        assert!(matches!(
            apply_operator(&failing, &img.to_unit()),
            Err(Error::ExternalCommand { .. })
        ));
        let no_output = ContractionOperator::external("true");
        assert!(matches!(
            apply_operator(&no_output, &img.to_unit()),
            Err(Error::ExternalCommand { .. })
        ));
    }
}
