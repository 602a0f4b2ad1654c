//! SNR and CSI-error sweeps over MF/ZF precoding with identity and
//! operator reconstruction.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::config::{db_to_linear, ExperimentConfig};
use crate::channel::draw_channel_set;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::inference::{apply_operator, ContractionOperator};
use crate::link::{empirical_link_budget, expected_distortion, link_budget, QamParams};
use crate::metrics::{metric_report, MetricReport, SsimConfig, PSNR_CAP_DB};
use crate::precoding::{mf_precoder, zf_precoder_with_limit, Precoder, Scheme};
use crate::seed::{label, SeedSpec};
use crate::transceiver::{
    split_bit_planes, transmit_frame, BitPlaneSource, FrameOptions, QamConstellation,
};

pub const CSV_HEADER: &str = "case,scheme,recon,snr_db,err_var_db,trial_count,gamma_analytic_mean,ber_analytic_mean,ber_empirical,i_precode_mean,i_error,exp_distortion,mae,neg_psnr,one_minus_ssim,external_metric";

const CHANNEL_STREAM: u64 = 0xC4A7;
const NOISE_STREAM: u64 = 0x7015E;
const ERROR_STREAM: u64 = 0xE770;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    PerfectCsi,
    ImperfectCsi,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::PerfectCsi => "perfect_csi",
            Case::ImperfectCsi => "imperfect_csi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recon {
    Identity,
    Operator,
}

impl Recon {
    pub fn name(self) -> &'static str {
        match self {
            Recon::Identity => "identity",
            Recon::Operator => "operator",
        }
    }
}

/// Monte-Carlo check of the analytic interference average for one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceCheck {
    /// Analytic `E[I_k]` averaged over users and channel trials.
    pub analytic_mean: f64,
    pub empirical_mean: f64,
    /// Standard error of `empirical_mean`.
    pub std_err: f64,
    /// Largest `|empirical − analytic| / std_err` over users and trials.
    pub max_abs_z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub case: Case,
    pub scheme: Scheme,
    pub recon: Recon,
    pub snr_db: f64,
    pub err_var_db: f64,
    pub trial_count: usize,
    pub gamma_analytic_mean: f64,
    pub ber_analytic_mean: f64,
    pub ber_empirical: f64,
    pub i_precode_mean: f64,
    pub i_error: f64,
    /// Expected per-pixel absolute error in 8-bit units.
    pub exp_distortion: f64,
    pub mae: Option<f64>,
    pub neg_psnr: Option<f64>,
    pub one_minus_ssim: Option<f64>,
    pub external_metric: Option<f64>,
    pub interference: Option<InterferenceCheck>,
}

impl InterferenceCheck {
    /// `|empirical − analytic|` in standard errors of the cell average.
    pub fn z(&self) -> f64 {
        let diff = (self.empirical_mean - self.analytic_mean).abs();
        if self.std_err > 0.0 {
            diff / self.std_err
        } else if diff <= 1e-12 * self.analytic_mean.abs() {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.case.name(),
            self.scheme.name(),
            self.recon.name(),
            fmt_f64(self.snr_db),
            fmt_f64(self.err_var_db),
            self.trial_count,
            fmt_f64(self.gamma_analytic_mean),
            fmt_f64(self.ber_analytic_mean),
            fmt_f64(self.ber_empirical),
            fmt_f64(self.i_precode_mean),
            fmt_f64(self.i_error),
            fmt_f64(self.exp_distortion),
            opt(self.mae),
            opt(self.neg_psnr),
            opt(self.one_minus_ssim),
            opt(self.external_metric),
        );
        s
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

/// Rows of a sweep in grid order. When a cell fails, rows of all earlier
/// cells are kept and `failure` names the failing cell.
#[derive(Debug)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub failure: Option<(String, Error)>,
    pub metadata: Vec<String>,
}

impl SweepTable {
    /// Metadata comment lines, the header, one line per row, and an
    /// `ERROR` marker line if the sweep stopped early.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for m in &self.metadata {
            out.push_str("# ");
            out.push_str(m);
            out.push('\n');
        }
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        if let Some((cell, err)) = &self.failure {
            let msg = err.to_string().replace([',', '\n'], ";");
            let _ = writeln!(out, "ERROR,{cell},{msg}");
        }
        out
    }

    /// Analytic versus Monte-Carlo interference, one line per CSI-sweep row
    /// pair (identity rows only, since reconstruction does not affect it).
    pub fn interference_csv(&self) -> String {
        let mut out = String::from(
            "scheme,err_var_db,i_error,i_analytic_mean,i_empirical_mean,std_err,z,max_abs_z\n",
        );
        for r in self.rows.iter().filter(|r| r.recon == Recon::Identity) {
            if let Some(c) = r.interference {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    r.scheme.name(),
                    fmt_f64(r.err_var_db),
                    fmt_f64(r.i_error),
                    fmt_f64(c.analytic_mean),
                    fmt_f64(c.empirical_mean),
                    fmt_f64(c.std_err),
                    fmt_f64(c.z()),
                    fmt_f64(c.max_abs_z)
                );
            }
        }
        out
    }

    pub fn into_result(self) -> Result<Vec<SweepRow>> {
        match self.failure {
            Some((_, e)) => Err(e),
            None => Ok(self.rows),
        }
    }
}

/// Shared per-sweep state: the source and its reconstruction operator.
struct Context {
    source: Image,
    planes: BitPlaneSource,
    operator: ContractionOperator,
    constellation: QamConstellation,
    qam: QamParams,
    ssim: SsimConfig,
}

impl Context {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let gray = cfg.source_image()?;
        let source = gray.to_unit();
        Ok(Self {
            planes: split_bit_planes(&gray, cfg.n_users)?,
            operator: cfg.operator.build(&source)?,
            source,
            constellation: QamConstellation::new(cfg.qam_order)?,
            qam: QamParams::new(cfg.qam_order)?,
            ssim: SsimConfig::default(),
        })
    }
}

fn metadata(cfg: &ExperimentConfig, case: Case, ctx: &Context) -> Vec<String> {
    vec![
        format!(
            "case={} n_tx={} n_users={} qam_order={} noise_var={} seed={} trials={} frames={}",
            case.name(),
            cfg.n_tx,
            cfg.n_users,
            cfg.qam_order,
            cfg.noise_var,
            cfg.master_seed,
            cfg.n_channel_trials,
            cfg.n_frames
        ),
        format!(
            "operator={} image={}x{}",
            cfg.operator.describe(),
            ctx.source.width(),
            ctx.source.height()
        ),
        ctx.ssim.describe(),
        format!("psnr: 10*log10(255^2/MSE), capped at {PSNR_CAP_DB} dB; not globally Lipschitz"),
        "mae on unit-scaled pixels; exp_distortion = sum 2^(k-1) BER_k in 8-bit units".into(),
    ]
}

/// Perfect-CSI sweep over `cfg.snr_grid`.
pub fn run_snr_sweep(cfg: &ExperimentConfig) -> Result<SweepTable> {
    let cells: Vec<(f64, f64)> = cfg
        .snr_grid
        .iter()
        .map(|&snr| (snr, f64::NEG_INFINITY))
        .collect();
    run_cells(cfg, Case::PerfectCsi, &cells)
}

/// Imperfect-CSI sweep over `cfg.err_var_grid` at `cfg.fixed_snr`.
pub fn run_csi_error_sweep(cfg: &ExperimentConfig) -> Result<SweepTable> {
    let cells: Vec<(f64, f64)> = cfg
        .err_var_grid
        .iter()
        .map(|&e| (cfg.fixed_snr, e))
        .collect();
    run_cells(cfg, Case::ImperfectCsi, &cells)
}

fn run_cells(cfg: &ExperimentConfig, case: Case, cells: &[(f64, f64)]) -> Result<SweepTable> {
    cfg.validate()?;
    let ctx = Context::new(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let results: Vec<Result<Vec<SweepRow>>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(snr_db, err_var_db)| run_cell(cfg, &ctx, case, snr_db, err_var_db))
            .collect()
    });
    let mut rows = Vec::new();
    let mut failure = None;
    for (&(snr, err), res) in cells.iter().zip(results) {
        match res {
            Ok(r) => rows.extend(r),
            Err(e) => {
                failure = Some((
                    format!("snr_db={} err_var_db={}", fmt_f64(snr), fmt_f64(err)),
                    e,
                ));
                break;
            }
        }
    }
    Ok(SweepTable {
        rows,
        failure,
        metadata: metadata(cfg, case, &ctx),
    })
}

#[derive(Default)]
struct Accum {
    gamma: f64,
    ber_analytic: f64,
    ber_empirical: f64,
    i_precode: f64,
    distortion: f64,
    interference_analytic: f64,
    interference_empirical: f64,
    interference_var: f64,
    max_z: f64,
    recon: [ReconAccum; 2],
}

#[derive(Default)]
struct ReconAccum {
    mae: f64,
    neg_psnr: f64,
    one_minus_ssim: f64,
    external: f64,
}

fn build(scheme: Scheme, cfg: &ExperimentConfig, h: &crate::channel::CMatrix) -> Result<Precoder> {
    match scheme {
        Scheme::Mf => mf_precoder(h),
        Scheme::Zf => zf_precoder_with_limit(h, cfg.condition_limit),
    }
}

/// One grid cell: both schemes and both reconstructions, averaged over
/// channel trials and frames. Every random stream is keyed by the trial,
/// frame, scheme and the cell's own coordinates.
fn run_cell(
    cfg: &ExperimentConfig,
    ctx: &Context,
    case: Case,
    snr_db: f64,
    err_var_db: f64,
) -> Result<Vec<SweepRow>> {
    let err_var = db_to_linear(err_var_db);
    let tx_power = cfg.tx_power(snr_db);
    let k_users = cfg.n_users;
    let cell_label = [snr_db.to_bits(), err_var_db.to_bits()];
    let mut acc: Vec<Accum> = Scheme::ALL.iter().map(|_| Accum::default()).collect();

    for trial in 0..cfg.n_channel_trials {
        let trial_seed = SeedSpec::new(cfg.master_seed, trial as u64);
        let channel = draw_channel_set(
            cfg.n_tx,
            k_users,
            err_var,
            trial_seed.derive(CHANNEL_STREAM),
        )?;
        for (si, &scheme) in Scheme::ALL.iter().enumerate() {
            let a = &mut acc[si];
            let precoder = build(scheme, cfg, channel.h_known())?;
            let budget = link_budget(&channel, &precoder, tx_power, cfg.noise_var)?;
            let bers = budget.ber(&ctx.qam);
            a.gamma += budget.sinr.iter().sum::<f64>() / k_users as f64;
            a.ber_analytic += bers.iter().sum::<f64>() / k_users as f64;
            a.i_precode += budget.i_precode.iter().sum::<f64>() / k_users as f64;
            a.distortion += expected_distortion(&bers, k_users)?;

            if case == Case::ImperfectCsi {
                let seed = trial_seed.derive(label(&[
                    ERROR_STREAM,
                    scheme as u64,
                    cell_label[0],
                    cell_label[1],
                ]));
                let emp = empirical_link_budget(
                    &channel,
                    &precoder,
                    tx_power,
                    cfg.noise_var,
                    cfg.interference_trials,
                    seed,
                )?;
                for k in 0..k_users {
                    let analytic = budget.expected_interference(k);
                    let est = emp.interference[k];
                    a.interference_analytic += analytic / k_users as f64;
                    a.interference_empirical += est.mean / k_users as f64;
                    a.interference_var += (est.std_err / k_users as f64).powi(2);
                    let z = if est.std_err > 0.0 {
                        (est.mean - analytic).abs() / est.std_err
                    } else if (est.mean - analytic).abs() <= 1e-12 * analytic.abs().max(1e-300) {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    a.max_z = a.max_z.max(z);
                }
            }

            for frame in 0..cfg.n_frames {
                let seed = trial_seed.derive(label(&[
                    NOISE_STREAM,
                    frame as u64,
                    scheme as u64,
                    cell_label[0],
                    cell_label[1],
                ]));
                let result = transmit_frame(
                    &ctx.planes,
                    &channel,
                    &precoder,
                    tx_power,
                    cfg.noise_var,
                    &ctx.constellation,
                    seed,
                    FrameOptions {
                        equalizer: cfg.equalizer,
                    },
                )?;
                a.ber_empirical += result.mean_ber();
                let received = result.received.combine().to_unit();
                let reconstructed = apply_operator(&ctx.operator, &received)?;
                for (ri, img) in [&received, &reconstructed].into_iter().enumerate() {
                    let report = score(cfg, ctx, img)?;
                    let r = &mut a.recon[ri];
                    r.mae += report.mae;
                    r.neg_psnr += report.neg_psnr;
                    r.one_minus_ssim += report.one_minus_ssim;
                    r.external += report.external.map(|(_, v)| v).unwrap_or(0.0);
                }
            }
        }
    }

    let trials = cfg.n_channel_trials as f64;
    let frames = (cfg.n_channel_trials * cfg.n_frames) as f64;
    let i_error = tx_power * (k_users as f64 - 1.0) * err_var;
    let mut rows = Vec::with_capacity(4);
    for (si, &scheme) in Scheme::ALL.iter().enumerate() {
        let a = &acc[si];
        for (ri, recon) in [Recon::Identity, Recon::Operator].into_iter().enumerate() {
            let r = &a.recon[ri];
            rows.push(SweepRow {
                case,
                scheme,
                recon,
                snr_db,
                err_var_db,
                trial_count: cfg.n_channel_trials,
                gamma_analytic_mean: a.gamma / trials,
                ber_analytic_mean: a.ber_analytic / trials,
                ber_empirical: a.ber_empirical / frames,
                i_precode_mean: a.i_precode / trials,
                i_error,
                exp_distortion: a.distortion / trials,
                mae: cfg.metrics.mae.then_some(r.mae / frames),
                neg_psnr: cfg.metrics.psnr.then_some(r.neg_psnr / frames),
                one_minus_ssim: cfg.metrics.ssim.then_some(r.one_minus_ssim / frames),
                external_metric: cfg.external_metric.as_ref().map(|_| r.external / frames),
                interference: (case == Case::ImperfectCsi).then(|| InterferenceCheck {
                    analytic_mean: a.interference_analytic / trials,
                    empirical_mean: a.interference_empirical / trials,
                    std_err: a.interference_var.sqrt() / trials,
                    max_abs_z: a.max_z,
                }),
            });
        }
    }
    Ok(rows)
}

fn score(cfg: &ExperimentConfig, ctx: &Context, img: &Image) -> Result<MetricReport> {
    metric_report(&ctx.source, img, &ctx.ssim, cfg.external_metric.as_ref())
}
