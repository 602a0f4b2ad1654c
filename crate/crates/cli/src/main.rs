use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semimo::harness::{
    db_to_linear, run_complexity_bench, run_csi_error_sweep, run_snr_sweep, ExperimentConfig,
    SweepTable,
};
use semimo::inference::set_external_concurrency;
use semimo::metrics::{metric_report, SsimConfig};
use semimo::precoding::{mf_precoder, zf_precoder_with_limit};
use semimo::transceiver::{split_bit_planes, transmit_frame, FrameOptions, QamConstellation};
use semimo::{apply_operator, draw_channel_set, Error, GrayImage, SeedSpec};

#[derive(Parser)]
#[command(
    name = "semimo",
    version,
    about = "Multi-user MIMO precoding with generative reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Perfect-CSI sweep over the SNR grid.
    SnrSweep(Common),
    /// Imperfect-CSI sweep over the error-variance grid at the fixed SNR.
    CsiSweep(Common),
    /// Precoder construction timing and log-log slopes.
    Bench(Common),
    /// Send one image end to end and reconstruct it.
    Reconstruct(ReconstructArgs),
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines); defaults apply without it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path, overriding the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding the configured one.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, overriding the configured count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    common: Common,
    /// Input PGM; the configured image (or the synthetic one) otherwise.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Precoder: `mf` or `zf`.
    #[arg(long, default_value = "zf")]
    scheme: semimo::Scheme,
    /// SNR in dB; the configured fixed SNR otherwise.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// CSI error variance in dB; `-inf` for perfect CSI.
    #[arg(long, allow_hyphen_values = true, default_value = "-inf")]
    err_var_db: f64,
    /// Also write the received image before reconstruction.
    #[arg(long)]
    noisy_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn load_config(common: &Common) -> semimo::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    set_external_concurrency(cfg.workers);
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> semimo::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn finish_sweep(
    cfg: &ExperimentConfig,
    table: SweepTable,
    interference: bool,
) -> semimo::Result<()> {
    write(&cfg.output, &table.to_csv())?;
    if interference {
        write(
            &sidecar(&cfg.output, ".interference.csv"),
            &table.interference_csv(),
        )?;
    }
    eprintln!(
        "wrote {} rows to {}",
        table.rows.len(),
        cfg.output.display()
    );
    table.into_result().map(|_| ())
}

fn run(cli: Cli) -> semimo::Result<()> {
    match cli.command {
        Command::SnrSweep(common) => {
            let cfg = load_config(&common)?;
            let table = run_snr_sweep(&cfg)?;
            finish_sweep(&cfg, table, false)
        }
        Command::CsiSweep(common) => {
            let cfg = load_config(&common)?;
            let table = run_csi_error_sweep(&cfg)?;
            finish_sweep(&cfg, table, true)
        }
        Command::Bench(common) => {
            let cfg = load_config(&common)?;
            let table = run_complexity_bench(
                &cfg.bench_k_grid,
                cfg.bench_antenna_ratio,
                cfg.bench_repetitions,
            )?;
            write(&cfg.output, &table.to_csv())?;
            for (scheme, slope) in &table.slopes {
                eprintln!("{scheme}: log-log slope {slope:.3}");
            }
            Ok(())
        }
        Command::Reconstruct(args) => reconstruct(args),
    }
}

fn reconstruct(args: ReconstructArgs) -> semimo::Result<()> {
    let cfg = load_config(&args.common)?;
    if args.err_var_db.is_nan() || args.err_var_db == f64::INFINITY {
        return Err(Error::Config("--err-var-db must be finite or -inf".into()));
    }
    let gray = match &args.input {
        Some(p) => GrayImage::read_pgm(p)?,
        None => cfg.source_image()?,
    };
    let source = gray.to_unit();
    let snr_db = args.snr_db.unwrap_or(cfg.fixed_snr);
    let tx_power = cfg.tx_power(snr_db);
    let seed = SeedSpec::new(cfg.master_seed, 0);

    let channel = draw_channel_set(
        cfg.n_tx,
        cfg.n_users,
        db_to_linear(args.err_var_db),
        seed.derive(1),
    )?;
    let precoder = match args.scheme {
        semimo::Scheme::Mf => mf_precoder(channel.h_known())?,
        semimo::Scheme::Zf => zf_precoder_with_limit(channel.h_known(), cfg.condition_limit)?,
    };
    let planes = split_bit_planes(&gray, cfg.n_users)?;
    let constellation = QamConstellation::new(cfg.qam_order)?;
    let options = FrameOptions {
        equalizer: cfg.equalizer,
    };
    let frame = transmit_frame(
        &planes,
        &channel,
        &precoder,
        tx_power,
        cfg.noise_var,
        &constellation,
        seed.derive(2),
        options,
    )?;
    let received = frame.received.combine();
    let operator = cfg.operator.build(&source)?;
    let restored = apply_operator(&operator, &received.to_unit())?;

    restored.to_gray().write_pgm(&cfg.output)?;
    if let Some(p) = &args.noisy_out {
        received.write_pgm(p)?;
    }

    let ssim = SsimConfig::default();
    println!("scheme,{}", args.scheme);
    println!("snr_db,{snr_db}");
    println!("ber_empirical,{}", frame.mean_ber());
    for (name, img) in [
        ("received", received.to_unit()),
        ("reconstructed", restored),
    ] {
        let r = metric_report(&source, &img, &ssim, cfg.external_metric.as_ref())?;
        println!(
            "{name},neg_psnr,{},one_minus_ssim,{},mae,{}",
            r.neg_psnr, r.one_minus_ssim, r.mae
        );
        if let Some((metric, v)) = r.external {
            println!("{name},{metric},{v}");
        }
    }
    Ok(())
}
