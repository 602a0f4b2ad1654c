use semimo::harness::{
    run_complexity_bench, run_csi_error_sweep, run_snr_sweep, ExperimentConfig, Recon, CSV_HEADER,
};
use semimo::Scheme;

fn config(extra: &str) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "n_channel_trials = 3\nimage_size = 32\ninterference_trials = 2000\nworkers = 2\n{extra}"
    ))
    .unwrap()
}

fn data_lines(csv: &str) -> Vec<String> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

#[test]
fn smoke_run_emits_header_and_rows() {
    let cfg = config("snr_grid = 10");
    let csv = run_snr_sweep(&cfg).unwrap().to_csv();
    let lines = data_lines(&csv);
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 1 + 4);
    assert!(csv
        .lines()
        .any(|l| l.starts_with("# ") && l.contains("ssim")));
}

#[test]
fn sweeps_are_reproducible_and_cells_independent() {
    let both = config("snr_grid = 0, 10\nworkers = 3");
    let a = run_snr_sweep(&both).unwrap().to_csv();
    assert_eq!(a, run_snr_sweep(&both).unwrap().to_csv());
    let single = config("snr_grid = 10\nworkers = 1");
    let b = data_lines(&run_snr_sweep(&single).unwrap().to_csv());
    let a = data_lines(&a);
    assert_eq!(&a[5..], &b[1..]);
}

#[test]
fn perfect_csi_cell_matches_snr_sweep() {
    let cfg = config("snr_grid = 15\nerr_var_grid = -inf, -10\nfixed_snr = 15");
    let snr = run_snr_sweep(&cfg).unwrap().into_result().unwrap();
    let csi = run_csi_error_sweep(&cfg).unwrap().into_result().unwrap();
    for (a, b) in snr.iter().zip(&csi[..4]) {
        assert_eq!(a.err_var_db, b.err_var_db);
        assert_eq!(
            (
                a.gamma_analytic_mean,
                a.ber_empirical,
                a.mae,
                a.one_minus_ssim
            ),
            (
                b.gamma_analytic_mean,
                b.ber_empirical,
                b.mae,
                b.one_minus_ssim
            )
        );
    }
}

#[test]
fn csi_sweep_records_error_interference() {
    let cfg = config("err_var_grid = -20, -10, -6\nfixed_snr = 15\ninterference_trials = 10000");
    let rows = run_csi_error_sweep(&cfg).unwrap().into_result().unwrap();
    let p = cfg.tx_power(15.0);
    for r in &rows {
        let want = p * 7.0 * 10f64.powf(r.err_var_db / 10.0);
        assert!((r.i_error - want).abs() < 1e-9 * want);
        let check = r.interference.unwrap();
        assert!(
            check.z() < 3.0,
            "{:?} at {} dB: z = {}",
            r.scheme,
            r.err_var_db,
            check.z()
        );
    }
}

#[test]
fn low_and_high_snr_orderings() {
    let cfg = config("snr_grid = 0, 40\nn_channel_trials = 10\noperator = identity");
    let rows = run_snr_sweep(&cfg).unwrap().into_result().unwrap();
    let find = |snr: f64, scheme: Scheme| {
        rows.iter()
            .find(|r| r.snr_db == snr && r.scheme == scheme && r.recon == Recon::Identity)
            .unwrap()
    };
    assert!(find(0.0, Scheme::Mf).gamma_analytic_mean >= find(0.0, Scheme::Zf).gamma_analytic_mean);
    let (mf, zf) = (find(40.0, Scheme::Mf), find(40.0, Scheme::Zf));
    assert!(
        mf.ber_empirical >= 10.0 * zf.ber_empirical,
        "MF {} vs ZF {}",
        mf.ber_empirical,
        zf.ber_empirical
    );
    assert!(mf.ber_empirical > 0.0);
}

#[test]
fn bench_smoke() {
    let t = run_complexity_bench(&[4], 2, 3).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert!(t.median_ns(Scheme::Zf, 4).unwrap() > 0.0);
}
