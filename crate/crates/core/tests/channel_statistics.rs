use semimo::{draw_channel_set, SeedSpec};

const DRAWS: usize = 100_000;

#[test]
fn known_channel_has_unit_average_power() {
    let mut total = 0.0;
    let mut count = 0usize;
    for t in 0..DRAWS / 2 {
        let c = draw_channel_set(4, 2, 0.0, SeedSpec::new(11, t as u64)).unwrap();
        for col in c.h_known().column_iter() {
            total += col.norm_squared();
            count += 1;
        }
        assert_eq!(c.h_true(), c.h_known());
    }
    let mean = total / count as f64;
    assert!((mean - 1.0).abs() < 0.02, "mean ‖ĥ‖² = {mean}");
}

#[test]
fn error_power_is_n_tx_times_err_var() {
    let mut total = 0.0;
    let mut count = 0usize;
    for t in 0..DRAWS / 4 {
        let c = draw_channel_set(8, 4, 0.25, SeedSpec::new(12, t as u64)).unwrap();
        for col in c.error().column_iter() {
            total += col.norm_squared();
            count += 1;
        }
    }
    let mean = total / count as f64;
    assert!((mean - 2.0).abs() < 0.02 * 2.0, "mean ‖e‖² = {mean}");
}

#[test]
fn entries_are_circular_and_independent() {
    let (n_tx, k, err_var) = (4, 2, 0.25);
    let n = n_tx * k;
    // Per entry: sums of Re/Im for ĥ and e, cross products.
    let mut sum = vec![[0.0f64; 4]; n];
    let mut cross_re_im = vec![0.0f64; n];
    let mut cross_known_err = vec![0.0f64; n];
    for t in 0..DRAWS {
        let c = draw_channel_set(n_tx, k, err_var, SeedSpec::new(13, t as u64)).unwrap();
        let e = c.error();
        for (i, (h, e)) in c.h_known().iter().zip(e.iter()).enumerate() {
            sum[i][0] += h.re;
            sum[i][1] += h.im;
            sum[i][2] += e.re;
            sum[i][3] += e.im;
            cross_re_im[i] += h.re * h.im;
            cross_known_err[i] += h.re * e.re + h.im * e.im;
        }
    }
    let nf = DRAWS as f64;
    let sd_known = (1.0 / n_tx as f64 / 2.0).sqrt();
    let sd_err = (err_var / 2.0).sqrt();
    for i in 0..n {
        for (j, &s) in sum[i].iter().enumerate() {
            let sd = if j < 2 { sd_known } else { sd_err };
            assert!(
                (s / nf).abs() < 3.0 * sd / nf.sqrt(),
                "entry {i} component {j} mean {}",
                s / nf
            );
        }
        let corr_re_im = cross_re_im[i] / nf / (sd_known * sd_known);
        assert!(corr_re_im.abs() < 0.01, "Re/Im correlation {corr_re_im}");
        let corr_known_err = cross_known_err[i] / nf / (2.0 * sd_known * sd_err);
        assert!(
            corr_known_err.abs() < 0.01,
            "ĥ/e correlation {corr_known_err}"
        );
    }
}
