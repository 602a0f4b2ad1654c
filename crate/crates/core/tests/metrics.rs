use proptest::prelude::*;
use semimo::metrics::{Metric, PSNR_CAP_DB};
use semimo::{
    mae, metric_lipschitz_probe, metric_report, psnr, ssim, synthetic_image, GrayImage, Image,
    SeedSpec, SsimConfig,
};

fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> Image {
    let px = (0..w * h).map(|i| f(i % w, i / w)).collect();
    GrayImage::new(w, h, px).unwrap().to_unit()
}

#[test]
fn psnr_examples() {
    let a = synthetic_image(32, 32).to_unit();
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
    let flat = gray(16, 16, |_, _| 100);
    let shifted = gray(16, 16, |_, _| 116);
    assert!((psnr(&flat, &shifted).unwrap() - 20.0 * (255.0f64 / 16.0).log10()).abs() < 1e-9);
    let checker = gray(16, 16, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 });
    let mid = gray(16, 16, |_, _| 128);
    let mse = (128.0f64.powi(2) + 127.0f64.powi(2)) / 2.0;
    let want = 10.0 * (255.0f64 * 255.0 / mse).log10();
    assert!((psnr(&checker, &mid).unwrap() - want).abs() < 1e-9);
    assert!((want - 6.02).abs() < 0.01);
}

#[test]
fn ssim_examples() {
    let cfg = SsimConfig::default();
    let a = synthetic_image(64, 64).to_unit();
    assert!((ssim(&a, &a, &cfg).unwrap() - 1.0).abs() < 1e-12);
    let neg = a.map(|v| 1.0 - v);
    assert!(ssim(&a, &neg, &cfg).unwrap() < 0.2);
    let (x, y) = (gray(16, 16, |_, _| 100), gray(16, 16, |_, _| 110));
    let c1 = cfg.c1();
    let want = (2.0 * 100.0 * 110.0 + c1) / (100.0f64.powi(2) + 110.0f64.powi(2) + c1);
    assert!((ssim(&x, &y, &cfg).unwrap() - want).abs() < 1e-12);
    assert!(ssim(&gray(4, 4, |_, _| 0), &gray(4, 4, |_, _| 0), &cfg).is_err());
}

#[test]
fn mae_examples_and_report() {
    let (zero, one) = (Image::filled(8, 8, 0.0), Image::filled(8, 8, 1.0));
    assert_eq!(mae(&zero, &one).unwrap(), 1.0);
    assert_eq!(mae(&one, &one).unwrap(), 0.0);
    let r = metric_report(&one, &one, &SsimConfig::default(), None).unwrap();
    assert_eq!(
        (r.mae, r.one_minus_ssim, r.neg_psnr),
        (0.0, 0.0, -PSNR_CAP_DB)
    );
    assert!(mae(&zero, &Image::filled(4, 4, 0.0)).is_err());
}

#[test]
fn mae_lipschitz_probe_below_analytic_constant() {
    let s = synthetic_image(32, 32).to_unit();
    let probe = metric_lipschitz_probe(
        |u, r| Metric::Mae.evaluate(u, r),
        &s,
        200,
        0.05,
        SeedSpec::new(51, 0),
    )
    .unwrap();
    assert!(probe > 0.0 && probe <= Metric::Mae.analytic_lipschitz(32 * 32).unwrap() + 1e-9);
}

fn noisy_pair() -> impl Strategy<Value = (Image, Image)> {
    (any::<u64>(), 8usize..24, 8usize..24).prop_map(|(seed, w, h)| {
        let mut rng = semimo::SeedSpec::new(seed, 0).rng();
        use rand::Rng;
        let a = Image::new(w, h, (0..w * h).map(|_| rng.random::<f64>()).collect()).unwrap();
        let b = Image::new(w, h, (0..w * h).map(|_| rng.random::<f64>()).collect()).unwrap();
        (a, b)
    })
}

proptest! {
    #[test]
    fn metrics_are_symmetric_and_oriented((a, b) in noisy_pair()) {
        let cfg = SsimConfig::default();
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert_eq!(mae(&a, &b).unwrap(), mae(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b, &cfg).unwrap() - ssim(&b, &a, &cfg).unwrap()).abs() < 1e-12);
        let r = metric_report(&a, &b, &cfg, None).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.one_minus_ssim));
        prop_assert!(r.mae >= 0.0);
    }
}
