use num_complex::Complex64;
use semimo::transceiver::FrameOptions;
use semimo::{
    draw_channel_set, link_budget, mf_precoder, q_function, split_bit_planes, synthetic_image,
    transmit_frame, zf_precoder, CMatrix, ChannelSet, GrayImage, QamConstellation, SeedSpec,
};

fn source() -> semimo::BitPlaneSource {
    split_bit_planes(&synthetic_image(64, 64), 8).unwrap()
}

#[test]
fn noiseless_zf_is_error_free() {
    let ch = draw_channel_set(16, 8, 0.0, SeedSpec::new(31, 0)).unwrap();
    let pre = zf_precoder(ch.h_known()).unwrap();
    let qam = QamConstellation::new(16).unwrap();
    let r = transmit_frame(
        &source(),
        &ch,
        &pre,
        1.0,
        1e-12,
        &qam,
        SeedSpec::new(31, 1),
        FrameOptions::default(),
    )
    .unwrap();
    assert!(r.bit_errors.iter().all(|&e| e == 0));
    assert_eq!(r.received.combine(), synthetic_image(64, 64));
}

#[test]
fn frames_are_deterministic_and_conserve_bits() {
    let ch = draw_channel_set(16, 8, 0.05, SeedSpec::new(32, 0)).unwrap();
    let pre = mf_precoder(ch.h_known()).unwrap();
    let qam = QamConstellation::new(4).unwrap();
    let src = source();
    let run = || {
        transmit_frame(
            &src,
            &ch,
            &pre,
            3.0,
            1.0,
            &qam,
            SeedSpec::new(32, 1),
            FrameOptions::default(),
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(a.bits_per_stream, 64 * 64);
    for (tx, rx) in src.planes().iter().zip(a.received.planes()) {
        assert_eq!(tx.len(), rx.len());
    }
    let img = a.received.combine();
    assert_eq!((img.width(), img.height()), (64, 64));
}

#[test]
fn identical_channels_hit_interference_floor() {
    // Users 0 and 1 share one channel direction; the rest are orthogonal to it.
    let h = CMatrix::from_fn(8, 8, |r, k| {
        let row = if k == 1 { 0 } else { k };
        if r == row {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let ch = ChannelSet::perfect(h).unwrap();
    let pre = mf_precoder(ch.h_known()).unwrap();
    let qam = QamConstellation::new(4).unwrap();
    let pixels: Vec<u8> = (0..128 * 128)
        .map(|i| ((i * 2_654_435_761u64 as usize) >> 7) as u8)
        .collect();
    let src = split_bit_planes(&GrayImage::new(128, 128, pixels).unwrap(), 8).unwrap();
    let p = 1e4;
    let budget = link_budget(&ch, &pre, p, 1.0).unwrap();
    assert!(budget.sinr[0] < 1.0);
    let floor = q_function(1.0);
    let r = transmit_frame(
        &src,
        &ch,
        &pre,
        p,
        1.0,
        &qam,
        SeedSpec::new(33, 0),
        FrameOptions::default(),
    )
    .unwrap();
    for k in 0..2 {
        assert!(r.ber[k] >= floor, "stream {k}: {} below {floor}", r.ber[k]);
    }
    assert!(r.ber[2..].iter().all(|&b| b == 0.0));
}

#[test]
fn mf_plateaus_while_zf_decays() {
    let ch = draw_channel_set(16, 8, 0.0, SeedSpec::new(34, 0)).unwrap();
    let mf = mf_precoder(ch.h_known()).unwrap();
    let zf = zf_precoder(ch.h_known()).unwrap();
    let p = 1e4;
    let budget = link_budget(&ch, &mf, p, 1.0).unwrap();
    assert!(budget.i_precode.iter().any(|&i| i > 0.1 * p));
    let qam = QamConstellation::new(4).unwrap();
    let src = source();
    let ber = |pre| {
        transmit_frame(
            &src,
            &ch,
            pre,
            p,
            1.0,
            &qam,
            SeedSpec::new(34, 1),
            FrameOptions::default(),
        )
        .unwrap()
        .mean_ber()
    };
    let (b_mf, b_zf) = (ber(&mf), ber(&zf));
    assert!(b_mf > 0.0);
    assert!(b_mf > 10.0 * b_zf, "MF {b_mf}, ZF {b_zf}");
}
