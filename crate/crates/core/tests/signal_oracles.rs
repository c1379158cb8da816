use std::f64::consts::PI;

use neuromanip::signal::{
    design_filter_chain, extract_features, synth_emg, EmgFrame, EmgWindow, GestureLabel, SynthEmgModel, CHANNELS,
    SAMPLE_RATE_HZ,
};
use proptest::prelude::*;

fn impulse_response(len: usize) -> Vec<f64> {
    let mut chain = design_filter_chain(SAMPLE_RATE_HZ).unwrap();
    (0..len)
        .map(|n| {
            let mut ch = [0.0; CHANNELS];
            ch[0] = if n == 0 { 1.0 } else { 0.0 };
            chain.process_frame(&mut ch);
            ch[0]
        })
        .collect()
}

fn dft_db(h: &[f64], f: f64) -> f64 {
    let w = 2.0 * PI * f / SAMPLE_RATE_HZ;
    let (re, im) = h
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(re, im), (n, x)| (re + x * (w * n as f64).cos(), im - x * (w * n as f64).sin()));
    10.0 * (re * re + im * im).log10()
}

fn goertzel_power(x: &[f64], f: f64) -> f64 {
    let w = 2.0 * PI * f / SAMPLE_RATE_HZ;
    let c = 2.0 * w.cos();
    let (mut s1, mut s2) = (0.0, 0.0);
    for v in x {
        let s0 = v + c * s1 - s2;
        s2 = s1;
        s1 = s0;
    }
    (s1 * s1 + s2 * s2 - c * s1 * s2) / x.len() as f64
}

#[test]
fn impulse_response_dft_meets_the_band_limits() {
    let h = impulse_response(8192);
    let at_50 = dft_db(&h, 50.0);
    let at_20 = dft_db(&h, 20.0);
    let at_dc = dft_db(&h, 0.0);
    assert!(at_50 <= -30.0, "50 Hz: {at_50} dB");
    assert!(at_20.abs() <= 1.0, "20 Hz: {at_20} dB");
    assert!(at_dc <= -40.0, "DC: {at_dc} dB");
}

#[test]
fn analytic_response_matches_the_measured_one() {
    let chain = design_filter_chain(SAMPLE_RATE_HZ).unwrap();
    let h = impulse_response(8192);
    for f in [5.0, 10.0, 20.0, 30.0, 40.0, 60.0, 80.0] {
        let measured = dft_db(&h, f);
        assert!((measured - chain.magnitude_db(f)).abs() < 1e-3, "{f} Hz: {measured} vs {}", chain.magnitude_db(f));
    }
}

#[test]
fn mains_power_drops_by_at_least_99_percent() {
    for seed in 0..5 {
        let model = SynthEmgModel { mains_amp: 0.5, noise_sigma: 0.2, ..SynthEmgModel::default() }.with_seed(seed);
        let raw = synth_emg(&model, GestureLabel::ALL[seed as usize], 5000).unwrap();
        let filtered = design_filter_chain(SAMPLE_RATE_HZ).unwrap().filter_stream(&raw).unwrap();
        for c in 0..CHANNELS {
            let before: Vec<f64> = raw[400..].iter().map(|f| f.channels[c]).collect();
            let after: Vec<f64> = filtered[400..].iter().map(|f| f.channels[c]).collect();
            let reduction = 1.0 - goertzel_power(&after, 50.0) / goertzel_power(&before, 50.0);
            assert!(reduction >= 0.99, "seed {seed} channel {c}: {reduction}");
        }
    }
}

fn frames(xs: &[f64]) -> Vec<EmgFrame> {
    xs.iter().enumerate().map(|(i, x)| EmgFrame { timestamp_us: i as i64 * 5000, channels: [*x; CHANNELS] }).collect()
}

proptest! {
    #[test]
    fn filtering_is_linear(
        x in prop::collection::vec(-5.0f64..5.0, 1..200),
        y_seed in prop::collection::vec(-5.0f64..5.0, 200),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let y = &y_seed[..x.len()];
        let mix: Vec<f64> = x.iter().zip(y).map(|(x, y)| a * x + b * y).collect();
        let run = |s: &[f64]| design_filter_chain(SAMPLE_RATE_HZ).unwrap().filter_stream(&frames(s)).unwrap();
        let (fx, fy, fm) = (run(&x), run(y), run(&mix));
        for i in 0..x.len() {
            let expect = a * fx[i].channels[3] + b * fy[i].channels[3];
            prop_assert!((fm[i].channels[3] - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn features_match_their_definitions(samples in prop::collection::vec(prop::array::uniform8(-2.0f64..2.0), 2..60)) {
        let w = EmgWindow { start_us: 0, samples: samples.clone() };
        let f = extract_features(&w);
        for c in 0..CHANNELS {
            let x: Vec<f64> = samples.iter().map(|s| s[c]).collect();
            let n = x.len() as f64;
            let mav = x.iter().map(|v| v.abs()).sum::<f64>() / n;
            let rms = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
            let wl: f64 = x.windows(2).map(|p| (p[1] - p[0]).abs()).sum();
            let zc = x.windows(2).filter(|p| p[0].signum() != p[1].signum() && p[0].abs() > 0.01 && p[1].abs() > 0.01).count();
            let got = f.channel(c);
            prop_assert!((got[0] - mav).abs() < 1e-12);
            prop_assert!((got[1] - rms).abs() < 1e-12);
            prop_assert!((got[2] - wl).abs() < 1e-9);
            prop_assert_eq!(got[3], zc as f64);
        }
    }
}
