use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::filter::{butterworth_bandpass, filter_sequence, Biquad};
use super::{EmgFrame, GestureLabel, SignalError, CHANNELS, FRAME_PERIOD_US, MAINS_HZ, SAMPLE_RATE_HZ};

pub const MIN_DURATION_MS: u64 = 200;
/// Samples of shaped noise discarded before the first emitted frame.
const WARMUP_SAMPLES: usize = 200;

/// Stand-in for an amputee's armband recordings: every gesture drives each
/// electrode with 2–40 Hz band-limited noise at a gesture-specific gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEmgModel {
    pub activation: [[f64; CHANNELS]; GestureLabel::COUNT],
    pub noise_sigma: f64,
    pub mains_amp: f64,
    pub seed: u64,
}

impl Default for SynthEmgModel {
    fn default() -> Self {
        Self { activation: DEFAULT_ACTIVATION, noise_sigma: 0.0, mains_amp: 0.0, seed: 0 }
    }
}

// Neighbouring gestures share their strongest electrodes, which is where
// confusions appear once additive noise grows.
const DEFAULT_ACTIVATION: [[f64; CHANNELS]; GestureLabel::COUNT] = [
    [0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05],
    [0.85, 0.80, 0.55, 0.20, 0.10, 0.15, 0.40, 0.70],
    [0.20, 0.70, 0.85, 0.60, 0.15, 0.10, 0.10, 0.25],
    [0.15, 0.25, 0.60, 0.85, 0.70, 0.20, 0.10, 0.10],
    [0.10, 0.10, 0.15, 0.30, 0.75, 0.85, 0.60, 0.20],
    [0.55, 0.15, 0.10, 0.10, 0.25, 0.60, 0.85, 0.45],
];

impl SynthEmgModel {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        let bad = |m: &str| Err(SignalError::InvalidModel(m.to_owned()));
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and >= 0");
        }
        if !(self.mains_amp >= 0.0 && self.mains_amp.is_finite()) {
            return bad("mains_amp must be finite and >= 0");
        }
        if self.activation.iter().flatten().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("activation gains must lie in [0, 1]");
        }
        for i in 0..GestureLabel::COUNT {
            for j in i + 1..GestureLabel::COUNT {
                if self.activation[i] == self.activation[j] {
                    return bad("activation rows must be distinct");
                }
            }
        }
        Ok(())
    }
}

fn shaping_filter() -> &'static (Vec<Biquad>, f64) {
    static SHAPER: OnceLock<(Vec<Biquad>, f64)> = OnceLock::new();
    SHAPER.get_or_init(|| {
        let sections = butterworth_bandpass(4, 2.0, 40.0, SAMPLE_RATE_HZ);
        let mut impulse = vec![0.0; 8192];
        impulse[0] = 1.0;
        let energy: f64 = filter_sequence(&sections, &impulse).iter().map(|h| h * h).sum();
        (sections, 1.0 / energy.sqrt())
    })
}

/// Deterministic multi-channel EMG for `gesture`, starting at t = 0.
pub fn synth_emg(model: &SynthEmgModel, gesture: GestureLabel, duration_ms: u64) -> Result<Vec<EmgFrame>, SignalError> {
    if duration_ms < MIN_DURATION_MS {
        return Err(SignalError::DurationTooShort(duration_ms));
    }
    model.validate()?;
    let n = (duration_ms as usize * SAMPLE_RATE_HZ as usize) / 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let (sections, unit_scale) = shaping_filter();

    let gains = model.activation[gesture.index()];
    let mut shaped: Vec<Vec<f64>> = Vec::with_capacity(CHANNELS);
    for _ in 0..CHANNELS {
        let white: Vec<f64> = (0..n + WARMUP_SAMPLES).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut band = filter_sequence(sections, &white);
        band.drain(..WARMUP_SAMPLES);
        shaped.push(band);
    }

    let frames = (0..n)
        .map(|i| {
            let timestamp_us = i as i64 * FRAME_PERIOD_US;
            let t = timestamp_us as f64 * 1e-6;
            let mains = model.mains_amp * (2.0 * PI * MAINS_HZ * t).sin();
            let mut channels = [0.0; CHANNELS];
            for (c, x) in channels.iter_mut().enumerate() {
                let noise: f64 = if model.noise_sigma > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    model.noise_sigma * z
                } else {
                    0.0
                };
                *x = gains[c] * unit_scale * shaped[c][i] + mains + noise;
            }
            EmgFrame { timestamp_us, channels }
        })
        .collect();
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rms(frames: &[EmgFrame], c: usize) -> f64 {
        (frames.iter().map(|f| f.channels[c].powi(2)).sum::<f64>() / frames.len() as f64).sqrt()
    }

    #[test]
    fn silent_model_gives_zero_stream() {
        let mut model = SynthEmgModel::default();
        model.activation[0] = [0.0; CHANNELS];
        let frames = synth_emg(&model, GestureLabel::Rest, 500).unwrap();
        assert_eq!(frames.len(), 100);
        assert!(frames.iter().all(|f| f.channels == [0.0; CHANNELS]));
    }

    #[test]
    fn deterministic_for_seed() {
        let model = SynthEmgModel { noise_sigma: 0.1, mains_amp: 0.2, seed: 7, ..Default::default() };
        let a = synth_emg(&model, GestureLabel::TripodPinch, 400).unwrap();
        let b = synth_emg(&model, GestureLabel::TripodPinch, 400).unwrap();
        assert_eq!(a, b);
        let c = synth_emg(&model.with_seed(8), GestureLabel::TripodPinch, 400).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn short_duration_rejected() {
        assert!(matches!(
            synth_emg(&SynthEmgModel::default(), GestureLabel::Rest, 199),
            Err(SignalError::DurationTooShort(199))
        ));
    }

    #[test]
    fn shaped_noise_has_unit_rms() {
        let mut model = SynthEmgModel::default();
        model.activation[1] = [1.0; CHANNELS];
        let frames = synth_emg(&model, GestureLabel::CylindricalGrip, 60_000).unwrap();
        for c in 0..CHANNELS {
            assert!((rms(&frames, c) - 1.0).abs() < 0.05, "channel {c}: {}", rms(&frames, c));
        }
    }

    #[test]
    fn rms_ratio_tracks_activation() {
        // Monte-Carlo over independent seeds for the two gains
        let mut model = SynthEmgModel::default();
        model.activation[1] = [0.8; CHANNELS];
        model.activation[2] = [0.2; CHANNELS];
        let mut ratios = Vec::new();
        for seed in 0..20 {
            let hi = synth_emg(&model.with_seed(seed), GestureLabel::CylindricalGrip, 10_000).unwrap();
            let lo = synth_emg(&model.with_seed(seed + 1000), GestureLabel::LateralPinch, 10_000).unwrap();
            for c in 0..CHANNELS {
                ratios.push(rms(&hi, c) / rms(&lo, c));
            }
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean - 4.0).abs() < 0.4, "mean ratio {mean}");
    }

    #[test]
    fn invalid_models_rejected() {
        let mut m = SynthEmgModel::default();
        m.activation[3] = m.activation[2];
        assert!(m.validate().is_err());
        let m = SynthEmgModel { noise_sigma: -1.0, ..Default::default() };
        assert!(m.validate().is_err());
    }
}
