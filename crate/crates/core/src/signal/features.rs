use serde::{Deserialize, Serialize};

use super::{EmgWindow, CHANNELS};

pub const FEATURES_PER_CHANNEL: usize = 4;
pub const FEATURE_DIM: usize = CHANNELS * FEATURES_PER_CHANNEL;
/// Dead band for zero crossings; both neighbours must exceed it in magnitude.
pub const ZC_THRESHOLD: f64 = 0.01;

/// Per-channel `[MAV, RMS, WL, ZC]`, channel-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(#[serde(with = "array32")] pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn channel(&self, c: usize) -> [f64; FEATURES_PER_CHANNEL] {
        let mut out = [0.0; FEATURES_PER_CHANNEL];
        out.copy_from_slice(&self.0[c * FEATURES_PER_CHANNEL..(c + 1) * FEATURES_PER_CHANNEL]);
        out
    }
}

impl Default for FeatureVector {
    fn default() -> Self {
        Self([0.0; FEATURE_DIM])
    }
}

pub fn extract_features(window: &EmgWindow) -> FeatureVector {
    let mut out = [0.0; FEATURE_DIM];
    let n = window.len().max(1) as f64;
    for c in 0..CHANNELS {
        let mut abs_sum = 0.0;
        let mut sq_sum = 0.0;
        let mut wl = 0.0;
        let mut zc = 0u32;
        let mut prev: Option<f64> = None;
        for x in window.channel(c) {
            abs_sum += x.abs();
            sq_sum += x * x;
            if let Some(p) = prev {
                wl += (x - p).abs();
                if p * x < 0.0 && p.abs() > ZC_THRESHOLD && x.abs() > ZC_THRESHOLD {
                    zc += 1;
                }
            }
            prev = Some(x);
        }
        let base = c * FEATURES_PER_CHANNEL;
        out[base] = abs_sum / n;
        out[base + 1] = (sq_sum / n).sqrt();
        out[base + 2] = wl;
        out[base + 3] = zc as f64;
    }
    FeatureVector(out)
}

mod array32 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::FEATURE_DIM;

    pub fn serialize<S: Serializer>(v: &[f64; FEATURE_DIM], s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; FEATURE_DIM], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into().map_err(|v: Vec<f64>| serde::de::Error::invalid_length(v.len(), &"32 features"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(f: impl Fn(usize) -> f64) -> EmgWindow {
        EmgWindow { start_us: 0, samples: (0..40).map(|i| [f(i); CHANNELS]).collect() }
    }

    #[test]
    fn zero_window_gives_zero_vector() {
        assert_eq!(extract_features(&window(|_| 0.0)), FeatureVector::default());
    }

    #[test]
    fn constant_window() {
        let fv = extract_features(&window(|_| 0.5));
        for c in 0..CHANNELS {
            assert_eq!(fv.channel(c), [0.5, 0.5, 0.0, 0.0]);
        }
    }

    #[test]
    fn alternating_window() {
        // hand-computed: |x| = 0.5 everywhere, 39 steps of size 1.0, every step crosses zero
        let fv = extract_features(&window(|i| if i % 2 == 0 { 0.5 } else { -0.5 }));
        for c in 0..CHANNELS {
            let [mav, rms, wl, zc] = fv.channel(c);
            assert!((mav - 0.5).abs() < 1e-15);
            assert!((rms - 0.5).abs() < 1e-15);
            assert!((wl - 39.0).abs() < 1e-12);
            assert_eq!(zc, 39.0);
        }
    }

    #[test]
    fn dead_band_suppresses_small_crossings() {
        let fv = extract_features(&window(|i| if i % 2 == 0 { 0.005 } else { -0.5 }));
        assert_eq!(fv.channel(0)[3], 0.0);
    }
}
