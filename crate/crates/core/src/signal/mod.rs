//! EMG front end: acquisition frames, conditioning filters, windowing,
//! time-domain features and a synthetic armband generator.

mod features;
mod filter;
mod io;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{extract_features, FeatureVector, FEATURES_PER_CHANNEL, FEATURE_DIM, ZC_THRESHOLD};
pub use filter::{
    butterworth_bandpass, design_filter_chain, Biquad, FilterChain, BANDPASS_HIGH_HZ, BANDPASS_LOW_HZ, BANDPASS_ORDER,
    MAINS_HZ, NOTCH_Q, SAMPLE_RATE_HZ,
};
pub use io::{read_manifest, read_recording, write_manifest, write_recording, DatasetManifest, ManifestEntry};
pub use synth::{synth_emg, SynthEmgModel, MIN_DURATION_MS};

/// Electrodes on the armband.
pub const CHANNELS: usize = 8;
/// Nominal spacing of frames at 200 Hz.
pub const FRAME_PERIOD_US: i64 = 5_000;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("unsupported sample rate {0} Hz (only 200 Hz is supported)")]
    UnsupportedSampleRate(f64),
    #[error("timestamps not strictly increasing at frame {index}")]
    NonMonotonicTimestamps { index: usize },
    #[error("stream of {got} frames is shorter than one window ({need})")]
    StreamTooShort { got: usize, need: usize },
    #[error("duration {0} ms is below the 200 ms minimum")]
    DurationTooShort(u64),
    #[error("invalid synthetic model: {0}")]
    InvalidModel(String),
    #[error("recording format: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One sample instant across all eight electrodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmgFrame {
    pub timestamp_us: i64,
    pub channels: [f64; CHANNELS],
}

/// The six functional gestures decoded from EMG. Codes 0–5 are stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GestureLabel {
    Rest,
    CylindricalGrip,
    LateralPinch,
    TripodPinch,
    OpenHand,
    IndexPoint,
}

impl GestureLabel {
    pub const COUNT: usize = 6;
    pub const ALL: [GestureLabel; 6] = [
        GestureLabel::Rest,
        GestureLabel::CylindricalGrip,
        GestureLabel::LateralPinch,
        GestureLabel::TripodPinch,
        GestureLabel::OpenHand,
        GestureLabel::IndexPoint,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureLabel::Rest => "Rest",
            GestureLabel::CylindricalGrip => "CylindricalGrip",
            GestureLabel::LateralPinch => "LateralPinch",
            GestureLabel::TripodPinch => "TripodPinch",
            GestureLabel::OpenHand => "OpenHand",
            GestureLabel::IndexPoint => "IndexPoint",
        }
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GestureLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(code) = s.parse::<u8>() {
            return Self::from_code(code).ok_or_else(|| format!("gesture code {code} out of range"));
        }
        Self::ALL.into_iter().find(|g| g.name().eq_ignore_ascii_case(s)).ok_or_else(|| format!("unknown gesture {s:?}"))
    }
}

/// Analysis window geometry in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub length: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    /// 200 ms windows every 50 ms.
    fn default() -> Self {
        Self { length: 40, stride: 10 }
    }
}

/// A `length`-sample slice of conditioned EMG.
#[derive(Debug, Clone, PartialEq)]
pub struct EmgWindow {
    pub start_us: i64,
    pub samples: Vec<[f64; CHANNELS]>,
}

impl EmgWindow {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channel(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(move |s| s[c])
    }

    pub fn from_frames(frames: &[EmgFrame]) -> Self {
        Self {
            start_us: frames.first().map_or(0, |f| f.timestamp_us),
            samples: frames.iter().map(|f| f.channels).collect(),
        }
    }
}

pub(crate) fn check_monotonic(frames: &[EmgFrame]) -> Result<(), SignalError> {
    match frames.windows(2).position(|w| w[1].timestamp_us <= w[0].timestamp_us) {
        Some(i) => Err(SignalError::NonMonotonicTimestamps { index: i + 1 }),
        None => Ok(()),
    }
}

/// Slices a stream into overlapping windows; count is `floor((N - W) / S) + 1`.
pub fn window_stream(frames: &[EmgFrame], config: WindowConfig) -> Result<Vec<EmgWindow>, SignalError> {
    if frames.len() < config.length {
        return Err(SignalError::StreamTooShort { got: frames.len(), need: config.length });
    }
    let count = (frames.len() - config.length) / config.stride + 1;
    Ok((0..count)
        .map(|i| {
            let start = i * config.stride;
            EmgWindow::from_frames(&frames[start..start + config.length])
        })
        .collect())
}

/// Convenience: fresh default chain over a whole stream.
pub fn filter_stream(chain: &mut FilterChain, frames: &[EmgFrame]) -> Result<Vec<EmgFrame>, SignalError> {
    chain.filter_stream(frames)
}
