use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{EmgFrame, SignalError, CHANNELS};

/// Sample rate of the EMG front end.
pub const SAMPLE_RATE_HZ: f64 = 200.0;
pub const BANDPASS_LOW_HZ: f64 = 2.0;
pub const BANDPASS_HIGH_HZ: f64 = 40.0;
/// Order of the band-pass filter (twice the low-pass prototype order).
pub const BANDPASS_ORDER: usize = 4;
pub const MAINS_HZ: f64 = 50.0;
pub const NOTCH_Q: f64 = 30.0;

/// Normalized second-order section, `a0 == 1`.
///
/// y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Notch centered on `f0` with quality factor `q`.
    pub fn notch(fs: f64, f0: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * f0 / fs;
        let cos_w0 = w0.cos();
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self { b: [1.0 / a0, -2.0 * cos_w0 / a0, 1.0 / a0], a: [-2.0 * cos_w0 / a0, (1.0 - alpha) / a0] }
    }

    /// Complex response at normalized angular frequency `w` (rad/sample).
    pub fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b[0] + self.b[1] * z1 + self.b[2] * z2;
        let den = 1.0 + self.a[0] * z1 + self.a[1] * z2;
        num / den
    }

    /// Pole radii of the denominator `z^2 + a1 z + a2`.
    pub fn pole_radii(&self) -> [f64; 2] {
        let [a1, a2] = self.a;
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        let p1 = (-a1 + disc) / 2.0;
        let p2 = (-a1 - disc) / 2.0;
        [p1.norm(), p2.norm()]
    }

    pub fn is_stable(&self) -> bool {
        self.pole_radii().iter().all(|r| *r < 1.0)
    }

    #[inline]
    fn process(&self, state: &mut [f64; 2], x: f64) -> f64 {
        // transposed direct form II
        let y = self.b[0] * x + state[0];
        state[0] = self.b[1] * x - self.a[0] * y + state[1];
        state[1] = self.b[2] * x - self.a[1] * y;
        y
    }
}

/// Butterworth band-pass of total order `order` (must be even) designed by
/// the bilinear transform with pre-warped band edges.
///
/// Each returned section has zeros at z = 1 and z = -1 and unit gain at the
/// (pre-warped) geometric center frequency.
pub fn butterworth_bandpass(order: usize, f_lo: f64, f_hi: f64, fs: f64) -> Vec<Biquad> {
    assert!(order >= 2 && order.is_multiple_of(2), "band-pass order must be even");
    assert!(0.0 < f_lo && f_lo < f_hi && f_hi < fs / 2.0);
    let n = order / 2;
    let k = 2.0 * fs;
    let w_lo = k * (PI * f_lo / fs).tan();
    let w_hi = k * (PI * f_hi / fs).tan();
    let bw = w_hi - w_lo;
    let w0 = (w_lo * w_hi).sqrt();

    let mut digital_poles = Vec::with_capacity(order);
    for i in 0..n {
        let theta = PI * (2 * i + n + 1) as f64 / (2 * n) as f64;
        let p = Complex64::from_polar(1.0, theta);
        // s^2 - p*bw*s + w0^2 = 0
        let pb = p * bw;
        let disc = (pb * pb - 4.0 * w0 * w0).sqrt();
        for s in [(pb + disc) / 2.0, (pb - disc) / 2.0] {
            digital_poles.push((k + s) / (k - s));
        }
    }

    let center = 2.0 * (w0 / k).atan();
    let mut upper: Vec<Complex64> = digital_poles.iter().copied().filter(|p| p.im > 1e-12).collect();
    let mut real: Vec<f64> = digital_poles.iter().filter(|p| p.im.abs() <= 1e-12).map(|p| p.re).collect();
    upper.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
    real.sort_by(f64::total_cmp);

    let mut sections = Vec::with_capacity(n);
    for p in upper {
        sections.push(section_from_poles(-2.0 * p.re, p.norm_sqr(), center));
    }
    for pair in real.chunks(2) {
        let (r1, r2) = (pair[0], pair.get(1).copied().unwrap_or(0.0));
        sections.push(section_from_poles(-(r1 + r2), r1 * r2, center));
    }
    sections
}

fn section_from_poles(a1: f64, a2: f64, center: f64) -> Biquad {
    let raw = Biquad { b: [1.0, 0.0, -1.0], a: [a1, a2] };
    let g = 1.0 / raw.response(center).norm();
    Biquad { b: [g, 0.0, -g], a: [a1, a2] }
}

/// Cascade of biquads with independent delay lines per EMG channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterChain {
    fs: f64,
    bandpass: Vec<Biquad>,
    notch: Biquad,
    state: Vec<[[f64; 2]; CHANNELS]>,
}

/// Band-pass 2–40 Hz (4th-order Butterworth) followed by a 50 Hz notch.
pub fn design_filter_chain(fs: f64) -> Result<FilterChain, SignalError> {
    if fs != SAMPLE_RATE_HZ {
        return Err(SignalError::UnsupportedSampleRate(fs));
    }
    let bandpass = butterworth_bandpass(BANDPASS_ORDER, BANDPASS_LOW_HZ, BANDPASS_HIGH_HZ, fs);
    let notch = Biquad::notch(fs, MAINS_HZ, NOTCH_Q);
    Ok(FilterChain::from_sections(fs, bandpass, notch))
}

impl FilterChain {
    pub fn from_sections(fs: f64, bandpass: Vec<Biquad>, notch: Biquad) -> Self {
        let state = vec![[[0.0; 2]; CHANNELS]; bandpass.len() + 1];
        Self { fs, bandpass, notch, state }
    }

    pub fn sample_rate(&self) -> f64 {
        self.fs
    }

    pub fn bandpass_sections(&self) -> &[Biquad] {
        &self.bandpass
    }

    pub fn notch_section(&self) -> &Biquad {
        &self.notch
    }

    pub fn sections(&self) -> impl Iterator<Item = &Biquad> {
        self.bandpass.iter().chain(std::iter::once(&self.notch))
    }

    pub fn is_stable(&self) -> bool {
        self.sections().all(Biquad::is_stable)
    }

    pub fn reset(&mut self) {
        for s in &mut self.state {
            *s = [[0.0; 2]; CHANNELS];
        }
    }

    /// Complex transfer function of the whole cascade at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.fs;
        self.sections().map(|s| s.response(w)).product()
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm().log10()
    }

    /// Filter one frame in place, advancing the delay lines.
    pub fn process_frame(&mut self, channels: &mut [f64; CHANNELS]) {
        let sections = self.bandpass.iter().chain(std::iter::once(&self.notch));
        for (section, state) in sections.zip(self.state.iter_mut()) {
            for (x, st) in channels.iter_mut().zip(state.iter_mut()) {
                *x = section.process(st, *x);
            }
        }
    }

    /// Causal per-channel filtering of a timestamp-ordered stream.
    pub fn filter_stream(&mut self, frames: &[EmgFrame]) -> Result<Vec<EmgFrame>, SignalError> {
        super::check_monotonic(frames)?;
        Ok(frames
            .iter()
            .map(|f| {
                let mut channels = f.channels;
                self.process_frame(&mut channels);
                EmgFrame { timestamp_us: f.timestamp_us, channels }
            })
            .collect())
    }
}

/// Filters a single real-valued sequence through a fresh copy of `sections`.
pub(crate) fn filter_sequence(sections: &[Biquad], input: &[f64]) -> Vec<f64> {
    let mut state = vec![[0.0; 2]; sections.len()];
    input.iter().map(|&x| sections.iter().zip(state.iter_mut()).fold(x, |acc, (s, st)| s.process(st, acc))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_other_sample_rates() {
        assert!(matches!(design_filter_chain(100.0), Err(SignalError::UnsupportedSampleRate(_))));
        assert!(design_filter_chain(200.0).is_ok());
    }

    #[test]
    fn sections_are_stable() {
        let chain = design_filter_chain(SAMPLE_RATE_HZ).unwrap();
        assert_eq!(chain.bandpass_sections().len(), 2);
        assert!(chain.is_stable());
        for s in chain.sections() {
            assert!(s.pole_radii().iter().all(|r| *r < 1.0));
        }
    }

    #[test]
    fn dc_is_blocked() {
        let chain = design_filter_chain(SAMPLE_RATE_HZ).unwrap();
        assert!(chain.response(0.0).norm() < 1e-12);
    }

    #[test]
    fn unit_gain_at_center() {
        let sections = butterworth_bandpass(4, 2.0, 40.0, 200.0);
        let k = 400.0;
        let w0 = ((k * (PI * 2.0 / 200.0).tan()) * (k * (PI * 40.0 / 200.0).tan())).sqrt();
        let center = 2.0 * (w0 / k).atan();
        let g: Complex64 = sections.iter().map(|s| s.response(center)).product();
        assert!((g.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_power_at_band_edges() {
        let sections = butterworth_bandpass(4, 2.0, 40.0, 200.0);
        for f in [2.0, 40.0] {
            let w = 2.0 * PI * f / 200.0;
            let g: Complex64 = sections.iter().map(|s| s.response(w)).product();
            assert!((g.norm() - 0.5f64.sqrt()).abs() < 1e-9, "{f} Hz: {}", g.norm());
        }
    }

    #[test]
    fn reset_zeroes_state() {
        let mut chain = design_filter_chain(SAMPLE_RATE_HZ).unwrap();
        let mut frame = [1.0; CHANNELS];
        chain.process_frame(&mut frame);
        assert_ne!(chain, design_filter_chain(SAMPLE_RATE_HZ).unwrap());
        chain.reset();
        assert_eq!(chain, design_filter_chain(SAMPLE_RATE_HZ).unwrap());
    }
}
