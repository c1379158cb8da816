//! Magnitude response of the EMG conditioning chain and what it does to mains hum.

use neuromanip::signal::{design_filter_chain, synth_emg, GestureLabel, SynthEmgModel, SAMPLE_RATE_HZ};

fn band_power(x: &[f64], f: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * f / SAMPLE_RATE_HZ;
    let (re, im) = x
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(re, im), (n, v)| (re + v * (w * n as f64).cos(), im - v * (w * n as f64).sin()));
    (re * re + im * im) / x.len() as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let chain = design_filter_chain(SAMPLE_RATE_HZ)?;
    println!("{:>8}  {:>9}", "Hz", "dB");
    for f in [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 45.0, 50.0, 55.0, 80.0] {
        println!("{f:>8.1}  {:>9.2}", chain.magnitude_db(f));
    }
    println!("stable: {}", chain.is_stable());

    let model = SynthEmgModel { mains_amp: 1.0, ..SynthEmgModel::default() }.with_seed(3);
    let raw = synth_emg(&model, GestureLabel::CylindricalGrip, 4000)?;
    let filtered = design_filter_chain(SAMPLE_RATE_HZ)?.filter_stream(&raw)?;
    let ch0 = |frames: &[neuromanip::signal::EmgFrame]| frames[200..].iter().map(|f| f.channels[0]).collect::<Vec<_>>();
    let (before, after) = (band_power(&ch0(&raw), 50.0), band_power(&ch0(&filtered), 50.0));
    println!("50 Hz power: {before:.3} -> {after:.6} ({:.3}% removed)", 100.0 * (1.0 - after / before));
    Ok(())
}
