//! Synthesize a recording per gesture, condition it, and print per-channel MAV.

use neuromanip::signal::{
    design_filter_chain, extract_features, synth_emg, window_stream, GestureLabel, SynthEmgModel, WindowConfig,
    SAMPLE_RATE_HZ,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = SynthEmgModel { noise_sigma: 0.2, mains_amp: 0.2, ..SynthEmgModel::default() };
    for (i, g) in GestureLabel::ALL.into_iter().enumerate() {
        let raw = synth_emg(&model.with_seed(i as u64), g, 2000)?;
        let filtered = design_filter_chain(SAMPLE_RATE_HZ)?.filter_stream(&raw)?;
        let windows = window_stream(&filtered[200..], WindowConfig::default())?;
        let f = extract_features(windows.last().expect("at least one window"));
        let mav: Vec<String> = (0..8).map(|c| format!("{:.2}", f.channel(c)[0])).collect();
        println!("{:<16} {} windows  MAV [{}]", g.name(), windows.len(), mav.join(" "));
    }
    Ok(())
}
