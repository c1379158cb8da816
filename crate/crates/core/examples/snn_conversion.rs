//! Train a small dense classifier, convert it to a spiking network and compare.
//!
//! Run with `--release`; training takes a few seconds.

use neuromanip::classify::Backend;
use neuromanip::grasp::GraspLibrary;
use neuromanip::harness::{build_pipeline, default_scene, generate_eval_samples, RunConfig, TAG_EVAL};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::default();
    cfg.dataset.recordings_per_gesture = 8;
    cfg.dataset.recording_ms = 3000;
    let pipeline = build_pipeline(&cfg)?;
    let snn = pipeline.snn.as_ref().expect("converted");
    println!("layers {:?}, T = {}", pipeline.net.layer_sizes(), snn.timesteps);
    println!("thresholds {:?}", snn.thresholds().iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>());

    let samples = generate_eval_samples(&cfg, &default_scene(), &GraspLibrary::default_library(), 0.5, TAG_EVAL, 300)?;
    let (mut agree, mut events) = (0, 0.0);
    for s in &samples {
        let d = pipeline.classify_features(&s.features, Backend::Dense)?;
        let sp = pipeline.classify_features(&s.features, Backend::Spiking)?;
        agree += usize::from(d.label == sp.label);
        events += sp.energy.expect("spiking reports energy").event_ratio();
    }
    println!("top-1 agreement {:.3}", agree as f64 / samples.len() as f64);
    println!("synaptic events / dense MACs {:.2}", events / samples.len() as f64);
    Ok(())
}
