//! Run a bundled scenario end to end with scripted intents as decisions.
//!
//! `cargo run --example scenario -- data/scenarios/pen_pinch_release.json`

use std::path::PathBuf;

use neuromanip::harness::{simulate, Decoder, RunConfig, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/scenarios/cup_cylindrical.json"));
    let cfg = RunConfig::default();
    let scenario = Scenario::load(&path)?;
    let log = simulate(&cfg, &scenario, &cfg.scene()?, &cfg.library()?, Decoder::Oracle)?;
    for e in
        log.events.iter().filter(|e| !matches!(e.event, neuromanip::controller::ControlEvent::Tick { .. })).take(12)
    {
        println!("{:>8} us  {:?}", e.t_us, e.event);
    }
    println!("...");
    println!(
        "executed {:?}, rejected {}, unsafe {}, passed {}",
        log.executed, log.rejected, log.unsafe_executions, log.passed
    );
    Ok(())
}
