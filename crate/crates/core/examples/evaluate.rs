//! Reduced-size restricted evaluation at the calibrated noise level.
//!
//! Run with `--release`.

use neuromanip::harness::{build_pipeline, run_evaluation, EvalMode, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::default();
    cfg.dataset.eval_samples = 1200;
    let pipeline = build_pipeline(&cfg)?;
    let r = run_evaluation(&cfg, &pipeline, EvalMode::Restricted)?;
    println!("sigma {:.4}, n {}", r.noise_sigma, r.n_samples);
    println!(
        "unrestricted {:.3}  restricted {:.3}  lift {:.3}",
        r.acc_unrestricted,
        r.acc_restricted.unwrap_or(f64::NAN),
        r.lift.unwrap_or(f64::NAN)
    );
    println!("executions {}  rejected {}  unsafe {}", r.executions, r.rejected_decisions, r.unsafe_executions);
    for (truth, row) in neuromanip::signal::GestureLabel::ALL.iter().zip(r.confusion) {
        println!("{:<16} {:?}", truth.name(), row);
    }
    Ok(())
}
