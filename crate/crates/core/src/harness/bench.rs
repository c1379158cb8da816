use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::classify::{Backend, GesturePipeline};
use crate::signal::EmgWindow;

pub const WARMUP_CALLS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub backend: Backend,
    pub n: usize,
    pub mean_us: f64,
    pub median_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

/// Wall-clock time of `n` `classify_window` calls cycling through `windows`,
/// after `WARMUP_CALLS` untimed calls.
pub fn bench_latency(
    pipeline: &GesturePipeline,
    backend: Backend,
    windows: &[EmgWindow],
    n: usize,
) -> Result<LatencyReport, HarnessError> {
    if n == 0 || windows.is_empty() {
        return Err(HarnessError::EmptyBench);
    }
    for w in windows.iter().cycle().take(WARMUP_CALLS) {
        pipeline.classify_window(w, backend)?;
    }
    let mut times = Vec::with_capacity(n);
    for w in windows.iter().cycle().take(n) {
        let t = Instant::now();
        std::hint::black_box(pipeline.classify_window(std::hint::black_box(w), backend)?);
        times.push(t.elapsed().as_secs_f64() * 1e6);
    }
    times.sort_by(f64::total_cmp);
    let rank = |q: f64| times[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
    Ok(LatencyReport {
        backend,
        n,
        mean_us: times.iter().sum::<f64>() / n as f64,
        median_us: rank(0.5),
        p99_us: rank(0.99),
        max_us: times[n - 1],
    })
}
