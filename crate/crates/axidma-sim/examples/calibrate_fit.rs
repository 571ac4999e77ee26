//! Calibration round trip: measure a small sweep, fit intercept and
//! per-byte slope per driver, and print suggested config overrides.
//!
//! ```bash
//! cargo run --release --example calibrate_fit
//! ```

use axidma_sim::bench::{run_sweep, SweepSpec};
use axidma_sim::calibrate::{fit, render_report, suggest_overrides, Sample};
use axidma_sim::{BufferScheme, PartitionMode, SimConfig};

fn main() {
    let cfg = SimConfig::default();
    let spec = SweepSpec {
        min_bytes: 1024,
        max_bytes: 1024 * 1024,
        points: 8,
        scheme: BufferScheme::Single,
        mode: PartitionMode::Unique,
        ..SweepSpec::default()
    };
    let records = run_sweep(&cfg, &spec).expect("sweep");
    let samples: Vec<Sample> = records
        .iter()
        .map(|r| Sample {
            driver: r.driver,
            size_bytes: r.size_bytes,
            total_ns: r.total_ns,
        })
        .collect();
    let fits = fit(&samples).expect("fit");
    let overrides = suggest_overrides(&fits, &cfg);
    print!("{}", render_report(&fits, &overrides));
}
