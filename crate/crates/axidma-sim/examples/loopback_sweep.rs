//! Loop-back latency sweep: 8 B to 6 MB under all three drivers, printed as
//! CSV with the kernel-vs-scheduled crossover size in the footer.
//!
//! ```bash
//! cargo run --release --example loopback_sweep
//! ```

use axidma_sim::bench::{run_sweep, sweep_csv, SweepSpec};
use axidma_sim::SimConfig;

fn main() {
    let cfg = SimConfig::default();
    let spec = SweepSpec::default();
    let records = run_sweep(&cfg, &spec).expect("sweep");
    print!("{}", sweep_csv(&records));
}
