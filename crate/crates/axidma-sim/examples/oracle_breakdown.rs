//! Itemized closed-form prediction next to the simulated run: the two agree
//! to the nanosecond in contention-free configurations.
//!
//! ```bash
//! cargo run --release --example oracle_breakdown
//! ```

use axidma_sim::oracle::predict_transfer_time;
use axidma_sim::{
    pattern_bytes, BufferScheme, DeviceSpec, DriverKind, PartitionMode, SessionSpec, SimConfig,
    Simulation,
};

fn main() {
    let cfg = SimConfig::default();
    for driver in DriverKind::ALL {
        for size in [8u64, 4096] {
            let p = predict_transfer_time(size, driver, &cfg).expect("prediction");
            let spec = SessionSpec::new(
                driver,
                BufferScheme::Single,
                PartitionMode::Unique,
                pattern_bytes(size as usize, size),
            );
            let r = Simulation::run_session(&cfg, DeviceSpec::Loopback, &spec).expect("session");
            println!("{driver} x {size} B:");
            for (label, ns) in &p.items {
                println!("    {label:<24} {ns:>10} ns");
            }
            println!(
                "    predicted total {} ns | simulated total {} ns | diff {}",
                p.total_ns,
                r.total_ns,
                r.total_ns as i64 - p.total_ns as i64
            );
        }
    }
}
