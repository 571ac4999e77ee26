//! Double buffering overlaps next-chunk preparation with the in-flight
//! transfer: with a non-zero preparation cost, blocks+double beats
//! blocks+single and approaches the max(prepare, transfer) pipeline bound.
//!
//! ```bash
//! cargo run --release --example double_buffer_pipeline
//! ```

use axidma_sim::{
    pattern_bytes, BufferScheme, DeviceSpec, DriverKind, PartitionMode, SessionSpec, SimConfig,
    Simulation,
};

fn main() {
    let cfg = SimConfig::default();
    let block = 65_536u64;
    println!("user-poll, blocks of {block} B:");
    println!("{:>10} {:>14} {:>14} {:>9}", "bytes", "single ns", "double ns", "gain");
    for chunks in [2u64, 4, 8, 16, 32] {
        let size = chunks * block;
        let run = |scheme| {
            let spec = SessionSpec::new(
                DriverKind::UserPoll,
                scheme,
                PartitionMode::Blocks { block_size: block },
                pattern_bytes(size as usize, size),
            );
            Simulation::run_session(&cfg, DeviceSpec::Loopback, &spec)
                .expect("session")
                .total_ns
        };
        let single = run(BufferScheme::Single);
        let double = run(BufferScheme::Double);
        println!(
            "{size:>10} {single:>14} {double:>14} {:>8.1}%",
            100.0 * (single - double) as f64 / single as f64
        );
    }
}
