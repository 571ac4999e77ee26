//! The blocking scenario: a send one byte larger than both stream FIFOs with
//! the receive side never posted fills the return path and wedges the
//! transmit stream. The polling driver spins forever (the run is classified
//! as a deadlock); the scheduled driver arms the receive side itself and
//! completes.
//!
//! ```bash
//! cargo run --release --example deadlock_demo
//! ```

use axidma_sim::{
    pattern_bytes, BufferScheme, DeviceSpec, DriverKind, PartitionMode, SessionSpec, SimConfig,
    Simulation,
};

fn main() {
    let cfg = SimConfig::default();
    let size = cfg.tx_fifo_bytes + cfg.rx_fifo_bytes + 1;
    println!(
        "payload {size} B vs tx_fifo {} B + rx_fifo {} B",
        cfg.tx_fifo_bytes, cfg.rx_fifo_bytes
    );
    for driver in [DriverKind::UserPoll, DriverKind::UserScheduled] {
        let mut spec = SessionSpec::new(
            driver,
            BufferScheme::Single,
            PartitionMode::Unique,
            pattern_bytes(size as usize, 1),
        );
        spec.arm_rx_upfront = false; // the application "forgets" the RX post
        let result = Simulation::run_session(&cfg, DeviceSpec::Loopback, &spec).expect("session");
        println!(
            "{driver:<17} -> {:<9} (t = {} ns, {} payload bytes moved)",
            result.outcome.to_string(),
            result.total_ns,
            result.bytes_progressed
        );
    }
}
