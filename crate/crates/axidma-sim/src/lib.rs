//! Deterministic discrete-event simulator of host/accelerator memory
//! transfers on a Zynq-class programmable SoC.
//!
//! The model couples a DDR port with exclusive read/write arbitration, two
//! stream DMA channels (MM2S toward the logic fabric, S2MM back), bounded
//! stream FIFOs, pluggable PL workloads (a loop-back echo and a streamed CNN
//! accelerator), and three host driver strategies: user-level polling,
//! user-level scheduled, and an interrupt-driven kernel driver with
//! scatter-gather chaining.
//!
//! Every timing quantity is integer nanoseconds and every rate an exact
//! rational, so runs are reproducible byte-for-byte and the closed-form
//! predictions in [`oracle`] match simulated runs exactly in contention-free
//! configurations.
//!
//! See the `examples/` directory for runnable entry points (latency sweeps,
//! CNN frame timing, the deadlock demonstration, double-buffer pipelining),
//! and the `axidma-bench` binary for the `sweep | cnn | calibrate | validate`
//! command line.

pub mod bench;
pub mod calibrate;
pub mod config;
pub mod device;
pub mod dma;
pub mod driver;
pub mod memory;
pub mod oracle;
pub mod session;
pub mod sim;
pub mod system;
pub mod validate;

pub use config::SimConfig;
pub use device::CnnNetwork;
pub use driver::{BufferScheme, DriverKind, PartitionMode};
pub use sim::{RunOutcome, SimTime};
pub use system::{DeviceSpec, SessionResult, SessionSpec, Simulation};

/// Deterministic payload filler used by benches, examples and tests.
pub fn pattern_bytes(len: usize, seed: u64) -> Vec<u8> {
    let mut state = seed | 1;
    (0..len)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 24) as u8
        })
        .collect()
}
