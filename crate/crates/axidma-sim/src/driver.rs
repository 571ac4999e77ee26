//! Host driver strategies: who pays which software costs, and how an
//! application payload turns into descriptor submissions.
//!
//! Three strategies are modeled. A user-level polling driver spins on channel
//! state; a user-level scheduled driver checks completions only at scheduler
//! quanta (and always arms the receive side before a blocking send); a
//! kernel-level driver copies between virtual and physical space, submits one
//! scatter-gather chain, and sleeps until the completion interrupt.

use std::fmt;

use thiserror::Error;

use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DriverKind {
    UserPoll,
    UserScheduled,
    KernelInterrupt,
}

impl DriverKind {
    pub const ALL: [DriverKind; 3] = [
        DriverKind::UserPoll,
        DriverKind::UserScheduled,
        DriverKind::KernelInterrupt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DriverKind::UserPoll => "user-poll",
            DriverKind::UserScheduled => "user-scheduled",
            DriverKind::KernelInterrupt => "kernel-interrupt",
        }
    }
}

impl fmt::Display for DriverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BufferScheme {
    #[default]
    Single,
    Double,
}

impl BufferScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            BufferScheme::Single => "single",
            BufferScheme::Double => "double",
        }
    }
}

impl fmt::Display for BufferScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Send the payload whole, or split it into fixed-size blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    Unique,
    Blocks { block_size: u64 },
}

impl PartitionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PartitionMode::Unique => "unique",
            PartitionMode::Blocks { .. } => "blocks",
        }
    }
}

impl fmt::Display for PartitionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DriverError {
    #[error("payload of {payload} bytes exceeds the {limit}-byte unique-transfer limit")]
    PayloadExceedsUniqueLimit { payload: u64, limit: u64 },
    #[error("block size must be at least 1 byte")]
    BlockSizeZero,
    #[error("block size {block_size} exceeds the {limit}-byte descriptor limit")]
    BlockExceedsDescriptorLimit { block_size: u64, limit: u64 },
    #[error("payload must be at least 1 byte")]
    EmptyPayload,
}

/// Split a payload into descriptor lengths. Unique yields one descriptor;
/// Blocks yields `ceil(payload / block_size)` descriptors whose lengths
/// concatenate to exactly the payload.
pub fn partition(
    payload_bytes: u64,
    mode: PartitionMode,
    max_descriptor_bytes: u64,
) -> Result<Vec<u64>, DriverError> {
    if payload_bytes == 0 {
        return Err(DriverError::EmptyPayload);
    }
    match mode {
        PartitionMode::Unique => {
            if payload_bytes > max_descriptor_bytes {
                return Err(DriverError::PayloadExceedsUniqueLimit {
                    payload: payload_bytes,
                    limit: max_descriptor_bytes,
                });
            }
            Ok(vec![payload_bytes])
        }
        PartitionMode::Blocks { block_size } => {
            if block_size == 0 {
                return Err(DriverError::BlockSizeZero);
            }
            if block_size > max_descriptor_bytes {
                return Err(DriverError::BlockExceedsDescriptorLimit {
                    block_size,
                    limit: max_descriptor_bytes,
                });
            }
            let full = payload_bytes / block_size;
            let tail = payload_bytes % block_size;
            let mut lens = vec![block_size; full as usize];
            if tail > 0 {
                lens.push(tail);
            }
            Ok(lens)
        }
    }
}

/// Software cost parameters, all integer nanoseconds except the per-byte
/// preparation cost which is kept in thousandths of a nanosecond.
///
/// `prepare_cost` models the application writing its payload into the
/// uncached mapped staging buffer; it applies to the user-level drivers only.
/// The kernel path hands over a cached virtual buffer instead and pays the
/// driver's `cpu_copy` at `memcpy` rate.
#[derive(Debug, Clone, Copy)]
pub struct CostModel {
    pub syscall_overhead_ns: u64,
    pub dma_setup_ns: u64,
    pub poll_interval_ns: u64,
    pub sched_quantum_ns: u64,
    pub irq_latency_ns: u64,
    pub kernel_request_overhead_ns: u64,
    pub prepare_cost_milli_ns_per_byte: u64,
}

impl CostModel {
    /// Application-side preparation time for `bytes` of payload.
    pub fn prepare_ns(&self, bytes: u64) -> u64 {
        (bytes as u128 * self.prepare_cost_milli_ns_per_byte as u128).div_ceil(1000) as u64
    }

    /// One user-level submission: syscall entry plus DMA register setup.
    pub fn submit_ns(&self) -> u64 {
        self.syscall_overhead_ns + self.dma_setup_ns
    }
}

/// What the application asked for.
#[derive(Debug, Clone, Copy)]
pub struct TransferRequest {
    pub direction: crate::dma::ChannelDirection,
    pub payload_bytes: u64,
}

/// Measured outcome of one direction of a transfer session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransferReport {
    pub t_submit: SimTime,
    pub t_complete: SimTime,
    pub bytes: u64,
    pub descriptors_used: u64,
    pub poll_ticks_consumed: u64,
    pub interrupts_taken: u64,
}

impl TransferReport {
    pub fn duration_ns(&self) -> u64 {
        self.t_complete.since(self.t_submit)
    }

    pub fn ns_per_byte(&self) -> f64 {
        self.duration_ns() as f64 / self.bytes as f64
    }
}
