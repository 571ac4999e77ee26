//! Targeted end-to-end checks of the data path and driver behaviors.

use axidma_sim::dma::CompletionPolicy;
use axidma_sim::memory::{GrantKind, GrantOwner};
use axidma_sim::system::EngineError;
use axidma_sim::{
    pattern_bytes, BufferScheme, DeviceSpec, DriverKind, PartitionMode, RunOutcome, SessionSpec,
    SimConfig, SimTime, Simulation,
};

fn session(driver: DriverKind, mode: PartitionMode, len: usize) -> SessionSpec {
    SessionSpec::new(driver, BufferScheme::Single, mode, pattern_bytes(len, 99))
}

#[test]
fn empty_workload_completes_at_time_zero() {
    let cfg = SimConfig::default();
    let (outcome, at) = Simulation::run_idle(&cfg);
    assert_eq!(outcome, RunOutcome::Completed);
    assert_eq!(at, SimTime::ZERO);
}

#[test]
fn kernel_chain_of_three_raises_one_interrupt_at_chain_end() {
    let cfg = SimConfig::default();
    let spec = session(
        DriverKind::KernelInterrupt,
        PartitionMode::Blocks { block_size: 8192 },
        3 * 8192,
    );
    let r = Simulation::run_session(&cfg, DeviceSpec::Loopback, &spec).unwrap();
    assert_eq!(r.outcome, RunOutcome::Completed);
    assert_eq!(r.tx.descriptors_used, 3);
    assert_eq!(r.tx.interrupts_taken, 1);
    assert_eq!(r.rx.unwrap().interrupts_taken, 1);
}

#[test]
fn on_each_descriptor_policy_enters_handler_per_descriptor() {
    let cfg = SimConfig::default();
    // Descriptors large enough that each completion outlives the interrupt
    // latency, so no raise coalesces.
    let mut spec = session(
        DriverKind::KernelInterrupt,
        PartitionMode::Blocks { block_size: 8192 },
        3 * 8192,
    );
    spec.completion = CompletionPolicy::OnEachDescriptor;
    let r = Simulation::run_session(&cfg, DeviceSpec::Loopback, &spec).unwrap();
    assert_eq!(r.outcome, RunOutcome::Completed);
    assert_eq!(r.tx.interrupts_taken, 3);
}

#[test]
fn single_burst_payload_issues_one_read_grant() {
    let cfg = SimConfig::default();
    let spec = session(DriverKind::UserPoll, PartitionMode::Unique, 1024);
    let r = Simulation::run_session(&cfg, DeviceSpec::Loopback, &spec).unwrap();
    let reads: Vec<_> = r
        .grant_log
        .iter()
        .filter(|g| g.owner == GrantOwner::Mm2s && g.kind == GrantKind::Read)
        .collect();
    assert_eq!(reads.len(), 1);
    assert_eq!(reads[0].end.since(reads[0].start), 256); // 1024 B at 4 B/ns
}

#[test]
fn rx_write_grants_start_only_after_device_output() {
    let cfg = SimConfig::default();
    let spec = session(DriverKind::UserPoll, PartitionMode::Unique, 4096);
    let r = Simulation::run_session(&cfg, DeviceSpec::Loopback, &spec).unwrap();
    let first_read_end = r
        .grant_log
        .iter()
        .filter(|g| g.owner == GrantOwner::Mm2s)
        .map(|g| g.end)
        .min()
        .unwrap();
    let first_write_start = r
        .grant_log
        .iter()
        .filter(|g| g.owner == GrantOwner::S2mm)
        .map(|g| g.start)
        .min()
        .unwrap();
    // S2MM had an armed descriptor from the session start but made zero
    // progress until the echo produced data.
    assert!(first_write_start > first_read_end);
}

#[test]
fn kernel_copies_user_does_not() {
    let cfg = SimConfig::default();
    let run = |driver| {
        let spec = session(driver, PartitionMode::Unique, 2048);
        Simulation::run_session(&cfg, DeviceSpec::Loopback, &spec).unwrap()
    };
    let kernel = run(DriverKind::KernelInterrupt);
    let copies: Vec<_> = kernel
        .grant_log
        .iter()
        .filter(|g| g.owner == GrantOwner::CpuCopy)
        .collect();
    // Copy-in before the DMA reads, copy-out after the landing.
    assert_eq!(copies.len(), 2);
    let first_read = kernel
        .grant_log
        .iter()
        .find(|g| g.owner == GrantOwner::Mm2s)
        .unwrap()
        .start;
    assert!(copies[0].end <= first_read);
    let poll = run(DriverKind::UserPoll);
    assert!(poll.grant_log.iter().all(|g| g.owner != GrantOwner::CpuCopy));
}

#[test]
fn scheduled_driver_drains_rx_concurrently_with_tx() {
    // TX larger than both FIFOs: progress is only possible because the
    // scheduler armed RX before the send; the grant log shows writes
    // interleaved with the remaining reads.
    let cfg = SimConfig::default();
    let size = (cfg.tx_fifo_bytes + cfg.rx_fifo_bytes) * 2;
    let spec = session(DriverKind::UserScheduled, PartitionMode::Unique, size as usize);
    let r = Simulation::run_session(&cfg, DeviceSpec::Loopback, &spec).unwrap();
    assert_eq!(r.outcome, RunOutcome::Completed);
    let last_read_start = r
        .grant_log
        .iter()
        .filter(|g| g.owner == GrantOwner::Mm2s)
        .map(|g| g.start)
        .max()
        .unwrap();
    let first_write_start = r
        .grant_log
        .iter()
        .filter(|g| g.owner == GrantOwner::S2mm)
        .map(|g| g.start)
        .min()
        .unwrap();
    assert!(first_write_start < last_read_start);
}

#[test]
fn slow_device_governs_backpressured_completion() {
    // Small FIFOs, device at half the stream rate: the send can only finish
    // as fast as the device drains. Derived bound: the last byte cannot
    // enter the ToPL FIFO before the device consumed all but one FIFO's
    // worth, and chunk granularity can add at most two bursts of slack.
    let cfg = SimConfig {
        tx_fifo_bytes: 1024,
        rx_fifo_bytes: 8192,
        burst_bytes: 256,
        ..SimConfig::default()
    };
    let size = 4096u64;
    let half_stream = DeviceSpec::ThrottledLoopback {
        milli_bytes_per_ns: 400,
    };
    let spec = session(DriverKind::UserPoll, PartitionMode::Unique, size as usize);
    let r = Simulation::run_session(&cfg, half_stream, &spec).unwrap();
    assert_eq!(r.outcome, RunOutcome::Completed);
    let tx_hw_ns = r.tx.duration_ns();
    let device_ns_per_byte = 2.5; // 0.4 B/ns
    let lower = ((size - cfg.tx_fifo_bytes) as f64 * device_ns_per_byte) as u64;
    let upper = ((size + 2 * cfg.burst_bytes) as f64 * device_ns_per_byte) as u64
        + cfg.stream_rate().time_ns(cfg.tx_fifo_bytes)
        + 4 * cfg.poll_interval_ns
        + 2 * (cfg.syscall_overhead_ns + cfg.dma_setup_ns);
    assert!(
        (lower..=upper).contains(&tx_hw_ns),
        "tx span {tx_hw_ns} outside device-governed bounds {lower}..{upper}"
    );
    // Unthrottled, the same transfer runs at the stream rate, well ahead of
    // the device-governed run.
    let fast = Simulation::run_session(&cfg, DeviceSpec::Loopback, &spec).unwrap();
    assert!(fast.tx.duration_ns() + 1500 < tx_hw_ns);
}

#[test]
fn watchdog_bounds_runaway_configs() {
    let cfg = SimConfig {
        watchdog_s: 1,
        poll_interval_ns: 1_000_000,
        deadlock_poll_window: 10_000_000, // the detector stays quiet
        ..SimConfig::default()
    };
    let mut spec = session(
        DriverKind::UserPoll,
        PartitionMode::Unique,
        (cfg.tx_fifo_bytes + cfg.rx_fifo_bytes + 1) as usize,
    );
    spec.arm_rx_upfront = false;
    let r = Simulation::run_session(&cfg, DeviceSpec::Loopback, &spec).unwrap();
    assert_eq!(r.outcome, RunOutcome::WatchdogExpired);
    assert!(r.total_ns <= 1_000_000_000 + cfg.poll_interval_ns);
}

#[test]
fn kernel_sleep_on_lost_interrupt_is_true_deadlock() {
    // Kernel TX without RX posted and payload beyond FIFO capacity: the
    // chain never completes, no interrupt fires, nothing polls. The queue
    // drains with outstanding work: deadlock with zero poll events.
    let cfg = SimConfig::default();
    let size = cfg.tx_fifo_bytes + cfg.rx_fifo_bytes + 1;
    let mut spec = session(DriverKind::KernelInterrupt, PartitionMode::Unique, size as usize);
    spec.rx_bytes = 0; // the application never posts a receive
    let r = Simulation::run_session(&cfg, DeviceSpec::Loopback, &spec).unwrap();
    assert_eq!(r.outcome, RunOutcome::Deadlock);
    assert_eq!(r.tx.poll_ticks_consumed, 0);
}

#[test]
fn oversized_layer_payload_is_a_protocol_violation() {
    let cfg = SimConfig::default();
    let layer = axidma_sim::device::CnnLayerSpec {
        input_height: 8,
        input_width: 8,
        input_channels: 1,
        kernel_size: 3,
        output_channels: 4,
        stride: 1,
    };
    let too_big = layer.tx_bytes() + 64;
    let mut spec = session(DriverKind::UserPoll, PartitionMode::Unique, too_big as usize);
    spec.rx_bytes = layer.output_bytes();
    let err = Simulation::run_session(&cfg, DeviceSpec::CnnLayer(layer), &spec).unwrap_err();
    assert!(matches!(
        err,
        EngineError::Device(axidma_sim::device::DeviceError::ProtocolViolation { .. })
    ));
}

#[test]
fn six_megabyte_sweep_payload_echoes_exactly() {
    let cfg = SimConfig::default();
    let size = 6 * 1024 * 1024;
    let payload = pattern_bytes(size, 66);
    let mut spec = SessionSpec::new(
        DriverKind::KernelInterrupt,
        BufferScheme::Single,
        PartitionMode::Blocks { block_size: 65_536 },
        payload.clone(),
    );
    spec.capture_rx = true;
    let r = Simulation::run_session(&cfg, DeviceSpec::Loopback, &spec).unwrap();
    assert_eq!(r.outcome, RunOutcome::Completed);
    assert_eq!(r.rx_data.unwrap(), payload);
}
