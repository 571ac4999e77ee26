//! Property tests over generated workloads: the invariants the simulator
//! must hold for any configuration it accepts.

use proptest::prelude::*;

use axidma_sim::memory::grant_log_is_exclusive;
use axidma_sim::{
    pattern_bytes, BufferScheme, DeviceSpec, DriverKind, PartitionMode, RunOutcome, SessionSpec,
    SimConfig, Simulation,
};

fn driver_strategy() -> impl Strategy<Value = DriverKind> {
    prop_oneof![
        Just(DriverKind::UserPoll),
        Just(DriverKind::UserScheduled),
        Just(DriverKind::KernelInterrupt),
    ]
}

fn scheme_strategy() -> impl Strategy<Value = BufferScheme> {
    prop_oneof![Just(BufferScheme::Single), Just(BufferScheme::Double)]
}

fn mode_strategy() -> impl Strategy<Value = PartitionMode> {
    prop_oneof![
        Just(PartitionMode::Unique),
        (512u64..8192).prop_map(|block_size| PartitionMode::Blocks { block_size }),
    ]
}

fn run(
    driver: DriverKind,
    scheme: BufferScheme,
    mode: PartitionMode,
    size: u64,
    seed: u64,
    capture: bool,
    trace: bool,
) -> axidma_sim::SessionResult {
    let cfg = SimConfig::default();
    let mut spec = SessionSpec::new(driver, scheme, mode, pattern_bytes(size as usize, seed));
    spec.capture_rx = capture;
    spec.trace = trace;
    Simulation::run_session(&cfg, DeviceSpec::Loopback, &spec).expect("session")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    /// No two differently-directed DDR grants ever overlap in time.
    #[test]
    fn ddr_grant_log_is_exclusive(
        driver in driver_strategy(),
        scheme in scheme_strategy(),
        mode in mode_strategy(),
        size in 8u64..32_768,
        seed in any::<u64>(),
    ) {
        let r = run(driver, scheme, mode, size, seed, false, false);
        prop_assert_eq!(r.outcome, RunOutcome::Completed);
        prop_assert!(grant_log_is_exclusive(&r.grant_log));
    }

    /// Bytes pushed into each FIFO equal bytes popped plus the final
    /// occupancy (zero at completion).
    #[test]
    fn fifo_bytes_are_conserved(
        driver in driver_strategy(),
        scheme in scheme_strategy(),
        mode in mode_strategy(),
        size in 8u64..32_768,
        seed in any::<u64>(),
    ) {
        let r = run(driver, scheme, mode, size, seed, false, false);
        prop_assert!(r.fifo_conservation_ok);
    }

    /// Any partition of a payload delivers exactly the bytes of the
    /// whole-payload transfer.
    #[test]
    fn chain_equals_single_content(
        driver in driver_strategy(),
        size in 16u64..32_768,
        block in 8u64..16_384,
        seed in any::<u64>(),
    ) {
        let whole = run(driver, BufferScheme::Single, PartitionMode::Unique, size, seed, true, false);
        let chained = run(
            driver,
            BufferScheme::Single,
            PartitionMode::Blocks { block_size: block },
            size,
            seed,
            true,
            false,
        );
        prop_assert_eq!(whole.rx_data.as_ref(), chained.rx_data.as_ref());
        prop_assert_eq!(whole.rx_data.unwrap(), pattern_bytes(size as usize, seed));
    }

    /// Per driver, session time is non-decreasing in payload size.
    #[test]
    fn totals_monotone_in_size(
        driver in driver_strategy(),
        scheme in scheme_strategy(),
        size_a in 8u64..16_384,
        delta in 0u64..16_384,
        seed in any::<u64>(),
    ) {
        let mode = PartitionMode::Blocks { block_size: 2048 };
        let a = run(driver, scheme, mode, size_a, seed, false, false);
        let b = run(driver, scheme, mode, size_a + delta, seed, false, false);
        prop_assert!(a.total_ns <= b.total_ns,
            "{} bytes took {} ns but {} bytes took {} ns",
            size_a, a.total_ns, size_a + delta, b.total_ns);
    }

    /// Identical configuration and workload produce byte-identical event
    /// traces and reports.
    #[test]
    fn reruns_are_byte_identical(
        driver in driver_strategy(),
        scheme in scheme_strategy(),
        mode in mode_strategy(),
        size in 8u64..16_384,
        seed in any::<u64>(),
    ) {
        let a = run(driver, scheme, mode, size, seed, true, true);
        let b = run(driver, scheme, mode, size, seed, true, true);
        prop_assert_eq!(a.trace, b.trace);
        prop_assert_eq!(a.total_ns, b.total_ns);
        prop_assert_eq!(a.tx, b.tx);
        prop_assert_eq!(a.rx, b.rx);
        prop_assert_eq!(a.rx_data, b.rx_data);
    }

    /// Polling observes completion within one poll interval of the hardware:
    /// against a 1 ns reference poll, the TX leg shifts by less than one
    /// interval and the whole session by less than two.
    #[test]
    fn poll_quantization_bounded(
        size in 8u64..16_384,
        seed in any::<u64>(),
    ) {
        let coarse = SimConfig::default();
        // The deadlock window counts progress-free checks; a 1 ns poll needs
        // a proportionally larger window to cover the same stall tolerance.
        let fine = SimConfig {
            poll_interval_ns: 1,
            deadlock_poll_window: 1000 * coarse.poll_interval_ns,
            ..SimConfig::default()
        };
        let payload = pattern_bytes(size as usize, seed);
        let spec = SessionSpec::new(
            DriverKind::UserPoll,
            BufferScheme::Single,
            PartitionMode::Unique,
            payload,
        );
        let a = Simulation::run_session(&coarse, DeviceSpec::Loopback, &spec).expect("session");
        let b = Simulation::run_session(&fine, DeviceSpec::Loopback, &spec).expect("session");
        let tx_shift = a.tx.t_complete.ns() as i64 - b.tx.t_complete.ns() as i64;
        prop_assert!((0..coarse.poll_interval_ns as i64).contains(&tx_shift),
            "tx quantization shift {tx_shift}");
        let total_shift = a.total_ns as i64 - b.total_ns as i64;
        prop_assert!(total_shift >= 0 && total_shift < 2 * coarse.poll_interval_ns as i64);
    }

    /// Double buffering never loses to single buffering for multi-chunk
    /// payloads, and wins strictly when preparation costs anything.
    #[test]
    fn double_buffer_dominates(
        chunks in 2u64..12,
        block in prop_oneof![Just(4096u64), Just(16_384), Just(65_536)],
        seed in any::<u64>(),
    ) {
        let size = chunks * block;
        let mode = PartitionMode::Blocks { block_size: block };
        let single = run(DriverKind::UserPoll, BufferScheme::Single, mode, size, seed, false, false);
        let double = run(DriverKind::UserPoll, BufferScheme::Double, mode, size, seed, false, false);
        prop_assert!(double.total_ns < single.total_ns);

        // With free preparation the two schemes coincide.
        let free_prep = SimConfig {
            prepare_cost_milli_ns_per_byte: 0,
            ..SimConfig::default()
        };
        let spec_single = SessionSpec::new(
            DriverKind::UserPoll, BufferScheme::Single, mode, pattern_bytes(size as usize, seed));
        let spec_double = SessionSpec::new(
            DriverKind::UserPoll, BufferScheme::Double, mode, pattern_bytes(size as usize, seed));
        let s0 = Simulation::run_session(&free_prep, DeviceSpec::Loopback, &spec_single).expect("session");
        let d0 = Simulation::run_session(&free_prep, DeviceSpec::Loopback, &spec_double).expect("session");
        prop_assert_eq!(s0.total_ns, d0.total_ns);
    }
}
