//! Benchmark orchestration: the loop-back latency sweep, the per-layer CNN
//! frame run, CSV emission, and the crossover scan.

use std::fmt::Write as _;

use thiserror::Error;

use crate::config::SimConfig;
use crate::device::{CnnNetwork, DeviceError};
use crate::driver::{BufferScheme, DriverKind, PartitionMode};
use crate::sim::RunOutcome;
use crate::system::{DeviceSpec, EngineError, SessionSpec, Simulation};
use crate::{pattern_bytes, SessionResult};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("sweep needs min <= max, got {min}..{max}")]
    BadRange { min: u64, max: u64 },
    #[error("sweep needs at least 2 points")]
    TooFewPoints,
    #[error("csv line {line}: {reason}")]
    CsvParse { line: usize, reason: String },
}

/// Loop-back sweep specification.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub min_bytes: u64,
    pub max_bytes: u64,
    pub points: usize,
    pub drivers: Vec<DriverKind>,
    pub scheme: BufferScheme,
    pub mode: PartitionMode,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            min_bytes: 8,
            max_bytes: 6 * 1024 * 1024,
            points: 25,
            drivers: DriverKind::ALL.to_vec(),
            scheme: BufferScheme::Single,
            mode: PartitionMode::Blocks { block_size: 65_536 },
        }
    }
}

impl SweepSpec {
    /// Log-spaced sizes rounded to the 8-byte stream word, deduplicated.
    pub fn sizes(&self) -> Result<Vec<u64>, BenchError> {
        if self.min_bytes > self.max_bytes {
            return Err(BenchError::BadRange {
                min: self.min_bytes,
                max: self.max_bytes,
            });
        }
        if self.points < 2 {
            return Err(BenchError::TooFewPoints);
        }
        let lo = (self.min_bytes.max(1)) as f64;
        let hi = self.max_bytes as f64;
        let n = self.points;
        let mut sizes: Vec<u64> = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                let raw = lo * (hi / lo).powf(t);
                let rounded = ((raw / 8.0).round() as u64) * 8;
                rounded.clamp(8, self.max_bytes.max(8))
            })
            .collect();
        sizes.sort_unstable();
        sizes.dedup();
        Ok(sizes)
    }
}

/// One sweep measurement row.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub driver: DriverKind,
    pub scheme: BufferScheme,
    pub mode: PartitionMode,
    pub size_bytes: u64,
    pub tx_ns: u64,
    pub rx_ns: u64,
    pub total_ns: u64,
    pub tx_ns_per_byte: f64,
    pub rx_ns_per_byte: f64,
    pub descriptors: u64,
    pub interrupts: u64,
    pub poll_ticks: u64,
    pub cpu_busy_ns: u64,
    pub outcome: RunOutcome,
}

impl BenchRecord {
    fn from_session(
        driver: DriverKind,
        scheme: BufferScheme,
        mode: PartitionMode,
        size: u64,
        result: &SessionResult,
    ) -> Self {
        let rx = result.rx.as_ref();
        let tx_ns = result.tx.duration_ns();
        let rx_ns = rx.map(|r| r.duration_ns()).unwrap_or(0);
        BenchRecord {
            driver,
            scheme,
            mode,
            size_bytes: size,
            tx_ns,
            rx_ns,
            total_ns: result.total_ns,
            tx_ns_per_byte: tx_ns as f64 / size as f64,
            rx_ns_per_byte: rx_ns as f64 / size as f64,
            descriptors: result.tx.descriptors_used + rx.map(|r| r.descriptors_used).unwrap_or(0),
            interrupts: result.tx.interrupts_taken + rx.map(|r| r.interrupts_taken).unwrap_or(0),
            poll_ticks: result.tx.poll_ticks_consumed + rx.map(|r| r.poll_ticks_consumed).unwrap_or(0),
            cpu_busy_ns: result.cpu_busy_ns,
            outcome: result.outcome,
        }
    }
}

/// Run the loop-back sweep; one record per (driver, size), in that order.
/// Deadlocked points are recorded, not fatal.
pub fn run_sweep(cfg: &SimConfig, spec: &SweepSpec) -> Result<Vec<BenchRecord>, BenchError> {
    let sizes = spec.sizes()?;
    let mut records = Vec::with_capacity(spec.drivers.len() * sizes.len());
    let mut drivers = spec.drivers.clone();
    drivers.sort_unstable();
    drivers.dedup();
    for &driver in &drivers {
        for &size in &sizes {
            let payload = pattern_bytes(size as usize, size.wrapping_mul(0x9e37_79b9));
            let session = SessionSpec::new(driver, spec.scheme, spec.mode, payload);
            let result = Simulation::run_session(cfg, DeviceSpec::Loopback, &session)?;
            records.push(BenchRecord::from_session(driver, spec.scheme, spec.mode, size, &result));
        }
    }
    Ok(records)
}

/// Smallest sweep size from which the kernel driver's per-byte total stays
/// at or below the scheduled user driver's for every larger point.
pub fn crossover_size(records: &[BenchRecord]) -> Option<u64> {
    let per_byte = |driver: DriverKind| -> Vec<(u64, f64)> {
        let mut v: Vec<(u64, f64)> = records
            .iter()
            .filter(|r| r.driver == driver && r.outcome == RunOutcome::Completed)
            .map(|r| (r.size_bytes, r.total_ns as f64 / r.size_bytes as f64))
            .collect();
        v.sort_by_key(|(s, _)| *s);
        v
    };
    let kernel = per_byte(DriverKind::KernelInterrupt);
    let sched = per_byte(DriverKind::UserScheduled);
    if kernel.is_empty() || kernel.len() != sched.len() {
        return None;
    }
    let mut candidate = None;
    for (k, s) in kernel.iter().zip(&sched) {
        debug_assert_eq!(k.0, s.0);
        if k.1 <= s.1 {
            if candidate.is_none() {
                candidate = Some(k.0);
            }
        } else {
            candidate = None;
        }
    }
    candidate
}

/// Format with four significant digits, stable across platforms.
pub fn sig4(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-3..6).contains(&exp) {
        let decimals = (3 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.3e}")
    }
}

pub const SWEEP_CSV_HEADER: &str = "driver,scheme,mode,size_bytes,tx_ns,rx_ns,total_ns,tx_ns_per_byte,rx_ns_per_byte,descriptors,interrupts,poll_ticks,cpu_busy_ns,outcome";

/// Render sweep records as CSV with the crossover footer comment.
pub fn sweep_csv(records: &[BenchRecord]) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.driver,
            r.scheme,
            r.mode,
            r.size_bytes,
            r.tx_ns,
            r.rx_ns,
            r.total_ns,
            sig4(r.tx_ns_per_byte),
            sig4(r.rx_ns_per_byte),
            r.descriptors,
            r.interrupts,
            r.poll_ticks,
            r.cpu_busy_ns,
            r.outcome
        );
    }
    match crossover_size(records) {
        Some(size) => {
            let _ = writeln!(out, "# crossover_kernel_le_scheduled_bytes = {size}");
        }
        None => {
            let _ = writeln!(out, "# crossover_kernel_le_scheduled_bytes = none");
        }
    }
    out
}

/// Parse a sweep CSV back into records (footer comments ignored).
pub fn parse_sweep_csv(text: &str) -> Result<Vec<BenchRecord>, BenchError> {
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("driver,") {
            continue;
        }
        let bad = |reason: &str| BenchError::CsvParse {
            line: lineno + 1,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 14 {
            return Err(bad(&format!("expected 14 fields, got {}", f.len())));
        }
        let driver = match f[0] {
            "user-poll" => DriverKind::UserPoll,
            "user-scheduled" => DriverKind::UserScheduled,
            "kernel-interrupt" => DriverKind::KernelInterrupt,
            other => return Err(bad(&format!("unknown driver {other:?}"))),
        };
        let scheme = match f[1] {
            "single" => BufferScheme::Single,
            "double" => BufferScheme::Double,
            other => return Err(bad(&format!("unknown scheme {other:?}"))),
        };
        let mode = match f[2] {
            "unique" => PartitionMode::Unique,
            "blocks" => PartitionMode::Blocks { block_size: 0 },
            other => return Err(bad(&format!("unknown mode {other:?}"))),
        };
        let parse_u = |s: &str| s.parse::<u64>().map_err(|_| bad(&format!("bad integer {s:?}")));
        let parse_f = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad float {s:?}")));
        let outcome = match f[13] {
            "ok" => RunOutcome::Completed,
            "deadlock" => RunOutcome::Deadlock,
            "watchdog" => RunOutcome::WatchdogExpired,
            other => return Err(bad(&format!("unknown outcome {other:?}"))),
        };
        records.push(BenchRecord {
            driver,
            scheme,
            mode,
            size_bytes: parse_u(f[3])?,
            tx_ns: parse_u(f[4])?,
            rx_ns: parse_u(f[5])?,
            total_ns: parse_u(f[6])?,
            tx_ns_per_byte: parse_f(f[7])?,
            rx_ns_per_byte: parse_f(f[8])?,
            descriptors: parse_u(f[9])?,
            interrupts: parse_u(f[10])?,
            poll_ticks: parse_u(f[11])?,
            cpu_busy_ns: parse_u(f[12])?,
            outcome,
        });
    }
    Ok(records)
}

/// Per-layer timing of one CNN frame.
#[derive(Debug, Clone)]
pub struct LayerTiming {
    pub layer: usize,
    pub tx_bytes: u64,
    pub rx_bytes: u64,
    pub tx_ns: u64,
    pub rx_ns: u64,
    pub span_ns: u64,
    pub outcome: RunOutcome,
}

/// One frame through the layered accelerator under one driver.
#[derive(Debug, Clone)]
pub struct FrameReport {
    pub driver: DriverKind,
    pub scheme: BufferScheme,
    pub mode: PartitionMode,
    pub layers: Vec<LayerTiming>,
    pub frame_ns: u64,
    pub outcome: RunOutcome,
}

impl FrameReport {
    pub fn frame_ms(&self) -> f64 {
        self.frame_ns as f64 / 1e6
    }

    pub fn total_tx_bytes(&self) -> u64 {
        self.layers.iter().map(|l| l.tx_bytes).sum()
    }

    pub fn total_rx_bytes(&self) -> u64 {
        self.layers.iter().map(|l| l.rx_bytes).sum()
    }

    pub fn avg_tx_us_per_byte(&self) -> f64 {
        let ns: u64 = self.layers.iter().map(|l| l.tx_ns).sum();
        ns as f64 / 1000.0 / self.total_tx_bytes() as f64
    }

    pub fn avg_rx_us_per_byte(&self) -> f64 {
        let ns: u64 = self.layers.iter().map(|l| l.rx_ns).sum();
        ns as f64 / 1000.0 / self.total_rx_bytes() as f64
    }

    pub fn avg_tx_ns_per_byte(&self) -> f64 {
        self.avg_tx_us_per_byte() * 1000.0
    }

    pub fn avg_rx_ns_per_byte(&self) -> f64 {
        self.avg_rx_us_per_byte() * 1000.0
    }
}

/// Execute one frame: per layer, send kernels plus the input feature map,
/// let the accelerator compute, and receive the output feature map, which
/// becomes the next layer's input.
pub fn run_cnn_frame(
    cfg: &SimConfig,
    network: &CnnNetwork,
    input_frame: &[u8],
    driver: DriverKind,
    scheme: BufferScheme,
    mode: PartitionMode,
) -> Result<FrameReport, BenchError> {
    let first = network.layers()[0];
    assert_eq!(
        input_frame.len() as u64,
        first.input_bytes(),
        "input frame must match the first layer"
    );
    let mut input = input_frame.to_vec();
    let mut layers = Vec::with_capacity(network.layers().len());
    let mut frame_ns = 0u64;
    let mut outcome = RunOutcome::Completed;
    for (i, layer) in network.layers().iter().enumerate() {
        let weights = pattern_bytes(layer.kernel_bytes() as usize, 0x5eed_0000 + i as u64);
        let mut payload = weights;
        payload.extend_from_slice(&input);
        let mut session = SessionSpec::new(driver, scheme, mode, payload);
        session.rx_bytes = layer.output_bytes();
        session.capture_rx = true;
        let result = Simulation::run_session(cfg, DeviceSpec::CnnLayer(*layer), &session)?;
        let rx = result.rx.as_ref();
        layers.push(LayerTiming {
            layer: i + 1,
            tx_bytes: layer.tx_bytes(),
            rx_bytes: layer.output_bytes(),
            tx_ns: result.tx.duration_ns(),
            rx_ns: rx.map(|r| r.duration_ns()).unwrap_or(0),
            span_ns: result.total_ns,
            outcome: result.outcome,
        });
        frame_ns += result.total_ns;
        if result.outcome != RunOutcome::Completed {
            outcome = result.outcome;
            break;
        }
        input = result.rx_data.expect("cnn layers capture their output");
    }
    Ok(FrameReport {
        driver,
        scheme,
        mode,
        layers,
        frame_ns,
        outcome,
    })
}

pub const CNN_CSV_HEADER: &str =
    "driver,scheme,mode,layer,tx_bytes,rx_bytes,tx_ns,rx_ns,span_ns,tx_us_per_byte,rx_us_per_byte,frame_ms,outcome";

/// Render frame reports (one per driver) as CSV: per-layer rows plus a
/// `total` row carrying the frame figure and per-byte averages.
pub fn cnn_csv(reports: &[FrameReport]) -> String {
    let mut out = String::new();
    out.push_str(CNN_CSV_HEADER);
    out.push('\n');
    for rep in reports {
        for l in &rep.layers {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},,{}",
                rep.driver,
                rep.scheme,
                rep.mode,
                l.layer,
                l.tx_bytes,
                l.rx_bytes,
                l.tx_ns,
                l.rx_ns,
                l.span_ns,
                sig4(l.tx_ns as f64 / 1000.0 / l.tx_bytes as f64),
                sig4(l.rx_ns as f64 / 1000.0 / l.rx_bytes as f64),
                l.outcome
            );
        }
        let _ = writeln!(
            out,
            "{},{},{},total,{},{},{},{},{},{},{},{},{}",
            rep.driver,
            rep.scheme,
            rep.mode,
            rep.total_tx_bytes(),
            rep.total_rx_bytes(),
            rep.layers.iter().map(|l| l.tx_ns).sum::<u64>(),
            rep.layers.iter().map(|l| l.rx_ns).sum::<u64>(),
            rep.frame_ns,
            sig4(rep.avg_tx_us_per_byte()),
            sig4(rep.avg_rx_us_per_byte()),
            sig4(rep.frame_ms()),
            rep.outcome
        );
    }
    out
}
