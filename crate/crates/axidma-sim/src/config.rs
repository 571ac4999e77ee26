//! Simulation configuration: documented keys, defaults, and the flat
//! `key = value` file format.
//!
//! Unknown keys are hard errors so a typo cannot silently fall back to a
//! default. Fractional values (bandwidths, per-byte costs, utilization) are
//! parsed to exact fixed-point integers; nothing on the timing path is a
//! float.

use std::path::Path;

use thiserror::Error;

use crate::driver::CostModel;
use crate::memory::Rate;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: cannot parse {text:?} (expected `key = value`)")]
    Parse { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("key {key:?}: invalid value {value:?}: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
}

/// All tunables of the simulator. Field order follows the documented key list.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    /// DDR port bandwidth, thousandths of a byte per ns.
    pub ddr_bandwidth_milli_bpns: u64,
    /// CPU copy bandwidth between virtual and physical space, milli-B/ns.
    pub memcpy_bandwidth_milli_bpns: u64,
    pub stream_width_bits: u64,
    pub stream_clock_mhz: u64,
    /// DDR burst granularity of the DMA engine.
    pub burst_bytes: u64,
    pub max_descriptor_bytes: u64,
    pub sg_descriptor_fetch_ns: u64,
    pub tx_fifo_bytes: u64,
    pub rx_fifo_bytes: u64,
    pub syscall_overhead_ns: u64,
    pub dma_setup_ns: u64,
    pub poll_interval_ns: u64,
    pub sched_quantum_ns: u64,
    pub irq_latency_ns: u64,
    pub kernel_request_overhead_ns: u64,
    /// Application-side preparation cost, thousandths of a ns per byte.
    pub prepare_cost_milli_ns_per_byte: u64,
    /// Pipeline the kernel copy-in with the DMA instead of copy-then-configure.
    pub kernel_copy_overlap: bool,
    pub arbiter_max_grants: u32,
    /// Input rows the accelerator needs before its MACs start.
    pub rows_latency: u64,
    pub mac_count: u64,
    /// MAC array utilization in permille (1000 = every MAC busy every cycle).
    pub mac_utilization_permille: u64,
    /// Consecutive progress-free poll/quantum events before a run is declared
    /// deadlocked.
    pub deadlock_poll_window: u64,
    pub watchdog_s: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            ddr_bandwidth_milli_bpns: 4000,
            memcpy_bandwidth_milli_bpns: 4000,
            stream_width_bits: 64,
            stream_clock_mhz: 100,
            burst_bytes: 1024,
            max_descriptor_bytes: 8_388_608,
            sg_descriptor_fetch_ns: 100,
            tx_fifo_bytes: 4096,
            rx_fifo_bytes: 4096,
            syscall_overhead_ns: 400,
            dma_setup_ns: 300,
            poll_interval_ns: 200,
            sched_quantum_ns: 10_000,
            irq_latency_ns: 2_000,
            kernel_request_overhead_ns: 15_000,
            prepare_cost_milli_ns_per_byte: 500,
            kernel_copy_overlap: false,
            arbiter_max_grants: 16,
            rows_latency: 2,
            mac_count: 128,
            mac_utilization_permille: 750,
            deadlock_poll_window: 1000,
            watchdog_s: 60,
        }
    }
}

impl SimConfig {
    pub fn ddr_rate(&self) -> Rate {
        Rate::from_milli_bytes_per_ns(self.ddr_bandwidth_milli_bpns)
    }

    pub fn memcpy_rate(&self) -> Rate {
        Rate::from_milli_bytes_per_ns(self.memcpy_bandwidth_milli_bpns)
    }

    pub fn stream_rate(&self) -> Rate {
        Rate::stream(self.stream_width_bits, self.stream_clock_mhz)
    }

    pub fn cost_model(&self) -> CostModel {
        CostModel {
            syscall_overhead_ns: self.syscall_overhead_ns,
            dma_setup_ns: self.dma_setup_ns,
            poll_interval_ns: self.poll_interval_ns,
            sched_quantum_ns: self.sched_quantum_ns,
            irq_latency_ns: self.irq_latency_ns,
            kernel_request_overhead_ns: self.kernel_request_overhead_ns,
            prepare_cost_milli_ns_per_byte: self.prepare_cost_milli_ns_per_byte,
        }
    }

    pub fn from_path(path: &Path) -> Result<SimConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parse `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<SimConfig, ConfigError> {
        let mut config = SimConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
                line: lineno + 1,
                text: line.to_string(),
            })?;
            config.apply(key.trim(), value.trim(), lineno + 1)?;
        }
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let invalid = |reason: &str| ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.to_string(),
        };
        match key {
            "ddr_bandwidth_bpns" => {
                self.ddr_bandwidth_milli_bpns = parse_milli(value).map_err(|e| invalid(&e))?
            }
            "memcpy_bandwidth_bpns" => {
                self.memcpy_bandwidth_milli_bpns = parse_milli(value).map_err(|e| invalid(&e))?
            }
            "stream_width_bits" => self.stream_width_bits = parse_u64(value).map_err(|e| invalid(&e))?,
            "stream_clock_mhz" => self.stream_clock_mhz = parse_u64(value).map_err(|e| invalid(&e))?,
            "burst_bytes" => self.burst_bytes = parse_u64(value).map_err(|e| invalid(&e))?,
            "max_descriptor_bytes" => {
                self.max_descriptor_bytes = parse_u64(value).map_err(|e| invalid(&e))?
            }
            "sg_descriptor_fetch_ns" => {
                self.sg_descriptor_fetch_ns = parse_u64(value).map_err(|e| invalid(&e))?
            }
            "tx_fifo_bytes" => self.tx_fifo_bytes = parse_u64(value).map_err(|e| invalid(&e))?,
            "rx_fifo_bytes" => self.rx_fifo_bytes = parse_u64(value).map_err(|e| invalid(&e))?,
            "syscall_overhead_ns" => {
                self.syscall_overhead_ns = parse_u64(value).map_err(|e| invalid(&e))?
            }
            "dma_setup_ns" => self.dma_setup_ns = parse_u64(value).map_err(|e| invalid(&e))?,
            "poll_interval_ns" => self.poll_interval_ns = parse_u64(value).map_err(|e| invalid(&e))?,
            "sched_quantum_ns" => self.sched_quantum_ns = parse_u64(value).map_err(|e| invalid(&e))?,
            "irq_latency_ns" => self.irq_latency_ns = parse_u64(value).map_err(|e| invalid(&e))?,
            "kernel_request_overhead_ns" => {
                self.kernel_request_overhead_ns = parse_u64(value).map_err(|e| invalid(&e))?
            }
            "prepare_cost_ns_per_byte" => {
                self.prepare_cost_milli_ns_per_byte = parse_milli_or_zero(value).map_err(|e| invalid(&e))?
            }
            "kernel_copy_overlap" => {
                self.kernel_copy_overlap = match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(invalid("expected true/false")),
                }
            }
            "arbiter_max_grants" => {
                self.arbiter_max_grants =
                    parse_u64(value).map_err(|e| invalid(&e))?.try_into().map_err(|_| invalid("too large"))?
            }
            "rows_latency" => self.rows_latency = parse_u64(value).map_err(|e| invalid(&e))?,
            "mac_count" => self.mac_count = parse_u64(value).map_err(|e| invalid(&e))?,
            "mac_utilization" => {
                self.mac_utilization_permille = parse_milli(value).map_err(|e| invalid(&e))?
            }
            "deadlock_poll_window" => {
                self.deadlock_poll_window = parse_u64(value).map_err(|e| invalid(&e))?
            }
            "watchdog_s" => self.watchdog_s = parse_u64(value).map_err(|e| invalid(&e))?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &str, value: u64, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::InvalidValue {
                    key: key.to_string(),
                    value: value.to_string(),
                    reason: reason.to_string(),
                })
            }
        };
        check(self.ddr_bandwidth_milli_bpns > 0, "ddr_bandwidth_bpns", 0, "must be > 0")?;
        check(self.memcpy_bandwidth_milli_bpns > 0, "memcpy_bandwidth_bpns", 0, "must be > 0")?;
        check(self.stream_width_bits > 0, "stream_width_bits", self.stream_width_bits, "must be > 0")?;
        check(self.stream_clock_mhz > 0, "stream_clock_mhz", self.stream_clock_mhz, "must be > 0")?;
        check(self.burst_bytes > 0, "burst_bytes", self.burst_bytes, "must be > 0")?;
        check(
            self.max_descriptor_bytes > 0,
            "max_descriptor_bytes",
            self.max_descriptor_bytes,
            "must be > 0",
        )?;
        check(self.tx_fifo_bytes >= 1, "tx_fifo_bytes", self.tx_fifo_bytes, "capacity must be >= 1")?;
        check(self.rx_fifo_bytes >= 1, "rx_fifo_bytes", self.rx_fifo_bytes, "capacity must be >= 1")?;
        check(self.poll_interval_ns > 0, "poll_interval_ns", self.poll_interval_ns, "must be > 0")?;
        check(self.sched_quantum_ns > 0, "sched_quantum_ns", self.sched_quantum_ns, "must be > 0")?;
        check(
            self.arbiter_max_grants as u64 > 0,
            "arbiter_max_grants",
            self.arbiter_max_grants as u64,
            "must be > 0",
        )?;
        check(self.mac_count > 0, "mac_count", self.mac_count, "must be > 0")?;
        check(
            self.mac_utilization_permille > 0 && self.mac_utilization_permille <= 1000,
            "mac_utilization",
            self.mac_utilization_permille,
            "must be in (0, 1]",
        )?;
        check(
            self.deadlock_poll_window > 0,
            "deadlock_poll_window",
            self.deadlock_poll_window,
            "must be > 0",
        )?;
        check(self.watchdog_s > 0, "watchdog_s", self.watchdog_s, "must be > 0")?;
        Ok(())
    }
}

fn parse_u64(value: &str) -> Result<u64, String> {
    value
        .replace('_', "")
        .parse::<u64>()
        .map_err(|_| format!("expected an unsigned integer, got {value:?}"))
}

/// Parse a decimal with up to three fractional digits into thousandths.
fn parse_milli(value: &str) -> Result<u64, String> {
    let milli = parse_milli_or_zero(value)?;
    if milli == 0 {
        return Err("must be > 0".to_string());
    }
    Ok(milli)
}

fn parse_milli_or_zero(value: &str) -> Result<u64, String> {
    let (int_part, frac_part) = match value.split_once('.') {
        Some((i, f)) => (i, f),
        None => (value, ""),
    };
    if frac_part.len() > 3 {
        return Err("at most 3 decimal places supported".to_string());
    }
    let int: u64 = if int_part.is_empty() {
        0
    } else {
        int_part
            .parse()
            .map_err(|_| format!("expected a decimal number, got {value:?}"))?
    };
    let mut frac: u64 = 0;
    if !frac_part.is_empty() {
        frac = frac_part
            .parse()
            .map_err(|_| format!("expected a decimal number, got {value:?}"))?;
        for _ in frac_part.len()..3 {
            frac *= 10;
        }
    }
    Ok(int * 1000 + frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let config = SimConfig::parse("").unwrap();
        assert_eq!(config.max_descriptor_bytes, 8_388_608);
        assert_eq!(config.ddr_bandwidth_milli_bpns, 4000);
        assert_eq!(config.sched_quantum_ns, 10_000);
        assert_eq!(config.mac_count, 128);
    }

    #[test]
    fn comments_and_overrides() {
        let text = "\
# tuned for a slow platform
memcpy_bandwidth_bpns = 0.2
prepare_cost_ns_per_byte = 0.3   # trailing comment
sched_quantum_ns = 15000
kernel_copy_overlap = true
";
        let config = SimConfig::parse(text).unwrap();
        assert_eq!(config.memcpy_bandwidth_milli_bpns, 200);
        assert_eq!(config.prepare_cost_milli_ns_per_byte, 300);
        assert_eq!(config.sched_quantum_ns, 15_000);
        assert!(config.kernel_copy_overlap);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = SimConfig::parse("dma_bandwidth = 4\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { line, key } => {
                assert_eq!(line, 1);
                assert_eq!(key, "dma_bandwidth");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn zero_capacity_fifo_rejected() {
        let err = SimConfig::parse("rx_fifo_bytes = 0\n").unwrap_err();
        match err {
            ConfigError::InvalidValue { key, .. } => assert_eq!(key, "rx_fifo_bytes"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_line_names_the_line() {
        let err = SimConfig::parse("\n\nburst_bytes 1024\n").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn milli_parsing_is_exact() {
        assert_eq!(parse_milli("4").unwrap(), 4000);
        assert_eq!(parse_milli("0.2").unwrap(), 200);
        assert_eq!(parse_milli("0.125").unwrap(), 125);
        assert_eq!(parse_milli("1.5").unwrap(), 1500);
        assert!(parse_milli("0.0001").is_err());
        assert!(parse_milli("0").is_err());
        assert_eq!(parse_milli_or_zero("0").unwrap(), 0);
    }
}
