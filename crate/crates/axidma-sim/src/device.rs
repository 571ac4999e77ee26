//! PL-side workload models: a loop-back echo, a streamed CNN accelerator
//! model, and the event-camera histogram front end that produces its input
//! frames.
//!
//! The CNN device never convolves anything. It consumes and produces byte
//! streams of the exact sizes a layer implies and charges compute time from
//! a MAC-array rate model; that is all the host-interface simulation needs.

use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DeviceError {
    #[error("layer {index}: {reason}")]
    InvalidLayer { index: usize, reason: String },
    #[error("layer {index} input {got} does not chain from layer {} output {expected}", index - 1)]
    ChainMismatch {
        index: usize,
        got: String,
        expected: String,
    },
    #[error("network has no layers")]
    EmptyNetwork,
    #[error("network file line {line}: {reason}")]
    NetworkParse { line: usize, reason: String },
    #[error("input bytes arrived during kernel load beyond kernel_bytes ({expected} expected)")]
    ProtocolViolation { expected: u64 },
    #[error("event {index} at ({x},{y}) outside {width}x{height} frame")]
    OutOfBoundsEvent {
        index: usize,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("histogram needs at least one event")]
    NoEvents,
}

/// One convolution layer, 1 byte per pixel and per weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CnnLayerSpec {
    pub input_height: u64,
    pub input_width: u64,
    pub input_channels: u64,
    pub kernel_size: u64,
    pub output_channels: u64,
    pub stride: u64,
}

impl CnnLayerSpec {
    pub fn validate(&self, index: usize) -> Result<(), DeviceError> {
        let bad = |reason: &str| DeviceError::InvalidLayer {
            index,
            reason: reason.to_string(),
        };
        if self.input_height == 0 || self.input_width == 0 || self.input_channels == 0 {
            return Err(bad("input dimensions must be positive"));
        }
        if self.kernel_size == 0 || self.output_channels == 0 || self.stride == 0 {
            return Err(bad("kernel size, output channels and stride must be positive"));
        }
        if self.kernel_size > self.input_height || self.kernel_size > self.input_width {
            return Err(bad("kernel larger than input"));
        }
        Ok(())
    }

    pub fn output_height(&self) -> u64 {
        (self.input_height - self.kernel_size) / self.stride + 1
    }

    pub fn output_width(&self) -> u64 {
        (self.input_width - self.kernel_size) / self.stride + 1
    }

    pub fn input_bytes(&self) -> u64 {
        self.input_height * self.input_width * self.input_channels
    }

    pub fn kernel_bytes(&self) -> u64 {
        self.kernel_size * self.kernel_size * self.input_channels * self.output_channels
    }

    pub fn output_bytes(&self) -> u64 {
        self.output_height() * self.output_width() * self.output_channels
    }

    /// Bytes sent to the device for this layer: weights first, then the
    /// input feature map.
    pub fn tx_bytes(&self) -> u64 {
        self.kernel_bytes() + self.input_bytes()
    }

    pub fn macs_total(&self) -> u64 {
        self.output_height()
            * self.output_width()
            * self.output_channels
            * self.kernel_size
            * self.kernel_size
            * self.input_channels
    }

    /// Bytes in one input row (all channels).
    pub fn row_bytes(&self) -> u64 {
        self.input_width * self.input_channels
    }
}

impl fmt::Display for CnnLayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{} k{} s{} -> {}x{}x{}",
            self.input_height,
            self.input_width,
            self.input_channels,
            self.kernel_size,
            self.stride,
            self.output_height(),
            self.output_width(),
            self.output_channels
        )
    }
}

/// An ordered stack of layers where each layer's output dimensions feed the
/// next layer's input.
#[derive(Debug, Clone)]
pub struct CnnNetwork {
    pub name: String,
    layers: Vec<CnnLayerSpec>,
}

impl CnnNetwork {
    pub fn new(name: impl Into<String>, layers: Vec<CnnLayerSpec>) -> Result<Self, DeviceError> {
        if layers.is_empty() {
            return Err(DeviceError::EmptyNetwork);
        }
        for (i, layer) in layers.iter().enumerate() {
            layer.validate(i)?;
            if i > 0 {
                let prev = &layers[i - 1];
                let expected = (prev.output_height(), prev.output_width(), prev.output_channels);
                let got = (layer.input_height, layer.input_width, layer.input_channels);
                if expected != got {
                    return Err(DeviceError::ChainMismatch {
                        index: i,
                        got: format!("{}x{}x{}", got.0, got.1, got.2),
                        expected: format!("{}x{}x{}", expected.0, expected.1, expected.2),
                    });
                }
            }
        }
        Ok(CnnNetwork {
            name: name.into(),
            layers,
        })
    }

    pub fn layers(&self) -> &[CnnLayerSpec] {
        &self.layers
    }

    /// Parse a network descriptor: one `h w c_in k c_out stride` record per
    /// line, `#` comments, optional `name = ...` line.
    pub fn parse(text: &str, default_name: &str) -> Result<Self, DeviceError> {
        let mut name = default_name.to_string();
        let mut layers = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("name") {
                let rest = rest.trim_start();
                if let Some(value) = rest.strip_prefix('=') {
                    name = value.trim().to_string();
                    continue;
                }
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(DeviceError::NetworkParse {
                    line: lineno + 1,
                    reason: format!("expected 6 fields (h w c_in k c_out stride), got {}", fields.len()),
                });
            }
            let mut nums = [0u64; 6];
            for (i, f) in fields.iter().enumerate() {
                nums[i] = f.parse().map_err(|_| DeviceError::NetworkParse {
                    line: lineno + 1,
                    reason: format!("invalid integer {f:?}"),
                })?;
            }
            layers.push(CnnLayerSpec {
                input_height: nums[0],
                input_width: nums[1],
                input_channels: nums[2],
                kernel_size: nums[3],
                output_channels: nums[4],
                stride: nums[5],
            });
        }
        CnnNetwork::new(name, layers)
    }

    pub fn load(path: &Path) -> Result<Self, DeviceError> {
        let text = std::fs::read_to_string(path).map_err(|e| DeviceError::NetworkParse {
            line: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        let default_name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "network".to_string());
        Self::parse(&text, &default_name)
    }
}

/// Accelerator phase while executing one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CnnPhase {
    AwaitingKernels,
    AwaitingRows,
    ComputingStreaming,
    LayerDone,
}

/// Per-layer state of the streamed accelerator: consumes weights, then input
/// rows; after `rows_latency` rows the MAC array starts and output streams
/// back until the layer's exact output byte count has been emitted.
#[derive(Debug)]
pub struct CnnAcceleratorState {
    pub layer: CnnLayerSpec,
    pub phase: CnnPhase,
    pub kernel_bytes_received: u64,
    pub input_bytes_received: u64,
    pub output_bytes_emitted: u64,
    rows_latency: u64,
}

impl CnnAcceleratorState {
    pub fn new(layer: CnnLayerSpec, rows_latency: u64) -> Self {
        CnnAcceleratorState {
            layer,
            phase: CnnPhase::AwaitingKernels,
            kernel_bytes_received: 0,
            input_bytes_received: 0,
            output_bytes_emitted: 0,
            // A degenerate layer with fewer rows than the latency starts
            // computing once the whole input is in.
            rows_latency: rows_latency.min(layer.input_height),
        }
    }

    pub fn rows_received(&self) -> u64 {
        self.input_bytes_received / self.layer.row_bytes()
    }

    /// Input bytes that must arrive before the MACs start.
    pub fn compute_start_threshold(&self) -> u64 {
        self.rows_latency * self.layer.row_bytes()
    }

    /// Consume `bytes` of host TX stream. Returns true if this consumption
    /// crossed the compute-start threshold.
    pub fn consume(&mut self, bytes: u64) -> Result<bool, DeviceError> {
        let mut remaining = bytes;
        if self.phase == CnnPhase::AwaitingKernels {
            let need = self.layer.kernel_bytes() - self.kernel_bytes_received;
            let take = remaining.min(need);
            self.kernel_bytes_received += take;
            remaining -= take;
            if self.kernel_bytes_received == self.layer.kernel_bytes() {
                self.phase = CnnPhase::AwaitingRows;
            }
        }
        let was_below = self.input_bytes_received < self.compute_start_threshold();
        if remaining > 0 {
            if self.phase == CnnPhase::AwaitingKernels {
                return Err(DeviceError::ProtocolViolation {
                    expected: self.layer.kernel_bytes(),
                });
            }
            if self.input_bytes_received + remaining > self.layer.input_bytes() {
                return Err(DeviceError::ProtocolViolation {
                    expected: self.layer.tx_bytes(),
                });
            }
            self.input_bytes_received += remaining;
        }
        let crossed = was_below && self.input_bytes_received >= self.compute_start_threshold();
        if crossed && self.phase == CnnPhase::AwaitingRows {
            self.phase = CnnPhase::ComputingStreaming;
        }
        Ok(crossed)
    }

    pub fn input_complete(&self) -> bool {
        self.kernel_bytes_received == self.layer.kernel_bytes()
            && self.input_bytes_received == self.layer.input_bytes()
    }

    pub fn emit(&mut self, bytes: u64) {
        self.output_bytes_emitted += bytes;
        debug_assert!(self.output_bytes_emitted <= self.layer.output_bytes());
        if self.output_bytes_emitted == self.layer.output_bytes() {
            self.phase = CnnPhase::LayerDone;
        }
    }
}

/// MAC-array compute time for a layer: `macs_total` operations on `mac_count`
/// units at `clock_mhz`, derated by utilization in permille.
pub fn mac_time_ns(macs_total: u64, mac_count: u64, clock_mhz: u64, utilization_permille: u64) -> u64 {
    assert!(mac_count > 0 && clock_mhz > 0 && utilization_permille > 0);
    let num = macs_total as u128 * 1_000_000u128;
    let den = mac_count as u128 * clock_mhz as u128 * utilization_permille as u128;
    num.div_ceil(den) as u64
}

/// One event from the neuromorphic vision sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DvsEvent {
    pub x: u32,
    pub y: u32,
    pub timestamp_ns: u64,
    /// +1 (brightness increase) or -1.
    pub polarity: i8,
}

/// Event-count histogram over a pixel grid, plus its 0-255 normalization.
#[derive(Debug, Clone)]
pub struct FrameHistogram {
    pub width: u32,
    pub height: u32,
    counts: Vec<u32>,
}

impl FrameHistogram {
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn count_sum(&self) -> u64 {
        self.counts.iter().map(|c| *c as u64).sum()
    }

    /// Normalize to the byte range by max-count scaling.
    pub fn to_bytes(&self) -> Vec<u8> {
        let max = self.counts.iter().copied().max().unwrap_or(0);
        if max == 0 {
            return vec![0; self.counts.len()];
        }
        self.counts
            .iter()
            .map(|&c| ((c as u64 * 255) / max as u64) as u8)
            .collect()
    }
}

/// Bin the first `n` events into a `width` x `height` histogram frame.
pub fn events_to_frame(
    events: &[DvsEvent],
    n: usize,
    width: u32,
    height: u32,
) -> Result<FrameHistogram, DeviceError> {
    if n == 0 {
        return Err(DeviceError::NoEvents);
    }
    let n = n.min(events.len());
    let mut counts = vec![0u32; (width as usize) * (height as usize)];
    for (index, ev) in events[..n].iter().enumerate() {
        if ev.x >= width || ev.y >= height {
            return Err(DeviceError::OutOfBoundsEvent {
                index,
                x: ev.x,
                y: ev.y,
                width,
                height,
            });
        }
        counts[(ev.y as usize) * (width as usize) + ev.x as usize] += 1;
    }
    Ok(FrameHistogram {
        width,
        height,
        counts,
    })
}

/// Deterministic synthetic event stream (xorshift64), uniform over the grid.
pub fn synthetic_events(count: usize, width: u32, height: u32, seed: u64) -> Vec<DvsEvent> {
    let mut state = seed | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    (0..count)
        .map(|i| {
            let r = next();
            DvsEvent {
                x: (r % width as u64) as u32,
                y: ((r >> 16) % height as u64) as u32,
                timestamp_ns: i as u64 * 1000,
                polarity: if r & (1 << 40) != 0 { 1 } else { -1 },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer_64x64() -> CnnLayerSpec {
        CnnLayerSpec {
            input_height: 64,
            input_width: 64,
            input_channels: 1,
            kernel_size: 5,
            output_channels: 16,
            stride: 1,
        }
    }

    #[test]
    fn layer_dimension_arithmetic() {
        let l = layer_64x64();
        assert_eq!(l.output_height(), 60);
        assert_eq!(l.output_width(), 60);
        assert_eq!(l.input_bytes(), 4096);
        assert_eq!(l.kernel_bytes(), 400);
        assert_eq!(l.output_bytes(), 60 * 60 * 16);
        assert_eq!(l.macs_total(), 60 * 60 * 16 * 5 * 5);
    }

    #[test]
    fn mac_time_hand_arithmetic() {
        // 1.28M MACs on 128 MACs at 100 MHz, full utilization: 100,000 ns.
        assert_eq!(mac_time_ns(1_280_000, 128, 100, 1000), 100_000);
        // Utilization 0.5 doubles it.
        assert_eq!(mac_time_ns(1_280_000, 128, 100, 500), 200_000);
    }

    #[test]
    fn degenerate_one_pixel_layer_clamps_rows_latency() {
        let l = CnnLayerSpec {
            input_height: 1,
            input_width: 1,
            input_channels: 1,
            kernel_size: 1,
            output_channels: 1,
            stride: 1,
        };
        l.validate(0).unwrap();
        let st = CnnAcceleratorState::new(l, 2);
        // rows_latency clamped from 2 to the single available row.
        assert_eq!(st.compute_start_threshold(), 1);
    }

    #[test]
    fn accelerator_phases_and_protocol() {
        let l = layer_64x64();
        let mut st = CnnAcceleratorState::new(l, 2);
        assert_eq!(st.phase, CnnPhase::AwaitingKernels);
        st.consume(l.kernel_bytes()).unwrap();
        assert_eq!(st.phase, CnnPhase::AwaitingRows);
        // Two rows in -> compute starts.
        let crossed = st.consume(2 * l.row_bytes()).unwrap();
        assert!(crossed);
        assert_eq!(st.phase, CnnPhase::ComputingStreaming);
        st.consume(l.input_bytes() - 2 * l.row_bytes()).unwrap();
        assert!(st.input_complete());
        // Overfeeding is a protocol violation.
        let err = st.consume(1).unwrap_err();
        assert!(matches!(err, DeviceError::ProtocolViolation { .. }));
        st.emit(l.output_bytes());
        assert_eq!(st.phase, CnnPhase::LayerDone);
    }

    #[test]
    fn network_chaining_validated() {
        let l1 = layer_64x64(); // -> 60x60x16
        let good = CnnLayerSpec {
            input_height: 60,
            input_width: 60,
            input_channels: 16,
            kernel_size: 3,
            output_channels: 32,
            stride: 2,
        };
        assert!(CnnNetwork::new("t", vec![l1, good]).is_ok());
        let bad = CnnLayerSpec {
            input_height: 59,
            ..good
        };
        let err = CnnNetwork::new("t", vec![l1, bad]).unwrap_err();
        assert!(matches!(err, DeviceError::ChainMismatch { index: 1, .. }));
    }

    #[test]
    fn network_parse_roundtrip() {
        let text = "\
# test network
name = tiny
64 64 1 5 16 1   # first layer
60 60 16 3 32 2
";
        let net = CnnNetwork::parse(text, "fallback").unwrap();
        assert_eq!(net.name, "tiny");
        assert_eq!(net.layers().len(), 2);
        assert_eq!(net.layers()[1].stride, 2);
        let err = CnnNetwork::parse("1 2 3\n", "x").unwrap_err();
        assert!(matches!(err, DeviceError::NetworkParse { line: 1, .. }));
    }

    #[test]
    fn single_event_normalizes_to_255() {
        let events = [DvsEvent {
            x: 3,
            y: 2,
            timestamp_ns: 0,
            polarity: 1,
        }];
        let frame = events_to_frame(&events, 1, 8, 8).unwrap();
        let bytes = frame.to_bytes();
        assert_eq!(bytes[2 * 8 + 3], 255);
        assert_eq!(bytes.iter().filter(|b| **b != 0).count(), 1);
    }

    #[test]
    fn repeated_pixel_saturates_only_that_bin() {
        let events: Vec<DvsEvent> = (0..10)
            .map(|i| DvsEvent {
                x: 1,
                y: 1,
                timestamp_ns: i,
                polarity: 1,
            })
            .collect();
        let frame = events_to_frame(&events, 10, 4, 4).unwrap();
        let bytes = frame.to_bytes();
        assert_eq!(bytes[4 + 1], 255);
        assert_eq!(frame.count_sum(), 10);
    }

    #[test]
    fn synthetic_events_conserve_count() {
        let events = synthetic_events(4096, 64, 64, 42);
        let frame = events_to_frame(&events, 4096, 64, 64).unwrap();
        assert_eq!(frame.count_sum(), 4096);
    }

    #[test]
    fn out_of_bounds_event_rejected() {
        let events = [DvsEvent {
            x: 64,
            y: 0,
            timestamp_ns: 0,
            polarity: 1,
        }];
        let err = events_to_frame(&events, 1, 64, 64).unwrap_err();
        assert!(matches!(err, DeviceError::OutOfBoundsEvent { .. }));
    }
}
