//! AXI-DMA controller model: descriptors, scatter-gather chains, channel
//! state machines and the completion interrupt line.

use thiserror::Error;

use crate::memory::RegionHandle;
use crate::sim::SimTime;

/// Largest single descriptor the stream DMA accepts: 8 MB.
pub const MAX_DESCRIPTOR_BYTES_DEFAULT: u64 = 8 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelDirection {
    /// Memory-mapped to stream: DDR reads feeding the PL (the TX side).
    Mm2s,
    /// Stream to memory-mapped: PL output written back to DDR (the RX side).
    S2mm,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DmaError {
    #[error("descriptor length {length} outside 1..={max}")]
    InvalidDescriptorLength { length: u64, max: u64 },
    #[error("descriptor extent {offset}+{length} overruns region of {region_len} bytes")]
    DescriptorOutOfRegion {
        offset: u64,
        length: u64,
        region_len: u64,
    },
    #[error("descriptor chain is empty")]
    EmptyChain,
    #[error("descriptor chain mixes MM2S and S2MM descriptors")]
    MixedDirections,
    #[error("channel is busy")]
    ChannelBusy,
}

/// One DMA work unit: a span of a physical region plus a direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DmaDescriptor {
    pub region: RegionHandle,
    pub offset: u64,
    pub length: u64,
    pub direction: ChannelDirection,
}

impl DmaDescriptor {
    /// Validating constructor; the length and extent invariants hold for
    /// every descriptor that exists, so a channel never re-checks them.
    pub fn new(
        region: RegionHandle,
        region_len: u64,
        offset: u64,
        length: u64,
        direction: ChannelDirection,
        max_descriptor_bytes: u64,
    ) -> Result<DmaDescriptor, DmaError> {
        if length == 0 || length > max_descriptor_bytes {
            return Err(DmaError::InvalidDescriptorLength {
                length,
                max: max_descriptor_bytes,
            });
        }
        if offset + length > region_len {
            return Err(DmaError::DescriptorOutOfRegion {
                offset,
                length,
                region_len,
            });
        }
        Ok(DmaDescriptor {
            region,
            offset,
            length,
            direction,
        })
    }
}

/// When the channel raises its completion interrupt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CompletionPolicy {
    OnEachDescriptor,
    #[default]
    OnChainEnd,
}

/// An ordered scatter-gather chain. Hardware walks it without software help.
#[derive(Debug, Clone)]
pub struct DescriptorChain {
    descriptors: Vec<DmaDescriptor>,
    pub completion: CompletionPolicy,
}

impl DescriptorChain {
    pub fn new(
        descriptors: Vec<DmaDescriptor>,
        completion: CompletionPolicy,
    ) -> Result<DescriptorChain, DmaError> {
        let first = descriptors.first().ok_or(DmaError::EmptyChain)?;
        if descriptors.iter().any(|d| d.direction != first.direction) {
            return Err(DmaError::MixedDirections);
        }
        Ok(DescriptorChain {
            descriptors,
            completion,
        })
    }

    pub fn direction(&self) -> ChannelDirection {
        self.descriptors[0].direction
    }

    pub fn descriptors(&self) -> &[DmaDescriptor] {
        &self.descriptors
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    pub fn total_bytes(&self) -> u64 {
        self.descriptors.iter().map(|d| d.length).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelState {
    #[default]
    Idle,
    FetchingDescriptor,
    Transferring,
    Done,
    Halted,
}

/// Architectural view of one DMA channel. The data-path engine drives the
/// transitions; observers (a polling driver, tests) read it.
#[derive(Debug)]
pub struct DmaChannel {
    pub direction: ChannelDirection,
    state: ChannelState,
    chain: Option<DescriptorChain>,
    current_descriptor: usize,
    bytes_moved: u64,
}

impl DmaChannel {
    pub fn new(direction: ChannelDirection) -> Self {
        DmaChannel {
            direction,
            state: ChannelState::Idle,
            chain: None,
            current_descriptor: 0,
            bytes_moved: 0,
        }
    }

    pub fn state(&self) -> ChannelState {
        self.state
    }

    pub fn bytes_moved(&self) -> u64 {
        self.bytes_moved
    }

    pub fn current_descriptor(&self) -> usize {
        self.current_descriptor
    }

    pub fn chain(&self) -> Option<&DescriptorChain> {
        self.chain.as_ref()
    }

    /// Accept a chain and begin the first descriptor fetch.
    pub fn submit_chain(&mut self, chain: DescriptorChain) -> Result<(), DmaError> {
        if self.state != ChannelState::Idle {
            return Err(DmaError::ChannelBusy);
        }
        debug_assert_eq!(chain.direction(), self.direction);
        self.chain = Some(chain);
        self.current_descriptor = 0;
        self.bytes_moved = 0;
        self.state = ChannelState::FetchingDescriptor;
        Ok(())
    }

    pub fn fetch_complete(&mut self) {
        debug_assert_eq!(self.state, ChannelState::FetchingDescriptor);
        self.state = ChannelState::Transferring;
    }

    pub fn add_bytes_moved(&mut self, bytes: u64) {
        self.bytes_moved += bytes;
        if let Some(chain) = &self.chain {
            debug_assert!(self.bytes_moved <= chain.total_bytes());
        }
    }

    /// Current descriptor finished. Returns true when the whole chain is done.
    pub fn descriptor_complete(&mut self) -> bool {
        debug_assert_eq!(self.state, ChannelState::Transferring);
        let total = self.chain.as_ref().map(|c| c.len()).unwrap_or(0);
        self.current_descriptor += 1;
        if self.current_descriptor >= total {
            self.state = ChannelState::Done;
            true
        } else {
            self.state = ChannelState::FetchingDescriptor;
            false
        }
    }

    /// Return a Done channel to Idle so the next chain can be submitted.
    pub fn reset_to_idle(&mut self) {
        debug_assert!(matches!(
            self.state,
            ChannelState::Done | ChannelState::Idle
        ));
        self.state = ChannelState::Idle;
        self.chain = None;
        self.current_descriptor = 0;
        self.bytes_moved = 0;
    }

    pub fn halt(&mut self) {
        self.state = ChannelState::Halted;
    }
}

/// Completion interrupt line with coalescing: raising while already pending
/// neither loses nor duplicates an interrupt.
#[derive(Debug, Default)]
pub struct InterruptLine {
    pending: bool,
    raises: u64,
    handler_entries: u64,
}

impl InterruptLine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pending(&self) -> bool {
        self.pending
    }

    pub fn raises(&self) -> u64 {
        self.raises
    }

    pub fn handler_entries(&self) -> u64 {
        self.handler_entries
    }

    /// Raise the line. Returns the handler-entry time to schedule, or `None`
    /// if the raise coalesced into an already pending interrupt.
    pub fn raise(&mut self, now: SimTime, irq_latency_ns: u64) -> Option<SimTime> {
        self.raises += 1;
        if self.pending {
            return None;
        }
        self.pending = true;
        Some(now.plus(irq_latency_ns))
    }

    pub fn handler_entered(&mut self) {
        debug_assert!(self.pending);
        self.pending = false;
        self.handler_entries += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::DdrMemory;

    fn desc(len: u64) -> DmaDescriptor {
        let mut ddr = DdrMemory::new();
        let region = ddr.allocate(MAX_DESCRIPTOR_BYTES_DEFAULT + 16).unwrap();
        DmaDescriptor::new(
            region,
            MAX_DESCRIPTOR_BYTES_DEFAULT + 16,
            0,
            len,
            ChannelDirection::Mm2s,
            MAX_DESCRIPTOR_BYTES_DEFAULT,
        )
        .unwrap()
    }

    #[test]
    fn descriptor_at_limit_accepted_and_over_limit_rejected() {
        let mut ddr = DdrMemory::new();
        let region = ddr.allocate(MAX_DESCRIPTOR_BYTES_DEFAULT + 16).unwrap();
        let at_limit = DmaDescriptor::new(
            region,
            MAX_DESCRIPTOR_BYTES_DEFAULT + 16,
            0,
            MAX_DESCRIPTOR_BYTES_DEFAULT,
            ChannelDirection::Mm2s,
            MAX_DESCRIPTOR_BYTES_DEFAULT,
        );
        assert!(at_limit.is_ok());
        let over = DmaDescriptor::new(
            region,
            MAX_DESCRIPTOR_BYTES_DEFAULT + 16,
            0,
            MAX_DESCRIPTOR_BYTES_DEFAULT + 1,
            ChannelDirection::Mm2s,
            MAX_DESCRIPTOR_BYTES_DEFAULT,
        );
        assert_eq!(
            over.unwrap_err(),
            DmaError::InvalidDescriptorLength {
                length: 8_388_609,
                max: 8_388_608,
            }
        );
    }

    #[test]
    fn zero_length_descriptor_rejected() {
        let mut ddr = DdrMemory::new();
        let region = ddr.allocate(16).unwrap();
        let err = DmaDescriptor::new(
            region,
            16,
            0,
            0,
            ChannelDirection::Mm2s,
            MAX_DESCRIPTOR_BYTES_DEFAULT,
        )
        .unwrap_err();
        assert!(matches!(err, DmaError::InvalidDescriptorLength { .. }));
    }

    #[test]
    fn descriptor_extent_must_fit_region() {
        let mut ddr = DdrMemory::new();
        let region = ddr.allocate(100).unwrap();
        let err = DmaDescriptor::new(
            region,
            100,
            64,
            64,
            ChannelDirection::Mm2s,
            MAX_DESCRIPTOR_BYTES_DEFAULT,
        )
        .unwrap_err();
        assert!(matches!(err, DmaError::DescriptorOutOfRegion { .. }));
    }

    #[test]
    fn chain_rejects_empty_and_mixed_directions() {
        assert_eq!(
            DescriptorChain::new(vec![], CompletionPolicy::OnChainEnd).unwrap_err(),
            DmaError::EmptyChain
        );
        let mut ddr = DdrMemory::new();
        let region = ddr.allocate(64).unwrap();
        let a = DmaDescriptor::new(
            region,
            64,
            0,
            8,
            ChannelDirection::Mm2s,
            MAX_DESCRIPTOR_BYTES_DEFAULT,
        )
        .unwrap();
        let b = DmaDescriptor::new(
            region,
            64,
            8,
            8,
            ChannelDirection::S2mm,
            MAX_DESCRIPTOR_BYTES_DEFAULT,
        )
        .unwrap();
        assert_eq!(
            DescriptorChain::new(vec![a, b], CompletionPolicy::OnChainEnd).unwrap_err(),
            DmaError::MixedDirections
        );
    }

    #[test]
    fn channel_walks_idle_fetch_transfer_done() {
        let mut ch = DmaChannel::new(ChannelDirection::Mm2s);
        let chain =
            DescriptorChain::new(vec![desc(8), desc(8)], CompletionPolicy::OnChainEnd).unwrap();
        ch.submit_chain(chain).unwrap();
        assert_eq!(ch.state(), ChannelState::FetchingDescriptor);
        ch.fetch_complete();
        assert_eq!(ch.state(), ChannelState::Transferring);
        ch.add_bytes_moved(8);
        assert!(!ch.descriptor_complete());
        assert_eq!(ch.state(), ChannelState::FetchingDescriptor);
        ch.fetch_complete();
        ch.add_bytes_moved(8);
        assert!(ch.descriptor_complete());
        assert_eq!(ch.state(), ChannelState::Done);
        assert_eq!(ch.bytes_moved(), 16);
    }

    #[test]
    fn busy_channel_rejects_second_chain() {
        let mut ch = DmaChannel::new(ChannelDirection::Mm2s);
        let chain = DescriptorChain::new(vec![desc(8)], CompletionPolicy::OnChainEnd).unwrap();
        ch.submit_chain(chain.clone()).unwrap();
        assert_eq!(ch.submit_chain(chain).unwrap_err(), DmaError::ChannelBusy);
    }

    #[test]
    fn interrupt_raise_coalesces_while_pending() {
        let mut line = InterruptLine::new();
        let first = line.raise(SimTime(100), 2000);
        assert_eq!(first, Some(SimTime(2100)));
        // 1 ns later, still pending: coalesced.
        assert_eq!(line.raise(SimTime(101), 2000), None);
        line.handler_entered();
        assert_eq!(line.handler_entries(), 1);
        assert_eq!(line.raises(), 2);
        // After the handler runs the next raise schedules again.
        assert_eq!(line.raise(SimTime(3000), 2000), Some(SimTime(5000)));
    }
}
