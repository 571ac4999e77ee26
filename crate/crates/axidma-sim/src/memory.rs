//! DDR memory, the read/write arbiter, and the PL-side stream FIFOs.
//!
//! DDR is exclusive: it serves one read or one write grant at a time, with
//! read (the MM2S side) winning ties and a consecutive-grant cap so neither
//! direction starves. Buffers come in two flavours mirroring the two address
//! spaces of a hosted PSoC: physical regions the DMA controller can see, and
//! virtual buffers that either map a region directly or need a CPU copy.

use std::collections::VecDeque;

use thiserror::Error;

use crate::sim::SimTime;

/// Transfer rate expressed as an exact rational: moving `bytes` takes
/// `ceil(bytes * ns_num / byte_den)` nanoseconds. Keeping the ratio exact
/// (rather than a float) is what lets the closed-form oracle agree with the
/// simulator to the nanosecond.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rate {
    ns_num: u64,
    byte_den: u64,
}

impl Rate {
    pub fn from_ratio(ns_num: u64, byte_den: u64) -> Rate {
        assert!(ns_num > 0 && byte_den > 0, "rate must be positive");
        Rate { ns_num, byte_den }
    }

    /// Rate given in thousandths of a byte per nanosecond (so `4000` is
    /// 4 B/ns and `200` is 0.2 B/ns).
    pub fn from_milli_bytes_per_ns(milli: u64) -> Rate {
        Rate::from_ratio(1000, milli)
    }

    /// AXI-Stream payload rate for a `width_bits`-wide stream at `clock_mhz`.
    pub fn stream(width_bits: u64, clock_mhz: u64) -> Rate {
        Rate::from_ratio(8000, width_bits * clock_mhz)
    }

    /// Time to move `bytes` at this rate, rounded up to whole nanoseconds.
    pub fn time_ns(&self, bytes: u64) -> u64 {
        let num = bytes as u128 * self.ns_num as u128;
        let den = self.byte_den as u128;
        num.div_ceil(den) as u64
    }

    /// Bytes per nanosecond as a float, for reporting only.
    pub fn bytes_per_ns_f64(&self) -> f64 {
        self.byte_den as f64 / self.ns_num as f64
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemError {
    #[error("copy of {requested} bytes overruns a buffer of {available} bytes")]
    LengthOverrun { requested: u64, available: u64 },
    #[error("allocation of {requested} bytes exceeds remaining DDR capacity {remaining}")]
    CapacityExhausted { requested: u64, remaining: u64 },
}

/// Modeled DDR capacity (the platform carries 1 GB of DDR3).
pub const DDR_CAPACITY_BYTES: u64 = 1 << 30;

/// Handle to an allocated physical region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionHandle(usize);

/// A contiguous span of physical DDR owned by one component.
#[derive(Debug)]
pub struct PhysicalRegion {
    pub base: u64,
    contents: Vec<u8>,
}

impl PhysicalRegion {
    pub fn len(&self) -> u64 {
        self.contents.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.contents.is_empty()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.contents
    }
}

/// Physical DDR: a bump allocator over non-overlapping regions.
#[derive(Debug, Default)]
pub struct DdrMemory {
    regions: Vec<PhysicalRegion>,
    next_base: u64,
}

impl DdrMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn allocate(&mut self, len: u64) -> Result<RegionHandle, MemError> {
        let remaining = DDR_CAPACITY_BYTES - self.next_base;
        if len > remaining {
            return Err(MemError::CapacityExhausted {
                requested: len,
                remaining,
            });
        }
        let handle = RegionHandle(self.regions.len());
        self.regions.push(PhysicalRegion {
            base: self.next_base,
            contents: vec![0u8; len as usize],
        });
        self.next_base += len;
        Ok(handle)
    }

    pub fn region(&self, handle: RegionHandle) -> &PhysicalRegion {
        &self.regions[handle.0]
    }

    pub fn read(&self, handle: RegionHandle, offset: u64, len: u64) -> &[u8] {
        let r = &self.regions[handle.0].contents;
        &r[offset as usize..(offset + len) as usize]
    }

    pub fn write(&mut self, handle: RegionHandle, offset: u64, data: &[u8]) {
        let r = &mut self.regions[handle.0].contents;
        r[offset as usize..offset as usize + data.len()].copy_from_slice(data);
    }
}

/// Application-side buffer living in process virtual address space.
///
/// A mapped buffer is a view onto a physical region: reads and writes go
/// straight to the region, so the two are bit-identical by construction and
/// no copy is ever needed. An unmapped buffer holds its own bytes and needs
/// a `cpu_copy` to reach physical space.
#[derive(Debug)]
pub enum VirtualBuffer {
    Mapped(RegionHandle),
    Unmapped(Vec<u8>),
}

impl VirtualBuffer {
    pub fn len(&self, ddr: &DdrMemory) -> u64 {
        match self {
            VirtualBuffer::Mapped(h) => ddr.region(*h).len(),
            VirtualBuffer::Unmapped(v) => v.len() as u64,
        }
    }

    pub fn is_empty(&self, ddr: &DdrMemory) -> bool {
        self.len(ddr) == 0
    }

    /// Copy `bytes` from this buffer into a physical region. Returns the
    /// modeled duration; zero-length copies complete immediately.
    pub fn copy_to_region(
        &self,
        ddr: &mut DdrMemory,
        dst: RegionHandle,
        bytes: u64,
        memcpy_rate: Rate,
    ) -> Result<u64, MemError> {
        let src_len = self.len(ddr);
        let dst_len = ddr.region(dst).len();
        if bytes > src_len || bytes > dst_len {
            return Err(MemError::LengthOverrun {
                requested: bytes,
                available: src_len.min(dst_len),
            });
        }
        if bytes == 0 {
            return Ok(0);
        }
        let data: Vec<u8> = match self {
            VirtualBuffer::Mapped(h) => ddr.read(*h, 0, bytes).to_vec(),
            VirtualBuffer::Unmapped(v) => v[..bytes as usize].to_vec(),
        };
        ddr.write(dst, 0, &data);
        Ok(memcpy_rate.time_ns(bytes))
    }
}

/// Direction of a DDR access, also the grant-log record kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrantKind {
    Read,
    Write,
}

/// Who asked for the grant; routed back on completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrantOwner {
    Mm2s,
    S2mm,
    CpuCopy,
}

#[derive(Debug, Clone, Copy)]
pub struct GrantRequest {
    pub owner: GrantOwner,
    pub kind: GrantKind,
    pub bytes: u64,
    /// Occupancy of the grant in nanoseconds, computed by the requester
    /// (DMA bursts use the DDR rate, CPU copies the memcpy rate).
    pub duration_ns: u64,
}

/// One completed grant interval, for the exclusivity audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrantRecord {
    pub start: SimTime,
    pub end: SimTime,
    pub kind: GrantKind,
    pub owner: GrantOwner,
}

#[derive(Debug, Clone, Copy)]
enum ArbiterState {
    Idle,
    Busy(GrantRequest),
}

/// Exclusive DDR port arbiter.
///
/// Reads win ties against writes, but after `max_consecutive_grants`
/// back-to-back grants in one direction with the other direction waiting,
/// the other direction gets the next grant.
#[derive(Debug)]
pub struct DdrArbiter {
    state: ArbiterState,
    read_queue: VecDeque<GrantRequest>,
    write_queue: VecDeque<GrantRequest>,
    max_consecutive_grants: u32,
    run_kind: Option<GrantKind>,
    run_length: u32,
    grant_log: Vec<GrantRecord>,
    grant_start: SimTime,
}

impl DdrArbiter {
    pub fn new(max_consecutive_grants: u32) -> Self {
        DdrArbiter {
            state: ArbiterState::Idle,
            read_queue: VecDeque::new(),
            write_queue: VecDeque::new(),
            max_consecutive_grants,
            run_kind: None,
            run_length: 0,
            grant_log: Vec::new(),
            grant_start: SimTime::ZERO,
        }
    }

    pub fn is_idle(&self) -> bool {
        matches!(self.state, ArbiterState::Idle)
    }

    pub fn grant_log(&self) -> &[GrantRecord] {
        &self.grant_log
    }

    /// Submit a request. If the port is idle the grant starts immediately and
    /// its end time is returned; otherwise the request queues and a later
    /// `grant_complete` will start it.
    pub fn request(&mut self, now: SimTime, req: GrantRequest) -> Option<SimTime> {
        assert!(req.bytes > 0, "ddr requests move at least one byte");
        match self.state {
            ArbiterState::Idle => Some(self.start_grant(now, req)),
            ArbiterState::Busy(_) => {
                match req.kind {
                    GrantKind::Read => self.read_queue.push_back(req),
                    GrantKind::Write => self.write_queue.push_back(req),
                }
                None
            }
        }
    }

    /// Finish the in-flight grant: log it, return it to its owner, and start
    /// the next queued grant if any (returning `(next_request, end_time)`).
    pub fn grant_complete(
        &mut self,
        now: SimTime,
    ) -> (GrantRequest, Option<(GrantRequest, SimTime)>) {
        let finished = match self.state {
            ArbiterState::Busy(req) => req,
            ArbiterState::Idle => panic!("grant_complete with idle arbiter"),
        };
        self.grant_log.push(GrantRecord {
            start: self.grant_start,
            end: now,
            kind: finished.kind,
            owner: finished.owner,
        });
        self.state = ArbiterState::Idle;
        let next = self.pick_next().map(|req| {
            let end = self.start_grant(now, req);
            (req, end)
        });
        (finished, next)
    }

    fn start_grant(&mut self, now: SimTime, req: GrantRequest) -> SimTime {
        if self.run_kind == Some(req.kind) {
            self.run_length += 1;
        } else {
            self.run_kind = Some(req.kind);
            self.run_length = 1;
        }
        self.grant_start = now;
        self.state = ArbiterState::Busy(req);
        now.plus(req.duration_ns)
    }

    fn pick_next(&mut self) -> Option<GrantRequest> {
        let reads = !self.read_queue.is_empty();
        let writes = !self.write_queue.is_empty();
        let kind = match (reads, writes) {
            (false, false) => return None,
            (true, false) => GrantKind::Read,
            (false, true) => GrantKind::Write,
            (true, true) => {
                // Reads first, unless the current run already used up its
                // consecutive-grant budget while writes were waiting.
                match self.run_kind {
                    Some(k) if self.run_length >= self.max_consecutive_grants => match k {
                        GrantKind::Read => GrantKind::Write,
                        GrantKind::Write => GrantKind::Read,
                    },
                    _ => GrantKind::Read,
                }
            }
        };
        match kind {
            GrantKind::Read => self.read_queue.pop_front(),
            GrantKind::Write => self.write_queue.pop_front(),
        }
    }
}

/// Audit helper: true when no two differently-directed grants overlap in time.
pub fn grant_log_is_exclusive(log: &[GrantRecord]) -> bool {
    // Grants are logged in completion order with a single port, so adjacency
    // checking suffices; still compare all pairs to keep the audit independent
    // of that assumption.
    for (i, a) in log.iter().enumerate() {
        for b in &log[i + 1..] {
            if a.kind != b.kind && a.start < b.end && b.start < a.end {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FifoDirection {
    ToPl,
    ToPs,
}

/// Bounded byte FIFO at the stream boundary. Full or empty FIFOs block via
/// backpressure, never by erroring; partial pushes accept what fits.
#[derive(Debug)]
pub struct StreamFifo {
    capacity: u64,
    direction: FifoDirection,
    data: VecDeque<u8>,
    total_pushed: u64,
    total_popped: u64,
}

impl StreamFifo {
    pub fn new(capacity: u64, direction: FifoDirection) -> Self {
        assert!(capacity > 0, "fifo capacity must be at least one byte");
        StreamFifo {
            capacity,
            direction,
            data: VecDeque::new(),
            total_pushed: 0,
            total_popped: 0,
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn direction(&self) -> FifoDirection {
        self.direction
    }

    pub fn occupancy(&self) -> u64 {
        self.data.len() as u64
    }

    pub fn free_space(&self) -> u64 {
        self.capacity - self.occupancy()
    }

    pub fn total_pushed(&self) -> u64 {
        self.total_pushed
    }

    pub fn total_popped(&self) -> u64 {
        self.total_popped
    }

    /// Push up to `bytes.len()` bytes; returns how many were accepted.
    pub fn push(&mut self, bytes: &[u8]) -> u64 {
        let accept = (self.free_space() as usize).min(bytes.len());
        self.data.extend(&bytes[..accept]);
        self.total_pushed += accept as u64;
        accept as u64
    }

    /// Pop up to `count` bytes; returns what was available.
    pub fn pop(&mut self, count: u64) -> Vec<u8> {
        let take = (self.occupancy() as usize).min(count as usize);
        let out: Vec<u8> = self.data.drain(..take).collect();
        self.total_popped += out.len() as u64;
        out
    }

    /// Conservation check: everything pushed is either popped or still here.
    pub fn conserves_bytes(&self) -> bool {
        self.total_pushed == self.total_popped + self.occupancy()
    }
}
