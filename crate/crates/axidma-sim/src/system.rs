//! The simulation proper: one DDR arbiter, two DMA channels, two stream
//! FIFOs, one PL device and one host driver session wired to a single
//! deterministic event queue.
//!
//! Data-path timing model. MM2S reads DDR in `burst_bytes` grants (at most
//! two bursts read ahead of the stream) and delivers bytes into the ToPL
//! FIFO paced by the cumulative stream clock, so an unobstructed descriptor
//! of `L` bytes finishes exactly `stream.time_ns(L)` after its data phase
//! starts. The device consumes the ToPL FIFO and produces into the ToPS FIFO
//! across its own stream hop. S2MM chases ToPS availability: it pops a chunk
//! the moment it is present and lands it in DDR one write-grant later, so RX
//! completion trails the last produced byte by one DDR write burst.

use thiserror::Error;

use crate::config::SimConfig;
use crate::device::{mac_time_ns, CnnAcceleratorState, CnnLayerSpec, DeviceError};
use crate::dma::{
    ChannelDirection, ChannelState, CompletionPolicy, DescriptorChain, DmaChannel, DmaDescriptor,
    DmaError, InterruptLine,
};
use crate::driver::{BufferScheme, DriverError, DriverKind, PartitionMode, TransferReport};
use crate::memory::{
    DdrArbiter, DdrMemory, FifoDirection, GrantKind, GrantOwner, GrantRecord, GrantRequest,
    MemError, Rate, RegionHandle, StreamFifo,
};
use crate::sim::{
    EventKind, EventQueue, EventTrace, RunOutcome, SimEvent, SimTime, Target, WatchdogSpec,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Dma(#[from] DmaError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Memory(#[from] MemError),
}

/// Which PL workload sits behind the stream FIFOs.
#[derive(Debug, Clone, Copy)]
pub enum DeviceSpec {
    /// Echo MM2S back into S2MM at the stream rate.
    Loopback,
    /// Echo at a reduced consume rate, in thousandths of a byte per ns.
    ThrottledLoopback { milli_bytes_per_ns: u64 },
    /// One CNN layer of the streamed accelerator.
    CnnLayer(CnnLayerSpec),
}

/// One host-driven transfer session: optionally arm RX, send the payload,
/// await the device's response.
#[derive(Debug, Clone)]
pub struct SessionSpec {
    pub driver: DriverKind,
    pub scheme: BufferScheme,
    pub mode: PartitionMode,
    pub tx_payload: Vec<u8>,
    /// Bytes expected back from the device; 0 disables the RX side.
    pub rx_bytes: u64,
    /// Post the RX descriptor before starting TX. The scheduled driver
    /// always does this itself; the polling driver trusts the application.
    pub arm_rx_upfront: bool,
    /// Kernel-chain completion interrupt policy.
    pub completion: CompletionPolicy,
    pub capture_rx: bool,
    pub trace: bool,
}

impl SessionSpec {
    pub fn new(driver: DriverKind, scheme: BufferScheme, mode: PartitionMode, payload: Vec<u8>) -> Self {
        let rx_bytes = payload.len() as u64;
        SessionSpec {
            driver,
            scheme,
            mode,
            tx_payload: payload,
            rx_bytes,
            arm_rx_upfront: true,
            completion: CompletionPolicy::OnChainEnd,
            capture_rx: false,
            trace: false,
        }
    }
}

/// Everything measured from one session.
#[derive(Debug)]
pub struct SessionResult {
    pub outcome: RunOutcome,
    pub tx: TransferReport,
    pub rx: Option<TransferReport>,
    pub total_ns: u64,
    pub cpu_busy_ns: u64,
    pub rx_data: Option<Vec<u8>>,
    pub trace: Option<String>,
    pub grant_log: Vec<GrantRecord>,
    pub fifo_conservation_ok: bool,
    /// Total payload bytes that moved anywhere in the pipe.
    pub bytes_progressed: u64,
}

// ---------------------------------------------------------------------------
// MM2S engine
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub(crate) struct Mm2sEngine {
    pub channel: DmaChannel,
    pub line: InterruptLine,
    // Current descriptor view.
    region: Option<RegionHandle>,
    offset: u64,
    len: u64,
    granted: u64,
    pushed: u64,
    stream_ref_ns: u64,
    grant_outstanding: bool,
    chunk_upto: Option<u64>,
    waiting_space: bool,
    pub(crate) done_at: Option<SimTime>,
}

impl Mm2sEngine {
    fn new() -> Self {
        Mm2sEngine {
            channel: DmaChannel::new(ChannelDirection::Mm2s),
            line: InterruptLine::new(),
            region: None,
            offset: 0,
            len: 0,
            granted: 0,
            pushed: 0,
            stream_ref_ns: 0,
            grant_outstanding: false,
            chunk_upto: None,
            waiting_space: false,
            done_at: None,
        }
    }

    fn load_descriptor(&mut self, desc: &DmaDescriptor, now: SimTime) {
        self.region = Some(desc.region);
        self.offset = desc.offset;
        self.len = desc.length;
        self.granted = 0;
        self.pushed = 0;
        self.stream_ref_ns = now.ns();
        self.waiting_space = false;
    }
}

// ---------------------------------------------------------------------------
// S2MM engine
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub(crate) struct S2mmEngine {
    pub channel: DmaChannel,
    pub line: InterruptLine,
    region: Option<RegionHandle>,
    offset: u64,
    len: u64,
    landed: u64,
    inflight: Option<Vec<u8>>,
    pub(crate) done_at: Option<SimTime>,
}

impl S2mmEngine {
    fn new() -> Self {
        S2mmEngine {
            channel: DmaChannel::new(ChannelDirection::S2mm),
            line: InterruptLine::new(),
            region: None,
            offset: 0,
            len: 0,
            landed: 0,
            inflight: None,
            done_at: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Device engines
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct LoopbackEngine {
    rate: Rate,
    moved: u64,
    ref_ns: u64,
    started: bool,
    inflight: Option<u64>,
}

#[derive(Debug)]
struct CnnEngine {
    state: CnnAcceleratorState,
    // Ingest side (host TX stream into the accelerator).
    consumed: u64,
    in_ref_ns: u64,
    in_started: bool,
    in_inflight: Option<u64>,
    // Emit side (accelerator output back to the host).
    emit_total_ns: u64,
    emit_ref_ns: u64,
    emit_started: bool,
    emit_inflight: Option<u64>,
    input_done_at: Option<u64>,
    content_counter: u64,
}

#[derive(Debug)]
enum DeviceEngine {
    Loopback(LoopbackEngine),
    Cnn(CnnEngine),
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

pub struct Simulation {
    pub(crate) cfg: SimConfig,
    pub(crate) queue: EventQueue,
    pub(crate) ddr: DdrMemory,
    pub(crate) arbiter: DdrArbiter,
    pub(crate) tx_fifo: StreamFifo,
    pub(crate) rx_fifo: StreamFifo,
    pub(crate) mm2s: Mm2sEngine,
    pub(crate) s2mm: S2mmEngine,
    device: DeviceEngine,
    pub(crate) session: Option<crate::session::DriverSession>,
    trace: EventTrace,
    watchdog: WatchdogSpec,
    // Rates resolved once from the config.
    pub(crate) ddr_rate: Rate,
    pub(crate) stream_rate: Rate,
    pub(crate) memcpy_rate: Rate,
    // Liveness bookkeeping.
    bytes_progressed: u64,
    progress_marker: u64,
    idle_poll_streak: u64,
    pub(crate) cpu_busy_ns: u64,
    fatal: Option<EngineError>,
}

impl Simulation {
    pub fn new(cfg: &SimConfig, device: DeviceSpec) -> Simulation {
        let device = match device {
            DeviceSpec::Loopback => DeviceEngine::Loopback(LoopbackEngine {
                rate: cfg.stream_rate(),
                moved: 0,
                ref_ns: 0,
                started: false,
                inflight: None,
            }),
            DeviceSpec::ThrottledLoopback { milli_bytes_per_ns } => {
                DeviceEngine::Loopback(LoopbackEngine {
                    rate: Rate::from_milli_bytes_per_ns(milli_bytes_per_ns),
                    moved: 0,
                    ref_ns: 0,
                    started: false,
                    inflight: None,
                })
            }
            DeviceSpec::CnnLayer(layer) => {
                let state = CnnAcceleratorState::new(layer, cfg.rows_latency);
                let stream = cfg.stream_rate();
                let emit_total_ns = stream
                    .time_ns(layer.output_bytes())
                    .max(mac_time_ns(
                        layer.macs_total(),
                        cfg.mac_count,
                        cfg.stream_clock_mhz,
                        cfg.mac_utilization_permille,
                    ));
                DeviceEngine::Cnn(CnnEngine {
                    state,
                    consumed: 0,
                    in_ref_ns: 0,
                    in_started: false,
                    in_inflight: None,
                    emit_total_ns,
                    emit_ref_ns: 0,
                    emit_started: false,
                    emit_inflight: None,
                    input_done_at: None,
                    content_counter: 0,
                })
            }
        };
        Simulation {
            cfg: *cfg,
            queue: EventQueue::new(),
            ddr: DdrMemory::new(),
            arbiter: DdrArbiter::new(cfg.arbiter_max_grants),
            tx_fifo: StreamFifo::new(cfg.tx_fifo_bytes, FifoDirection::ToPl),
            rx_fifo: StreamFifo::new(cfg.rx_fifo_bytes, FifoDirection::ToPs),
            mm2s: Mm2sEngine::new(),
            s2mm: S2mmEngine::new(),
            device,
            session: None,
            trace: EventTrace::default(),
            watchdog: WatchdogSpec::from_seconds(cfg.watchdog_s),
            ddr_rate: cfg.ddr_rate(),
            stream_rate: cfg.stream_rate(),
            memcpy_rate: cfg.memcpy_rate(),
            bytes_progressed: 0,
            progress_marker: 0,
            idle_poll_streak: 0,
            cpu_busy_ns: 0,
            fatal: None,
        }
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub(crate) fn fail(&mut self, err: EngineError) {
        if self.fatal.is_none() {
            self.fatal = Some(err);
        }
    }

    pub(crate) fn schedule(&mut self, fire_at: SimTime, target: Target, kind: EventKind, payload: u64) {
        self.queue
            .schedule(SimEvent {
                fire_at,
                target,
                kind,
                payload,
            })
            .expect("engine scheduled an event in the past");
    }

    /// Zero-delay marker event; keeps externally meaningful steps visible in
    /// the trace without carrying behavior.
    pub(crate) fn marker(&mut self, target: Target, kind: EventKind, payload: u64) {
        if self.trace.is_enabled() {
            let now = self.now();
            self.schedule(now, target, kind, payload);
        }
    }

    pub(crate) fn record_progress(&mut self, bytes: u64) {
        self.bytes_progressed += bytes;
    }

    /// Run with no registered work: completes immediately.
    pub fn run_idle(cfg: &SimConfig) -> (RunOutcome, SimTime) {
        let mut sim = Simulation::new(cfg, DeviceSpec::Loopback);
        let outcome = sim.run_loop();
        (outcome, sim.now())
    }

    /// Set up and run one transfer session to completion (or deadlock or
    /// watchdog expiry).
    pub fn run_session(cfg: &SimConfig, device: DeviceSpec, spec: &SessionSpec) -> Result<SessionResult, EngineError> {
        let mut sim = Simulation::new(cfg, device);
        if spec.trace {
            sim.trace = EventTrace::enabled();
        }
        sim.start_session(spec)?;
        let outcome = sim.run_loop();
        if let Some(err) = sim.fatal.take() {
            return Err(err);
        }
        Ok(sim.finish(outcome, spec))
    }

    fn finish(mut self, outcome: RunOutcome, spec: &SessionSpec) -> SessionResult {
        let session = self.session.take().expect("session was started");
        let (tx, rx) = session.reports();
        let total_ns = self.now().ns();
        let rx_data = if spec.capture_rx && spec.rx_bytes > 0 {
            session
                .rx_region()
                .map(|r| self.ddr.read(r, 0, spec.rx_bytes).to_vec())
        } else {
            None
        };
        let trace = if self.trace.is_enabled() {
            Some(self.trace.into_string())
        } else {
            None
        };
        SessionResult {
            outcome,
            tx,
            rx,
            total_ns,
            cpu_busy_ns: self.cpu_busy_ns,
            rx_data,
            trace,
            grant_log: self.arbiter.grant_log().to_vec(),
            fifo_conservation_ok: self.tx_fifo.conserves_bytes() && self.rx_fifo.conserves_bytes(),
            bytes_progressed: self.bytes_progressed,
        }
    }

    // -- main loop ----------------------------------------------------------

    pub(crate) fn run_loop(&mut self) -> RunOutcome {
        loop {
            if self.fatal.is_some() {
                return RunOutcome::Deadlock; // caller surfaces the error instead
            }
            if self.session_done() {
                return RunOutcome::Completed;
            }
            let event = match self.queue.pop() {
                Some(e) => e,
                None => {
                    return if self.session.is_none() {
                        RunOutcome::Completed
                    } else {
                        // Outstanding work but nothing schedulable: stuck.
                        RunOutcome::Deadlock
                    };
                }
            };
            if event.fire_at > self.watchdog.limit {
                return RunOutcome::WatchdogExpired;
            }
            self.trace.record(&event);
            if matches!(event.kind, EventKind::PollTick | EventKind::SchedQuantum) {
                if self.bytes_progressed == self.progress_marker {
                    self.idle_poll_streak += 1;
                    if self.idle_poll_streak >= self.cfg.deadlock_poll_window {
                        return RunOutcome::Deadlock;
                    }
                } else {
                    self.progress_marker = self.bytes_progressed;
                    self.idle_poll_streak = 0;
                }
            }
            self.dispatch(event);
        }
    }

    fn session_done(&self) -> bool {
        self.session.as_ref().map(|s| s.is_done()).unwrap_or(false)
    }

    fn dispatch(&mut self, event: SimEvent) {
        match (event.target, event.kind) {
            (Target::Arbiter, EventKind::GrantEnd) => self.on_grant_end(),
            (Target::Mm2s, EventKind::FetchDone) => self.mm2s_fetch_done(),
            (Target::Mm2s, EventKind::ChunkDue) => self.mm2s_chunk_due(event.payload),
            (Target::Device, EventKind::DeviceStep) => self.device_step_due(event.payload),
            (Target::S2mm, EventKind::FetchDone) => self.s2mm_fetch_done(),
            (Target::Driver, _) => self.session_event(event),
            // Trace-only markers.
            (_, EventKind::DescriptorComplete)
            | (_, EventKind::FifoSpaceAvailable)
            | (_, EventKind::DeviceOutputReady)
            | (_, EventKind::IrqRaised) => {}
            other => panic!("unhandled event {other:?}"),
        }
    }

    // -- arbiter ------------------------------------------------------------

    pub(crate) fn ddr_request(&mut self, req: GrantRequest) {
        let now = self.now();
        if let Some(end) = self.arbiter.request(now, req) {
            self.schedule(end, Target::Arbiter, EventKind::GrantEnd, 0);
        }
    }

    fn on_grant_end(&mut self) {
        let now = self.now();
        let (done, next) = self.arbiter.grant_complete(now);
        if let Some((_req, end)) = next {
            self.schedule(end, Target::Arbiter, EventKind::GrantEnd, 0);
        }
        match done.owner {
            GrantOwner::Mm2s => self.mm2s_grant_done(done.bytes),
            GrantOwner::S2mm => self.s2mm_grant_done(done.bytes),
            GrantOwner::CpuCopy => self.session_copy_grant_done(done.bytes),
        }
    }

    // -- MM2S data path -----------------------------------------------------

    /// Begin a chain on the TX channel; the driver session has already paid
    /// its software costs.
    pub(crate) fn mm2s_submit(&mut self, chain: DescriptorChain) -> Result<(), DmaError> {
        self.mm2s.channel.submit_chain(chain)?;
        self.mm2s.done_at = None;
        let fetch_at = self.now().plus(self.cfg.sg_descriptor_fetch_ns);
        self.schedule(fetch_at, Target::Mm2s, EventKind::FetchDone, 0);
        Ok(())
    }

    fn mm2s_fetch_done(&mut self) {
        self.mm2s.channel.fetch_complete();
        let idx = self.mm2s.channel.current_descriptor();
        let desc = self.mm2s.channel.chain().expect("fetching requires a chain").descriptors()[idx];
        let now = self.now();
        self.mm2s.load_descriptor(&desc, now);
        self.mm2s_request_grant();
    }

    fn mm2s_request_grant(&mut self) {
        let e = &self.mm2s;
        if e.grant_outstanding || e.granted >= e.len {
            return;
        }
        // Read at most two bursts ahead of the stream.
        let staged = e.granted - e.pushed;
        let next = (e.len - e.granted).min(self.cfg.burst_bytes);
        if staged + next > 2 * self.cfg.burst_bytes {
            return;
        }
        let duration_ns = self.ddr_rate.time_ns(next);
        self.mm2s.grant_outstanding = true;
        self.ddr_request(GrantRequest {
            owner: GrantOwner::Mm2s,
            kind: GrantKind::Read,
            bytes: next,
            duration_ns,
        });
    }

    fn mm2s_grant_done(&mut self, bytes: u64) {
        self.mm2s.grant_outstanding = false;
        self.mm2s.granted += bytes;
        self.mm2s_schedule_chunk();
        self.mm2s_request_grant();
    }

    /// Schedule the arrival of the next paced chunk into the ToPL FIFO.
    fn mm2s_schedule_chunk(&mut self) {
        let e = &self.mm2s;
        if e.chunk_upto.is_some() || e.waiting_space || e.granted == e.pushed {
            return;
        }
        let upto = e.granted.min(e.pushed + self.cfg.burst_bytes);
        let due_ns = (e.stream_ref_ns + self.stream_rate.time_ns(upto)).max(self.now().ns());
        self.mm2s.chunk_upto = Some(upto);
        self.schedule(SimTime(due_ns), Target::Mm2s, EventKind::ChunkDue, upto);
    }

    fn mm2s_chunk_due(&mut self, upto: u64) {
        debug_assert_eq!(self.mm2s.chunk_upto, Some(upto));
        self.mm2s.chunk_upto = None;
        let want = upto - self.mm2s.pushed;
        let space = self.tx_fifo.free_space();
        let take = want.min(space);
        if take > 0 {
            let region = self.mm2s.region.expect("transferring requires a region");
            let start = self.mm2s.offset + self.mm2s.pushed;
            let data = self.ddr.read(region, start, take).to_vec();
            let accepted = self.tx_fifo.push(&data);
            debug_assert_eq!(accepted, take);
            self.mm2s.pushed += take;
            self.mm2s.channel.add_bytes_moved(take);
            self.record_progress(take);
            self.device_wake();
        }
        if take < want {
            // Stalled on FIFO space; the device wake path resumes us.
            self.mm2s.waiting_space = true;
            return;
        }
        if self.mm2s.pushed == self.mm2s.len {
            self.mm2s_descriptor_complete();
        } else {
            self.mm2s_schedule_chunk();
            self.mm2s_request_grant();
        }
    }

    /// Device consumed ToPL bytes; resume a stalled producer.
    fn mm2s_space_available(&mut self) {
        if !self.mm2s.waiting_space {
            return;
        }
        self.mm2s.waiting_space = false;
        self.marker(Target::Mm2s, EventKind::FifoSpaceAvailable, 0);
        // The stream stalled; restart pacing from here.
        let now = self.now().ns();
        let elapsed = self.stream_rate.time_ns(self.mm2s.pushed);
        self.mm2s.stream_ref_ns = self.mm2s.stream_ref_ns.max(now.saturating_sub(elapsed));
        self.mm2s_schedule_chunk();
        self.mm2s_request_grant();
    }

    fn mm2s_descriptor_complete(&mut self) {
        self.marker(Target::Mm2s, EventKind::DescriptorComplete, self.mm2s.channel.current_descriptor() as u64);
        let chain_done = self.mm2s.channel.descriptor_complete();
        let policy = self
            .mm2s
            .channel
            .chain()
            .map(|c| c.completion)
            .unwrap_or_default();
        let raise = match policy {
            CompletionPolicy::OnEachDescriptor => true,
            CompletionPolicy::OnChainEnd => chain_done,
        };
        if raise {
            self.raise_irq_mm2s();
        }
        if chain_done {
            self.mm2s.done_at = Some(self.now());
            self.session_tx_hw_complete();
        } else {
            let fetch_at = self.now().plus(self.cfg.sg_descriptor_fetch_ns);
            self.schedule(fetch_at, Target::Mm2s, EventKind::FetchDone, 0);
        }
    }

    fn raise_irq_mm2s(&mut self) {
        // User-level drivers mask the line and poll channel state instead.
        if !self.session_uses_interrupts() {
            return;
        }
        let now = self.now();
        if let Some(entry) = self.mm2s.line.raise(now, self.cfg.irq_latency_ns) {
            self.marker(Target::Mm2s, EventKind::IrqRaised, 0);
            self.schedule(entry, Target::Driver, EventKind::IrqHandlerEntry, 0);
        }
    }

    fn raise_irq_s2mm(&mut self) {
        if !self.session_uses_interrupts() {
            return;
        }
        let now = self.now();
        if let Some(entry) = self.s2mm.line.raise(now, self.cfg.irq_latency_ns) {
            self.marker(Target::S2mm, EventKind::IrqRaised, 1);
            self.schedule(entry, Target::Driver, EventKind::IrqHandlerEntry, 1);
        }
    }

    fn session_uses_interrupts(&self) -> bool {
        self.session
            .as_ref()
            .map(|s| s.kind() == DriverKind::KernelInterrupt)
            .unwrap_or(false)
    }

    // -- S2MM data path -----------------------------------------------------

    pub(crate) fn s2mm_submit(&mut self, chain: DescriptorChain) -> Result<(), DmaError> {
        self.s2mm.channel.submit_chain(chain)?;
        let fetch_at = self.now().plus(self.cfg.sg_descriptor_fetch_ns);
        self.schedule(fetch_at, Target::S2mm, EventKind::FetchDone, 0);
        Ok(())
    }

    fn s2mm_fetch_done(&mut self) {
        self.s2mm.channel.fetch_complete();
        let idx = self.s2mm.channel.current_descriptor();
        let desc = self.s2mm.channel.chain().expect("fetching requires a chain").descriptors()[idx];
        self.s2mm.region = Some(desc.region);
        self.s2mm.offset = desc.offset;
        self.s2mm.len = desc.length;
        self.s2mm.landed = 0;
        self.s2mm_try_write();
    }

    /// Move available ToPS bytes toward DDR: pop now, land one grant later.
    fn s2mm_try_write(&mut self) {
        if self.s2mm.channel.state() != ChannelState::Transferring || self.s2mm.inflight.is_some() {
            return;
        }
        let remaining = self.s2mm.len - self.s2mm.landed;
        let take = self
            .rx_fifo
            .occupancy()
            .min(self.cfg.burst_bytes)
            .min(remaining);
        if take == 0 {
            return;
        }
        let data = self.rx_fifo.pop(take);
        debug_assert_eq!(data.len() as u64, take);
        self.s2mm.inflight = Some(data);
        let duration_ns = self.ddr_rate.time_ns(take);
        self.ddr_request(GrantRequest {
            owner: GrantOwner::S2mm,
            kind: GrantKind::Write,
            bytes: take,
            duration_ns,
        });
        // Popping freed ToPS space; the device may emit more.
        self.device_wake();
    }

    fn s2mm_grant_done(&mut self, bytes: u64) {
        let data = self.s2mm.inflight.take().expect("write grant without data");
        debug_assert_eq!(data.len() as u64, bytes);
        let region = self.s2mm.region.expect("transferring requires a region");
        let start = self.s2mm.offset + self.s2mm.landed;
        self.ddr.write(region, start, &data);
        self.s2mm.landed += bytes;
        self.s2mm.channel.add_bytes_moved(bytes);
        self.record_progress(bytes);
        if self.s2mm.landed == self.s2mm.len {
            self.marker(Target::S2mm, EventKind::DescriptorComplete, 0);
            let chain_done = self.s2mm.channel.descriptor_complete();
            debug_assert!(chain_done, "rx chains are single-descriptor");
            self.s2mm.done_at = Some(self.now());
            self.raise_irq_s2mm();
            self.session_rx_hw_complete();
        } else {
            self.s2mm_try_write();
        }
    }

    // -- device -------------------------------------------------------------

    /// Something changed at a FIFO boundary; let the device make progress.
    pub(crate) fn device_wake(&mut self) {
        match &self.device {
            DeviceEngine::Loopback(_) => self.loopback_step(),
            DeviceEngine::Cnn(_) => {
                self.cnn_consume_step();
                self.cnn_emit_step();
            }
        }
    }

    fn device_step_due(&mut self, payload: u64) {
        match payload {
            0 => self.loopback_move_done(),
            1 => self.cnn_consume_done(),
            2 => self.cnn_emit_done(),
            _ => unreachable!("unknown device step"),
        }
    }

    fn loopback_step(&mut self) {
        let now = self.now().ns();
        let avail = self.tx_fifo.occupancy();
        let space = self.rx_fifo.free_space();
        let burst = self.cfg.burst_bytes;
        let dev = match &mut self.device {
            DeviceEngine::Loopback(d) => d,
            _ => return,
        };
        if dev.inflight.is_some() {
            return;
        }
        let move_bytes = avail.min(space).min(burst);
        if move_bytes == 0 {
            return;
        }
        if !dev.started {
            dev.started = true;
            dev.ref_ns = now;
        } else {
            let elapsed = dev.rate.time_ns(dev.moved);
            dev.ref_ns = dev.ref_ns.max(now.saturating_sub(elapsed));
        }
        let due = (dev.ref_ns + dev.rate.time_ns(dev.moved + move_bytes)).max(now);
        dev.inflight = Some(move_bytes);
        self.schedule(SimTime(due), Target::Device, EventKind::DeviceStep, 0);
    }

    fn loopback_move_done(&mut self) {
        let dev = match &mut self.device {
            DeviceEngine::Loopback(d) => d,
            _ => unreachable!(),
        };
        let move_bytes = dev.inflight.take().expect("no loopback move in flight");
        dev.moved += move_bytes;
        let data = self.tx_fifo.pop(move_bytes);
        debug_assert_eq!(data.len() as u64, move_bytes);
        let accepted = self.rx_fifo.push(&data);
        debug_assert_eq!(accepted, move_bytes);
        self.record_progress(move_bytes);
        self.marker(Target::Device, EventKind::DeviceOutputReady, move_bytes);
        self.mm2s_space_available();
        self.s2mm_try_write();
        self.loopback_step();
    }

    // CNN ingest: weights then feature-map rows, at the stream rate.
    fn cnn_consume_step(&mut self) {
        let now = self.now().ns();
        let avail = self.tx_fifo.occupancy();
        let burst = self.cfg.burst_bytes;
        let dev = match &mut self.device {
            DeviceEngine::Cnn(d) => d,
            _ => return,
        };
        if dev.in_inflight.is_some() || avail == 0 {
            return;
        }
        let expected = dev.state.layer.tx_bytes();
        let want = expected.saturating_sub(dev.consumed);
        if want == 0 {
            // Bytes beyond the layer protocol: surface the violation.
            self.fail(EngineError::Device(DeviceError::ProtocolViolation { expected }));
            return;
        }
        let dev = match &mut self.device {
            DeviceEngine::Cnn(d) => d,
            _ => unreachable!(),
        };
        let take = avail.min(burst).min(want);
        if !dev.in_started {
            dev.in_started = true;
            dev.in_ref_ns = now;
        } else {
            let elapsed = self.stream_rate.time_ns(dev.consumed);
            dev.in_ref_ns = dev.in_ref_ns.max(now.saturating_sub(elapsed));
        }
        let due = (dev.in_ref_ns + self.stream_rate.time_ns(dev.consumed + take)).max(now);
        dev.in_inflight = Some(take);
        self.schedule(SimTime(due), Target::Device, EventKind::DeviceStep, 1);
    }

    fn cnn_consume_done(&mut self) {
        let now_ns = self.now().ns();
        let dev = match &mut self.device {
            DeviceEngine::Cnn(d) => d,
            _ => unreachable!(),
        };
        let take = dev.in_inflight.take().expect("no cnn ingest in flight");
        let data = self.tx_fifo.pop(take);
        debug_assert_eq!(data.len() as u64, take);
        dev.consumed += take;
        let crossed = match dev.state.consume(take) {
            Ok(c) => c,
            Err(e) => {
                self.fail(EngineError::Device(e));
                return;
            }
        };
        if crossed {
            dev.emit_started = true;
            dev.emit_ref_ns = now_ns;
        }
        if dev.state.input_complete() {
            dev.input_done_at = Some(now_ns);
        }
        self.record_progress(take);
        self.mm2s_space_available();
        self.cnn_consume_step();
        self.cnn_emit_step();
    }

    // CNN emit: `output_bytes` paced uniformly over max(stream, MAC) time.
    fn cnn_emit_step(&mut self) {
        let now = self.now().ns();
        let space = self.rx_fifo.free_space();
        let burst = self.cfg.burst_bytes;
        let dev = match &mut self.device {
            DeviceEngine::Cnn(d) => d,
            _ => return,
        };
        if !dev.emit_started || dev.emit_inflight.is_some() {
            return;
        }
        let out_total = dev.state.layer.output_bytes();
        let emitted = dev.state.output_bytes_emitted;
        if emitted >= out_total {
            return;
        }
        let take = (out_total - emitted).min(burst).min(space);
        if take == 0 {
            return;
        }
        let is_final = emitted + take == out_total;
        if is_final && dev.input_done_at.is_none() {
            // The last output window needs the last input row.
            return;
        }
        let progress = emitted + take;
        let pace = ((dev.emit_total_ns as u128 * progress as u128)
            .div_ceil(out_total as u128)) as u64;
        let mut due = (dev.emit_ref_ns + pace).max(now);
        if is_final {
            due = due.max(dev.input_done_at.unwrap_or(0));
        }
        dev.emit_inflight = Some(take);
        self.schedule(SimTime(due), Target::Device, EventKind::DeviceStep, 2);
    }

    fn cnn_emit_done(&mut self) {
        let dev = match &mut self.device {
            DeviceEngine::Cnn(d) => d,
            _ => unreachable!(),
        };
        let take = dev.emit_inflight.take().expect("no cnn emit in flight");
        // Synthesized output bytes: deterministic, layer-local.
        let base = dev.content_counter;
        let data: Vec<u8> = (0..take)
            .map(|i| {
                let x = (base + i).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                (x >> 32) as u8
            })
            .collect();
        dev.content_counter += take;
        dev.state.emit(take);
        let accepted = self.rx_fifo.push(&data);
        debug_assert_eq!(accepted, take);
        self.record_progress(take);
        self.marker(Target::Device, EventKind::DeviceOutputReady, take);
        self.s2mm_try_write();
        self.cnn_emit_step();
    }

}
