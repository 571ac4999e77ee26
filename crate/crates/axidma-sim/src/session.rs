//! Driver-side orchestration of a transfer session.
//!
//! The session is an event-driven state machine sharing the simulation's
//! single software thread: at most one software activity (prepare, submit,
//! copy, poll loop, scheduler step) is in flight at any instant, and the
//! time it occupies the CPU is accounted into `cpu_busy_ns`.
//!
//! Per strategy:
//! - user-poll: per descriptor, prepare + submit, then spin on channel state
//!   every `poll_interval_ns`; the CPU is busy for the whole spin.
//! - user-scheduled: same descriptor flow, but completions are only observed
//!   at `sched_quantum_ns` boundaries and the receive side is always armed
//!   before a blocking send; the CPU is free between quanta.
//! - kernel-interrupt: per direction, request overhead + copy between
//!   virtual and physical space, one scatter-gather chain, sleep until the
//!   completion interrupt.

use crate::dma::{
    ChannelDirection, ChannelState, CompletionPolicy, DescriptorChain, DmaDescriptor,
};
use crate::driver::{partition, BufferScheme, DriverKind, TransferReport};
use crate::memory::{GrantKind, GrantOwner, GrantRequest, RegionHandle, VirtualBuffer};
use crate::sim::{EventKind, SimEvent, SimTime, Target};
use crate::system::{EngineError, SessionSpec, Simulation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    // User-level flow.
    ArmRxSubmit,
    Prepare,
    Submit,
    PrepareOverlap,
    WaitTx,
    ArmRxLate,
    WaitRx,
    // Kernel-level flow.
    KernelRxOverhead,
    KernelRxSetup,
    KernelTxOverhead,
    KernelTxCopy,
    KernelTxSetup,
    KernelSleepTx,
    KernelSleepRx,
    KernelCopyOut,
    Done,
}

#[derive(Debug)]
pub(crate) struct DriverSession {
    kind: DriverKind,
    scheme: BufferScheme,
    phase: Phase,
    // Transfer plan.
    tx_chunks: Vec<u64>,
    chunk_idx: usize,
    tx_region: RegionHandle,
    rx_region: Option<RegionHandle>,
    tx_len: u64,
    rx_len: u64,
    arm_rx_upfront: bool,
    completion: CompletionPolicy,
    // Kernel-side staging.
    kernel_tx_buffer: Option<VirtualBuffer>,
    copy_remaining: u64,
    copy_blocking: bool,
    // Waits.
    wait_started: SimTime,
    poll_epoch: u64,
    prepared_ahead: bool,
    rx_hw_done: bool,
    // Reports.
    tx_report: TransferReport,
    rx_report: TransferReport,
    rx_requested: bool,
}

impl DriverSession {
    pub(crate) fn kind(&self) -> DriverKind {
        self.kind
    }

    pub(crate) fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub(crate) fn rx_region(&self) -> Option<RegionHandle> {
        self.rx_region
    }

    pub(crate) fn reports(&self) -> (TransferReport, Option<TransferReport>) {
        let rx = if self.rx_requested {
            Some(self.rx_report)
        } else {
            None
        };
        (self.tx_report, rx)
    }

    fn current_chunk(&self) -> u64 {
        self.tx_chunks[self.chunk_idx]
    }

    fn chunk_offset(&self) -> u64 {
        self.tx_chunks[..self.chunk_idx].iter().sum()
    }
}

impl Simulation {
    /// Validate the session, allocate its buffers, and schedule its first
    /// software activity at t=0.
    pub(crate) fn start_session(&mut self, spec: &SessionSpec) -> Result<(), EngineError> {
        let tx_len = spec.tx_payload.len() as u64;
        let tx_chunks = partition(tx_len, spec.mode, self.cfg.max_descriptor_bytes)?;
        let tx_region = self.ddr.allocate(tx_len)?;
        let rx_region = if spec.rx_bytes > 0 {
            Some(self.ddr.allocate(spec.rx_bytes)?)
        } else {
            None
        };
        let kernel = spec.driver == DriverKind::KernelInterrupt;
        if !kernel {
            // mmap semantics: the application prepared the mapped region.
            // The kernel path keeps the payload in a cached virtual buffer
            // until the driver copies it.
            self.ddr.write(tx_region, 0, &spec.tx_payload);
        }
        // The scheduler arms RX itself so a blocking TX can always drain.
        let arm_rx_upfront = match spec.driver {
            DriverKind::UserPoll => spec.arm_rx_upfront,
            DriverKind::UserScheduled | DriverKind::KernelInterrupt => true,
        } && spec.rx_bytes > 0;
        let session = DriverSession {
            kind: spec.driver,
            scheme: spec.scheme,
            phase: Phase::Done, // set below
            tx_chunks,
            chunk_idx: 0,
            tx_region,
            rx_region,
            tx_len,
            rx_len: spec.rx_bytes,
            arm_rx_upfront,
            completion: spec.completion,
            kernel_tx_buffer: kernel.then(|| VirtualBuffer::Unmapped(spec.tx_payload.clone())),
            copy_remaining: 0,
            copy_blocking: false,
            wait_started: SimTime::ZERO,
            poll_epoch: 0,
            prepared_ahead: false,
            rx_hw_done: false,
            tx_report: TransferReport::default(),
            rx_report: TransferReport::default(),
            rx_requested: spec.rx_bytes > 0,
        };
        self.session = Some(session);
        match spec.driver {
            DriverKind::KernelInterrupt => {
                if spec.rx_bytes > 0 {
                    self.set_phase(Phase::KernelRxOverhead);
                    let d = self.cfg.kernel_request_overhead_ns;
                    self.software(d);
                } else {
                    self.begin_kernel_tx();
                }
            }
            DriverKind::UserPoll | DriverKind::UserScheduled => {
                if spec.driver == DriverKind::UserScheduled {
                    let q = self.cfg.sched_quantum_ns;
                    self.schedule(SimTime(q), Target::Driver, EventKind::SchedQuantum, 0);
                }
                if arm_rx_upfront {
                    self.set_phase(Phase::ArmRxSubmit);
                    let d = self.cost().submit_ns();
                    self.software(d);
                } else {
                    self.begin_user_tx();
                }
            }
        }
        Ok(())
    }

    fn cost(&self) -> crate::driver::CostModel {
        self.cfg.cost_model()
    }

    fn s(&mut self) -> &mut DriverSession {
        self.session.as_mut().expect("session not started")
    }

    fn set_phase(&mut self, phase: Phase) {
        self.s().phase = phase;
    }

    /// Occupy the CPU for `duration` and fire `SoftwareDone` at its end.
    fn software(&mut self, duration_ns: u64) {
        self.cpu_busy_ns += duration_ns;
        let at = self.now().plus(duration_ns);
        self.schedule(at, Target::Driver, EventKind::SoftwareDone, 0);
    }

    pub(crate) fn session_event(&mut self, event: SimEvent) {
        if self.session.is_none() {
            return;
        }
        match event.kind {
            EventKind::SoftwareDone => self.session_software_done(),
            EventKind::PollTick => self.session_poll_tick(event.payload),
            EventKind::SchedQuantum => self.session_quantum(),
            EventKind::IrqHandlerEntry => self.session_irq_handler(event.payload),
            EventKind::CompletionObserved => self.session_observation(event.payload),
            _ => {}
        }
    }

    // -- software step completions ------------------------------------------

    fn session_software_done(&mut self) {
        let phase = self.s().phase;
        match phase {
            Phase::ArmRxSubmit => {
                self.arm_rx_now();
                self.begin_user_tx();
            }
            Phase::Prepare => {
                self.set_phase(Phase::Submit);
                let d = self.cost().submit_ns();
                self.software(d);
            }
            Phase::Submit => {
                // Submission done: hardware starts on this chunk now.
                self.submit_current_chunk();
                let double = self.s().scheme == BufferScheme::Double;
                let has_next = self.s().chunk_idx + 1 < self.s().tx_chunks.len();
                if double && has_next {
                    // Prepare the next chunk while this one transfers.
                    self.set_phase(Phase::PrepareOverlap);
                    let next = {
                        let s = self.s();
                        s.tx_chunks[s.chunk_idx + 1]
                    };
                    let d = self.cost().prepare_ns(next);
                    self.software(d);
                } else {
                    self.enter_wait_tx();
                }
            }
            Phase::PrepareOverlap => {
                self.s().prepared_ahead = true;
                self.enter_wait_tx();
            }
            Phase::ArmRxLate => {
                self.arm_rx_now();
                self.enter_wait_rx();
            }
            Phase::KernelRxOverhead => {
                self.set_phase(Phase::KernelRxSetup);
                let d = self.cfg.dma_setup_ns;
                self.software(d);
            }
            Phase::KernelRxSetup => {
                self.arm_rx_now();
                self.begin_kernel_tx();
            }
            Phase::KernelTxOverhead => {
                self.begin_kernel_copy();
            }
            Phase::KernelTxSetup => {
                self.submit_kernel_chain();
                self.set_phase(Phase::KernelSleepTx);
            }
            _ => panic!("unexpected SoftwareDone in phase {phase:?}"),
        }
    }

    // -- user-level flow ------------------------------------------------------

    fn begin_user_tx(&mut self) {
        let now = self.now();
        self.s().tx_report.t_submit = now;
        self.set_phase(Phase::Prepare);
        let b = self.s().current_chunk();
        let d = self.cost().prepare_ns(b);
        self.software(d);
    }

    fn arm_rx_now(&mut self) {
        let region = self.s().rx_region.expect("rx arm without a region");
        let len = self.s().rx_len;
        let region_len = self.ddr.region(region).len();
        let desc = DmaDescriptor::new(
            region,
            region_len,
            0,
            len,
            ChannelDirection::S2mm,
            self.cfg.max_descriptor_bytes,
        )
        .expect("rx descriptor within limits");
        let chain = DescriptorChain::new(vec![desc], CompletionPolicy::OnChainEnd)
            .expect("single descriptor chain");
        self.s2mm_submit(chain).expect("rx channel idle");
        let s = self.s();
        s.rx_report.bytes = len;
        s.rx_report.descriptors_used = 1;
    }

    fn submit_current_chunk(&mut self) {
        let region = self.s().tx_region;
        let region_len = self.ddr.region(region).len();
        let offset = self.s().chunk_offset();
        let len = self.s().current_chunk();
        let desc = DmaDescriptor::new(
            region,
            region_len,
            offset,
            len,
            ChannelDirection::Mm2s,
            self.cfg.max_descriptor_bytes,
        )
        .expect("tx chunk within limits");
        let chain = DescriptorChain::new(vec![desc], CompletionPolicy::OnChainEnd)
            .expect("single descriptor chain");
        self.mm2s_submit(chain).expect("tx channel idle");
        self.s().tx_report.descriptors_used += 1;
        self.s().prepared_ahead = false;
    }

    /// Begin waiting on the TX channel. If it already completed, the entry
    /// status check observes it immediately; otherwise the completion
    /// notification from the data path schedules the exactly quantized
    /// observation, and recurring probe ticks keep liveness detection fed.
    fn enter_wait_tx(&mut self) {
        let now = self.now();
        {
            let s = self.s();
            s.phase = Phase::WaitTx;
            s.wait_started = now;
            s.poll_epoch += 1;
        }
        if self.mm2s.channel.state() == ChannelState::Done {
            let done_at = self.mm2s.done_at.expect("done channels record when");
            let (at, checks) = self.quantized_observe(now, done_at);
            self.s().tx_report.poll_ticks_consumed += checks;
            self.schedule(at, Target::Driver, EventKind::CompletionObserved, 0);
        } else if self.s().kind == DriverKind::UserPoll {
            self.schedule_poll_tick();
        }
    }

    fn enter_wait_rx(&mut self) {
        let now = self.now();
        {
            let s = self.s();
            s.phase = Phase::WaitRx;
            s.wait_started = now;
            s.poll_epoch += 1;
        }
        if self.s2mm.channel.state() == ChannelState::Done {
            let done_at = self.s2mm.done_at.expect("done channels record when");
            let (at, checks) = self.quantized_observe(now, done_at);
            self.s().rx_report.poll_ticks_consumed += checks;
            self.schedule(at, Target::Driver, EventKind::CompletionObserved, 1);
        } else if self.s().kind == DriverKind::UserPoll {
            self.schedule_poll_tick();
        }
    }

    fn schedule_poll_tick(&mut self) {
        let epoch = self.s().poll_epoch;
        let at = self.now().plus(self.cfg.poll_interval_ns);
        self.schedule(at, Target::Driver, EventKind::PollTick, epoch);
    }

    /// Probe ticks while a wait is pending; observation timing itself comes
    /// from the quantized completion notification.
    fn session_poll_tick(&mut self, epoch: u64) {
        let s = self.session.as_ref().expect("session");
        if epoch != s.poll_epoch {
            return; // stale tick from an earlier wait
        }
        if matches!(s.phase, Phase::WaitTx | Phase::WaitRx) {
            self.schedule_poll_tick();
        }
    }

    fn session_quantum(&mut self) {
        let s = self.session.as_ref().expect("session");
        if s.kind != DriverKind::UserScheduled {
            return;
        }
        if !s.is_done() {
            let at = self.now().plus(self.cfg.sched_quantum_ns);
            self.schedule(at, Target::Driver, EventKind::SchedQuantum, 0);
        }
    }

    /// First check instant at-or-after `hw_done`, given checks start at
    /// `ready` (the wait entry) and repeat on the driver's cadence.
    fn quantized_observe(&self, ready: SimTime, hw_done: SimTime) -> (SimTime, u64) {
        match self.session.as_ref().expect("session").kind {
            DriverKind::UserPoll => {
                let interval = self.cfg.poll_interval_ns;
                let late = hw_done.since(ready);
                let steps = late.div_ceil(interval);
                (ready.plus(steps * interval), steps + 1)
            }
            DriverKind::UserScheduled => {
                let q = self.cfg.sched_quantum_ns;
                let at = SimTime(hw_done.ns().div_ceil(q) * q).max(ready);
                let checks = (at.ns() / q).saturating_sub(ready.ns() / q).max(1);
                (at, checks)
            }
            DriverKind::KernelInterrupt => unreachable!("kernel sleeps on interrupts"),
        }
    }

    /// Data-path notification: the TX channel finished its chain.
    pub(crate) fn session_tx_hw_complete(&mut self) {
        let Some(s) = self.session.as_ref() else {
            return;
        };
        if s.phase != Phase::WaitTx || s.kind == DriverKind::KernelInterrupt {
            return;
        }
        let ready = s.wait_started;
        let (at, checks) = self.quantized_observe(ready, self.now());
        self.s().tx_report.poll_ticks_consumed += checks;
        self.schedule(at, Target::Driver, EventKind::CompletionObserved, 0);
    }

    pub(crate) fn session_rx_hw_complete(&mut self) {
        let Some(s) = self.session.as_ref() else {
            return;
        };
        if s.phase != Phase::WaitRx || s.kind == DriverKind::KernelInterrupt {
            return;
        }
        let ready = s.wait_started;
        let (at, checks) = self.quantized_observe(ready, self.now());
        self.s().rx_report.poll_ticks_consumed += checks;
        self.schedule(at, Target::Driver, EventKind::CompletionObserved, 1);
    }

    pub(crate) fn session_observation(&mut self, which: u64) {
        let Some(s) = self.session.as_ref() else {
            return;
        };
        match (which, s.phase) {
            (0, Phase::WaitTx) => self.observe_tx_done(),
            (1, Phase::WaitRx) => self.observe_rx_done(),
            _ => {}
        }
    }

    /// The driver saw the TX chunk complete; advance the transfer plan.
    fn observe_tx_done(&mut self) {
        debug_assert_eq!(self.mm2s.channel.state(), ChannelState::Done);
        let now = self.now();
        // The polling CPU was busy for the whole wait.
        if self.s().kind == DriverKind::UserPoll {
            let waited = now.since(self.s().wait_started);
            self.cpu_busy_ns += waited;
        }
        self.s().poll_epoch += 1;
        self.mm2s.channel.reset_to_idle();
        self.s().chunk_idx += 1;
        if self.s().chunk_idx < self.s().tx_chunks.len() {
            if self.s().scheme == BufferScheme::Double && self.s().prepared_ahead {
                self.set_phase(Phase::Submit);
                let d = self.cost().submit_ns();
                self.software(d);
            } else {
                self.set_phase(Phase::Prepare);
                let b = self.s().current_chunk();
                let d = self.cost().prepare_ns(b);
                self.software(d);
            }
        } else {
            self.s().tx_report.t_complete = now;
            self.s().tx_report.bytes = self.s().tx_len;
            if self.s().rx_len == 0 {
                self.session_complete();
            } else if self.s().arm_rx_upfront {
                self.enter_wait_rx();
            } else {
                // The naive flow: receive only after the send is done.
                self.s().rx_report.t_submit = now;
                self.set_phase(Phase::ArmRxLate);
                let d = self.cost().submit_ns();
                self.software(d);
            }
        }
    }

    fn observe_rx_done(&mut self) {
        debug_assert_eq!(self.s2mm.channel.state(), ChannelState::Done);
        let now = self.now();
        if self.s().kind == DriverKind::UserPoll {
            let waited = now.since(self.s().wait_started);
            self.cpu_busy_ns += waited;
        }
        self.s().poll_epoch += 1;
        self.s().rx_report.t_complete = now;
        self.session_complete();
    }

    fn session_complete(&mut self) {
        self.s().phase = Phase::Done;
    }

    // -- kernel-level flow ----------------------------------------------------

    fn begin_kernel_tx(&mut self) {
        let now = self.now();
        self.s().tx_report.t_submit = now;
        self.set_phase(Phase::KernelTxOverhead);
        let d = self.cfg.kernel_request_overhead_ns;
        self.software(d);
    }

    fn begin_kernel_copy(&mut self) {
        // Move the payload from virtual to physical space. The copied bytes
        // are committed up front; the grant(s) model the time.
        let payload = {
            let s = self.s();
            match &s.kernel_tx_buffer {
                Some(VirtualBuffer::Unmapped(v)) => v.clone(),
                _ => unreachable!("kernel session holds an unmapped buffer"),
            }
        };
        let region = self.s().tx_region;
        self.ddr.write(region, 0, &payload);
        let len = self.s().tx_len;
        self.set_phase(Phase::KernelTxCopy);
        if self.cfg.kernel_copy_overlap {
            // Pipelined: burst-sized copy grants race the DMA reads.
            self.s().copy_blocking = false;
            self.s().copy_remaining = len;
            self.issue_copy_chunk();
            // Do not wait: configure the transfer immediately.
            self.set_phase(Phase::KernelTxSetup);
            let d = self.cfg.dma_setup_ns;
            self.software(d);
        } else {
            // Copy-then-configure: one long exclusive write grant.
            self.s().copy_blocking = true;
            self.s().copy_remaining = 0;
            let duration_ns = self.memcpy_rate.time_ns(len);
            self.cpu_busy_ns += duration_ns;
            self.ddr_request(GrantRequest {
                owner: GrantOwner::CpuCopy,
                kind: GrantKind::Write,
                bytes: len,
                duration_ns,
            });
        }
    }

    fn issue_copy_chunk(&mut self) {
        let remaining = self.s().copy_remaining;
        if remaining == 0 {
            return;
        }
        let chunk = remaining.min(self.cfg.burst_bytes);
        let duration_ns = self.memcpy_rate.time_ns(chunk);
        self.cpu_busy_ns += duration_ns;
        self.ddr_request(GrantRequest {
            owner: GrantOwner::CpuCopy,
            kind: GrantKind::Write,
            bytes: chunk,
            duration_ns,
        });
    }

    pub(crate) fn session_copy_grant_done(&mut self, bytes: u64) {
        if self.session.is_none() {
            return;
        }
        let phase = self.s().phase;
        match phase {
            Phase::KernelTxCopy if self.s().copy_blocking => {
                self.set_phase(Phase::KernelTxSetup);
                let d = self.cfg.dma_setup_ns;
                self.software(d);
            }
            Phase::KernelCopyOut => {
                let now = self.now();
                self.s().rx_report.t_complete = now;
                self.session_complete();
            }
            _ => {
                // Overlapped copy chunks complete in the background.
                let s = self.s();
                s.copy_remaining = s.copy_remaining.saturating_sub(bytes);
                let remaining = s.copy_remaining;
                if remaining > 0 {
                    self.issue_copy_chunk();
                }
            }
        }
    }

    fn submit_kernel_chain(&mut self) {
        let region = self.s().tx_region;
        let region_len = self.ddr.region(region).len();
        let completion = self.s().completion;
        let chunks = self.s().tx_chunks.clone();
        let mut offset = 0;
        let descriptors: Vec<DmaDescriptor> = chunks
            .iter()
            .map(|&len| {
                let d = DmaDescriptor::new(
                    region,
                    region_len,
                    offset,
                    len,
                    ChannelDirection::Mm2s,
                    self.cfg.max_descriptor_bytes,
                )
                .expect("chain descriptor within limits");
                offset += len;
                d
            })
            .collect();
        self.s().tx_report.descriptors_used = descriptors.len() as u64;
        let chain = DescriptorChain::new(descriptors, completion).expect("non-empty chain");
        self.mm2s_submit(chain).expect("tx channel idle");
    }

    fn session_irq_handler(&mut self, line: u64) {
        let now = self.now();
        match line {
            0 => {
                self.mm2s.line.handler_entered();
                self.s().tx_report.interrupts_taken += 1;
                if self.mm2s.channel.state() == ChannelState::Done
                    && self.s().phase == Phase::KernelSleepTx
                {
                    self.s().tx_report.t_complete = now;
                    self.s().tx_report.bytes = self.s().tx_len;
                    if self.s().rx_len == 0 {
                        self.session_complete();
                    } else {
                        self.set_phase(Phase::KernelSleepRx);
                        if self.s().rx_hw_done {
                            self.begin_copy_out();
                        }
                    }
                }
            }
            1 => {
                self.s2mm.line.handler_entered();
                self.s().rx_report.interrupts_taken += 1;
                if self.s2mm.channel.state() == ChannelState::Done {
                    self.s().rx_hw_done = true;
                    if self.s().phase == Phase::KernelSleepRx {
                        self.begin_copy_out();
                    }
                }
            }
            _ => unreachable!("unknown interrupt line"),
        }
    }

    fn begin_copy_out(&mut self) {
        self.set_phase(Phase::KernelCopyOut);
        let len = self.s().rx_len;
        let duration_ns = self.memcpy_rate.time_ns(len);
        self.cpu_busy_ns += duration_ns;
        self.ddr_request(GrantRequest {
            owner: GrantOwner::CpuCopy,
            kind: GrantKind::Write,
            bytes: len,
            duration_ns,
        });
    }
}
