//! Deterministic simulation clock and event queue.
//!
//! Everything in the simulator advances by scheduling [`SimEvent`]s against a
//! single [`EventQueue`]. Time is integer nanoseconds; there is no floating
//! point anywhere on the timing path, so two runs with the same inputs pop
//! the exact same event sequence.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use thiserror::Error;

/// Simulated time in nanoseconds since simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn ns(self) -> u64 {
        self.0
    }

    pub fn plus(self, ns: u64) -> SimTime {
        SimTime(self.0 + ns)
    }

    /// Saturating distance `self - earlier`, zero if `earlier` is later.
    pub fn since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Component addressed by an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Arbiter,
    Mm2s,
    S2mm,
    Device,
    Driver,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Target::Arbiter => "arbiter",
            Target::Mm2s => "mm2s",
            Target::S2mm => "s2mm",
            Target::Device => "device",
            Target::Driver => "driver",
        };
        f.write_str(s)
    }
}

/// What happened. The first six tags are the externally meaningful ones;
/// the rest are internal steps of the data path and driver state machines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    DescriptorComplete,
    FifoSpaceAvailable,
    PollTick,
    IrqRaised,
    SchedQuantum,
    DeviceOutputReady,
    /// A DDR arbiter grant finished.
    GrantEnd,
    /// A paced chunk of stream data is due to arrive.
    ChunkDue,
    /// Descriptor fetch delay elapsed.
    FetchDone,
    /// A software activity (prepare, submit, copy, overhead) finished.
    SoftwareDone,
    /// Interrupt handler entry after `irq_latency_ns`.
    IrqHandlerEntry,
    /// Device internal pacing step completed.
    DeviceStep,
    /// The driver's quantized completion check lands (poll tick or quantum
    /// at-or-after hardware completion).
    CompletionObserved,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventKind::DescriptorComplete => "descriptor-complete",
            EventKind::FifoSpaceAvailable => "fifo-space-available",
            EventKind::PollTick => "poll-tick",
            EventKind::IrqRaised => "irq-raised",
            EventKind::SchedQuantum => "sched-quantum",
            EventKind::DeviceOutputReady => "device-output-ready",
            EventKind::GrantEnd => "grant-end",
            EventKind::ChunkDue => "chunk-due",
            EventKind::FetchDone => "fetch-done",
            EventKind::SoftwareDone => "software-done",
            EventKind::IrqHandlerEntry => "irq-handler-entry",
            EventKind::DeviceStep => "device-step",
            EventKind::CompletionObserved => "completion-observed",
        };
        f.write_str(s)
    }
}

/// One timestamped simulation event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimEvent {
    pub fire_at: SimTime,
    pub target: Target,
    pub kind: EventKind,
    /// Small opaque value interpreted by the target (chunk index, grant id, ...).
    pub payload: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("event scheduled in the past: fire_at={fire_at} now={now}")]
    SchedulingInPast { fire_at: SimTime, now: SimTime },
}

#[derive(Debug)]
struct QueuedEvent {
    event: SimEvent,
    seq: u64,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.event.fire_at == other.event.fire_at && self.seq == other.seq
    }
}

impl Eq for QueuedEvent {}

impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueuedEvent {
    // BinaryHeap is a max-heap; invert so the earliest (fire_at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.event.fire_at, other.seq).cmp(&(self.event.fire_at, self.seq))
    }
}

/// Priority queue of pending events keyed by `(fire_at, insertion sequence)`.
///
/// Events with equal `fire_at` are delivered in insertion order, which makes
/// arbitration between simultaneous events reproducible.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<QueuedEvent>,
    seq: u64,
    now: SimTime,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Current simulated time: the timestamp of the last popped event.
    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Enqueue an event. Scheduling before `now` signals a model bug.
    pub fn schedule(&mut self, event: SimEvent) -> Result<(), ScheduleError> {
        if event.fire_at < self.now {
            return Err(ScheduleError::SchedulingInPast {
                fire_at: event.fire_at,
                now: self.now,
            });
        }
        self.heap.push(QueuedEvent {
            event,
            seq: self.seq,
        });
        self.seq += 1;
        Ok(())
    }

    /// Pop the next event and advance the clock to it.
    pub fn pop(&mut self) -> Option<SimEvent> {
        let queued = self.heap.pop()?;
        debug_assert!(queued.event.fire_at >= self.now);
        self.now = queued.event.fire_at;
        Some(queued.event)
    }
}

/// How a run ended. Every run terminates in exactly one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Completed,
    Deadlock,
    WatchdogExpired,
}

impl RunOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            RunOutcome::Completed => "ok",
            RunOutcome::Deadlock => "deadlock",
            RunOutcome::WatchdogExpired => "watchdog",
        }
    }
}

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bound on simulated time for a run. Runs that pop an event past the limit
/// stop with [`RunOutcome::WatchdogExpired`].
#[derive(Debug, Clone, Copy)]
pub struct WatchdogSpec {
    pub limit: SimTime,
}

impl WatchdogSpec {
    pub fn from_seconds(seconds: u64) -> Self {
        WatchdogSpec {
            limit: SimTime(seconds * 1_000_000_000),
        }
    }
}

/// Optional trace of delivered events, used by the determinism checks.
#[derive(Debug, Default)]
pub struct EventTrace {
    lines: Vec<String>,
    enabled: bool,
}

impl EventTrace {
    pub fn enabled() -> Self {
        EventTrace {
            lines: Vec::new(),
            enabled: true,
        }
    }

    pub fn record(&mut self, event: &SimEvent) {
        if self.enabled {
            self.lines.push(format!(
                "{} {} {} {}",
                event.fire_at.ns(),
                event.target,
                event.kind,
                event.payload
            ));
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn into_string(self) -> String {
        self.lines.join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(fire_at: u64, payload: u64) -> SimEvent {
        SimEvent {
            fire_at: SimTime(fire_at),
            target: Target::Driver,
            kind: EventKind::PollTick,
            payload,
        }
    }

    #[test]
    fn event_at_time_zero_fires_first() {
        let mut q = EventQueue::new();
        q.schedule(ev(5, 1)).unwrap();
        q.schedule(ev(0, 2)).unwrap();
        let first = q.pop().unwrap();
        assert_eq!(first.fire_at, SimTime(0));
        assert_eq!(first.payload, 2);
    }

    #[test]
    fn equal_fire_at_delivers_in_insertion_order() {
        let mut q = EventQueue::new();
        for payload in 0..10 {
            q.schedule(ev(100, payload)).unwrap();
        }
        let popped: Vec<u64> = std::iter::from_fn(|| q.pop()).map(|e| e.payload).collect();
        assert_eq!(popped, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn scheduling_in_past_is_an_error() {
        let mut q = EventQueue::new();
        q.schedule(ev(10, 0)).unwrap();
        q.pop().unwrap();
        assert_eq!(q.now(), SimTime(10));
        let err = q.schedule(ev(5, 1)).unwrap_err();
        assert_eq!(
            err,
            ScheduleError::SchedulingInPast {
                fire_at: SimTime(5),
                now: SimTime(10),
            }
        );
    }

    #[test]
    fn pop_order_is_total_and_monotone() {
        let mut q = EventQueue::new();
        let times = [7u64, 3, 3, 9, 0, 7, 1];
        for (i, &t) in times.iter().enumerate() {
            q.schedule(ev(t, i as u64)).unwrap();
        }
        let mut last = SimTime::ZERO;
        while let Some(e) = q.pop() {
            assert!(e.fire_at >= last);
            last = e.fire_at;
        }
    }
}
