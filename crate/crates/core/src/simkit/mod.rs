//! Deterministic discrete-event kernel.
//!
//! Events are ordered by `(time, priority, seq)`: earlier time first, then the
//! lower priority class, then insertion order. The clock is an integer
//! nanosecond counter so ties are exact. Dispatch is single-threaded; separate
//! [`Engine`] instances share nothing and may run on separate threads.

pub mod rng;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use rng::{derive_seed, entity_stream, replication_stream, RngStreams};

/// Nanoseconds since simulation start.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn as_ns(self) -> u64 {
        self.0
    }

    pub fn as_ms_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn checked_add(self, delay_ns: u64) -> Option<SimTime> {
        self.0.checked_add(delay_ns).map(SimTime)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Priority classes. Lower values are dispatched first among events sharing a
/// timestamp.
pub mod priority {
    /// Failures and management-plane messages.
    pub const CONTROL: u8 = 0;
    /// Data-plane and workload events.
    pub const DATA: u8 = 10;
}

/// Domain payload carried by an event. `kind` and `detail` feed the event log.
pub trait Payload {
    fn kind(&self) -> &'static str;
    fn detail(&self) -> String;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("engine is stopped")]
    EngineStopped,
    #[error("scheduling {delay_ns}ns after {now} overflows the clock")]
    TimeOverflow { now: SimTime, delay_ns: u64 },
}

/// Permits cancelling a scheduled event before it is dispatched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seq(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Event<E> {
    pub time: SimTime,
    pub priority: u8,
    pub seq: u64,
    pub origin: String,
    pub kind: E,
}

/// Queue and clock. Handlers receive a `&mut Scheduler` to enqueue follow-up
/// events while the engine is running.
#[derive(Debug)]
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<(SimTime, u8, u64)>>,
    pending: HashMap<u64, Event<E>>,
    stopped: bool,
}

impl<E> Scheduler<E> {
    fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            pending: HashMap::new(),
            stopped: false,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    /// Number of events still waiting for dispatch.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Enqueues `kind` at `now + delay_ns` in the [`priority::DATA`] class.
    pub fn schedule(
        &mut self,
        delay_ns: u64,
        origin: impl Into<String>,
        kind: E,
    ) -> Result<EventHandle, SimError> {
        self.schedule_with_priority(delay_ns, priority::DATA, origin, kind)
    }

    pub fn schedule_with_priority(
        &mut self,
        delay_ns: u64,
        priority: u8,
        origin: impl Into<String>,
        kind: E,
    ) -> Result<EventHandle, SimError> {
        if self.stopped {
            return Err(SimError::EngineStopped);
        }
        let time = self
            .now
            .checked_add(delay_ns)
            .ok_or(SimError::TimeOverflow {
                now: self.now,
                delay_ns,
            })?;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse((time, priority, seq)));
        self.pending.insert(
            seq,
            Event {
                time,
                priority,
                seq,
                origin: origin.into(),
                kind,
            },
        );
        Ok(EventHandle(seq))
    }

    /// Schedules at an absolute time; `at` must not lie in the past.
    pub fn schedule_at(
        &mut self,
        at: SimTime,
        priority: u8,
        origin: impl Into<String>,
        kind: E,
    ) -> Result<EventHandle, SimError> {
        let delay = at.0.saturating_sub(self.now.0);
        self.schedule_with_priority(delay, priority, origin, kind)
    }

    /// Returns true if the event was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0).is_some()
    }

    /// Refuses further scheduling; already-queued events still dispatch.
    pub fn stop(&mut self) {
        self.stopped = true;
    }

    fn pop_until(&mut self, until: SimTime) -> Option<Event<E>> {
        loop {
            let Reverse((time, _, seq)) = *self.queue.peek()?;
            if time > until {
                return None;
            }
            self.queue.pop();
            if let Some(event) = self.pending.remove(&seq) {
                self.now = time;
                return Some(event);
            }
        }
    }
}

/// One processed event, in canonical export order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t_ns: u64,
    pub seq: u64,
    pub origin: String,
    pub kind: String,
    pub detail: String,
}

/// Append-only record of dispatched events.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    entries: Vec<LogEntry>,
}

impl EventLog {
    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// JSON lines, one event per line, fields `t_ns, seq, origin, kind, detail`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("log entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }
}

/// Event engine: a [`Scheduler`] plus the log of dispatched events.
#[derive(Debug)]
pub struct Engine<E> {
    scheduler: Scheduler<E>,
    log: EventLog,
    logging: bool,
}

impl<E: Payload> Default for Engine<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Payload> Engine<E> {
    pub fn new() -> Self {
        Self {
            scheduler: Scheduler::new(),
            log: EventLog::default(),
            logging: true,
        }
    }

    /// An engine that does not record its events. Used for long workload
    /// runs where only the derived samples matter.
    pub fn without_log() -> Self {
        Self {
            logging: false,
            ..Self::new()
        }
    }

    pub fn now(&self) -> SimTime {
        self.scheduler.now
    }

    pub fn scheduler(&mut self) -> &mut Scheduler<E> {
        &mut self.scheduler
    }

    pub fn schedule(
        &mut self,
        delay_ns: u64,
        origin: impl Into<String>,
        kind: E,
    ) -> Result<EventHandle, SimError> {
        self.scheduler.schedule(delay_ns, origin, kind)
    }

    pub fn schedule_with_priority(
        &mut self,
        delay_ns: u64,
        priority: u8,
        origin: impl Into<String>,
        kind: E,
    ) -> Result<EventHandle, SimError> {
        self.scheduler
            .schedule_with_priority(delay_ns, priority, origin, kind)
    }

    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.scheduler.cancel(handle)
    }

    pub fn stop(&mut self) {
        self.scheduler.stop();
    }

    /// Dispatches every event with `time <= until` in total order, handing each
    /// to `handler`. The clock is left at the last dispatched event's time.
    pub fn run<F>(&mut self, until: SimTime, mut handler: F) -> &EventLog
    where
        F: FnMut(&mut Scheduler<E>, Event<E>),
    {
        while let Some(event) = self.scheduler.pop_until(until) {
            if self.logging {
                self.log.entries.push(LogEntry {
                    t_ns: event.time.0,
                    seq: event.seq,
                    origin: event.origin.clone(),
                    kind: event.kind.kind().to_string(),
                    detail: event.kind.detail(),
                });
            }
            handler(&mut self.scheduler, event);
        }
        &self.log
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }
}
