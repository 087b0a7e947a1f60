//! Deterministic discrete-event engine.
//!
//! A single virtual clock, a priority queue of events, and nothing else.
//! Two runs over the same scenario and seed dispatch the exact same event
//! sequence: ties at equal fire time break FIFO by insertion sequence.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::HashSet;

use thiserror::Error;

pub type Seconds = f64;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("event scheduled at t={fire_time} in the past (now={now})")]
    ScheduleInPast { fire_time: Seconds, now: Seconds },
    #[error("run_until({t_end}) is before the current clock ({now})")]
    HorizonInPast { t_end: Seconds, now: Seconds },
    #[error("next_multiple called with non-positive interval {0}")]
    NonPositiveInterval(Seconds),
}

/// Handle for a scheduled event; allows cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

struct Queued<E> {
    fire_time: Seconds,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Queued<E> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl<E> Eq for Queued<E> {}

impl<E> Ord for Queued<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
        other
            .fire_time
            .total_cmp(&self.fire_time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}
impl<E> PartialOrd for Queued<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The event queue plus virtual clock.
pub struct Kernel<E> {
    now: Seconds,
    seq: u64,
    heap: BinaryHeap<Queued<E>>,
    cancelled: HashSet<u64>,
    dispatched: u64,
}

impl<E> Default for Kernel<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Kernel<E> {
    pub fn new() -> Self {
        Kernel {
            now: 0.0,
            seq: 0,
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            dispatched: 0,
        }
    }

    pub fn now(&self) -> Seconds {
        self.now
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, fire_time: Seconds, payload: E) -> Result<EventHandle, KernelError> {
        if fire_time < self.now {
            return Err(KernelError::ScheduleInPast { fire_time, now: self.now });
        }
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Queued { fire_time, seq, payload });
        Ok(EventHandle(seq))
    }

    /// Cancelled handles never fire. Cancelling twice or cancelling an
    /// already-fired handle is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        self.cancelled.insert(handle.0);
    }

    /// Pop the next live event at or before `t_end`, advancing the clock to
    /// its fire time. Returns None (clock untouched) when nothing is due.
    pub fn pop_due(&mut self, t_end: Seconds) -> Option<(Seconds, E)> {
        loop {
            let head_time = self.heap.peek()?.fire_time;
            if head_time > t_end {
                return None;
            }
            let ev = self.heap.pop().expect("peeked");
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            debug_assert!(ev.fire_time >= self.now, "clock must never move backwards");
            self.now = ev.fire_time;
            self.dispatched += 1;
            return Some((ev.fire_time, ev.payload));
        }
    }

    /// Dispatch every event with fire_time <= t_end through `handler`, then
    /// leave the clock at t_end. Handlers may schedule follow-up events.
    pub fn run_until<C>(
        &mut self,
        t_end: Seconds,
        ctx: &mut C,
        mut handler: impl FnMut(&mut Self, &mut C, Seconds, E),
    ) -> Result<u64, KernelError> {
        if t_end < self.now {
            return Err(KernelError::HorizonInPast { t_end, now: self.now });
        }
        let before = self.dispatched;
        while let Some((t, payload)) = self.pop_due(t_end) {
            handler(self, ctx, t, payload);
        }
        self.now = t_end;
        Ok(self.dispatched - before)
    }
}

/// Smallest k * interval strictly greater than `now`, k >= 1.
///
/// Timer grids never return "now" itself, so back-to-back periodic timers
/// cannot fire at zero delay.
pub fn next_multiple(interval: Seconds, now: Seconds) -> Result<Seconds, KernelError> {
    if interval <= 0.0 {
        return Err(KernelError::NonPositiveInterval(interval));
    }
    let mut k = (now / interval).floor() + 1.0;
    if k < 1.0 {
        k = 1.0;
    }
    let mut t = k * interval;
    // Guard against k*interval rounding down onto `now`.
    while t <= now {
        k += 1.0;
        t = k * interval;
    }
    Ok(t)
}
