//! Deterministic discrete-event scheduling and seeded randomness.
//!
//! Time is kept in integer microseconds. Events with equal timestamps are
//! dispatched in the order they were scheduled.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;

/// Simulation time in microseconds since start.
pub type Micros = u64;

pub const MICROS_PER_SEC: Micros = 1_000_000;

/// Converts seconds to whole microseconds, rounding to nearest.
pub fn secs_to_micros(secs: f64) -> Micros {
    (secs * MICROS_PER_SEC as f64).round() as Micros
}

pub fn micros_to_secs(us: Micros) -> f64 {
    us as f64 / MICROS_PER_SEC as f64
}

/// Cancellation handle returned by [`EventQueue::schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

struct Entry<E> {
    at: Micros,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // Reversed so that BinaryHeap pops the earliest (at, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .cmp(&self.at)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Priority queue of timestamped events plus the simulation clock.
pub struct EventQueue<E> {
    heap: BinaryHeap<Entry<E>>,
    cancelled: HashSet<u64>,
    next_seq: u64,
    now: Micros,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            next_seq: 0,
            now: 0,
        }
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    /// Enqueues `event` at absolute time `at`. Scheduling in the past is a
    /// logic error in the caller and is reported as such.
    pub fn schedule(&mut self, at: Micros, event: E) -> Result<EventHandle, SimError> {
        if at < self.now {
            return Err(SimError::ScheduleInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry { at, seq, event });
        Ok(EventHandle(seq))
    }

    pub fn schedule_in(&mut self, delay: Micros, event: E) -> EventHandle {
        let at = self.now + delay;
        // Cannot be in the past.
        self.schedule(at, event).expect("relative schedule")
    }

    /// Marks the event as cancelled. Cancelling an already dispatched or
    /// cancelled handle is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        if handle.0 < self.next_seq {
            self.cancelled.insert(handle.0);
        }
    }

    /// Timestamp of the next live event, if any.
    pub fn peek_time(&mut self) -> Option<Micros> {
        self.skip_cancelled();
        self.heap.peek().map(|e| e.at)
    }

    /// Removes the next live event and advances the clock to its timestamp.
    pub fn pop(&mut self) -> Option<(Micros, E)> {
        self.skip_cancelled();
        let entry = self.heap.pop()?;
        debug_assert!(entry.at >= self.now);
        self.now = entry.at;
        Some((entry.at, entry.event))
    }

    /// Advances the clock without dispatching. Used to land exactly on a
    /// horizon once all earlier events are consumed.
    pub fn advance_to(&mut self, at: Micros) {
        if at > self.now {
            self.now = at;
        }
    }

    pub fn is_empty(&mut self) -> bool {
        self.peek_time().is_none()
    }

    pub fn len(&self) -> usize {
        self.heap.len() - self.cancelled.len().min(self.heap.len())
    }

    fn skip_cancelled(&mut self) {
        while let Some(top) = self.heap.peek() {
            if self.cancelled.remove(&top.seq) {
                self.heap.pop();
            } else {
                break;
            }
        }
    }

    /// Dispatches events in order until the queue is empty or the next event
    /// is at or beyond `horizon`; the clock then rests at `horizon`.
    pub fn run_until<F>(&mut self, horizon: Micros, mut handler: F) -> Result<(), SimError>
    where
        F: FnMut(&mut Self, Micros, E) -> Result<(), SimError>,
    {
        while let Some(at) = self.peek_time() {
            if at >= horizon {
                break;
            }
            let (at, event) = self.pop().expect("peeked");
            handler(self, at, event)?;
        }
        self.advance_to(horizon);
        Ok(())
    }
}

/// Independent random concerns. Each gets its own generator so that adding
/// draws in one concern never shifts the sequence seen by another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Backoff,
    Traffic,
    RateSelection,
    Topology,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Backoff => 1,
            Stream::Traffic => 2,
            Stream::RateSelection => 3,
            Stream::Topology => 4,
        }
    }
}

/// Creates the generator for one concern of a seeded run.
pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// The per-concern generators of one simulation run.
#[derive(Debug, Clone)]
pub struct RngStreams {
    pub seed: u64,
    pub backoff: ChaCha8Rng,
    pub traffic: ChaCha8Rng,
    pub rate: ChaCha8Rng,
    pub topology: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            backoff: substream(seed, Stream::Backoff),
            traffic: substream(seed, Stream::Traffic),
            rate: substream(seed, Stream::RateSelection),
            topology: substream(seed, Stream::Topology),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn equal_timestamps_dispatch_fifo() {
        let mut q = EventQueue::new();
        q.schedule(0, "beacon").unwrap();
        q.schedule(0, "traffic").unwrap();
        assert_eq!(q.pop(), Some((0, "beacon")));
        assert_eq!(q.pop(), Some((0, "traffic")));
    }

    #[test]
    fn future_event_advances_clock() {
        let mut q = EventQueue::new();
        q.schedule(50, 'a').unwrap();
        q.pop();
        assert_eq!(q.now(), 50);
        q.schedule(100, 'x').unwrap();
        assert_eq!(q.pop(), Some((100, 'x')));
        assert_eq!(q.now(), 100);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut q = EventQueue::new();
        q.schedule(50, ()).unwrap();
        q.pop();
        let err = q.schedule(40, ()).unwrap_err();
        assert!(matches!(err, SimError::ScheduleInPast { at: 40, now: 50 }));
    }

    #[test]
    fn cancelled_event_never_dispatches() {
        let mut q = EventQueue::new();
        let a = q.schedule(10, 1).unwrap();
        q.schedule(20, 2).unwrap();
        q.cancel(a);
        assert_eq!(q.pop(), Some((20, 2)));
        assert_eq!(q.pop(), None);
    }

    #[test]
    fn run_until_empty_queue_lands_on_horizon() {
        let mut q: EventQueue<()> = EventQueue::new();
        q.run_until(50 * MICROS_PER_SEC, |_, _, _| Ok(())).unwrap();
        assert_eq!(q.now(), 50 * MICROS_PER_SEC);
    }

    #[test]
    fn run_until_stops_before_horizon() {
        let mut q = EventQueue::new();
        for t in [5, 10, 15] {
            q.schedule(t, t).unwrap();
        }
        let mut seen = Vec::new();
        q.run_until(15, |_, at, e| {
            seen.push((at, e));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![(5, 5), (10, 10)]);
    }

    #[test]
    fn substreams_are_independent_and_reproducible() {
        let draw = |s| {
            let mut rng = substream(7, s);
            (0..4).map(|_| rng.random::<u64>()).collect::<Vec<_>>()
        };
        let (a, b, c) = (draw(Stream::Backoff), draw(Stream::Backoff), draw(Stream::Traffic));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dispatch_order_is_time_then_insertion(
                times in proptest::collection::vec(0u64..50, 1..60),
                cancel_mask in proptest::collection::vec(any::<bool>(), 60),
            ) {
                let mut q = EventQueue::new();
                let mut handles = Vec::new();
                for (i, &t) in times.iter().enumerate() {
                    handles.push((q.schedule(t, i).unwrap(), t, i));
                }
                let mut expected: Vec<(u64, usize)> = Vec::new();
                for (k, (h, t, i)) in handles.iter().enumerate() {
                    if cancel_mask[k] {
                        q.cancel(*h);
                    } else {
                        expected.push((*t, *i));
                    }
                }
                expected.sort();
                let mut got = Vec::new();
                while let Some((t, i)) = q.pop() {
                    got.push((t, i));
                }
                prop_assert_eq!(got, expected);
            }
        }
    }
}
