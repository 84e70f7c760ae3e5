//! Discrete-event kernel: integer simulated clock, a cancellable event queue
//! with a total `(fire_at, seq)` order, and reproducible random streams.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use crate::error::SimError;

/// Simulated time in microseconds since the start of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    /// Duration from `earlier` to `self`, zero if `earlier` is later.
    pub fn saturating_since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;
    fn add(self, us: u64) -> SimTime {
        SimTime(self.0 + us)
    }
}

impl AddAssign<u64> for SimTime {
    fn add_assign(&mut self, us: u64) {
        self.0 += us;
    }
}

impl Sub for SimTime {
    type Output = u64;
    fn sub(self, rhs: SimTime) -> u64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// Handle returned by [`Scheduler::schedule`]; identifies the event by its
/// insertion sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seq(self) -> u64 {
        self.0
    }
}

struct Entry<E> {
    at: SimTime,
    seq: u64,
    payload: E,
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
    // Reversed so that `BinaryHeap` pops the smallest (at, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

/// An event popped from the queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fired<E> {
    pub at: SimTime,
    pub seq: u64,
    pub payload: E,
}

/// Ordered event queue plus the simulated clock.
///
/// Events fire in ascending `(fire_at, seq)` order where `seq` is the global
/// insertion counter, so simultaneous events fire in the order they were
/// scheduled.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Entry<E>>,
    // One bit per sequence number: set while the event is pending.
    live: Vec<u64>,
    processed: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            live: Vec::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events handed out by [`Scheduler::pop_until`] so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn schedule(&mut self, at: SimTime, payload: E) -> Result<EventHandle, SimError> {
        if at < self.now {
            return Err(SimError::ScheduleInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.set_live(seq, true);
        self.heap.push(Entry { at, seq, payload });
        Ok(EventHandle(seq))
    }

    pub fn schedule_in(&mut self, delay_us: u64, payload: E) -> Result<EventHandle, SimError> {
        self.schedule(self.now + delay_us, payload)
    }

    /// Makes a pending event inert. Returns false if it already fired or was
    /// already cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if self.is_live(handle.0) {
            self.set_live(handle.0, false);
            true
        } else {
            false
        }
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.is_live(handle.0)
    }

    /// Pops the next live event with `fire_at <= end`, advancing the clock to
    /// its time. When none is left, the clock advances to `end`.
    pub fn pop_until(&mut self, end: SimTime) -> Option<Fired<E>> {
        while let Some(top) = self.heap.peek() {
            if top.at > end {
                break;
            }
            let Entry { at, seq, payload } = self.heap.pop().expect("peeked");
            if !self.is_live(seq) {
                continue;
            }
            self.set_live(seq, false);
            self.now = at;
            self.processed += 1;
            return Some(Fired { at, seq, payload });
        }
        if end > self.now {
            self.now = end;
        }
        None
    }

    /// Processes every event with `fire_at <= end` through `handler`, then
    /// leaves the clock at `end`. Returns the number of events processed.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> Result<u64, SimError>
    where
        F: FnMut(&mut Self, Fired<E>) -> Result<(), SimError>,
    {
        let mut count = 0;
        while let Some(ev) = self.pop_until(end) {
            handler(self, ev)?;
            count += 1;
        }
        Ok(count)
    }

    fn is_live(&self, seq: u64) -> bool {
        let (word, bit) = ((seq / 64) as usize, seq % 64);
        self.live.get(word).is_some_and(|w| w & (1 << bit) != 0)
    }

    fn set_live(&mut self, seq: u64, on: bool) {
        let (word, bit) = ((seq / 64) as usize, seq % 64);
        if word >= self.live.len() {
            self.live.resize(word + 1, 0);
        }
        if on {
            self.live[word] |= 1 << bit;
        } else {
            self.live[word] &= !(1 << bit);
        }
    }
}

/// Reproducible pseudo-random stream.
///
/// The generator is xorshift64* (Vigna, 2014): `x ^= x >> 12; x ^= x << 25;
/// x ^= x >> 27; out = x * 0x2545F4914F6CDD1D`. The initial state is derived
/// from `(seed, stream)` with one SplitMix64 finalisation step, so every
/// `(seed, stream)` pair has its own sequence and the output is identical on
/// every platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    state: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mixed = splitmix64(seed ^ splitmix64(stream.wrapping_add(0x6A09_E667_F3BC_C909)));
        // xorshift state must be nonzero.
        let state = if mixed == 0 {
            0x2545_F491_4F6C_DD1D
        } else {
            mixed
        };
        RngStream { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform integer in `[0, n)` by rejection sampling. `n` must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "RngStream::below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let r = self.next_u64();
            if r >= threshold {
                return r % n;
            }
        }
    }

    /// Uniform float in `[0, 1)` with 53 bits of precision.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_in_future_fires_at_time() {
        let mut s = Scheduler::new();
        s.run_until(SimTime(3), |_, _| Ok(())).unwrap();
        s.schedule(SimTime(5), "a").unwrap();
        let ev = s.pop_until(SimTime(10)).unwrap();
        assert_eq!(ev.at, SimTime(5));
        assert_eq!(s.now(), SimTime(5));
    }

    #[test]
    fn simultaneous_events_fire_in_insertion_order() {
        let mut s = Scheduler::new();
        let a = s.schedule(SimTime(5), 'a').unwrap();
        let b = s.schedule(SimTime(5), 'b').unwrap();
        assert!(a.seq() < b.seq());
        let mut order = Vec::new();
        s.run_until(SimTime(5), |_, ev| {
            order.push((ev.seq, ev.payload));
            Ok(())
        })
        .unwrap();
        assert_eq!(order, vec![(a.seq(), 'a'), (b.seq(), 'b')]);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut s: Scheduler<()> = Scheduler::new();
        s.pop_until(SimTime(3));
        let err = s.schedule(SimTime(2), ()).unwrap_err();
        assert!(matches!(err, SimError::ScheduleInPast { .. }));
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut s: Scheduler<()> = Scheduler::new();
        let n = s.run_until(SimTime(100), |_, _| Ok(())).unwrap();
        assert_eq!(n, 0);
        assert_eq!(s.now(), SimTime(100));
    }

    #[test]
    fn heap_order() {
        let mut s = Scheduler::new();
        for t in [3, 1, 2] {
            s.schedule(SimTime(t), t).unwrap();
        }
        let mut seen = Vec::new();
        s.run_until(SimTime(10), |_, ev| {
            seen.push(ev.payload);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![1, 2, 3]);
    }

    #[test]
    fn cancel_semantics() {
        let mut s = Scheduler::new();
        let pending = s.schedule(SimTime(10), "timer").unwrap();
        let fired = s.schedule(SimTime(1), "now").unwrap();
        assert!(s.cancel(pending));
        assert!(!s.cancel(pending), "second cancel must report false");
        let mut seen = Vec::new();
        s.run_until(SimTime(20), |_, ev| {
            seen.push(ev.payload);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec!["now"]);
        assert!(!s.cancel(fired), "already fired");
    }

    #[test]
    fn handler_can_schedule_follow_ups() {
        let mut s = Scheduler::new();
        s.schedule(SimTime(1), 0u32).unwrap();
        let n = s
            .run_until(SimTime(100), |s, ev| {
                if ev.payload < 4 {
                    s.schedule_in(10, ev.payload + 1)?;
                }
                Ok(())
            })
            .unwrap();
        assert_eq!(n, 5);
        assert_eq!(s.now(), SimTime(100));
    }

    #[test]
    fn rng_streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = {
            let mut r = RngStream::new(7, 3);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RngStream::new(7, 3);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = RngStream::new(7, 4);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn xorshift_reference_values() {
        // Frozen outputs; a change here breaks cross-run reproducibility.
        let mut r = RngStream { state: 1 };
        let first: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        // x=1 -> 1 ^ (1<<25) = 0x2000001 -> ^ (>>27 == 0) -> * multiplier
        assert_eq!(first[0], 0x0200_0001u64.wrapping_mul(0x2545_F491_4F6C_DD1D));
        assert_eq!(first.len(), 3);
    }

    #[test]
    fn below_is_in_range_and_roughly_uniform() {
        let mut r = RngStream::new(42, 0);
        let mut counts = [0u32; 8];
        for _ in 0..80_000 {
            counts[r.below(8) as usize] += 1;
        }
        for c in counts {
            assert!((9_000..11_000).contains(&c), "{counts:?}");
        }
    }
}
