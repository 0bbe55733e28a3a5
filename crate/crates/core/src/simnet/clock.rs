use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// Virtual time in integer nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(s: f64) -> SimTime {
        debug_assert!(s >= 0.0 && s.is_finite());
        SimTime((s * 1e9).round() as u64)
    }

    pub fn secs(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn after(self, secs: f64) -> SimTime {
        SimTime(self.0 + SimTime::from_secs(secs).0)
    }
}

struct Entry<E> {
    at: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Virtual clock plus pending callbacks. Events fire in `(time, insertion)`
/// order and time never moves backwards.
pub struct VirtualClock<E> {
    now: SimTime,
    seq: u64,
    queue: BinaryHeap<Reverse<Entry<E>>>,
}

impl<E> Default for VirtualClock<E> {
    fn default() -> Self {
        VirtualClock {
            now: SimTime::ZERO,
            seq: 0,
            queue: BinaryHeap::new(),
        }
    }
}

impl<E> VirtualClock<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Schedules `event` at `at`, or now if `at` is in the past.
    pub fn schedule(&mut self, at: SimTime, event: E) {
        let at = at.max(self.now);
        self.queue.push(Reverse(Entry { at, seq: self.seq, event }));
        self.seq += 1;
    }

    pub fn schedule_in(&mut self, secs: f64, event: E) {
        let at = self.now.after(secs);
        self.schedule(at, event);
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(e)| e.at)
    }

    /// Pops the next event and advances the clock to its time.
    pub fn pop(&mut self) -> Option<(SimTime, E)> {
        let Reverse(e) = self.queue.pop()?;
        self.now = e.at;
        Some((e.at, e.event))
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fires_in_time_then_insertion_order() {
        let mut c = VirtualClock::new();
        c.schedule(SimTime(5), "b");
        c.schedule(SimTime(1), "a");
        c.schedule(SimTime(5), "c");
        c.schedule(SimTime(3), "x");
        let order: Vec<_> = std::iter::from_fn(|| c.pop().map(|(_, e)| e)).collect();
        assert_eq!(order, ["a", "x", "b", "c"]);
        assert_eq!(c.now(), SimTime(5));
    }

    #[test]
    fn past_events_are_clamped_to_now() {
        let mut c = VirtualClock::new();
        c.schedule(SimTime(10), 1);
        c.pop();
        c.schedule(SimTime(3), 2);
        assert_eq!(c.pop(), Some((SimTime(10), 2)));
    }

    #[test]
    fn seconds_round_trip() {
        assert_eq!(SimTime::from_secs(1.5).0, 1_500_000_000);
        assert_eq!(SimTime::from_secs(0.000_5).secs(), 0.000_5);
    }
}
