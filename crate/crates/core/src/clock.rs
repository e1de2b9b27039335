//! Timestamps, logical durability tickets and the simulator clock.

use std::sync::atomic::{AtomicU64, Ordering};

/// Nanoseconds on the simulator's global clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub u64);

/// Logical durability ticket. Dense and unique across all threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct DurTs(pub u64);

/// Global dispenser for [`DurTs`] values, usable from many OS threads.
#[derive(Debug, Default)]
pub struct DurTsCounter {
    next: AtomicU64,
}

impl DurTsCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Atomic fetch-and-increment; the first call returns 0.
    pub fn next_durts(&self) -> DurTs {
        DurTs(self.next.fetch_add(1, Ordering::AcqRel))
    }

    /// Next value that would be handed out (the array head).
    pub fn peek(&self) -> u64 {
        self.next.load(Ordering::Acquire)
    }
}

impl Clone for DurTsCounter {
    fn clone(&self) -> Self {
        Self {
            next: AtomicU64::new(self.peek()),
        }
    }
}

/// How the scheduler advances time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeMode {
    /// Every scheduler step advances the clock by `tick`; flushes only
    /// complete at fences (or survive a crash). Used by the explorer.
    Deterministic { tick: u64 },
    /// Discrete-event virtual time: steps carry costs, flushes complete after
    /// their latency. Used by the benchmark harness.
    Virtual,
}

impl Default for TimeMode {
    fn default() -> Self {
        TimeMode::Deterministic { tick: 1 }
    }
}

/// The global clock shared by all simulated threads.
///
/// Each scheduler step is stamped with a unique time, so two timestamps taken
/// in different steps never tie.
#[derive(Debug, Clone)]
pub struct SimClock {
    mode: TimeMode,
    now: u64,
    steps: u64,
}

impl SimClock {
    pub fn new(mode: TimeMode) -> Self {
        Self {
            mode,
            now: 0,
            steps: 0,
        }
    }

    pub fn mode(&self) -> TimeMode {
        self.mode
    }

    /// Opens a new step for a thread that is ready at `ready_at` and returns
    /// the step's time.
    pub fn begin_step(&mut self, ready_at: u64) -> u64 {
        self.steps += 1;
        self.now = match self.mode {
            TimeMode::Deterministic { tick } => self.steps * tick,
            TimeMode::Virtual => (self.now + 1).max(ready_at),
        };
        self.now
    }

    /// Time of the current step.
    pub fn now(&self) -> Timestamp {
        Timestamp(self.now)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn first_durts_is_zero_and_sequential() {
        let c = DurTsCounter::new();
        assert_eq!(c.next_durts(), DurTs(0));
        assert_eq!(c.next_durts(), DurTs(1));
        assert_eq!(c.peek(), 2);
    }

    #[test]
    fn concurrent_durts_are_dense() {
        let c = Arc::new(DurTsCounter::new());
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let c = Arc::clone(&c);
                std::thread::spawn(move || (0..1000).map(|_| c.next_durts().0).collect::<Vec<_>>())
            })
            .collect();
        let mut all: Vec<u64> = handles.into_iter().flat_map(|h| h.join().unwrap()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..4000).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_clock_is_step_count_times_tick() {
        let mut clk = SimClock::new(TimeMode::Deterministic { tick: 5 });
        assert_eq!(clk.begin_step(0), 5);
        assert_eq!(clk.begin_step(1000), 10);
        assert_eq!(clk.now(), Timestamp(10));
    }

    #[test]
    fn virtual_clock_is_strictly_increasing() {
        let mut clk = SimClock::new(TimeMode::Virtual);
        let a = clk.begin_step(0);
        let b = clk.begin_step(0);
        let c = clk.begin_step(500);
        let d = clk.begin_step(100);
        assert!(a < b && b < c && c < d);
        assert_eq!(c, 500);
    }
}
