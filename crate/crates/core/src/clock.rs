//! Time sources for event timestamps.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

/// Milliseconds since the Unix epoch.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Deterministic clock: each reading advances by a fixed step.
///
/// Used for replayable sessions where two runs must produce byte-identical
/// event logs.
#[derive(Debug)]
pub struct TickClock {
    next: AtomicU64,
    step: u64,
}

impl TickClock {
    pub fn new(start_ms: u64, step_ms: u64) -> Self {
        Self {
            next: AtomicU64::new(start_ms),
            step: step_ms,
        }
    }
}

impl Clock for TickClock {
    fn now_ms(&self) -> u64 {
        self.next.fetch_add(self.step, Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_clock_advances() {
        let c = TickClock::new(1_000, 10);
        assert_eq!(c.now_ms(), 1_000);
        assert_eq!(c.now_ms(), 1_010);
    }
}
