use parking_lot::{Condvar, Mutex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThrottleStats {
    pub limit: usize,
    pub in_flight: usize,
    pub high_water: usize,
    /// Acquires that had to wait at least once.
    pub blocked_acquires: u64,
}

#[derive(Debug, Default)]
struct Counters {
    in_flight: usize,
    high_water: usize,
    blocked: u64,
}

/// Counting gate bounding the number of pending operations.
#[derive(Debug)]
pub struct ThrottleGate {
    limit: usize,
    counters: Mutex<Counters>,
    freed: Condvar,
}

impl ThrottleGate {
    pub fn new(limit: usize) -> Self {
        ThrottleGate { limit: limit.max(1), counters: Mutex::new(Counters::default()), freed: Condvar::new() }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    /// Takes one slot, waiting while the gate is full.
    pub fn acquire(&self) {
        let mut c = self.counters.lock();
        if c.in_flight >= self.limit {
            c.blocked += 1;
            while c.in_flight >= self.limit {
                self.freed.wait(&mut c);
            }
        }
        c.in_flight += 1;
        c.high_water = c.high_water.max(c.in_flight);
    }

    pub fn release(&self) {
        let mut c = self.counters.lock();
        debug_assert!(c.in_flight > 0, "release without acquire");
        c.in_flight = c.in_flight.saturating_sub(1);
        drop(c);
        self.freed.notify_one();
    }

    pub fn stats(&self) -> ThrottleStats {
        let c = self.counters.lock();
        ThrottleStats {
            limit: self.limit,
            in_flight: c.in_flight,
            high_water: c.high_water,
            blocked_acquires: c.blocked,
        }
    }
}
