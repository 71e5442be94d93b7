//! Request pacing for remote providers.
//!
//! A minimum-interval limiter: with `rate` requests per second, consecutive
//! acquisitions are spaced at least `1/rate` apart. Time is injected through
//! [`Clock`] so pacing logic is testable without real sleeps.

use std::sync::{Arc, Mutex};
use std::time::Duration;

pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary epoch.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: std::time::Instant,
}

impl SystemClock {
    pub fn new() -> Arc<Self> {
        Arc::new(Self {
            origin: std::time::Instant::now(),
        })
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Virtual clock: `sleep` advances time instantly.
pub struct TestClock {
    now: Mutex<Duration>,
}

impl TestClock {
    pub fn new() -> Arc<Self> {
        Arc::new(Self {
            now: Mutex::new(Duration::ZERO),
        })
    }

    pub fn elapsed(&self) -> Duration {
        *self.now.lock().unwrap()
    }
}

impl Clock for TestClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
}

pub struct RateLimiter {
    min_interval: Duration,
    clock: Arc<dyn Clock>,
    last: Mutex<Option<Duration>>,
}

impl RateLimiter {
    /// `rate` in requests per second; zero or negative disables pacing.
    pub fn new(rate: f64, clock: Arc<dyn Clock>) -> Self {
        let min_interval = if rate > 0.0 {
            Duration::from_secs_f64(1.0 / rate)
        } else {
            Duration::ZERO
        };
        Self {
            min_interval,
            clock,
            last: Mutex::new(None),
        }
    }

    /// Blocks until the next request slot is free.
    pub fn acquire(&self) {
        if self.min_interval.is_zero() {
            return;
        }
        let mut last = self.last.lock().unwrap();
        let now = self.clock.now();
        if let Some(prev) = *last {
            let next_free = prev + self.min_interval;
            if now < next_free {
                self.clock.sleep(next_free - now);
            }
        }
        *last = Some(self.clock.now());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_sequential_calls_at_two_per_second_take_at_least_4_5_seconds() {
        let clock = TestClock::new();
        let limiter = RateLimiter::new(2.0, clock.clone());
        for _ in 0..10 {
            limiter.acquire();
        }
        // Nine inter-request gaps of 500 ms each.
        assert!(
            clock.elapsed() >= Duration::from_millis(4500),
            "elapsed {:?}",
            clock.elapsed()
        );
    }

    #[test]
    fn zero_rate_never_sleeps() {
        let clock = TestClock::new();
        let limiter = RateLimiter::new(0.0, clock.clone());
        for _ in 0..100 {
            limiter.acquire();
        }
        assert_eq!(clock.elapsed(), Duration::ZERO);
    }

    #[test]
    fn spacing_holds_between_consecutive_acquisitions() {
        let clock = TestClock::new();
        let limiter = RateLimiter::new(4.0, clock.clone());
        let mut stamps = Vec::new();
        for _ in 0..5 {
            limiter.acquire();
            stamps.push(clock.elapsed());
        }
        for pair in stamps.windows(2) {
            assert!(pair[1] - pair[0] >= Duration::from_millis(250));
        }
    }
}
