//! Clocks, per-host request pacing and retry backoff.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Monotonic time source. Tests use [`ManualClock`] so pacing and backoff
/// can be checked without sleeping.
pub trait Clock: Send + Sync {
    /// Time elapsed since the clock's origin.
    fn now(&self) -> Duration;
    /// Blocks until `now() >= deadline`.
    fn sleep_until(&self, deadline: Duration);

    fn sleep(&self, d: Duration) {
        self.sleep_until(self.now() + d);
    }
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep_until(&self, deadline: Duration) {
        let now = self.now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        }
    }
}

/// Virtual clock: sleeping jumps time forward instead of blocking.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: Mutex<Duration>,
    sleeps: Mutex<Vec<Duration>>,
}

impl ManualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }

    /// Every positive wait requested through `sleep_until`, in order.
    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().unwrap().clone()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep_until(&self, deadline: Duration) {
        let mut now = self.now.lock().unwrap();
        if deadline > *now {
            self.sleeps.lock().unwrap().push(deadline - *now);
            *now = deadline;
        }
    }
}

/// Spaces requests to the same host at least `1 / rate` seconds apart, so
/// any half-open one-second window sees at most `ceil(rate)` requests.
#[derive(Debug)]
pub struct RateLimiter {
    spacing: Duration,
    next_slot: Mutex<HashMap<String, Duration>>,
}

impl RateLimiter {
    /// # Panics
    ///
    /// If `requests_per_second` is not a positive finite number.
    pub fn new(requests_per_second: f64) -> Self {
        assert!(
            requests_per_second.is_finite() && requests_per_second > 0.0,
            "rate must be positive, got {requests_per_second}"
        );
        RateLimiter {
            // rounded up so float error never lets an extra request into a window
            spacing: Duration::from_nanos((1e9 / requests_per_second).ceil() as u64),
            next_slot: Mutex::new(HashMap::new()),
        }
    }

    pub fn spacing(&self) -> Duration {
        self.spacing
    }

    /// Reserves the next slot for `host` and waits for it.
    pub fn acquire(&self, host: &str, clock: &dyn Clock) {
        let slot = {
            let mut slots = self.next_slot.lock().unwrap();
            let now = clock.now();
            let next = slots.entry(host.to_string()).or_insert(now);
            let slot = (*next).max(now);
            *next = slot + self.spacing;
            slot
        };
        clock.sleep_until(slot);
    }
}

pub fn host_of(url: &str) -> String {
    url::Url::parse(url)
        .ok()
        .and_then(|u| u.host_str().map(str::to_string))
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub multiplier: f64,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay: Duration::from_millis(500),
            multiplier: 2.0,
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_attempts < 1 {
            return Err("max_attempts must be at least 1".into());
        }
        if !(self.multiplier.is_finite() && self.multiplier >= 1.0) {
            return Err(format!("multiplier must be >= 1, got {}", self.multiplier));
        }
        Ok(())
    }

    /// Wait before retry number `retry` (1 = first retry).
    pub fn backoff(&self, retry: u32) -> Duration {
        let exp = retry.saturating_sub(1).min(64) as i32;
        let secs = self.base_delay.as_secs_f64() * self.multiplier.powi(exp);
        if !secs.is_finite() || secs >= self.max_delay.as_secs_f64() {
            self.max_delay
        } else {
            Duration::from_secs_f64(secs)
        }
    }
}
