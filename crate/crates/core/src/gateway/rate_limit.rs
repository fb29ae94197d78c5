use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Caps concurrent calls and calls started per sliding window.
#[derive(Debug)]
pub struct RateLimiter {
    max_in_flight: usize,
    max_per_window: usize,
    window: Duration,
    state: Mutex<State>,
    cv: Condvar,
}

#[derive(Debug, Default)]
struct State {
    in_flight: usize,
    peak_in_flight: usize,
    started: VecDeque<Instant>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateLimiterStats {
    pub in_flight: usize,
    pub peak_in_flight: usize,
}

/// Holds one in-flight slot; released on drop.
pub struct Permit<'a> {
    limiter: &'a RateLimiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.limiter.state.lock().unwrap_or_else(|p| p.into_inner());
        st.in_flight -= 1;
        drop(st);
        self.limiter.cv.notify_all();
    }
}

impl RateLimiter {
    /// Both limits must be > 0; zero is clamped to 1.
    pub fn new(max_in_flight: usize, max_per_window: usize, window: Duration) -> Self {
        Self {
            max_in_flight: max_in_flight.max(1),
            max_per_window: max_per_window.max(1),
            window,
            state: Mutex::new(State::default()),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().unwrap_or_else(|p| p.into_inner());
        loop {
            let now = Instant::now();
            while st.started.front().is_some_and(|t| now.duration_since(*t) >= self.window) {
                st.started.pop_front();
            }
            let window_full = st.started.len() >= self.max_per_window;
            if st.in_flight < self.max_in_flight && !window_full {
                st.in_flight += 1;
                st.peak_in_flight = st.peak_in_flight.max(st.in_flight);
                st.started.push_back(now);
                return Permit { limiter: self };
            }
            st = if window_full {
                let oldest = *st.started.front().expect("window is full");
                let wait = self.window.saturating_sub(now.duration_since(oldest));
                self.cv.wait_timeout(st, wait).unwrap_or_else(|p| p.into_inner()).0
            } else {
                self.cv.wait(st).unwrap_or_else(|p| p.into_inner())
            };
        }
    }

    pub fn stats(&self) -> RateLimiterStats {
        let st = self.state.lock().unwrap_or_else(|p| p.into_inner());
        RateLimiterStats { in_flight: st.in_flight, peak_in_flight: st.peak_in_flight }
    }
}
