//! Event storage with O(log n) range statistics.
//!
//! Segment evaluations need the number of events in `(a, b]` and, for the
//! shot-noise model, the sum of their times. Both come from a sorted time
//! array plus a prefix-sum array, so no evaluation ever walks the history.

use crate::error::{Error, Result};

/// An owned, sorted stream of event times.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventStream {
    times: Vec<f64>,
    // prefix[i] = sum of times[..i]
    prefix: Vec<f64>,
}

impl EventStream {
    /// Builds a stream from arbitrary times, sorting them.
    pub fn new(mut times: Vec<f64>) -> Result<Self> {
        if let Some(bad) = times.iter().find(|t| !t.is_finite()) {
            return Err(Error::invalid_param(format!("non-finite event time {bad}")));
        }
        times.sort_by(f64::total_cmp);
        Ok(Self::from_sorted_unchecked(times))
    }

    /// Builds a stream from times already sorted ascending.
    pub fn from_sorted(times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid_param("non-finite event time"));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid_param("event times are not sorted"));
        }
        Ok(Self::from_sorted_unchecked(times))
    }

    fn from_sorted_unchecked(times: Vec<f64>) -> Self {
        let mut prefix = Vec::with_capacity(times.len() + 1);
        let mut acc = 0.0;
        prefix.push(acc);
        for &t in &times {
            acc += t;
            prefix.push(acc);
        }
        Self { times, prefix }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the first event strictly greater than `t`.
    #[inline]
    fn upper(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x <= t)
    }

    /// Number of events in the half-open interval `(a, b]`.
    #[inline]
    pub fn count(&self, a: f64, b: f64) -> usize {
        if b <= a {
            return 0;
        }
        self.upper(b) - self.upper(a)
    }

    /// Sum of event times in `(a, b]`.
    #[inline]
    pub fn sum(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.prefix[self.upper(b)] - self.prefix[self.upper(a)]
    }

    /// Count and time-sum in `(a, b]` with a single pair of searches.
    #[inline]
    pub fn count_and_sum(&self, a: f64, b: f64) -> (usize, f64) {
        if b <= a {
            return (0, 0.0);
        }
        let (lo, hi) = (self.upper(a), self.upper(b));
        (hi - lo, self.prefix[hi] - self.prefix[lo])
    }

    /// Events in `(a, b]` as a slice.
    pub fn slice(&self, a: f64, b: f64) -> &[f64] {
        if b <= a {
            return &[];
        }
        &self.times[self.upper(a)..self.upper(b)]
    }

    /// A borrowed view restricted to `(start, end]`.
    pub fn window(&self, start: f64, end: f64) -> Result<EventWindow<'_>> {
        EventWindow::new(self, start, end)
    }
}

/// Events of a stream restricted to the half-open interval `(start, end]`.
#[derive(Debug, Clone, Copy)]
pub struct EventWindow<'a> {
    stream: &'a EventStream,
    start: f64,
    end: f64,
}

impl<'a> EventWindow<'a> {
    pub fn new(stream: &'a EventStream, start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) || end <= start {
            return Err(Error::invalid_param(format!(
                "event window ({start}, {end}] is empty or non-finite"
            )));
        }
        Ok(Self { stream, start, end })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn stream(&self) -> &'a EventStream {
        self.stream
    }

    pub fn events(&self) -> &'a [f64] {
        self.stream.slice(self.start, self.end)
    }

    /// Count in `(a, b]` clipped to the window.
    pub fn count(&self, a: f64, b: f64) -> usize {
        self.stream.count(a.max(self.start), b.min(self.end))
    }

    pub fn count_and_sum(&self, a: f64, b: f64) -> (usize, f64) {
        self.stream
            .count_and_sum(a.max(self.start), b.min(self.end))
    }
}
