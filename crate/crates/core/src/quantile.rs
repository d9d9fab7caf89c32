//! Exact sliding-window quantiles over the trailing `window_len` observations.
//!
//! Quantiles follow the nearest-rank convention: level `q` over `n` values
//! returns the element of rank `max(1, ceil(q * n))` in ascending order, so
//! `q = 0` is the minimum, `q = 1` the maximum, and the result is always an
//! observed value.

use std::collections::VecDeque;

use crate::error::{invalid, Error, Result};

/// Slack absorbing binary rounding in `q * n` (e.g. `0.95 * 20`).
const RANK_EPS: f64 = 1e-9;

/// 1-based nearest-rank index for level `q` over `n > 0` values.
pub fn nearest_rank(q: f64, n: usize) -> usize {
    let r = (q * n as f64 - RANK_EPS).ceil();
    (r.max(1.0) as usize).min(n)
}

fn check_level(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return invalid(format!("quantile level {q} outside [0, 1]"));
    }
    Ok(())
}

/// Trailing-window order statistics.
///
/// The window is kept twice: a FIFO ring for eviction order and a sorted
/// array for rank queries. Locating an element is a binary search; rank
/// queries are O(1).
#[derive(Debug, Clone)]
pub struct SlidingQuantile {
    window_len: usize,
    /// Ring of arrivals; once full, `head` is the oldest slot.
    ring: Vec<f64>,
    head: usize,
    sorted: Vec<f64>,
}

impl SlidingQuantile {
    pub fn new(window_len: usize) -> Result<Self> {
        if window_len == 0 {
            return invalid("window length must be at least 1");
        }
        Ok(Self {
            window_len,
            ring: Vec::with_capacity(window_len),
            head: 0,
            sorted: Vec::with_capacity(window_len),
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn clear(&mut self) {
        self.ring.clear();
        self.sorted.clear();
        self.head = 0;
    }

    /// Observations in arrival order, oldest first.
    pub fn buffer(&self) -> impl Iterator<Item = f64> + '_ {
        self.ring[self.head..].iter().chain(&self.ring[..self.head]).copied()
    }

    /// Ascending view of the window.
    pub fn ordered(&self) -> &[f64] {
        &self.sorted
    }

    #[inline]
    pub fn push(&mut self, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::InvalidInput(format!("cannot push non-finite value {value}")));
        }
        if self.ring.len() == self.window_len {
            let old = std::mem::replace(&mut self.ring[self.head], value);
            self.head += 1;
            if self.head == self.window_len {
                self.head = 0;
            }
            let i = self.sorted.partition_point(|&x| x < old);
            debug_assert_eq!(self.sorted[i], old);
            let j = self.sorted.partition_point(|&x| x < value);
            // Replace in place, moving only the elements between the two slots.
            if j <= i {
                self.sorted.copy_within(j..i, j + 1);
                self.sorted[j] = value;
            } else {
                self.sorted.copy_within(i + 1..j, i);
                self.sorted[j - 1] = value;
            }
        } else {
            self.ring.push(value);
            let at = self.sorted.partition_point(|&x| x < value);
            self.sorted.insert(at, value);
        }
        Ok(())
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        check_level(q)?;
        if self.sorted.is_empty() {
            return invalid("quantile of an empty window");
        }
        Ok(self.sorted[nearest_rank(q, self.sorted.len()) - 1])
    }

    /// Quantile without argument checks; `None` on an empty window.
    #[inline]
    pub(crate) fn quantile_unchecked(&self, q: f64) -> Option<f64> {
        if self.sorted.is_empty() {
            None
        } else {
            Some(self.sorted[nearest_rank(q, self.sorted.len()) - 1])
        }
    }
}

/// Linear-rescan reference: keeps the raw window and sorts a copy per query.
#[derive(Debug, Clone)]
pub struct RescanQuantile {
    window_len: usize,
    fifo: VecDeque<f64>,
}

impl RescanQuantile {
    pub fn new(window_len: usize) -> Result<Self> {
        if window_len == 0 {
            return invalid("window length must be at least 1");
        }
        Ok(Self {
            window_len,
            fifo: VecDeque::new(),
        })
    }

    pub fn push(&mut self, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::InvalidInput(format!("cannot push non-finite value {value}")));
        }
        if self.fifo.len() == self.window_len {
            self.fifo.pop_front();
        }
        self.fifo.push_back(value);
        Ok(())
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        check_level(q)?;
        if self.fifo.is_empty() {
            return invalid("quantile of an empty window");
        }
        let mut v: Vec<f64> = self.fifo.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        Ok(v[nearest_rank(q, v.len()) - 1])
    }
}
