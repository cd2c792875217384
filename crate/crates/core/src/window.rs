//! Range queries and the count-based sliding window.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeQuery {
    pub location: Point,
    pub radius: f64,
    /// Arrival order, starting at 1.
    pub seq: u64,
}

impl RangeQuery {
    pub fn new(location: Point, radius: f64, seq: u64) -> Result<Self> {
        if !location.is_finite() {
            return invalid("query location must be finite");
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return invalid(format!("query radius must be finite and positive, got {radius}"));
        }
        Ok(RangeQuery { location, radius, seq })
    }
}

/// The `capacity` most recent items in arrival order.
#[derive(Debug, Clone)]
pub struct SlidingWindow<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> SlidingWindow<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return invalid("window capacity must be positive");
        }
        Ok(SlidingWindow { capacity, items: VecDeque::with_capacity(capacity) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() == self.capacity
    }

    /// The item the next push would evict.
    pub fn oldest_if_full(&self) -> Option<&T> {
        if self.is_full() {
            self.items.front()
        } else {
            None
        }
    }

    /// Append, returning the evicted item when the window was full.
    pub fn push(&mut self, item: T) -> Option<T> {
        let evicted = if self.is_full() { self.items.pop_front() } else { None };
        self.items.push_back(item);
        evicted
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &T> + ExactSizeIterator {
        self.items.iter()
    }
}

/// One result slot: object id and its (approximate or exact) popularity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub id: u32,
    pub score: f64,
}
