//! Popularity lookup table and the reuse rule.

use std::collections::{HashMap, VecDeque};

use super::scale::Mass;

/// True iff a cached value sharing `shared` of the `w` window queries may be
/// reused: `shared ≥ 2w/3`.
pub fn reusable(shared: usize, w: usize) -> bool {
    3 * shared >= 2 * w
}

/// Masses computed for earlier windows, keyed by object.
#[derive(Debug, Clone, Default)]
pub struct LookupTable {
    entries: HashMap<u32, (u64, Mass)>,
    log: VecDeque<(u64, u32)>,
    horizon: u64,
}

impl LookupTable {
    /// Keeps values for the most recent `⌊2·capacity/3⌋` windows.
    pub fn new(capacity: usize) -> Self {
        LookupTable { entries: HashMap::new(), log: VecDeque::new(), horizon: (2 * capacity / 3) as u64 }
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn insert(&mut self, id: u32, window: u64, mass: Mass) {
        self.entries.insert(id, (window, mass));
        self.log.push_back((window, id));
    }

    pub fn get(&self, id: u32) -> Option<(u64, Mass)> {
        self.entries.get(&id).copied()
    }

    /// Drop entries older than the horizon relative to window `now`.
    pub fn expire(&mut self, now: u64) {
        while let Some(&(w, id)) = self.log.front() {
            if now - w.min(now) <= self.horizon {
                break;
            }
            self.log.pop_front();
            if self.entries.get(&id).is_some_and(|e| e.0 == w) {
                self.entries.remove(&id);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold() {
        assert!(reusable(400, 400));
        assert!(reusable(399, 400));
        assert!(!reusable(200, 400));
        assert!(reusable(267, 400));
        assert!(!reusable(266, 400));
    }

    #[test]
    fn table_expires_old_windows() {
        let mut t = LookupTable::new(30);
        assert_eq!(t.horizon(), 20);
        t.insert(1, 5, 10);
        t.insert(2, 10, 20);
        t.insert(1, 12, 11);
        t.expire(25);
        assert_eq!(t.get(1), Some((12, 11)));
        assert_eq!(t.get(2), Some((10, 20)));
        t.expire(31);
        assert_eq!(t.get(2), None);
        assert_eq!(t.get(1), Some((12, 11)));
        t.expire(33);
        assert!(t.is_empty());
    }
}
