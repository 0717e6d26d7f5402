//! Within-task replay memory: a fixed-capacity ring with strictly FIFO
//! eviction and seeded uniform sampling.

use rand::Rng;

use crate::rlenv::Transition;

#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    ring: Vec<Transition>,
    cursor: usize,
}

impl ReplayMemory {
    /// Panics if `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            ring: Vec::with_capacity(capacity.min(4096)),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    /// Insert a transition, evicting the oldest one once full.
    pub fn push(&mut self, transition: Transition) {
        if self.ring.len() < self.capacity {
            self.ring.push(transition);
        } else {
            self.ring[self.cursor] = transition;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.ring.iter()
    }

    /// Uniform sample of `count` distinct transitions, or `None` when the
    /// memory holds fewer than `count`.
    pub fn sample(&self, count: usize, rng: &mut impl Rng) -> Option<Vec<Transition>> {
        if count > self.ring.len() {
            return None;
        }
        // Partial Fisher-Yates over an index vector: only the first `count`
        // slots are settled.
        let n = self.ring.len();
        let mut indices: Vec<usize> = (0..n).collect();
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let j = rng.random_range(i..n);
            indices.swap(i, j);
            out.push(self.ring[indices[i]].clone());
        }
        Some(out)
    }
}
