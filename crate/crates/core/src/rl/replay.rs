//! Fixed-capacity experience replay with uniform sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: usize,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub terminal: bool,
    /// Actions available in `s_next`; empty means all of them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub next_legal: Vec<bool>,
}

impl Transition {
    pub fn new(s: Vec<f64>, a: usize, r: f64, s_next: Vec<f64>, terminal: bool) -> Self {
        Transition {
            s,
            a,
            r,
            s_next,
            terminal,
            next_legal: Vec::new(),
        }
    }

    pub fn with_next_legal(mut self, legal: &[bool]) -> Self {
        self.next_legal = legal.to_vec();
        self
    }
}

/// Ring buffer: once full, new transitions overwrite the oldest ones.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayMemory {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
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

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        self.sample_indices(n, rng)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }
}
