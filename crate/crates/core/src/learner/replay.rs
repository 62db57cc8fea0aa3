//! Uniform replay buffer over environment transitions.

use rand::Rng;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<F> {
    pub obs: Vec<F>,
    pub action: Vec<F>,
    pub reward: F,
    pub next_obs: Vec<F>,
    pub done: bool,
}

/// Fixed-capacity ring buffer; once full, new transitions overwrite the
/// oldest ones.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<F> {
    capacity: usize,
    data: Vec<Transition<F>>,
    cursor: usize,
}

impl<F: Real> ReplayBuffer<F> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        Self { capacity, data: Vec::with_capacity(capacity.min(4096)), cursor: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition<F>) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition<F> {
        &self.data[i]
    }

    /// Uniform indices with replacement.
    pub fn sample_indices<R: Rng>(&self, rng: &mut R, batch: usize) -> Vec<usize> {
        assert!(!self.is_empty(), "cannot sample from an empty buffer");
        (0..batch).map(|_| rng.random_range(0..self.data.len())).collect()
    }
}
