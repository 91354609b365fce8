//! FIFO experience replay with uniform sampling.

use crate::env::DoneKind;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Clone, Debug)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Raw policy output in [-1,1]^3, before mapping to control ranges.
    pub action: [f64; 3],
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done_kind: DoneKind,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("buffer holds {size} transitions, need at least {need}")]
    Underfilled { size: usize, need: usize },
}

/// Ring store: insertion beyond capacity evicts the oldest entry.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            data: Vec::with_capacity(capacity),
            capacity,
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    /// Draw `n` indices uniformly with replacement.
    pub fn sample<'a>(&'a self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<&'a Transition>, ReplayError> {
        if self.data.len() < n {
            return Err(ReplayError::Underfilled { size: self.data.len(), need: n });
        }
        Ok((0..n)
            .map(|_| &self.data[rng.random_range(0..self.data.len())])
            .collect())
    }
}
