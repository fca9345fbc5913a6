use rand::Rng;

use super::SacError;
use crate::env::{ACT_DIM, OBS_DIM};
use crate::nn::Tensor;

pub const DEFAULT_CAPACITY: usize = 300_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: [f64; OBS_DIM],
    pub action: [f64; ACT_DIM],
    pub reward: f64,
    pub next_state: [f64; OBS_DIM],
    pub done: bool,
}

/// A sampled minibatch, one row per transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Tensor,
    pub actions: Tensor,
    pub rewards: Tensor,
    pub next_states: Tensor,
    /// 1.0 for terminal transitions, 0.0 otherwise.
    pub dones: Tensor,
}

impl Batch {
    pub fn from_transitions(ts: &[&Transition]) -> Self {
        let n = ts.len();
        let mut s = Vec::with_capacity(n * OBS_DIM);
        let mut a = Vec::with_capacity(n * ACT_DIM);
        let mut s2 = Vec::with_capacity(n * OBS_DIM);
        for t in ts {
            s.extend_from_slice(&t.state);
            a.extend_from_slice(&t.action);
            s2.extend_from_slice(&t.next_state);
        }
        Self {
            states: Tensor::new(vec![n, OBS_DIM], s).expect("shape"),
            actions: Tensor::new(vec![n, ACT_DIM], a).expect("shape"),
            rewards: Tensor::vector(ts.iter().map(|t| t.reward).collect()),
            next_states: Tensor::new(vec![n, OBS_DIM], s2).expect("shape"),
            dones: Tensor::vector(ts.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push overwrites once the buffer is full.
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
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

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// Uniform indices with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>, SacError> {
        if self.len() < batch_size || self.is_empty() {
            return Err(SacError::BufferTooSmall {
                size: self.len(),
                requested: batch_size,
            });
        }
        Ok((0..batch_size).map(|_| rng.gen_range(0..self.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch, SacError> {
        let idx = self.sample_indices(batch_size, rng)?;
        let ts: Vec<&Transition> = idx.iter().map(|&i| &self.items[i]).collect();
        Ok(Batch::from_transitions(&ts))
    }
}
