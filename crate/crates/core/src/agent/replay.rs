use std::collections::VecDeque;

use rand::Rng;

use crate::dprl::PrivatizedTransition;
use crate::error::{input, Result};

/// Fixed-capacity FIFO of transitions; the oldest entry is evicted first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<PrivatizedTransition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(input("replay capacity must be positive"));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
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

    pub fn push(&mut self, transition: PrivatizedTransition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(transition);
    }

    pub fn iter(&self) -> impl Iterator<Item = &PrivatizedTransition> {
        self.items.iter()
    }

    /// Uniform draw over current contents. Panics on an empty buffer.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &PrivatizedTransition {
        &self.items[rng.gen_range(0..self.items.len())]
    }
}
