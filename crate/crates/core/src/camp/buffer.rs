use ndarray::Array2;
use rand::Rng;

use super::DISC_INPUT_DIM;

/// Ring buffer of agent transitions stored as discriminator input rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBuffer {
    capacity: usize,
    rows: Vec<[f64; DISC_INPUT_DIM]>,
    next: usize,
    total_pushed: u64,
}

impl TransitionBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            rows: Vec::new(),
            next: 0,
            total_pushed: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total_pushed(&self) -> u64 {
        self.total_pushed
    }

    pub fn push(&mut self, row: [f64; DISC_INPUT_DIM]) {
        if self.rows.len() < self.capacity {
            self.rows.push(row);
        } else {
            self.rows[self.next] = row;
        }
        self.next = (self.next + 1) % self.capacity;
        self.total_pushed += 1;
    }

    /// Uniform sample with replacement; `None` when empty.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Array2<f64>> {
        if self.rows.is_empty() {
            return None;
        }
        let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..self.rows.len())).collect();
        Some(Array2::from_shape_fn((batch, DISC_INPUT_DIM), |(i, j)| self.rows[idx[i]][j]))
    }

    /// Flat snapshot `(rows, next, total_pushed)` for checkpoints.
    pub fn to_flat(&self) -> (Vec<f64>, usize, u64) {
        (self.rows.iter().flatten().copied().collect(), self.next, self.total_pushed)
    }

    pub fn from_flat(capacity: usize, data: &[f64], next: usize, total_pushed: u64) -> Option<Self> {
        if data.len() % DISC_INPUT_DIM != 0 {
            return None;
        }
        let rows: Vec<[f64; DISC_INPUT_DIM]> = data
            .chunks_exact(DISC_INPUT_DIM)
            .map(|c| c.try_into().unwrap())
            .collect();
        let capacity = capacity.max(1);
        if rows.len() > capacity || next >= capacity {
            return None;
        }
        Some(Self {
            capacity,
            rows,
            next,
            total_pushed,
        })
    }
}
