//! Time-major packing of variable-length sequences.
//!
//! Sequences are ordered by descending length. At step `t` the sequences
//! still running form a prefix of the batch, so the rows of step `t` are a
//! contiguous block and the recurrent state of step `t - 1` for those rows is
//! the leading part of the previous block. Padding is never materialized.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packing {
    lens: Vec<usize>,
    active: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl Packing {
    /// `lens` must be non-increasing and every length at least 1.
    pub fn new(lens: &[usize]) -> Result<Self> {
        if lens.is_empty() {
            return Err(Error::EmptyInput);
        }
        if lens.contains(&0) {
            return Err(Error::Shape("zero-length sequence".into()));
        }
        if lens.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Shape("lengths must be sorted descending".into()));
        }
        let steps = lens[0];
        let mut active = Vec::with_capacity(steps);
        let mut offsets = Vec::with_capacity(steps);
        let mut total = 0;
        for t in 0..steps {
            let a = lens.iter().take_while(|&&l| l > t).count();
            offsets.push(total);
            active.push(a);
            total += a;
        }
        Ok(Self { lens: lens.to_vec(), active, offsets, total })
    }

    pub fn batch_size(&self) -> usize {
        self.lens.len()
    }

    pub fn lens(&self) -> &[usize] {
        &self.lens
    }

    pub fn steps(&self) -> usize {
        self.active.len()
    }

    pub fn active(&self, t: usize) -> usize {
        self.active[t]
    }

    pub fn offset(&self, t: usize) -> usize {
        self.offsets[t]
    }

    /// Total number of real (unpadded) positions.
    pub fn total(&self) -> usize {
        self.total
    }

    /// Packed row of sequence `b` at position `t`.
    pub fn row(&self, b: usize, t: usize) -> usize {
        debug_assert!(t < self.lens[b]);
        self.offsets[t] + b
    }

    /// Packed rows of sequence `b` in time order.
    pub fn sequence_rows(&self, b: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.lens[b]).map(move |t| self.offsets[t] + b)
    }

    /// `perm[r]` is the packed row read when each sequence is reversed within
    /// its own length. The same packing describes the reversed batch, and the
    /// permutation is its own inverse.
    pub fn reverse_permutation(&self) -> Vec<usize> {
        let mut perm = vec![0; self.total];
        for (b, &len) in self.lens.iter().enumerate() {
            for t in 0..len {
                perm[self.row(b, t)] = self.row(b, len - 1 - t);
            }
        }
        perm
    }

    /// Sorts `lens` descending (stable) and returns the order used.
    pub fn sort_order(lens: &[usize]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..lens.len()).collect();
        order.sort_by(|&a, &b| lens[b].cmp(&lens[a]).then(a.cmp(&b)));
        order
    }
}
