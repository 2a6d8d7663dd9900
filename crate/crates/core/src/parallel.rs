//! Threading contracts for the trainers.
//!
//! Every trainer offers two modes: `Deterministic` replays one sequential
//! update order and is bit-reproducible given a seed; `Fast` shards work
//! across threads that update shared parameter matrices without locks,
//! word2vec-style, so results vary run to run but structural properties
//! still hold.

use std::cell::UnsafeCell;

/// Execution mode for trainers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreadMode {
    /// Single-threaded, bit-reproducible.
    Deterministic,
    /// Lock-free parallel over shards; 0 means one worker per logical CPU.
    Fast(usize),
}

impl ThreadMode {
    pub fn workers(self) -> usize {
        match self {
            ThreadMode::Deterministic => 1,
            ThreadMode::Fast(0) => std::thread::available_parallelism().map_or(1, |n| n.get()),
            ThreadMode::Fast(n) => n,
        }
    }
}

/// A parameter matrix shared across hogwild workers.
///
/// Rows are updated concurrently without synchronization. Torn reads/writes
/// of individual f64 lanes are accepted in `Fast` mode; the trainers only
/// rely on the asymptotic behavior of the optimization, never on exact
/// values, in that mode.
pub struct SharedMatrix {
    data: UnsafeCell<Vec<f64>>,
    cols: usize,
}

// Concurrent mutation is the point; see the struct docs for the contract.
unsafe impl Sync for SharedMatrix {}

impl SharedMatrix {
    pub fn new(data: Vec<f64>, cols: usize) -> Self {
        debug_assert_eq!(data.len() % cols.max(1), 0);
        SharedMatrix { data: UnsafeCell::new(data), cols }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Mutable view of one row.
    ///
    /// # Safety
    /// Callers may race on overlapping rows only under the hogwild contract:
    /// plain data races on f64 values, no memory reclamation involved.
    #[allow(clippy::mut_from_ref)]
    pub unsafe fn row_mut(&self, row: usize) -> &mut [f64] {
        let vec = &mut *self.data.get();
        &mut vec[row * self.cols..(row + 1) * self.cols]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data.into_inner()
    }
}
