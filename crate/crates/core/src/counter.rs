use std::sync::atomic::{AtomicU64, Ordering};

/// Shared flop-proxy counter: every O(n) kernel invocation (transform,
/// eigenvalue count, eigenvector recurrence) adds the block size.
#[derive(Debug, Default)]
pub struct OpCounter(AtomicU64);

impl OpCounter {
    pub fn add(&self, n: usize) {
        self.0.fetch_add(n as u64, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}
