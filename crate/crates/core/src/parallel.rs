//! Deterministic parallel maps over path indices.
//!
//! Work is split into chunks whose boundaries depend only on the problem
//! size, and results are returned in index order, so every reduction done by
//! the caller sees the same sequence of values whatever the thread count.

use crate::error::{Error, Result};
use rayon::prelude::*;

/// Paths per chunk for chunked reductions.
pub const CHUNK: u64 = 4096;

pub struct Pool {
    inner: rayon::ThreadPool,
    threads: usize,
}

impl std::fmt::Debug for Pool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pool").field("threads", &self.threads).finish()
    }
}

impl Pool {
    /// A pool with `threads` workers; 0 means one per available core.
    pub fn new(threads: usize) -> Result<Self> {
        let threads = if threads == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { threads };
        let inner = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Argument(format!("cannot start {threads} worker threads: {e}")))?;
        Ok(Pool { inner, threads })
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// f(0), …, f(n−1) in order.
    pub fn map<T, F>(&self, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        self.inner.install(|| (0..n).into_par_iter().map(&f).collect())
    }

    /// As [`Pool::map`]; on failure returns the error of the smallest index.
    pub fn try_map<T, F>(&self, n: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }

    /// Runs `f(range)` on consecutive ranges of [`CHUNK`] indices covering
    /// 0..n and returns the per-chunk results in order.
    pub fn chunks<T, F>(&self, n: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(std::ops::Range<u64>) -> Result<T> + Sync + Send,
    {
        let k = n.div_ceil(CHUNK);
        self.try_map(k, |c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
    }

    pub fn install<R: Send, F: FnOnce() -> R + Send>(&self, f: F) -> R {
        self.inner.install(f)
    }
}
