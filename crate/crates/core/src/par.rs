//! Chunked data-parallel evaluation with a sequential fallback.
//!
//! Work is always split into the same fixed chunks and the per-chunk
//! results are returned in chunk order, so any reduction the caller does
//! over them is independent of the thread count. Without the `parallel`
//! feature, [`Execution::Parallel`] runs sequentially.

use std::ops::Range;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if is_parallel_available() {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[inline]
pub fn is_parallel_available() -> bool {
    cfg!(feature = "parallel")
}

fn chunks(total: u64, chunk: u64) -> impl Iterator<Item = Range<u64>> + Clone {
    let chunk = chunk.max(1);
    (0..total.div_ceil(chunk)).map(move |k| k * chunk..((k + 1) * chunk).min(total))
}

impl Execution {
    /// Applies `f` to consecutive index ranges of length `chunk` covering
    /// `0..total`; results come back in range order.
    pub fn map_chunks<T, F>(self, total: u64, chunk: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(Range<u64>) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => chunks(total, chunk).map(f).collect(),
            Execution::Parallel => parallel_map(chunks(total, chunk).collect(), f),
        }
    }

    /// Maps `f` over items, preserving order.
    pub fn map<I, T, F>(self, items: &[I], f: F) -> Vec<T>
    where
        I: Sync,
        T: Send,
        F: Fn(&I) -> T + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            Execution::Parallel => parallel_map_ref(items, f),
        }
    }
}

/// Runs `f` with data-parallel work limited to `threads` workers. Without
/// the `parallel` feature this just calls `f`.
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(ranges: Vec<Range<u64>>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<u64>) -> T + Sync + Send,
{
    use rayon::prelude::*;
    ranges.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(ranges: Vec<Range<u64>>, f: F) -> Vec<T>
where
    F: Fn(Range<u64>) -> T,
{
    ranges.into_iter().map(f).collect()
}

#[cfg(feature = "parallel")]
fn parallel_map_ref<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map_ref<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    F: Fn(&I) -> T,
{
    items.iter().map(f).collect()
}
