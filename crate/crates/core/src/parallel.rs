//! Execution policy for the data-parallel inner loops.
//!
//! Work is always split into fixed-size chunks whose boundaries depend only on
//! the problem size, and every chunk derives its own random stream from the
//! caller's seed. The parallel and sequential paths therefore produce
//! bit-identical results; the policy only decides who runs the chunks.
//!
//! Without the `parallel` feature, [`Execution::Parallel`] falls back to the
//! sequential loop.

use std::ops::Range;

/// Number of posterior draws handled by one unit of work.
pub const CHUNK_SIZE: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this policy will actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Splits `0..n` into consecutive chunks of at most [`CHUNK_SIZE`].
pub fn chunk_ranges(n: usize) -> Vec<Range<usize>> {
    (0..n.div_ceil(CHUNK_SIZE))
        .map(|c| c * CHUNK_SIZE..((c + 1) * CHUNK_SIZE).min(n))
        .collect()
}

/// Maps `f` over `items`, preserving order.
pub fn map_ordered<T, U, F>(exec: Execution, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items
            .par_iter()
            .enumerate()
            .map(|(i, item)| f(i, item))
            .collect();
    }
    let _ = exec;
    items.iter().enumerate().map(|(i, item)| f(i, item)).collect()
}

/// Runs `f` on each chunk of a row-major buffer with `width` values per row.
///
/// `f` receives the chunk index, the global row range and the mutable rows.
pub fn for_each_row_chunk<T, F>(exec: Execution, buffer: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, Range<usize>, &mut [T]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    let chunk_len = CHUNK_SIZE * width;
    let rows = buffer.len() / width;

    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        buffer
            .par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(c, block)| {
                let start = c * CHUNK_SIZE;
                f(c, start..(start + CHUNK_SIZE).min(rows), block)
            });
        return;
    }
    let _ = exec;
    for (c, block) in buffer.chunks_mut(chunk_len).enumerate() {
        let start = c * CHUNK_SIZE;
        f(c, start..(start + CHUNK_SIZE).min(rows), block);
    }
}
