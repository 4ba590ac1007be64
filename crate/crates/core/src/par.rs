//! Block-parallel helpers with a deterministic reduction order.
//!
//! Work over samples is cut into fixed blocks of [`BLOCK`] indices. Each block
//! is reduced sequentially and the per-block partials are combined in block
//! order, so a result never depends on the number of worker threads or on
//! whether the `parallel` feature is enabled.
//!
//! With the `parallel` feature (default) blocks are spread over the rayon
//! pool. [`run_sequential`] forces the sequential path for the current thread,
//! which is how benchmarks compare both paths inside one build.

use std::cell::Cell;
use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Samples per reduction block.
pub const BLOCK: usize = 256;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Whether block work on this thread is dispatched to the rayon pool.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(Cell::get)
}

/// Runs `f` with all block work on the calling thread.
pub fn run_sequential<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            FORCE_SEQUENTIAL.with(|c| c.set(self.0));
        }
    }
    let _restore = Restore(FORCE_SEQUENTIAL.with(|c| c.replace(true)));
    f()
}

/// Caps the global rayon pool at `threads` workers. Has no effect without the
/// `parallel` feature, or once the global pool has been built.
pub fn configure_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}

fn block_ranges(len: usize) -> impl Iterator<Item = Range<usize>> + Clone {
    (0..len.div_ceil(BLOCK)).map(move |b| b * BLOCK..((b + 1) * BLOCK).min(len))
}

/// Applies `f` to each block range of `0..len`, returning results in block
/// order.
pub fn map_blocks<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() && len > BLOCK {
        let blocks = len.div_ceil(BLOCK);
        return (0..blocks)
            .into_par_iter()
            .map(|b| f(b * BLOCK..((b + 1) * BLOCK).min(len)))
            .collect();
    }
    block_ranges(len).map(f).collect()
}

/// Writes `f(i)` into `out[i]` for every index.
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() && out.len() > BLOCK {
        out.par_chunks_mut(BLOCK).enumerate().for_each(|(b, chunk)| {
            for (k, slot) in chunk.iter_mut().enumerate() {
                *slot = f(b * BLOCK + k);
            }
        });
        return;
    }
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = f(i);
    }
}

/// Runs independent jobs, in parallel when enabled. Output order follows
/// input order.
pub fn map_items<I, T, F>(items: Vec<I>, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return items.into_par_iter().map(f).collect();
    }
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_cover_range_in_order() {
        let out = map_blocks(1000, |r| (r.start, r.end));
        assert_eq!(out.first(), Some(&(0, BLOCK)));
        assert_eq!(out.last().unwrap().1, 1000);
        for pair in out.windows(2) {
            assert_eq!(pair[0].1, pair[1].0);
        }
        assert!(map_blocks(0, |r| r.len()).is_empty());
    }

    #[test]
    fn sequential_override_restores() {
        let before = is_parallel();
        run_sequential(|| assert!(!is_parallel()));
        assert_eq!(is_parallel(), before);
    }

    #[test]
    fn fill_matches_index() {
        let mut v = vec![0.0; 700];
        fill(&mut v, |i| i as f64);
        assert!(v.iter().enumerate().all(|(i, &x)| x == i as f64));
    }
}
