//! Data-parallel helpers with a sequential fallback.
//!
//! Work is always split into the same index ranges and results are returned
//! in index order, so the parallel and sequential paths produce bit-identical
//! output. Without the `parallel` feature every call runs sequentially.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

static MODE: AtomicU8 = AtomicU8::new(if cfg!(feature = "parallel") { 1 } else { 0 });

/// Select the process-wide execution mode.
pub fn set_mode(mode: Exec) {
    MODE.store(matches!(mode, Exec::Parallel) as u8, Ordering::Relaxed);
}

pub fn mode() -> Exec {
    if cfg!(feature = "parallel") && MODE.load(Ordering::Relaxed) == 1 {
        Exec::Parallel
    } else {
        Exec::Sequential
    }
}

/// `(0..n).map(f)` collected in order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode() {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Split `0..n` into fixed-size ranges and map each range, in order.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk);
    map_indexed(count, |i| f(i * chunk..((i + 1) * chunk).min(n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range_in_order() {
        let ranges = map_chunks(10, 4, |r| r);
        assert_eq!(ranges, vec![0..4, 4..8, 8..10]);
        assert!(map_chunks(0, 4, |r| r).is_empty());
    }

    #[test]
    fn indexed_preserves_order() {
        let v = map_indexed(100, |i| i * 2);
        assert_eq!(v, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }
}
