//! Deterministic chunked parallelism.
//!
//! Work is split into a fixed number of slots whose boundaries never depend
//! on the machine's thread count; workers pull slot indices from a shared
//! counter and results are recombined in slot order, so outputs are bitwise
//! identical no matter how many threads actually ran.

use std::sync::atomic::{AtomicUsize, Ordering};

/// Runs `f(slot)` for every slot in `0..n_slots` and returns the results in
/// slot order.
pub(crate) fn run_slots<T, F>(n_slots: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(n_slots);
    if workers <= 1 {
        return (0..n_slots).map(f).collect();
    }

    let next = AtomicUsize::new(0);
    let mut collected: Vec<Vec<(usize, T)>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut mine = Vec::new();
                    loop {
                        let slot = next.fetch_add(1, Ordering::Relaxed);
                        if slot >= n_slots {
                            break;
                        }
                        mine.push((slot, f(slot)));
                    }
                    mine
                })
            })
            .collect();
        for handle in handles {
            collected.push(handle.join().expect("worker panicked"));
        }
    });

    let mut slots: Vec<Option<T>> = (0..n_slots).map(|_| None).collect();
    for batch in collected {
        for (idx, value) in batch {
            slots[idx] = Some(value);
        }
    }
    slots.into_iter().map(|s| s.expect("slot not filled")).collect()
}

/// Splits `0..n` into at most `max_chunks` contiguous ranges of near-equal
/// size. Boundaries depend only on `n` and `max_chunks`.
pub(crate) fn chunk_ranges(n: usize, max_chunks: usize) -> Vec<std::ops::Range<usize>> {
    if n == 0 {
        return Vec::new();
    }
    let chunks = max_chunks.max(1).min(n);
    let base = n / chunks;
    let extra = n % chunks;
    let mut ranges = Vec::with_capacity(chunks);
    let mut start = 0;
    for i in 0..chunks {
        let len = base + usize::from(i < extra);
        ranges.push(start..start + len);
        start += len;
    }
    ranges
}
