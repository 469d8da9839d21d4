//! Order-preserving parallel map over indices using scoped threads.
//!
//! Results are identical for any worker count because every item is
//! computed independently and reductions happen afterwards in index order.
//! Calls made from inside a worker run sequentially, so nested maps do not
//! multiply the thread count.

use std::cell::Cell;
use std::num::NonZeroUsize;

thread_local! {
    static IN_WORKER: Cell<bool> = const { Cell::new(false) };
}

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "CSBAYES_WORKERS";

pub fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(NonZeroUsize::get).unwrap_or(1))
}

/// `(0..n).map(f).collect()`, spread over [`workers`] threads.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let w = workers().min(n);
    if w <= 1 || IN_WORKER.with(Cell::get) {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(w);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..w)
            .map(|t| {
                let lo = t * chunk;
                let hi = ((t + 1) * chunk).min(n);
                scope.spawn(move || {
                    IN_WORKER.with(|c| c.set(true));
                    (lo..hi).map(f).collect::<Vec<T>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Like [`map_indexed`] but stops at the first error (in index order).
pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync,
{
    map_indexed(n, f).into_iter().collect()
}
