//! Data-parallel helpers. With the `parallel` feature the work is spread
//! over the rayon pool; without it the same calls run sequentially.
//! [`force_sequential`] switches a parallel build to sequential execution
//! at run time, which the benchmarks use for side-by-side timing.

use std::sync::atomic::{AtomicBool, Ordering};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

static SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Forces sequential execution in a parallel build.
pub fn force_sequential(on: bool) {
    SEQUENTIAL.store(on, Ordering::SeqCst);
}

/// True when work is currently spread over threads.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !SEQUENTIAL.load(Ordering::SeqCst)
}

/// Maps `f` over `items`, preserving order.
pub fn map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    if is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}
