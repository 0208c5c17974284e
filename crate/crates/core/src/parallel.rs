//! Process-wide parallelism switch.
//!
//! Per-example work (batch gradients, pair sampling, eval decoding) is
//! mapped into an indexed result vector and reduced in index order, so
//! the parallel path is bit-identical to the serial one. The switch only
//! controls threading, never results; `--deterministic` runs force it
//! off anyway as a belt-and-braces guarantee.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;

static SINGLE_THREADED: AtomicBool = AtomicBool::new(false);

pub fn set_single_threaded(v: bool) {
    SINGLE_THREADED.store(v, Ordering::SeqCst);
}

pub fn single_threaded() -> bool {
    SINGLE_THREADED.load(Ordering::SeqCst)
}

/// Order-preserving map over a slice, parallel unless the process is in
/// single-threaded mode.
pub fn map_indexed<T: Sync, R: Send>(items: &[T], f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    if single_threaded() {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    } else {
        items
            .par_iter()
            .enumerate()
            .map(|(i, t)| f(i, t))
            .collect()
    }
}
