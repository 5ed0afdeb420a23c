//! Data-parallel map helpers.
//!
//! Monte Carlo replications, multistart optimization, and finite-difference
//! likelihood evaluations are embarrassingly parallel: each task owns its
//! inputs (and, where randomness is involved, its own seeded RNG stream), so
//! results are identical whether the `parallel` feature is on or off.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is enabled.
/// Output order always matches index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    map_indexed_seq(n, f)
}

/// Sequential twin of [`map_indexed`], kept available so benchmarks can
/// compare the two paths within one build.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    (0..n).map(f).collect()
}
