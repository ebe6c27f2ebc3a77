//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper collects results in index order, so parallel and sequential
//! runs produce identical output for identical inputs.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How batched work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when the `parallel` feature is disabled.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

/// Like [`map_indexed`] but short-circuits on the first error in index order.
pub fn try_map_indexed<T, E, F>(exec: Execution, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(exec, n, f).into_iter().collect()
}
