//! Index-parallel map used for episode rollouts.
//!
//! Results are always returned in index order, so callers that derive every
//! item's randomness from its index get identical output in either mode.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled, otherwise
    /// falls back to sequential execution.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && *self == Execution::Parallel
    }
}

pub fn map_indexed<T, F>(n: usize, execution: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = execution;
    (0..n).map(f).collect()
}
