//! Execution strategy for the data-parallel loops (dataset generation,
//! batch inference, gradient accumulation, evaluation sweeps).
//!
//! With the `parallel` feature the [`Exec::Parallel`] strategy runs on the
//! rayon pool; without it every strategy degrades to a sequential loop.
//! Results are always returned in index order, so output never depends on
//! the worker count.

/// How to run an index-parallel map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Maps `f` over `0..n`, returning results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Number of workers this strategy will use.
    pub fn workers(self) -> usize {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => rayon::current_num_threads(),
            _ => 1,
        }
    }
}

/// Configures the global worker pool size. Only meaningful once, before any
/// parallel work has started; later calls are ignored.
pub fn set_worker_count(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}
