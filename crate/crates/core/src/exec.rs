//! Index-ordered map over independent work items, on a rayon pool when the
//! `parallel` feature is enabled and sequentially otherwise.
//!
//! Results always come back in index order, so anything folded from them is
//! independent of the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How batch work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Executor {
    Sequential,
    /// The global rayon pool. Sequential without the `parallel` feature.
    #[default]
    Parallel,
    /// A dedicated pool with this many threads.
    Threads(usize),
}

impl Executor {
    /// `jobs == 1` is sequential, `jobs == 0` means all available cores.
    pub fn with_jobs(jobs: usize) -> Self {
        match jobs {
            0 => Executor::Parallel,
            1 => Executor::Sequential,
            n => Executor::Threads(n),
        }
    }

    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match *self {
            Executor::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Executor::Parallel => (0..n).into_par_iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Executor::Threads(threads) => match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
                Err(_) => (0..n).map(f).collect(),
            },
            #[cfg(not(feature = "parallel"))]
            Executor::Parallel | Executor::Threads(_) => (0..n).map(f).collect(),
        }
    }

    /// [`Executor::map`] over fallible work; the first error by index wins.
    pub fn try_map<T, E, F>(&self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}
