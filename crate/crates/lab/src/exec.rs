//! Rayon-backed path executor.

use cauchy_lab_core::sde::Executor;
use rayon::prelude::*;

/// Runs jobs on a rayon pool. Results come back in index order, so every
/// estimator sees the same inputs whatever the thread count.
pub struct Parallel {
    pool: Option<rayon::ThreadPool>,
}

impl Parallel {
    /// `None` uses rayon's global pool.
    pub fn new(threads: Option<usize>) -> anyhow::Result<Self> {
        let pool = match threads {
            Some(n) => Some(rayon::ThreadPoolBuilder::new().num_threads(n).build()?),
            None => None,
        };
        Ok(Parallel { pool })
    }
}

impl Executor for Parallel {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        let run = || (0..n).into_par_iter().map(&job).collect();
        match &self.pool {
            Some(pool) => pool.install(run),
            None => run(),
        }
    }
}
