//! Bounded worker pool with ordered aggregation.
//!
//! Work items are indexed; each item's result depends only on its index
//! (its stream key is derived from it), and results come back in index
//! order, so output never depends on the number of workers.

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::{CliError, CliResult};

pub struct WorkerPool {
    workers: usize,
    pool: ThreadPool,
}

impl WorkerPool {
    pub fn new(workers: usize) -> CliResult<Self> {
        let workers = workers.max(1);
        let pool = ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("bbmx-worker-{i}"))
            .build()
            .map_err(|e| CliError::Pool(e.to_string()))?;
        Ok(Self { workers, pool })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// `f(0), …, f(n-1)` evaluated on the pool, returned in index order.
    /// If any item fails, one of the errors is returned.
    pub fn map<T, E, F>(&self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }

    /// Runs `f` inside the pool so nested parallel iterators use its threads.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_results_independent_of_workers() {
        let work = |i: usize| -> Result<u64, String> { Ok((i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)) };
        let a = WorkerPool::new(1).unwrap().map(1000, work).unwrap();
        let b = WorkerPool::new(4).unwrap().map(1000, work).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors_propagate() {
        let r: Result<Vec<usize>, String> = WorkerPool::new(3)
            .unwrap()
            .map(100, |i| if i == 42 { Err(format!("bad {i}")) } else { Ok(i) });
        assert_eq!(r.unwrap_err(), "bad 42");
    }
}
