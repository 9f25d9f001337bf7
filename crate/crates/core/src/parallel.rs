//! Order-preserving data-parallel maps.
//!
//! With the `parallel` feature, [`Executor::threads`] runs work on a rayon
//! pool; without it every executor is sequential. Maps always return results
//! in index order, and callers reduce them sequentially, so parallel and
//! sequential runs produce bitwise identical output.

#[cfg(feature = "parallel")]
use std::sync::Arc;

#[derive(Clone, Debug, Default)]
pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl Executor {
    pub fn sequential() -> Self {
        Executor::default()
    }

    /// `threads == 1` is sequential; `0` uses one worker per core.
    pub fn threads(threads: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            if threads != 1 {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .expect("failed to build thread pool");
                return Executor {
                    pool: Some(Arc::new(pool)),
                };
            }
        }
        let _ = threads;
        Executor::sequential()
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    pub fn num_threads(&self) -> usize {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.current_num_threads();
        }
        1
    }

    /// `(0..n).map(f).collect()`, possibly in parallel.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }

    /// Like [`Executor::map`] but short-circuits on the first error in index order.
    pub fn try_map<T, E, F>(&self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        for exec in [Executor::sequential(), Executor::threads(4)] {
            let out = exec.map(100, |i| i * i);
            assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
        }
    }

    #[test]
    fn try_map_reports_first_error() {
        let exec = Executor::threads(3);
        let r: Result<Vec<usize>, usize> =
            exec.try_map(50, |i| if i % 7 == 6 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(6));
    }

    #[test]
    fn threads_one_is_sequential() {
        assert!(!Executor::threads(1).is_parallel());
        assert_eq!(Executor::threads(1).num_threads(), 1);
    }
}
