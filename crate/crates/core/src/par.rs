//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature and more than one thread, work runs on a
//! dedicated rayon pool. Results always come back in input order, so any
//! reduction done by the caller is independent of the thread count.

/// Environment variable holding the evaluation thread count (default 1).
pub const EVAL_THREADS_ENV: &str = "VARBPR_EVAL_THREADS";

pub struct Executor {
    threads: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor").field("threads", &self.threads).finish()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Executor::sequential()
    }
}

impl Executor {
    pub fn sequential() -> Self {
        Executor {
            threads: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// `threads <= 1` (or a build without `parallel`) runs sequentially.
    pub fn new(threads: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            if threads > 1 {
                match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                    Ok(pool) => return Executor { threads, pool: Some(pool) },
                    Err(e) => log::warn!("falling back to sequential execution: {e}"),
                }
            }
        }
        if threads > 1 && !cfg!(feature = "parallel") {
            log::warn!("built without the `parallel` feature; ignoring {threads} threads");
        }
        Executor::sequential()
    }

    /// Reads [`EVAL_THREADS_ENV`].
    pub fn from_env() -> Self {
        let threads = std::env::var(EVAL_THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .unwrap_or(1);
        Executor::new(threads)
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }

    /// Maps over `0..n`.
    pub fn map_range<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }
}
