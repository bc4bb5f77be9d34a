//! Order-preserving map helpers with a rayon backend behind the `parallel`
//! feature. Every reduction downstream consumes the collected results in
//! index order, so outputs are bit-identical whichever backend runs.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Exec {
    parallel: bool,
}

impl Exec {
    pub const SEQUENTIAL: Exec = Exec { parallel: false };

    /// Data-parallel execution when compiled with `parallel`, else sequential.
    pub fn parallel() -> Exec {
        Exec { parallel: cfg!(feature = "parallel") }
    }

    pub fn is_parallel(&self) -> bool {
        self.parallel
    }

    pub fn map_range<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.parallel {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}

/// Runs `f` on a dedicated pool of `threads` workers (sequential builds just
/// call `f`).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
