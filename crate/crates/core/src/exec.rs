//! Execution policy for the data-parallel loops: per-grid solves inside a
//! combination plan and per-line sine transforms inside a solve.
//!
//! With the `parallel` feature (default) [`Exec::Parallel`] runs on the
//! current rayon pool. Without it every policy degrades to the sequential
//! path. Results never depend on the policy: each work item is computed
//! independently and reductions happen afterwards in a fixed order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Maps `f` over `items`, preserving input order in the output.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Runs `f` on consecutive disjoint chunks of `data`, giving each worker
    /// a scratch value built by `init`.
    pub fn for_each_chunk_mut<T, S, I, F>(self, data: &mut [T], chunk: usize, init: I, f: F)
    where
        T: Send,
        I: Fn() -> S + Sync + Send,
        F: Fn(&mut S, &mut [T]) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            data.par_chunks_mut(chunk).for_each_init(&init, |s, c| f(s, c));
            return;
        }
        let mut scratch = init();
        data.chunks_mut(chunk).for_each(|c| f(&mut scratch, c));
    }
}
