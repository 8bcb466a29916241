//! Sequential / data-parallel execution switch.
//!
//! Every parallel path is an element-wise map with an ordered collect, so
//! results are bitwise identical whichever variant runs. Reductions always
//! happen sequentially on the collected values.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon-backed; identical to `Sequential` when the `parallel` feature is off.
    Parallel,
    /// Parallel when the feature is on and more than one worker thread exists.
    #[default]
    Auto,
}

/// Minimum elements per parallel task for grid sweeps.
#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 1024;

impl Execution {
    pub fn is_parallel(self) -> bool {
        match self {
            Execution::Sequential => false,
            Execution::Parallel => cfg!(feature = "parallel"),
            Execution::Auto => cfg!(feature = "parallel") && worker_threads() > 1,
        }
    }

    /// Ordered map over a slice.
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

    /// Fill `out[i] = f(i)` over index chunks.
    pub fn fill<F>(self, out: &mut [f64], f: F)
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && out.len() >= 2 * MIN_CHUNK {
            out.par_chunks_mut(MIN_CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| {
                    let base = c * MIN_CHUNK;
                    for (k, slot) in chunk.iter_mut().enumerate() {
                        *slot = f(base + k);
                    }
                });
            return;
        }
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f(i);
        }
    }

    /// Fill two outputs at once: `(a[i], b[i]) = f(i)`.
    pub fn fill2<F>(self, a: &mut [f64], b: &mut [f64], f: F)
    where
        F: Fn(usize) -> (f64, f64) + Sync + Send,
    {
        debug_assert_eq!(a.len(), b.len());
        #[cfg(feature = "parallel")]
        if self.is_parallel() && a.len() >= 2 * MIN_CHUNK {
            a.par_chunks_mut(MIN_CHUNK)
                .zip(b.par_chunks_mut(MIN_CHUNK))
                .enumerate()
                .for_each(|(c, (ca, cb))| {
                    let base = c * MIN_CHUNK;
                    for k in 0..ca.len() {
                        let (x, y) = f(base + k);
                        ca[k] = x;
                        cb[k] = y;
                    }
                });
            return;
        }
        for i in 0..a.len() {
            let (x, y) = f(i);
            a[i] = x;
            b[i] = y;
        }
    }
}

pub fn worker_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Cap the global worker pool. Only the first call has an effect.
pub fn configure_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        false
    }
}
