//! Replica-level data parallelism.
//!
//! With the `parallel` feature the indexed map runs on the rayon pool;
//! without it the same closure runs sequentially. Either way the output is
//! in index order, so merged results are identical.

/// Map `f` over `0..n`, in parallel when the `parallel` feature is enabled.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Sequential reference path, always available.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Configure the global worker pool; `None` reads `KPP_WORKERS`.
///
/// Returns the worker count in effect. Calling it more than once is harmless.
pub fn init_workers(requested: Option<usize>) -> usize {
    let requested = requested.or_else(|| {
        std::env::var("KPP_WORKERS").ok().and_then(|v| v.trim().parse().ok())
    });
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = requested.filter(|&n| n > 0) {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = requested;
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let f = |i: usize| (i as f64).sqrt() * 3.0;
        assert_eq!(map_indexed(1000, f), map_indexed_seq(1000, f));
    }
}
