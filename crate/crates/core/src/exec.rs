//! Data-parallel execution helpers.
//!
//! With the `parallel` feature (default) the maps below fan out over rayon;
//! without it they run sequentially. Results are collected in input order and
//! every task derives its own RNG stream, so output is identical for any
//! worker count.

/// Map `f` over `0..n`, preserving index order.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Map `f` over a slice with indices, preserving order.
pub fn map_indexed<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

/// Run `f` on a pool with `workers` threads (0 = rayon default). Without the
/// `parallel` feature the closure runs on the current thread regardless.
pub fn with_workers<U, F>(workers: usize, f: F) -> U
where
    U: Send,
    F: FnOnce() -> U + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers == 0 {
            f()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("failed to build thread pool");
            pool.install(f)
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        f()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_preserves_order() {
        let v = map_range(100, |i| i * i);
        assert_eq!(v[7], 49);
        assert_eq!(v.len(), 100);
    }

    #[test]
    fn same_result_for_any_worker_count() {
        let a = with_workers(1, || map_range(1000, |i| (i as f64).sqrt().sin()));
        let b = with_workers(4, || map_range(1000, |i| (i as f64).sqrt().sin()));
        assert_eq!(a, b);
    }
}
