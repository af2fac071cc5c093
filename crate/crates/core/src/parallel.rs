//! Thread-count independent parallel helpers.
//!
//! Work over `0..n` is cut into fixed-size chunks whose boundaries depend only
//! on `n`. Chunks run on the rayon pool and their partial results are merged in
//! chunk order, so floating-point reductions come out bitwise identical for any
//! number of workers.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "SNRLAB_THREADS";

/// Items per reduction chunk.
pub const CHUNK: usize = 64;

/// Worker count from `SNRLAB_THREADS`, or `None` when unset.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::InvalidArgument(format!("{THREADS_ENV}={v} is not a positive integer"))),
        },
    }
}

/// Runs `f` inside a pool of `threads` workers (rayon's default when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Order-preserving parallel map over `0..n`.
pub fn map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Folds each chunk of `0..n` sequentially from `init()`, then merges the
/// chunk results left to right.
pub fn chunked_reduce<A, I, F, M>(n: usize, init: I, fold: F, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize) -> Result<()> + Sync + Send,
    M: Fn(&mut A, A) -> Result<()>,
{
    let chunks: Vec<A> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                fold(&mut acc, i)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = init();
    for part in chunks {
        merge(&mut total, part)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarStats;

    fn reduce(n: usize) -> ScalarStats {
        chunked_reduce(
            n,
            ScalarStats::new,
            |s, i| {
                s.push(((i as f64) * 0.37).sin() * 1e3 + 1e-7 * i as f64);
                Ok(())
            },
            |a, b| {
                a.merge(&b);
                Ok(())
            },
        )
        .unwrap()
    }

    #[test]
    fn reduction_is_worker_independent() {
        let one = with_threads(Some(1), || reduce(10_007)).unwrap();
        let four = with_threads(Some(4), || reduce(10_007)).unwrap();
        assert_eq!(one.mean().to_bits(), four.mean().to_bits());
        assert_eq!(one.variance().to_bits(), four.variance().to_bits());
        assert_eq!(one.count(), 10_007);
    }

    #[test]
    fn map_preserves_order() {
        let v = with_threads(Some(3), || map_indexed(500, |i| Ok(i * 2))).unwrap().unwrap();
        assert!(v.iter().enumerate().all(|(i, x)| *x == 2 * i));
    }

    #[test]
    fn errors_propagate() {
        let r = chunked_reduce(100, || 0usize, |_, i| if i == 70 { Err(Error::Empty("x")) } else { Ok(()) }, |_, _| Ok(()));
        assert!(r.is_err());
    }
}
