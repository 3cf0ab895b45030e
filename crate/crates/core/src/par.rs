//! Index-ordered fan-out. Results always come back in index order, so any
//! reduction done by the caller is independent of scheduling.

#[cfg(feature = "parallel")]
pub(crate) fn try_map<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Send + Sync,
{
    use rayon::prelude::*;
    // Below this size thread hand-off costs more than the evaluations.
    if n < 256 {
        return (0..n).map(f).collect();
    }
    (0..n).into_par_iter().with_min_len(64).map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn try_map<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    F: Fn(usize) -> Result<T, E>,
{
    (0..n).map(f).collect()
}
