//! Data-parallel helpers. With the `parallel` feature (default) the inner
//! loops run on rayon; without it they fall back to sequential iteration.
//! The `*_seq` variants are always sequential and exist so benchmarks can
//! compare both paths in one build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `op` over `items`, in parallel when the feature is enabled.
pub fn map_indexed<T, F>(count: usize, op: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..count).into_par_iter().map(op).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(op).collect()
    }
}

/// Sequential twin of [`map_indexed`].
pub fn map_indexed_seq<T, F>(count: usize, op: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(op).collect()
}

/// Maps `op` over a slice, in parallel when the feature is enabled.
pub fn map_slice<I, T, F>(items: &[I], op: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(op).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(op).collect()
    }
}
