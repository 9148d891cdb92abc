//! Batch mapping helpers.
//!
//! With the `parallel` feature (default) the batch entry points fan out over
//! rayon; without it they degrade to sequential iteration. Output order
//! always matches input order, and every closure used with these helpers is
//! a pure function of its item, so results are identical in both modes.
//! `batch_map_seq` stays available unconditionally as the baseline the
//! criterion benches compare against.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, in parallel when the `parallel` feature is enabled.
pub fn batch_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Always-sequential counterpart of [`batch_map`].
pub fn batch_map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Run `f(i, chunk)` over consecutive `chunk_len`-sized chunks of `data`.
///
/// Chunks are disjoint, so the parallel and sequential paths write the same
/// bytes. `data.len()` must be a multiple of `chunk_len`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    debug_assert_eq!(data.len() % chunk_len.max(1), 0);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
    }
}
