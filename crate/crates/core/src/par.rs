//! Data-parallel helpers with a sequential fallback.
//!
//! Hot loops (voxel assignment, sparse matvecs) are expressed as index maps
//! so they can run on the rayon pool when the `parallel` feature is enabled
//! and fall back to a plain loop otherwise. The `_seq` variants are always
//! available; benches compare the two lanes directly.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order. Sequential lane.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Map `f` over `0..n`, collecting results in index order.
///
/// Runs on the global rayon pool when the `parallel` feature is enabled,
/// otherwise identical to [`map_indexed_seq`]. `f` must be pure: the lane
/// choice must not change the result.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    map_indexed_seq(n, f)
}

/// Fill `out[i] = f(i)` in place. Parallel when the feature is on.
#[cfg(feature = "parallel")]
pub fn fill_indexed<T, F>(out: &mut [T], f: F)
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
}

#[cfg(not(feature = "parallel"))]
pub fn fill_indexed<T, F>(out: &mut [T], f: F)
where
    F: Fn(usize) -> T + Sync + Send,
    T: Send,
{
    fill_indexed_seq(out, f);
}

/// Sequential lane of [`fill_indexed`].
pub fn fill_indexed_seq<T, F>(out: &mut [T], f: F)
where
    F: Fn(usize) -> T,
{
    for (i, v) in out.iter_mut().enumerate() {
        *v = f(i);
    }
}
