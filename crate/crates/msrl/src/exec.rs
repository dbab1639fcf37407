//! Data-parallel fan-out with a sequential fallback.
//!
//! Independent units of work (training restarts, CV folds, harness cells)
//! go through [`par_map`], which uses rayon when the `parallel` feature is
//! enabled (the default) and degrades to a plain loop otherwise. Output
//! order always matches input order, so results are identical either way.
//! [`seq_map`] is always sequential; benches use it as the baseline.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

pub fn seq_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

/// `par_map` over `0..n`.
pub fn par_map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    par_map((0..n).collect(), f)
}
