//! Thin dispatch layer between the rayon data-parallel loops and the
//! sequential fallback used when the `parallel` feature is disabled.
//!
//! Only loops with disjoint writes go through this layer; every reduction
//! in the crate stays sequential so that results are bitwise reproducible
//! regardless of the thread count.

/// Fill `out[i] = f(i)` for all `i`.
#[cfg(feature = "parallel")]
pub fn map_indexed<T: Send, F: Fn(usize) -> T + Send + Sync>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F: Fn(usize) -> T>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Sequential version of [`map_indexed`], always available (used by the
/// benchmark suite to compare against the parallel path).
pub fn map_indexed_seq<T, F: Fn(usize) -> T>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Apply `f(i, chunk_i)` over `data` split into chunks of `chunk` elements.
#[cfg(feature = "parallel")]
pub fn for_each_chunk_mut<F: Fn(usize, &mut [f64]) + Send + Sync>(data: &mut [f64], chunk: usize, f: F) {
    use rayon::prelude::*;
    data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_chunk_mut<F: Fn(usize, &mut [f64])>(data: &mut [f64], chunk: usize, f: F) {
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Sequential version of [`for_each_chunk_mut`].
pub fn for_each_chunk_mut_seq<F: Fn(usize, &mut [f64])>(data: &mut [f64], chunk: usize, f: F) {
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}
