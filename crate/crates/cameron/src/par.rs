//! Data-parallel helpers. With the `parallel` feature the maps run on rayon;
//! without it they run sequentially. Either way the results come back in
//! input order and reductions are folded sequentially over that order, so the
//! two paths are bitwise identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn indexed_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn indexed_map<T>(n: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Always-sequential variant, kept around so benchmarks can compare the two
/// paths inside a single compilation.
pub fn indexed_map_seq<T>(n: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..n).map(f).collect()
}
