//! Conditional data-parallelism. With the `parallel` feature (default),
//! index-mapped loops fan out over the rayon pool; without it they run
//! sequentially with identical results, since every worker is seeded
//! independently and outputs are collected in index order.

/// Map `f` over `0..n`, collecting results in order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Always-sequential variant, kept callable so benchmarks can compare the
/// two paths within one binary.
pub fn map_indexed_seq<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}
