//! Row-level work distribution.
//!
//! Every kernel writes each output row from exactly one closure call with a
//! fixed summation order, so results are bitwise identical whether rows run
//! on one thread or many.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution strategy for row-parallel kernels and batch runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled; otherwise identical
    /// to `Sequential`.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

const MIN_ROWS_PER_TASK: usize = 32;

pub(crate) fn for_each_row<F>(exec: Exec, data: &mut [f64], cols: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    if cols == 0 || data.is_empty() {
        return;
    }
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => data
            .par_chunks_mut(cols)
            .with_min_len(MIN_ROWS_PER_TASK)
            .enumerate()
            .for_each(|(i, row)| f(i, row)),
        _ => data
            .chunks_mut(cols)
            .enumerate()
            .for_each(|(i, row)| f(i, row)),
    }
}

/// Like `for_each_row`, but hands `f` runs of up to `block_rows` rows
/// together with the index of the first row.
pub(crate) fn for_each_block<F>(exec: Exec, data: &mut [f64], cols: usize, block_rows: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    if cols == 0 || data.is_empty() {
        return;
    }
    let chunk = cols * block_rows;
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => data
            .par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(b, block)| f(b * block_rows, block)),
        _ => data
            .chunks_mut(chunk)
            .enumerate()
            .for_each(|(b, block)| f(b * block_rows, block)),
    }
}

/// Maps `f` over `0..n`, returning results in index order regardless of
/// completion order.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}
