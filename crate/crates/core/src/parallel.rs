//! Deterministic parallel reductions.

use std::ops::Range;

use rayon::prelude::*;

/// Sums per-block accumulators of length `len` over `0..n`.
///
/// Blocks run in parallel in waves of one block per thread; partial results
/// are added in block order, so the sum depends on `block` but not on the
/// thread count.
pub(crate) fn ordered_block_sum<F>(n: usize, block: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(Range<usize>, &mut [f64]) + Sync,
{
    let block = block.max(1);
    let nblocks = n.div_ceil(block);
    let wave = rayon::current_num_threads().max(1);
    let mut total = vec![0.0; len];
    let mut start = 0;
    while start < nblocks {
        let end = (start + wave).min(nblocks);
        let parts: Vec<Vec<f64>> = (start..end)
            .into_par_iter()
            .map(|b| {
                let mut acc = vec![0.0; len];
                f(b * block..((b + 1) * block).min(n), &mut acc);
                acc
            })
            .collect();
        for part in parts {
            for (t, v) in total.iter_mut().zip(part) {
                *t += v;
            }
        }
        start = end;
    }
    total
}
