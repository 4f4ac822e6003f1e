//! Deterministic reductions.
//!
//! Sums over particles use a fixed-shape pairwise tree over index order, so
//! the floating-point result depends only on the data, never on how many
//! worker threads took part.

use std::ops::Range;

const LEAF: usize = 512;
const PAR_MIN: usize = 1 << 14;

/// Pairwise sum of `f(i)` for `i` in `range`.
pub fn sum_by<F>(range: Range<usize>, f: &F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let len = range.end - range.start;
    if len <= LEAF {
        let mut acc = 0.0;
        for i in range {
            acc += f(i);
        }
        return acc;
    }
    let mid = range.start + len / 2;
    if len >= PAR_MIN {
        let (a, b) = rayon::join(|| sum_by(range.start..mid, f), || sum_by(mid..range.end, f));
        a + b
    } else {
        sum_by(range.start..mid, f) + sum_by(mid..range.end, f)
    }
}

pub fn sum(xs: &[f64]) -> f64 {
    sum_by(0..xs.len(), &|i| xs[i])
}

/// Mean of `f(i)` over `0..n`.
pub fn mean_by<F>(n: usize, f: &F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    sum_by(0..n, f) / n as f64
}

/// Mean and (population) standard deviation of `f(i)` over `0..n`.
pub fn mean_std_by<F>(n: usize, f: &F) -> (f64, f64)
where
    F: Fn(usize) -> f64 + Sync,
{
    let mean = mean_by(n, f);
    let var = mean_by(n, &|i| {
        let d = f(i) - mean;
        d * d
    });
    (mean, var.sqrt())
}

/// Runs `op` on a pool of `threads` workers, or on the global pool when `None`.
pub fn with_threads<R: Send>(threads: Option<usize>, op: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(op),
            Err(_) => op(),
        },
        None => op(),
    }
}
