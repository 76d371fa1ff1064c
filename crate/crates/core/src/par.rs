//! Data-parallel kernels with a sequential fallback.
//!
//! Every helper here produces bit-identical results with and without the
//! `parallel` feature: reductions are split into fixed-size chunks whose
//! partial sums are combined in index order.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Work split size for parallel loops and reductions.
pub const CHUNK: usize = 4096;

/// `out[i] = f(i)` for every index.
pub fn fill_indexed<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (k, slot) in chunk.iter_mut().enumerate() {
                *slot = f(base + k);
            }
        });
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f(i);
        }
    }
}

/// Calls `f(i, &mut out[i])` for every index.
pub fn update_indexed<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (k, slot) in chunk.iter_mut().enumerate() {
                f(base + k, slot);
            }
        });
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, slot) in out.iter_mut().enumerate() {
            f(i, slot);
        }
    }
}

/// Deterministic sum of `f(range)` over fixed chunks of `0..len`.
pub fn chunked_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(Range<usize>) -> f64 + Sync + Send,
{
    let n_chunks = len.div_ceil(CHUNK);
    let range = |c: usize| c * CHUNK..((c + 1) * CHUNK).min(len);
    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = (0..n_chunks).into_par_iter().map(|c| f(range(c))).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = (0..n_chunks).map(|c| f(range(c))).collect();
    partials.into_iter().sum()
}

/// Maximum of `f(range)` over fixed chunks of `0..len` (`-inf` when empty).
pub fn chunked_max<F>(len: usize, f: F) -> f64
where
    F: Fn(Range<usize>) -> f64 + Sync + Send,
{
    let n_chunks = len.div_ceil(CHUNK);
    let range = |c: usize| c * CHUNK..((c + 1) * CHUNK).min(len);
    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = (0..n_chunks).into_par_iter().map(|c| f(range(c))).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = (0..n_chunks).map(|c| f(range(c))).collect();
    partials.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Maps independent jobs, preserving input order in the output.
pub fn map_jobs<I, T, F>(items: Vec<I>, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Dot product with the deterministic chunked reduction.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    chunked_sum(a.len(), |r| a[r.clone()].iter().zip(&b[r]).map(|(x, y)| x * y).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_sum_matches_blockwise_sequential() {
        let v: Vec<f64> = (0..10_000).map(|i| (i as f64 * 0.37).sin()).collect();
        let got = chunked_sum(v.len(), |r| v[r].iter().sum());
        let want: f64 = v.chunks(CHUNK).map(|c| c.iter().sum::<f64>()).sum();
        assert_eq!(got.to_bits(), want.to_bits());
    }

    #[test]
    fn fill_and_update_cover_every_index() {
        let mut v = vec![0usize; 9000];
        fill_indexed(&mut v, |i| i * 2);
        update_indexed(&mut v, |i, x| *x += i);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 3 * i));
        assert_eq!(chunked_max(0, |_| 1.0), f64::NEG_INFINITY);
    }
}
