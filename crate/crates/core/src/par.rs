//! Data-parallel kernels with a sequential fallback.
//!
//! With the `parallel` feature the loops below run on the rayon pool; without
//! it they are plain iterators. Every reduction is performed over fixed-size
//! blocks whose partial results are combined in index order, so the result is
//! bit-identical regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Block length for ordered reductions.
pub const REDUCE_BLOCK: usize = 2048;

/// Fills `out[i] = f(i)`.
pub fn fill_indexed<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_iter_mut().enumerate().for_each(|(i, x)| *x = f(i));
    #[cfg(not(feature = "parallel"))]
    out.iter_mut().enumerate().for_each(|(i, x)| *x = f(i));
}

/// Applies `f(chunk_index, chunk)` to consecutive chunks of length `size`.
pub fn for_each_chunk<T, F>(data: &mut [T], size: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    data.par_chunks_mut(size).enumerate().for_each(|(i, c)| f(i, c));
    #[cfg(not(feature = "parallel"))]
    data.chunks_mut(size).enumerate().for_each(|(i, c)| f(i, c));
}

/// Collects `f(i)` for `i in 0..n` in order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    return (0..n).map(f).collect();
}

/// Deterministic sum of `f(i)` over `0..n`.
pub fn sum_indexed<T, F>(n: usize, f: F) -> T
where
    T: Send + Copy + std::iter::Sum<T> + std::ops::Add<Output = T> + Default,
    F: Fn(usize) -> T + Sync + Send,
{
    let blocks = n.div_ceil(REDUCE_BLOCK);
    let partial = map_range(blocks, |b| {
        let lo = b * REDUCE_BLOCK;
        let hi = (lo + REDUCE_BLOCK).min(n);
        (lo..hi).map(&f).sum::<T>()
    });
    partial.into_iter().fold(T::default(), |acc, x| acc + x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_sum_matches_sequential_blocks() {
        let n = 10_000;
        let f = |i: usize| 1.0 / (1.0 + i as f64);
        let got = sum_indexed(n, f);
        let mut want = 0.0;
        for b in 0..n.div_ceil(REDUCE_BLOCK) {
            let s: f64 = (b * REDUCE_BLOCK..((b + 1) * REDUCE_BLOCK).min(n)).map(f).sum();
            want += s;
        }
        assert_eq!(got.to_bits(), want.to_bits());
    }

    #[test]
    fn fill_and_chunks() {
        let mut v = vec![0usize; 37];
        fill_indexed(&mut v, |i| i * 2);
        assert_eq!(v[36], 72);
        for_each_chunk(&mut v, 10, |c, chunk| chunk.iter_mut().for_each(|x| *x = c));
        assert_eq!(v[35], 3);
        assert_eq!(map_range(4, |i| i + 1), vec![1, 2, 3, 4]);
    }
}
