//! Fixed-order pairwise reductions.
//!
//! The summation tree depends only on the length of the input, never on the
//! number of worker threads, so parallel and serial callers get bit-identical
//! results.

use num_complex::Complex64;
use std::ops::Add;

const LEAF: usize = 16;
const PAR_CUTOFF: usize = 1 << 14;

pub trait Summand: Copy + Add<Output = Self> + Send + Sync {
    const ZERO: Self;
}

impl Summand for f64 {
    const ZERO: Self = 0.0;
}

impl Summand for Complex64 {
    const ZERO: Self = Complex64 { re: 0.0, im: 0.0 };
}

pub fn pairwise<T: Summand>(xs: &[T]) -> T {
    if xs.len() <= LEAF {
        return xs.iter().fold(T::ZERO, |a, &b| a + b);
    }
    let mid = xs.len() / 2;
    pairwise(&xs[..mid]) + pairwise(&xs[mid..])
}

/// Pairwise sum of `f(i)` for `i in lo..hi`.
pub fn pairwise_map<T: Summand, F: Fn(usize) -> T>(lo: usize, hi: usize, f: &F) -> T {
    let n = hi - lo;
    if n <= LEAF {
        return (lo..hi).fold(T::ZERO, |a, i| a + f(i));
    }
    let mid = lo + n / 2;
    pairwise_map(lo, mid, f) + pairwise_map(mid, hi, f)
}

/// Same tree as [`pairwise_map`], but large subtrees are evaluated with
/// `rayon::join`.
pub fn par_pairwise_map<T: Summand, F: Fn(usize) -> T + Sync>(lo: usize, hi: usize, f: &F) -> T {
    let n = hi - lo;
    if n <= PAR_CUTOFF {
        return pairwise_map(lo, hi, f);
    }
    let mid = lo + n / 2;
    let (a, b) = rayon::join(|| par_pairwise_map(lo, mid, f), || par_pairwise_map(mid, hi, f));
    a + b
}

pub fn sum_sq_norm(xs: &[Complex64]) -> f64 {
    pairwise_map(0, xs.len(), &|i| xs[i].norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise(&xs), 499500.0);
        assert_eq!(pairwise_map(0, 1000, &|i| i as f64), 499500.0);
    }

    #[test]
    fn parallel_tree_is_bit_identical() {
        let f = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
        let n = 200_003;
        let serial = pairwise_map(0, n, &f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let par = pool.install(|| par_pairwise_map(0, n, &f));
        assert_eq!(serial.to_bits(), par.to_bits());
    }

    #[test]
    fn pairwise_is_more_accurate_than_naive() {
        let xs = vec![0.1_f64; 1 << 20];
        let exact = 0.1 * (1u64 << 20) as f64;
        let naive: f64 = xs.iter().sum();
        assert!((pairwise(&xs) - exact).abs() <= (naive - exact).abs());
    }
}
