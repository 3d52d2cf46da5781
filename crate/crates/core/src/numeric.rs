//! Reproducible reductions and slab-parallel loops.
//!
//! Every sum goes through a fixed binary tree over blocks of `BLOCK`
//! elements, so results do not depend on the thread count.

const BLOCK: usize = 256;
#[cfg(feature = "parallel")]
const PAR_MIN: usize = 1 << 15;

/// Pairwise sum of `f(i)` for `i` in `0..n`.
pub fn sum_by<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    tree(0, n, &f)
}

fn tree<F>(lo: usize, hi: usize, f: &F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let len = hi - lo;
    if len <= BLOCK {
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        return acc;
    }
    // split on a block boundary so the tree shape depends only on n
    let blocks = len.div_ceil(BLOCK);
    let mid = lo + (blocks / 2) * BLOCK;
    #[cfg(feature = "parallel")]
    if len >= PAR_MIN {
        let (a, b) = rayon::join(|| tree(lo, mid, f), || tree(mid, hi, f));
        return a + b;
    }
    tree(lo, mid, f) + tree(mid, hi, f)
}

pub fn sum(x: &[f64]) -> f64 {
    sum_by(x.len(), |i| x[i])
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum_by(a.len(), |i| a[i] * b[i])
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Runs `f(slab_index, slab)` over consecutive chunks of `out`.
pub fn for_each_slab<F>(out: &mut [f64], slab: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if slab == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if out.len() >= PAR_MIN {
            out.par_chunks_mut(slab).enumerate().for_each(|(s, chunk)| f(s, chunk));
            return;
        }
    }
    for (s, chunk) in out.chunks_mut(slab).enumerate() {
        f(s, chunk);
    }
}

/// Maps `f` over `0..n`, in parallel when the feature is enabled.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Wall-clock timer that degrades to zero where no clock is available.
#[derive(Debug, Clone, Copy)]
pub struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Stopwatch {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_is_accurate() {
        let n = 1_000_000;
        let x = vec![0.1; n];
        let s = sum(&x);
        assert!((s - 100_000.0).abs() < 1e-8, "{s}");
        assert_eq!(sum(&[]), 0.0);
        assert_eq!(sum(&[3.0]), 3.0);
    }

    #[test]
    fn dot_matches_naive_on_small_inputs() {
        let a: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..1000).map(|i| (i as f64).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn slabs_cover_everything() {
        let mut v = vec![0.0; 100_000];
        for_each_slab(&mut v, 1000, |s, c| c.iter_mut().for_each(|x| *x = s as f64));
        assert_eq!(v[0], 0.0);
        assert_eq!(v[99_999], 99.0);
    }
}
