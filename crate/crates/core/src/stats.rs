//! Streaming moments and the ordered chunked reduction used by every batch statistic.

use rayon::prelude::*;

use crate::error::Result;

/// Chunk length of the parallel map. Chunk boundaries depend only on the
/// batch size, and partial results are merged in chunk order, so reductions
/// are bitwise reproducible regardless of thread count.
pub const CHUNK: usize = 512;

/// Running mean and variance (Welford, with Chan's merge).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        self.mean += delta * w;
        self.m2 += other.m2 + delta * delta * self.n as f64 * w;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    /// Mean of squares, recovered from the central moments.
    pub fn mean_square(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.m2 / self.n as f64 + self.mean * self.mean
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// `(estimate - target) / se`, with a zero standard error mapping to 0 on an
/// exact match and to a signed infinity otherwise.
pub fn z_score(estimate: f64, target: f64, se: f64) -> f64 {
    let diff = estimate - target;
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Folds `0..n` in fixed chunks (in parallel) and merges the chunk
/// accumulators sequentially in index order.
pub fn fold_indexed<A, I, F, M>(n: usize, init: I, fold: F, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, usize) -> Result<()> + Sync,
    M: Fn(&mut A, A),
{
    let chunks: Vec<Result<A>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for i in c * CHUNK..n.min((c + 1) * CHUNK) {
                fold(&mut acc, i)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = init();
    for chunk in chunks {
        merge(&mut total, chunk?);
    }
    Ok(total)
}

/// Ordered parallel map over `0..n`.
pub fn map_indexed<R, F>(n: usize, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync + Send,
{
    (0..n).into_par_iter().with_min_len(CHUNK).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_sample_has_zero_error() {
        let m: Moments = std::iter::repeat_n(1.0, 100).collect();
        assert_eq!(m.mean(), 1.0);
        assert_eq!(m.std_err(), 0.0);
        assert_eq!(z_score(m.mean(), 1.0, m.std_err()), 0.0);
    }

    #[test]
    fn known_variance() {
        let m: Moments = [1.0, 2.0, 3.0, 4.0].into_iter().collect();
        assert!((m.mean() - 2.5).abs() < 1e-15);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-15);
        assert!((m.mean_square() - 7.5).abs() < 1e-14);
    }

    #[test]
    fn fold_matches_sequential_sum() {
        let total = fold_indexed(
            10_000,
            || 0u64,
            |a, i| {
                *a += i as u64;
                Ok(())
            },
            |a, b| *a += b,
        )
        .unwrap();
        assert_eq!(total, 10_000 * 9_999 / 2);
    }

    proptest! {
        #[test]
        fn merge_agrees_with_single_pass(xs in prop::collection::vec(-1e3f64..1e3, 2..200), cut in 0usize..200) {
            let cut = cut.min(xs.len());
            let whole: Moments = xs.iter().copied().collect();
            let mut left: Moments = xs[..cut].iter().copied().collect();
            let right: Moments = xs[cut..].iter().copied().collect();
            left.merge(&right);
            prop_assert!((left.mean() - whole.mean()).abs() <= 1e-9 * (1.0 + whole.mean().abs()));
            prop_assert!((left.variance() - whole.variance()).abs() <= 1e-7 * (1.0 + whole.variance()));
        }
    }
}
