//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it,
//! or when [`Execution::Sequential`] is requested, they run on the calling
//! thread. Results are always returned in input order so callers stay
//! deterministic regardless of scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

pub fn map_range<R, F>(exec: Execution, range: std::ops::Range<usize>, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return range.into_par_iter().map(f).collect();
    }
    let _ = exec;
    range.map(f).collect()
}

/// Smallest slice a worker folds on its own; keeps accumulator merges rare.
#[cfg(feature = "parallel")]
const FOLD_MIN_LEN: usize = 1024;

/// Fold each item into a per-worker accumulator, then combine the accumulators.
///
/// `combine` must be associative and commutative with `identity()` as its unit.
pub fn fold_reduce<T, A, I, F, C>(exec: Execution, items: &[T], identity: I, fold: F, combine: C) -> A
where
    T: Sync,
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(A, &T) -> A + Sync + Send,
    C: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items
            .par_iter()
            .with_min_len(FOLD_MIN_LEN)
            .fold(&identity, &fold)
            .reduce(&identity, &combine);
    }
    let _ = (exec, &combine);
    items.iter().fold(identity(), fold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..10_000).collect();
        for exec in [Execution::Sequential, Execution::Parallel] {
            let sq = map(exec, &xs, |x| x * x);
            assert_eq!(sq[9_999], 9_999 * 9_999);
            let s = fold_reduce(exec, &xs, || 0u64, |a, x| a + x, |a, b| a + b);
            assert_eq!(s, 9_999 * 10_000 / 2);
            let r = map_range(exec, 0..5, |i| i + 1);
            assert_eq!(r, vec![1, 2, 3, 4, 5]);
        }
    }
}
