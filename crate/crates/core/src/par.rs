//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the indexed maps below run on rayon; without it
//! they are ordinary iterators. Results are always returned in index order so
//! any downstream reduction sees the same sequence either way.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// `Parallel` when the crate was built with rayon, `Sequential` otherwise.
    pub fn available() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// `(0..n).map(f)` collected in order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// `items.iter().map(f)` collected in order.
pub fn map_slice<I, T, F>(exec: Execution, items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Number of indices in `0..n` for which `pred` holds. Integer counting keeps
/// the result independent of evaluation order.
pub fn count_indexed<F>(exec: Execution, n: usize, pred: F) -> usize
where
    F: Fn(usize) -> bool + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().filter(|&i| pred(i)).count()
        }
        _ => (0..n).filter(|&i| pred(i)).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree() {
        let f = |i: usize| (i as f64).sqrt();
        let a = map_indexed(Execution::Sequential, 1000, f);
        let b = map_indexed(Execution::available(), 1000, f);
        assert_eq!(a, b);
        assert_eq!(
            count_indexed(Execution::Sequential, 1000, |i| i % 3 == 0),
            count_indexed(Execution::Parallel, 1000, |i| i % 3 == 0)
        );
    }
}
