//! Execution backends for the data-parallel kernels.
//!
//! Every kernel splits its work into fixed-size blocks and reduces partial
//! results in block order, so the sequential and parallel backends return
//! bit-identical values.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of items per reduction block.
pub const BLOCK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Sequential,
    /// Runs on the rayon pool; identical to `Sequential` without the `parallel` feature.
    Parallel,
}

impl Default for Backend {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Backend::Parallel
        } else {
            Backend::Sequential
        }
    }
}

impl Backend {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Backend::Parallel
    }

    /// `(0..n).map(f).collect()`, order preserved.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Backend::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Applies `f` to every item of `items` mutably, with its index.
    pub fn for_each_mut<T, F>(self, items: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Backend::Parallel {
            items.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
            return;
        }
        items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }

    /// Maps each block range of `0..n` to a partial result and folds the
    /// partials with a pairwise tree in block order.
    pub fn block_reduce<T, F, R>(self, n: usize, block: usize, map: F, reduce: R) -> Option<T>
    where
        T: Send,
        F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
        R: Fn(T, T) -> T,
    {
        let block = block.max(1);
        let n_blocks = n.div_ceil(block);
        let partials = self.map(n_blocks, |b| map(b * block..((b + 1) * block).min(n)));
        tree_fold(partials, &reduce)
    }
}

fn tree_fold<T, R: Fn(T, T) -> T>(mut items: Vec<T>, reduce: &R) -> Option<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(reduce(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Block ranges of `0..n`, used by kernels that write disjoint output slices.
pub fn blocks(n: usize, block: usize) -> Vec<std::ops::Range<usize>> {
    let block = block.max(1);
    (0..n.div_ceil(block))
        .map(|b| b * block..((b + 1) * block).min(n))
        .collect()
}
