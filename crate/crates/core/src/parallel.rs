//! Execution strategy for the data-parallel loops (graph propagation,
//! per-sample gradients, per-user evaluation).
//!
//! Every parallel loop writes to disjoint outputs or collects in input
//! order, so `Sequential` and `Parallel` produce bit-identical results.
//! Without the `parallel` feature, `Parallel` runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// `f(0..n)` collected in index order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Calls `f(row_index, row)` for each `width`-sized row of `data`.
    pub fn for_each_row<T, F>(self, data: &mut [T], width: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        if width == 0 {
            return;
        }
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            data.par_chunks_mut(width)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
            return;
        }
        data.chunks_mut(width).enumerate().for_each(|(i, row)| f(i, row));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let seq = Execution::Sequential.map_range(1000, |i| (i as f64).sqrt());
        let par = Execution::Parallel.map_range(1000, |i| (i as f64).sqrt());
        assert_eq!(seq, par);

        let mut a = vec![0usize; 12];
        let mut b = vec![0usize; 12];
        Execution::Sequential.for_each_row(&mut a, 3, |i, row| row.iter_mut().for_each(|x| *x = i));
        Execution::Parallel.for_each_row(&mut b, 3, |i, row| row.iter_mut().for_each(|x| *x = i));
        assert_eq!(a, b);
        assert_eq!(a[11], 3);
    }
}
