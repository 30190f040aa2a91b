//! Thin switch between rayon and sequential iteration.
//!
//! With the `parallel` feature (default) the solvers fan work out per edge
//! and per sample point via rayon; without it the same closures run on a
//! plain iterator, which is useful for profiling and for bit-for-bit
//! reproducibility comparisons (`cargo bench --no-default-features`).

#[cfg(feature = "parallel")]
pub fn for_each_mut<T: Send, F: Fn(usize, &mut T) + Sync>(items: &mut [T], f: F) {
    use rayon::prelude::*;
    items
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, item)| f(i, item));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_mut<T, F: Fn(usize, &mut T)>(items: &mut [T], f: F) {
    for (i, item) in items.iter_mut().enumerate() {
        f(i, item);
    }
}

#[cfg(feature = "parallel")]
pub fn map_collect<I: Sync, O: Send, F: Fn(&I) -> O + Sync>(items: &[I], f: F) -> Vec<O> {
    use rayon::prelude::*;
    items.par_iter().map(|x| f(x)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_collect<I, O, F: Fn(&I) -> O>(items: &[I], f: F) -> Vec<O> {
    items.iter().map(|x| f(x)).collect()
}
