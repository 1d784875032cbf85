//! Order-preserving per-index map, parallel when the `parallel` feature is on,
//! and a wall clock that degrades to zero where no clock exists.

#[cfg(feature = "parallel")]
pub(crate) fn map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..len).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..len).map(f).collect()
}

#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
pub(crate) struct Stopwatch(std::time::Instant);

#[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self(std::time::Instant::now())
    }

    pub(crate) fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
pub(crate) struct Stopwatch;

#[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self
    }

    pub(crate) fn seconds(&self) -> f64 {
        0.0
    }
}
