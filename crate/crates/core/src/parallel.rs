//! Worker-pool plumbing. Worker count never changes results.

use rayon::ThreadPoolBuilder;

pub const THREADS_ENV: &str = "PEPSIM_THREADS";

/// Worker cap from `PEPSIM_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    match ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(f),
        // fall back to the ambient pool; output is identical either way
        Err(_) => f(),
    }
}
