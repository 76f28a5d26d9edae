//! Thread-pool executor.

use find3d_core::exec::Executor;
use rayon::prelude::*;

/// Runs items on the global rayon pool; results come back in item order.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonExecutor;

impl Executor for RayonExecutor {
    fn map<I, R, F>(&self, items: &[I], f: F) -> Vec<R>
    where
        I: Sync,
        R: Send,
        F: Fn(&I) -> R + Sync + Send,
    {
        items.par_iter().map(f).collect()
    }
}
