//! Pluggable map over independent work items.
//!
//! The training loop and the evaluation harness fan out per object. The core
//! crate runs items sequentially; the `find3d` crate supplies a thread pool.
//! Implementations must return results in item order.

use alloc::vec::Vec;

pub trait Executor: Sync {
    fn map<I, R, F>(&self, items: &[I], f: F) -> Vec<R>
    where
        I: Sync,
        R: Send,
        F: Fn(&I) -> R + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<I, R, F>(&self, items: &[I], f: F) -> Vec<R>
    where
        I: Sync,
        R: Send,
        F: Fn(&I) -> R + Sync + Send,
    {
        items.iter().map(f).collect()
    }
}
