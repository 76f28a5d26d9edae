//! Open-vocabulary part segmentation for point clouds.
//!
//! The crate covers the whole pipeline without touching the filesystem:
//!
//! * [`cloud`]: point clouds, normalization, voxel sampling, augmentation.
//! * [`sfc`]: Morton and Hilbert encodings and serialized orderings.
//! * [`tape`]: a small reverse-mode autodiff tape over dense matrices.
//! * [`net`]: a serialized point transformer emitting per-point embeddings.
//! * [`train`]: contrastive loss, Adam, cosine schedule, training loop.
//! * [`engine`]: multi-view splatting, mask filtering and back-projection.
//! * [`query`]: text embedders, cosine scoring and segmentation.
//! * [`bench`]: class-average mIoU, evaluation and a synthetic dataset.
//!
//! Everything here is `no_std` with `alloc`; IO lives in the `find3d` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bench;
pub mod cloud;
pub mod engine;
mod error;
pub mod exec;
mod grid;
pub mod mat;
pub mod net;
pub mod query;
pub mod rng;
pub mod scalar;
pub mod sfc;
pub mod tape;
pub mod train;

pub use error::{Error, Result};
pub use mat::Mat;
pub use scalar::Scalar;

/// Assignment value for points whose every query similarity is non-positive.
pub const NO_LABEL: i32 = -1;

/// Ground-truth value for points that carry no part annotation.
pub const UNLABELED: i32 = -1;
