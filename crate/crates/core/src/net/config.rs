use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cloud::DEFAULT_VOXEL_SIZE;
use crate::sfc::SerializationScheme;
use crate::{Error, Result};

/// Shape of the serialized point transformer.
///
/// Level `k` has width `widths[k]`; the encoder pools from level `k` to
/// `k + 1` for `k < encoder_depth`, the bottleneck runs at the coarsest level
/// and the decoder walks back up, so `decoder_depth` must equal
/// `encoder_depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_dim: usize,
    pub widths: Vec<usize>,
    pub heads: Vec<usize>,
    pub encoder_depth: usize,
    pub decoder_depth: usize,
    /// Transformer layers per encoder stage, bottleneck and decoder stage.
    pub layers_per_stage: usize,
    pub block_size: usize,
    /// Cycled over layers in execution order.
    pub schemes: Vec<SerializationScheme>,
    /// Voxel-edge multiplier of each pooling stage.
    pub pool_stride: Vec<u32>,
    pub voxel_size: f64,
    pub ffn_ratio: usize,
    pub head_hidden: usize,
    pub out_dim: usize,
}

impl ModelConfig {
    /// Desk-scale default: two pooling stages of width 32, two heads,
    /// 128-point blocks, 32-dim output.
    pub fn toy() -> Self {
        Self {
            in_dim: 9,
            widths: vec![32, 32, 32],
            heads: vec![2, 2, 2],
            encoder_depth: 2,
            decoder_depth: 2,
            layers_per_stage: 1,
            block_size: 128,
            schemes: SerializationScheme::ALL.to_vec(),
            pool_stride: vec![2, 2],
            voxel_size: DEFAULT_VOXEL_SIZE,
            ffn_ratio: 4,
            head_hidden: 32,
            out_dim: 32,
        }
    }

    /// A configuration at the scale of the published model (1024-point
    /// blocks, 768-dim output); used for parameter accounting only.
    pub fn paper_scale() -> Self {
        Self {
            in_dim: 9,
            widths: vec![64, 128, 256, 512, 512],
            heads: vec![4, 8, 16, 32, 32],
            encoder_depth: 4,
            decoder_depth: 4,
            layers_per_stage: 2,
            block_size: 1024,
            schemes: SerializationScheme::ALL.to_vec(),
            pool_stride: vec![2, 2, 2, 2],
            voxel_size: DEFAULT_VOXEL_SIZE,
            ffn_ratio: 4,
            head_hidden: 768,
            out_dim: 768,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::Config(m));
        let levels = self.encoder_depth + 1;
        if self.in_dim == 0 || self.out_dim == 0 || self.head_hidden == 0 || self.ffn_ratio == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.widths.len() != levels || self.heads.len() != levels {
            return bad(format!("expected {levels} widths and heads"));
        }
        for (w, h) in self.widths.iter().zip(&self.heads) {
            if *w == 0 || *h == 0 || w % h != 0 {
                return bad(format!("width {w} not divisible by {h} heads"));
            }
        }
        if self.decoder_depth != self.encoder_depth {
            return bad("decoder depth must equal encoder depth".into());
        }
        if self.layers_per_stage == 0 {
            return bad("at least one layer per stage".into());
        }
        if self.block_size == 0 {
            return bad("block size must be at least 1".into());
        }
        if self.schemes.is_empty() {
            return bad("scheme cycle is empty".into());
        }
        if self.pool_stride.len() != self.encoder_depth || self.pool_stride.iter().any(|&s| s < 2) {
            return bad("one pooling stride >= 2 per encoder stage".into());
        }
        if !(self.voxel_size > 0.0) {
            return bad("voxel size must be positive".into());
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.encoder_depth + 1
    }

    /// Total transformer layers.
    pub fn layer_count(&self) -> usize {
        (2 * self.encoder_depth + 1) * self.layers_per_stage
    }
}
