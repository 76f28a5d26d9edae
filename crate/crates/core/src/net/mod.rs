//! Serialized point transformer.
//!
//! Points are voxel-sampled, embedded with a linear layer, given a
//! conditional positional encoding from their voxel neighbourhood and passed
//! through an encoder/decoder of pre-norm transformer layers. Each layer
//! attends within fixed-size blocks of the sequence produced by its own
//! space-filling curve; the encoder pools neighbouring voxels and the decoder
//! unpools along the recorded traces. A 4-layer MLP maps the result into the
//! text-embedding space.
//!
//! All layers are recorded on a [`Tape`], so the same code serves inference
//! and training.

mod config;
mod plan;
mod state;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

pub use config::ModelConfig;
pub use plan::{pool_level, voxel_neighborhoods, LayerSlot, Level, Plan, PoolTrace};
pub use state::{describe, param_specs, Description, Init, LayerClass, ModelState, ParamSpec, ParamStore, Tensor, HEAD_OUTPUT_INIT_SCALE};

use crate::cloud::PointCloud;
use crate::tape::{BlockLayout, Groups, Tape, Var};
use crate::{Error, Mat, Result, Scalar};

/// A tape plus the leaves holding parameters.
pub struct Graph<'a, T> {
    pub tape: Tape<T>,
    store: &'a ParamStore<T>,
    params: BTreeMap<String, Var>,
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new(store: &'a ParamStore<T>) -> Self {
        Self { tape: Tape::new(), store, params: BTreeMap::new() }
    }

    /// Leaf for parameter `name`, created on first use.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let v = self.tape.leaf(self.store.get(name)?.clone());
        self.params.insert(name.into(), v);
        Ok(v)
    }

    /// Parameters that took part in the forward pass.
    pub fn param_vars(&self) -> &BTreeMap<String, Var> {
        &self.params
    }

    pub fn value(&self, v: Var) -> &Mat<T> {
        self.tape.value(v)
    }

    pub fn linear(&mut self, x: Var, name: &str) -> Result<Var> {
        let w = self.param(&format!("{name}.weight"))?;
        let b = self.param(&format!("{name}.bias"))?;
        let (xin, win) = (self.tape.value(x).cols(), self.tape.value(w).rows());
        if xin != win {
            return Err(Error::Shape(format!("`{name}` expects {win} inputs, got {xin}")));
        }
        let y = self.tape.matmul(x, w);
        Ok(self.tape.add_row(y, b))
    }

    fn layer_norm(&mut self, x: Var, name: &str) -> Result<Var> {
        let g = self.param(&format!("{name}.gamma"))?;
        let b = self.param(&format!("{name}.beta"))?;
        Ok(self.tape.layer_norm(x, g, b))
    }
}

/// Linear embedding of the 9 point attributes.
pub fn embed_points<T: Scalar>(g: &mut Graph<'_, T>, points9: Var) -> Result<Var> {
    g.linear(points9, "embed")
}

/// `x + Linear(mean of x over each point's occupied voxel neighbourhood)`.
pub fn cond_pos_encode<T: Scalar>(g: &mut Graph<'_, T>, x: Var, neighbors: &Groups) -> Result<Var> {
    let avg = g.tape.group_mean(x, neighbors.clone());
    let y = g.linear(avg, "cpe")?;
    Ok(g.tape.add(x, y))
}

/// Multi-head attention within serialized blocks, with its projections.
pub fn block_attention<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: Var,
    layout: &BlockLayout,
    heads: usize,
    prefix: &str,
) -> Result<Var> {
    let width = g.value(x).cols();
    if heads == 0 || width % heads != 0 {
        return Err(Error::Config(format!("width {width} not divisible by {heads} heads")));
    }
    let q = g.linear(x, &format!("{prefix}.q"))?;
    let k = g.linear(x, &format!("{prefix}.k"))?;
    let v = g.linear(x, &format!("{prefix}.v"))?;
    let o = g.tape.block_attention(q, k, v, heads, layout.clone());
    g.linear(o, &format!("{prefix}.out"))
}

/// Pre-norm layer: `x + Attn(LN(x))`, then `x + FFN(LN(x))`.
pub fn transformer_layer<T: Scalar>(
    g: &mut Graph<'_, T>,
    x: Var,
    layout: &BlockLayout,
    heads: usize,
    prefix: &str,
) -> Result<Var> {
    let h = g.layer_norm(x, &format!("{prefix}.norm1"))?;
    let a = block_attention(g, h, layout, heads, &format!("{prefix}.attn"))?;
    let x = g.tape.add(x, a);
    let h = g.layer_norm(x, &format!("{prefix}.norm2"))?;
    let h = g.linear(h, &format!("{prefix}.ffn.fc1"))?;
    let h = g.tape.gelu(h);
    let h = g.linear(h, &format!("{prefix}.ffn.fc2"))?;
    Ok(g.tape.add(x, h))
}

/// Coarse feature = Linear(mean of children).
pub fn grid_pool<T: Scalar>(g: &mut Graph<'_, T>, x: Var, trace: &PoolTrace, name: &str) -> Result<Var> {
    let m = g.tape.group_mean(x, trace.children.clone());
    g.linear(m, name)
}

/// Fine feature = Linear(parent coarse feature) + Linear(encoder skip).
pub fn grid_unpool<T: Scalar>(
    g: &mut Graph<'_, T>,
    coarse: Var,
    skip: Var,
    trace: &PoolTrace,
    name: &str,
) -> Result<Var> {
    let up = g.tape.gather(coarse, trace.parent.clone());
    let a = g.linear(up, &format!("{name}.parent"))?;
    let b = g.linear(skip, &format!("{name}.skip"))?;
    Ok(g.tape.add(a, b))
}

/// 4-layer MLP projection head.
pub fn projection_head<T: Scalar>(g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
    let mut h = x;
    for l in 0..4 {
        h = g.linear(h, &format!("head.{l}"))?;
        if l < 3 {
            h = g.tape.gelu(h);
        }
    }
    Ok(h)
}

/// Records the whole network on `g` for the kept points of `plan`, returning
/// the `N_kept x out_dim` output node.
pub fn forward_graph<T: Scalar>(
    g: &mut Graph<'_, T>,
    config: &ModelConfig,
    plan: &Plan,
    cloud: &PointCloud,
) -> Result<Var> {
    let input = cloud.subset(&plan.sample.kept).feature_matrix::<T>();
    if input.cols() != config.in_dim {
        return Err(Error::Shape(format!("{} input features, config expects {}", input.cols(), config.in_dim)));
    }
    let x = g.tape.leaf(input);
    let x = embed_points(g, x)?;
    let mut x = cond_pos_encode(g, x, &plan.neighbors)?;

    let mut slots = plan.layers.iter();
    let mut run_stage = |g: &mut Graph<'_, T>, mut x: Var, stage: &str| -> Result<Var> {
        for i in 0..config.layers_per_stage {
            let slot = slots.next().ok_or_else(|| Error::Config("plan has too few layers".into()))?;
            let heads = config.heads[slot.level];
            x = transformer_layer(g, x, &slot.layout, heads, &state::layer_prefix(stage, i))?;
        }
        Ok(x)
    };

    let mut skips = alloc::vec::Vec::with_capacity(config.encoder_depth);
    for k in 0..config.encoder_depth {
        x = run_stage(g, x, &format!("enc{k}"))?;
        skips.push(x);
        x = grid_pool(g, x, &plan.pools[k], &format!("enc{k}.pool"))?;
    }
    x = run_stage(g, x, "bottleneck")?;
    for k in (0..config.decoder_depth).rev() {
        x = grid_unpool(g, x, skips[k], &plan.pools[k], &format!("dec{k}.unpool"))?;
        x = run_stage(g, x, &format!("dec{k}"))?;
    }
    projection_head(g, x)
}

/// Per-kept-point embeddings together with the plan that produced them.
#[derive(Debug, Clone)]
pub struct Forward {
    pub features: Mat<f32>,
    pub plan: Plan,
}

/// Inference on a normalized cloud.
pub fn forward(cloud: &PointCloud, state: &ModelState) -> Result<Mat<f32>> {
    Ok(forward_with_plan(cloud, state)?.features)
}

pub fn forward_with_plan(cloud: &PointCloud, state: &ModelState) -> Result<Forward> {
    let plan = Plan::new(cloud, &state.config)?;
    let store = state.store::<f32>();
    let mut g = Graph::new(&store);
    let out = forward_graph(&mut g, &state.config, &plan, cloud)?;
    let features = g.tape.value(out).clone();
    if !features.all_finite() {
        return Err(Error::NonFinite("network output".into()));
    }
    Ok(Forward { features, plan })
}

#[cfg(test)]
mod tests;
