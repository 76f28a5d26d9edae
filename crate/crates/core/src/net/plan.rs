//! Geometry shared by every layer of a forward pass: voxel levels, pooling
//! traces, neighbourhoods and the serialized order of each layer.

use alloc::vec::Vec;

use super::ModelConfig;
use crate::cloud::{pack_key, voxel_sample, PointCloud, SampleResult, Vec3};
use crate::sfc::{bits_for_grid, bits_for_voxel_size, serialize_grid, SerializationScheme};
use crate::tape::{BlockLayout, Groups};
use crate::{Error, Result};

/// Points of one resolution level.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    /// Non-negative voxel indices, one cell per point.
    pub grid: Vec<[u32; 3]>,
    pub positions: Vec<Vec3>,
    pub voxel_size: f64,
}

impl Level {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn keys(&self) -> Vec<u64> {
        self.grid.iter().map(|&g| pack_key(g)).collect()
    }
}

/// One pooling stage: how fine points merge into coarse points.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolTrace {
    /// Coarse index of every fine point.
    pub parent: Vec<usize>,
    /// Fine members of every coarse point, ordered by fine voxel key.
    pub children: Groups,
    pub coarse_positions: Vec<Vec3>,
    pub coarse_keys: Vec<u64>,
}

/// Merges points whose cells coincide after dividing the grid by `stride`.
/// Coarse points are ordered by coarse key, so the result does not depend on
/// the order of the fine points.
pub fn pool_level(level: &Level, stride: u32) -> (Level, PoolTrace) {
    let coarse_of = |g: [u32; 3]| [g[0] / stride, g[1] / stride, g[2] / stride];
    let mut order: Vec<usize> = (0..level.len()).collect();
    order.sort_by_key(|&i| (pack_key(coarse_of(level.grid[i])), pack_key(level.grid[i]), i));

    let mut parent = alloc::vec![0; level.len()];
    let mut children = Groups::new();
    let mut grid = Vec::new();
    let mut positions = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let cell = coarse_of(level.grid[order[start]]);
        let mut end = start;
        while end < order.len() && coarse_of(level.grid[order[end]]) == cell {
            end += 1;
        }
        let members = &order[start..end];
        let coarse = grid.len();
        let mut mean = [0.0; 3];
        for &m in members {
            parent[m] = coarse;
            for a in 0..3 {
                mean[a] += level.positions[m][a];
            }
        }
        let inv = 1.0 / members.len() as f64;
        positions.push(mean.map(|v| v * inv));
        grid.push(cell);
        children.push(members);
        start = end;
    }
    let coarse = Level { grid, positions, voxel_size: level.voxel_size * stride as f64 };
    let trace = PoolTrace {
        parent,
        children,
        coarse_positions: coarse.positions.clone(),
        coarse_keys: coarse.keys(),
    };
    (coarse, trace)
}

/// Occupied cells of the 3×3×3 neighbourhood of every point, self included,
/// listed in a fixed offset order.
pub fn voxel_neighborhoods(level: &Level) -> Groups {
    let mut index: Vec<(u64, usize)> = level.grid.iter().enumerate().map(|(i, &g)| (pack_key(g), i)).collect();
    index.sort_unstable();
    let mut groups = Groups::new();
    let mut members = Vec::with_capacity(27);
    for g in &level.grid {
        members.clear();
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let c = [g[0] as i64 + dx, g[1] as i64 + dy, g[2] as i64 + dz];
                    if c.iter().any(|&v| v < 0 || v > u32::MAX as i64) {
                        continue;
                    }
                    let key = pack_key([c[0] as u32, c[1] as u32, c[2] as u32]);
                    if let Ok(pos) = index.binary_search_by_key(&key, |e| e.0) {
                        members.push(index[pos].1);
                    }
                }
            }
        }
        groups.push(&members);
    }
    groups
}

/// Which level and scheme a transformer layer uses.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSlot {
    pub level: usize,
    pub scheme: SerializationScheme,
    pub layout: BlockLayout,
}

/// Everything geometric a forward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub sample: SampleResult,
    pub levels: Vec<Level>,
    pub pools: Vec<PoolTrace>,
    pub neighbors: Groups,
    /// Transformer layers in execution order.
    pub layers: Vec<LayerSlot>,
}

impl Plan {
    pub fn new(cloud: &PointCloud, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let sample = voxel_sample(cloud, config.voxel_size)?;
        Self::from_sample(cloud, sample, config)
    }

    pub fn from_sample(cloud: &PointCloud, sample: SampleResult, config: &ModelConfig) -> Result<Self> {
        if sample.kept.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let pts = cloud.points();
        let base = Level {
            grid: sample.grid(),
            positions: sample.kept.iter().map(|&i| pts[i].position).collect(),
            voxel_size: config.voxel_size,
        };
        let neighbors = voxel_neighborhoods(&base);
        let mut levels = alloc::vec![base];
        let mut pools = Vec::new();
        for &stride in &config.pool_stride {
            let (coarse, trace) = pool_level(levels.last().expect("base level"), stride);
            levels.push(coarse);
            pools.push(trace);
        }

        // encoder stages, bottleneck, then decoder stages back to level 0
        let depth = config.encoder_depth;
        let stage_levels = (0..=depth).chain((0..depth).rev());
        let mut layers = Vec::new();
        for level in stage_levels {
            for _ in 0..config.layers_per_stage {
                let scheme = config.schemes[layers.len() % config.schemes.len()];
                let lv = &levels[level];
                let bits = bits_for_grid(&lv.grid, bits_for_voxel_size(lv.voxel_size));
                let order = serialize_grid(&lv.grid, scheme, bits, config.block_size)?;
                let layout = BlockLayout { order: order.permutation, blocks: order.block_bounds };
                layers.push(LayerSlot { level, scheme, layout });
            }
        }
        Ok(Self { sample, levels, pools, neighbors, layers })
    }

    pub fn kept_len(&self) -> usize {
        self.sample.kept.len()
    }
}
