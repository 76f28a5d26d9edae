//! Space-filling curves and serialized orderings of voxelized points.
//!
//! Codes are 64-bit; with at most 21 bits per axis a 3D code fits in 63 bits.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::cloud::SampleResult;
use crate::{Error, Mat, Result, Scalar};

pub const MAX_BITS: u32 = 21;

/// Ordering used by one transformer layer. `Trans` variants swap the x and y
/// axes before encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SerializationScheme {
    Z,
    TransZ,
    Hilbert,
    TransHilbert,
}

impl SerializationScheme {
    pub const ALL: [Self; 4] = [Self::Z, Self::TransZ, Self::Hilbert, Self::TransHilbert];

    pub fn encode(self, g: [u32; 3], bits: u32) -> Result<u64> {
        match self {
            Self::Z => morton_encode(g[0], g[1], g[2], bits),
            Self::TransZ => morton_encode(g[1], g[0], g[2], bits),
            Self::Hilbert => hilbert_encode(g[0], g[1], g[2], bits),
            Self::TransHilbert => hilbert_encode(g[1], g[0], g[2], bits),
        }
    }
}

fn check(ix: u32, iy: u32, iz: u32, bits: u32) -> Result<()> {
    if !(1..=MAX_BITS).contains(&bits) {
        return Err(Error::BadBits(bits));
    }
    for index in [ix, iy, iz] {
        if u64::from(index) >> bits != 0 {
            return Err(Error::IndexOutOfRange { index, bits });
        }
    }
    Ok(())
}

#[inline]
fn spread3(v: u32) -> u64 {
    let mut x = u64::from(v) & 0x1f_ffff;
    x = (x | (x << 32)) & 0x001f_0000_0000_ffff;
    x = (x | (x << 16)) & 0x001f_0000_ff00_00ff;
    x = (x | (x << 8)) & 0x100f_00f0_0f00_f00f;
    x = (x | (x << 4)) & 0x10c3_0c30_c30c_30c3;
    x = (x | (x << 2)) & 0x1249_2492_4924_9249;
    x
}

#[inline]
fn compact3(code: u64) -> u32 {
    let mut x = code & 0x1249_2492_4924_9249;
    x = (x | (x >> 2)) & 0x10c3_0c30_c30c_30c3;
    x = (x | (x >> 4)) & 0x100f_00f0_0f00_f00f;
    x = (x | (x >> 8)) & 0x001f_0000_ff00_00ff;
    x = (x | (x >> 16)) & 0x001f_0000_0000_ffff;
    x = (x | (x >> 32)) & 0x1f_ffff;
    x as u32
}

/// Z-order code: bits of x, y, z interleaved with x least significant.
pub fn morton_encode(ix: u32, iy: u32, iz: u32, bits: u32) -> Result<u64> {
    check(ix, iy, iz, bits)?;
    Ok(spread3(ix) | (spread3(iy) << 1) | (spread3(iz) << 2))
}

pub fn morton_decode(code: u64, bits: u32) -> Result<[u32; 3]> {
    if !(1..=MAX_BITS).contains(&bits) {
        return Err(Error::BadBits(bits));
    }
    let code = code & ((1u64 << (3 * bits)) - 1);
    Ok([compact3(code), compact3(code >> 1), compact3(code >> 2)])
}

/// 3D Hilbert index by the transpose method: axes are converted in place to
/// the transposed Hilbert index, whose bits are then interleaved with the
/// first axis most significant.
pub fn hilbert_encode(ix: u32, iy: u32, iz: u32, bits: u32) -> Result<u64> {
    check(ix, iy, iz, bits)?;
    let mut x = [ix, iy, iz];
    let m = 1u32 << (bits - 1);

    // inverse undo
    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..3 {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }
    // Gray encode
    x[1] ^= x[0];
    x[2] ^= x[1];
    let mut t = 0;
    let mut q = m;
    while q > 1 {
        if x[2] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for v in &mut x {
        *v ^= t;
    }

    Ok((spread3(x[0]) << 2) | (spread3(x[1]) << 1) | spread3(x[2]))
}

pub fn hilbert_decode(code: u64, bits: u32) -> Result<[u32; 3]> {
    if !(1..=MAX_BITS).contains(&bits) {
        return Err(Error::BadBits(bits));
    }
    let code = code & ((1u64 << (3 * bits)) - 1);
    let mut x = [compact3(code >> 2), compact3(code >> 1), compact3(code)];
    let n = 2u32 << (bits - 1);

    // Gray decode
    let t = x[2] >> 1;
    x[2] ^= x[1];
    x[1] ^= x[0];
    x[0] ^= t;
    // undo excess work
    let mut q = 2;
    while q != n {
        let p = q - 1;
        for i in (0..3).rev() {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q <<= 1;
    }
    Ok(x)
}

/// Bit depth for a voxel edge: `⌈log2(1/voxel_size)⌉ + 1`, capped at 21.
pub fn bits_for_voxel_size(voxel_size: f64) -> u32 {
    let b = Float::ceil(Float::log2(1.0 / voxel_size)) + 1.0;
    if b.is_nan() || b < 1.0 {
        1
    } else if b > MAX_BITS as f64 {
        MAX_BITS
    } else {
        b as u32
    }
}

/// Smallest bit depth holding every index in `grid`, at least `min_bits`.
pub fn bits_for_grid(grid: &[[u32; 3]], min_bits: u32) -> u32 {
    let max = grid.iter().flat_map(|g| g.iter().copied()).max().unwrap_or(0);
    let needed = 32 - max.leading_zeros();
    needed.max(min_bits).clamp(1, MAX_BITS)
}

/// A permutation of points sorted by curve code, partitioned into blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerialOrder {
    /// `permutation[k]` is the point at sequence position `k`.
    pub permutation: Vec<usize>,
    /// Curve code at each sequence position, non-decreasing.
    pub codes: Vec<u64>,
    /// Half-open `(start, end)` ranges over sequence positions.
    pub block_bounds: Vec<(usize, usize)>,
}

impl SerialOrder {
    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    /// `inverse[p]` is the sequence position of point `p`.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.permutation.len()];
        for (k, &p) in self.permutation.iter().enumerate() {
            inv[p] = k;
        }
        inv
    }
}

/// Orders grid cells along `scheme`. Ties in code (impossible after voxel
/// sampling) fall back to the point index.
pub fn serialize_grid(
    grid: &[[u32; 3]],
    scheme: SerializationScheme,
    bits: u32,
    block_size: usize,
) -> Result<SerialOrder> {
    let codes = grid
        .iter()
        .map(|&g| scheme.encode(g, bits))
        .collect::<Result<Vec<u64>>>()?;
    let mut permutation: Vec<usize> = (0..grid.len()).collect();
    permutation.sort_by_key(|&i| (codes[i], i));
    let codes: Vec<u64> = permutation.iter().map(|&i| codes[i]).collect();
    debug_assert!(codes.windows(2).all(|w| w[0] < w[1]) || has_duplicate_cells(grid));
    Ok(SerialOrder { permutation, codes, block_bounds: block_partition(grid.len(), block_size)? })
}

fn has_duplicate_cells(grid: &[[u32; 3]]) -> bool {
    let mut g = grid.to_vec();
    g.sort_unstable();
    g.windows(2).any(|w| w[0] == w[1])
}

/// Serializes the kept points of a voxel sample; permutation entries index
/// `sample.kept` positions.
pub fn serialize(
    sample: &SampleResult,
    scheme: SerializationScheme,
    voxel_size: f64,
    block_size: usize,
) -> Result<SerialOrder> {
    let grid = sample.grid();
    let bits = bits_for_grid(&grid, bits_for_voxel_size(voxel_size));
    let order = serialize_grid(&grid, scheme, bits, block_size)?;
    assert!(
        order.codes.windows(2).all(|w| w[0] != w[1]),
        "voxel sampling leaves one point per cell"
    );
    Ok(order)
}

/// Contiguous blocks of at most `block_size`; the last holds the remainder.
pub fn block_partition(len: usize, block_size: usize) -> Result<Vec<(usize, usize)>> {
    if block_size == 0 {
        return Err(Error::Config("block size must be at least 1".into()));
    }
    Ok((0..len).step_by(block_size).map(|s| (s, (s + block_size).min(len))).collect())
}

/// Moves rows laid out in `from` order into `to` order.
pub fn reorder<T: Scalar>(rows: &Mat<T>, from: &SerialOrder, to: &SerialOrder) -> Result<Mat<T>> {
    if rows.rows() != from.len() || from.len() != to.len() {
        return Err(Error::Shape(format!(
            "reorder of {} rows between orders of length {} and {}",
            rows.rows(),
            from.len(),
            to.len()
        )));
    }
    let inv = from.inverse();
    let idx: Vec<usize> = to.permutation.iter().map(|&p| inv[p]).collect();
    Ok(rows.gather_rows(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_and_unit_cell() {
        for bits in 1..=MAX_BITS {
            assert_eq!(morton_encode(0, 0, 0, bits).unwrap(), 0);
            assert_eq!(hilbert_encode(0, 0, 0, bits).unwrap(), 0);
        }
        assert_eq!(morton_encode(1, 1, 1, 1).unwrap(), 7);
        assert_eq!(morton_encode(1, 0, 0, 1).unwrap(), 1);
        assert_eq!(morton_encode(0, 0, 1, 1).unwrap(), 4);
    }

    #[test]
    fn out_of_range_indices_error() {
        assert_eq!(morton_encode(4, 0, 0, 2), Err(Error::IndexOutOfRange { index: 4, bits: 2 }));
        assert!(hilbert_encode(0, 0, 2, 1).is_err());
        assert_eq!(hilbert_encode(0, 0, 0, 0), Err(Error::BadBits(0)));
        assert_eq!(morton_encode(0, 0, 0, 22), Err(Error::BadBits(22)));
    }

    #[test]
    fn max_bits_round_trip() {
        let m = (1u32 << MAX_BITS) - 1;
        for g in [[m, 0, 5], [m, m, m], [123_456, 7, 2_000_000]] {
            let z = morton_encode(g[0], g[1], g[2], MAX_BITS).unwrap();
            assert_eq!(morton_decode(z, MAX_BITS).unwrap(), g);
            let h = hilbert_encode(g[0], g[1], g[2], MAX_BITS).unwrap();
            assert!(h < 1 << 63);
            assert_eq!(hilbert_decode(h, MAX_BITS).unwrap(), g);
        }
    }

    #[test]
    fn bit_depth_from_voxel_size() {
        assert_eq!(bits_for_voxel_size(0.02), 7);
        assert_eq!(bits_for_voxel_size(0.5), 2);
        assert_eq!(bits_for_voxel_size(1e-9), MAX_BITS);
        assert_eq!(bits_for_grid(&[[200, 0, 0]], 7), 8);
    }

    #[test]
    fn block_bounds() {
        assert_eq!(
            block_partition(2500, 1024).unwrap(),
            vec![(0, 1024), (1024, 2048), (2048, 2500)]
        );
        assert_eq!(block_partition(10, 1024).unwrap(), vec![(0, 10)]);
        assert_eq!(block_partition(1024, 1024).unwrap(), vec![(0, 1024)]);
        assert!(block_partition(0, 4).unwrap().is_empty());
        assert!(block_partition(3, 0).is_err());
    }

    #[test]
    fn single_point_serializes_to_one_block() {
        let o = serialize_grid(&[[3, 1, 2]], SerializationScheme::Hilbert, 2, 1024).unwrap();
        assert_eq!(o.permutation, vec![0]);
        assert_eq!(o.block_bounds, vec![(0, 1)]);
    }

    #[test]
    fn cube_corners_differ_between_z_and_hilbert() {
        let grid: Vec<[u32; 3]> = (0..8).map(|i| [i & 1, (i >> 1) & 1, (i >> 2) & 1]).collect();
        let z = serialize_grid(&grid, SerializationScheme::Z, 1, 1024).unwrap();
        let h = serialize_grid(&grid, SerializationScheme::Hilbert, 1, 1024).unwrap();
        // Z order of corners enumerated x-fastest is the identity.
        assert_eq!(z.permutation, (0..8).collect::<Vec<_>>());
        // Hilbert order, computed from the encoder's codes.
        let mut expect: Vec<usize> = (0..8).collect();
        expect.sort_by_key(|&i| hilbert_encode(grid[i][0], grid[i][1], grid[i][2], 1).unwrap());
        assert_eq!(h.permutation, expect);
        assert_ne!(z.permutation, h.permutation);
        let mut sorted = h.permutation.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn reorder_round_trip() {
        let grid: Vec<[u32; 3]> = vec![[0, 0, 0], [3, 1, 0], [1, 2, 3], [2, 2, 2], [0, 3, 1]];
        let z = serialize_grid(&grid, SerializationScheme::Z, 2, 2).unwrap();
        let h = serialize_grid(&grid, SerializationScheme::TransHilbert, 2, 2).unwrap();
        let rows = Mat::from_vec(5, 1, z.permutation.iter().map(|&p| p as f64).collect()).unwrap();
        assert_eq!(reorder(&rows, &z, &z).unwrap(), rows);
        let there = reorder(&rows, &z, &h).unwrap();
        let expect: Vec<f64> = h.permutation.iter().map(|&p| p as f64).collect();
        assert_eq!(there.data(), &expect[..]);
        assert_eq!(reorder(&there, &h, &z).unwrap(), rows);
    }

    fn naive_morton(g: [u32; 3], bits: u32) -> u64 {
        let mut c = 0u64;
        for b in 0..bits {
            for (a, v) in g.iter().enumerate() {
                c |= u64::from((v >> b) & 1) << (3 * b + a as u32);
            }
        }
        c
    }

    fn cells(bits: u32) -> impl Iterator<Item = [u32; 3]> {
        let n = 1u32 << bits;
        (0..n).flat_map(move |x| (0..n).flat_map(move |y| (0..n).map(move |z| [x, y, z])))
    }

    fn unit_step(a: [u32; 3], b: [u32; 3]) -> bool {
        (0..3).map(|k| a[k].abs_diff(b[k])).sum::<u32>() == 1
    }

    #[test]
    fn small_grids_are_exhaustive_bijections() {
        for bits in 1..=4 {
            let total = 1usize << (3 * bits);
            let mut seen_m = alloc::vec![false; total];
            let mut seen_h = alloc::vec![false; total];
            for g in cells(bits) {
                let m = morton_encode(g[0], g[1], g[2], bits).unwrap();
                assert_eq!(m, naive_morton(g, bits));
                assert_eq!(morton_decode(m, bits).unwrap(), g);
                let h = hilbert_encode(g[0], g[1], g[2], bits).unwrap();
                assert_eq!(hilbert_decode(h, bits).unwrap(), g);
                assert!(!core::mem::replace(&mut seen_m[m as usize], true));
                assert!(!core::mem::replace(&mut seen_h[h as usize], true));
            }
            assert!(seen_m.iter().all(|&v| v) && seen_h.iter().all(|&v| v));
            for c in 1..total as u64 {
                let a = hilbert_decode(c - 1, bits).unwrap();
                let b = hilbert_decode(c, bits).unwrap();
                assert!(unit_step(a, b), "bits {bits} code {c}");
            }
        }
    }

    #[test]
    fn trans_variants_swap_x_and_y() {
        for bits in 1..=3 {
            for g in cells(bits) {
                let s = [g[1], g[0], g[2]];
                let z = SerializationScheme::Z.encode(s, bits).unwrap();
                let h = SerializationScheme::Hilbert.encode(s, bits).unwrap();
                assert_eq!(SerializationScheme::TransZ.encode(g, bits).unwrap(), z);
                assert_eq!(SerializationScheme::TransHilbert.encode(g, bits).unwrap(), h);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn round_trips_at_any_depth(bits in 1u32..=MAX_BITS, raw in proptest::prelude::any::<[u32; 3]>()) {
            let g = raw.map(|v| v & ((1u32 << bits) - 1));
            let m = morton_encode(g[0], g[1], g[2], bits).unwrap();
            proptest::prop_assert_eq!(m, naive_morton(g, bits));
            proptest::prop_assert_eq!(morton_decode(m, bits).unwrap(), g);
            let h = hilbert_encode(g[0], g[1], g[2], bits).unwrap();
            proptest::prop_assert!(h < 1u64 << (3 * bits));
            proptest::prop_assert_eq!(hilbert_decode(h, bits).unwrap(), g);
        }

        #[test]
        fn hilbert_successors_are_neighbors(bits in 1u32..=MAX_BITS, raw in proptest::prelude::any::<u64>()) {
            let total = 1u64 << (3 * bits);
            let c = raw % (total - 1);
            let a = hilbert_decode(c, bits).unwrap();
            let b = hilbert_decode(c + 1, bits).unwrap();
            proptest::prop_assert!(unit_step(a, b));
        }
    }
}
