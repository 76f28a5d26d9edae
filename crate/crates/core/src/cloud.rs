//! Point clouds: normalization, voxel sampling, nearest-neighbour upsampling
//! and training-time augmentation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::grid::{cell_of, UniformGrid};
use crate::rng::stream;
use crate::{Error, Mat, Result, Scalar};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Default voxel edge for normalized clouds.
pub const DEFAULT_VOXEL_SIZE: f64 = 0.02;

/// Bits per axis in a packed voxel key.
pub const KEY_BITS: u32 = 21;
const KEY_MASK: u64 = (1 << KEY_BITS) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub position: Vec3,
    pub normal: Vec3,
    pub color: Vec3,
}

impl Point {
    pub fn new(position: Vec3, normal: Vec3, color: Vec3) -> Self {
        Self { position, normal, color }
    }

    /// `(x, y, z, nx, ny, nz, r, g, b)`.
    pub fn features(&self) -> [f64; 9] {
        let (p, n, c) = (self.position, self.normal, self.color);
        [p[0], p[1], p[2], n[0], n[1], n[2], c[0], c[1], c[2]]
    }
}

/// An ordered set of points with optional per-point ground-truth part ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    parts: Option<Vec<i32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if let Some(i) = points.iter().position(|p| !p.features().iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite(format!("point {i}")));
        }
        Ok(Self { points, parts: None })
    }

    pub fn with_parts(points: Vec<Point>, parts: Vec<i32>) -> Result<Self> {
        if parts.len() != points.len() {
            return Err(Error::Shape(format!(
                "{} part ids for {} points",
                parts.len(),
                points.len()
            )));
        }
        let mut c = Self::new(points)?;
        c.parts = Some(parts);
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn parts(&self) -> Option<&[i32]> {
        self.parts.as_deref()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.position).collect()
    }

    /// Same cloud with points reordered so that output `i` is input `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            points: perm.iter().map(|&i| self.points[i]).collect(),
            parts: self.parts.as_ref().map(|g| perm.iter().map(|&i| g[i]).collect()),
        }
    }

    /// Restriction to `ids`, in that order.
    pub fn subset(&self, ids: &[usize]) -> Self {
        self.permuted(ids)
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| Point {
                position: t.apply(&p.position),
                normal: unit_or_zero(mat_vec(&t.rotation, &p.normal)),
                color: p.color,
            })
            .collect();
        Self { points, parts: self.parts.clone() }
    }

    pub fn bbox(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p.position[a]);
                hi[a] = hi[a].max(p.position[a]);
            }
        }
        (lo, hi)
    }

    /// Dense `N x 9` input matrix.
    pub fn feature_matrix<T: Scalar>(&self) -> Mat<T> {
        let data = self
            .points
            .iter()
            .flat_map(|p| p.features())
            .map(T::lit)
            .collect();
        Mat::from_vec(self.points.len(), 9, data).expect("9 features per point")
    }
}

/// `p ↦ scale · R p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub scale: f64,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub const fn identity() -> Self {
        Self { rotation: IDENTITY3, translation: [0.0; 3], scale: 1.0 }
    }

    pub fn rotation(rotation: Mat3) -> Self {
        Self { rotation, ..Self::identity() }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        let r = mat_vec(&self.rotation, p);
        [
            self.scale * r[0] + self.translation[0],
            self.scale * r[1] + self.translation[1],
            self.scale * r[2] + self.translation[2],
        ]
    }

    /// Largest absolute deviation from identity over all components.
    pub fn distance_from_identity(&self) -> f64 {
        let mut d = (self.scale - 1.0).abs();
        for i in 0..3 {
            d = d.max(self.translation[i].abs());
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                d = d.max((self.rotation[i][j] - e).abs());
            }
        }
        d
    }
}

pub const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn mat_mul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose3(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn unit_or_zero(v: Vec3) -> Vec3 {
    let n = Float::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if n > 0.0 {
        [v[0] / n, v[1] / n, v[2] / n]
    } else {
        v
    }
}

/// Centers the cloud on its bounding-box center and scales the longest
/// bounding-box edge to 1. The returned transform maps original to normalized.
pub fn normalize(cloud: &PointCloud) -> Result<(PointCloud, RigidTransform)> {
    let (lo, hi) = cloud.bbox();
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    if !(extent > 0.0) {
        return Err(Error::ZeroExtent);
    }
    let scale = 1.0 / extent;
    let center = [(lo[0] + hi[0]) * 0.5, (lo[1] + hi[1]) * 0.5, (lo[2] + hi[2]) * 0.5];
    let t = RigidTransform {
        rotation: IDENTITY3,
        translation: [-scale * center[0], -scale * center[1], -scale * center[2]],
        scale,
    };
    Ok((cloud.transformed(&t), t))
}

/// Outcome of voxel sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    /// Kept original indices, ascending.
    pub kept: Vec<usize>,
    /// Packed voxel key of each kept point (see [`pack_key`]).
    pub voxel_key: Vec<u64>,
    /// `(dropped index, nearest kept index)`, ascending by dropped index.
    pub parent_of_dropped: Vec<(usize, usize)>,
    /// Total number of points in the sampled cloud.
    pub n_points: usize,
}

impl SampleResult {
    /// Grid indices of each kept point, unpacked from its voxel key.
    pub fn grid(&self) -> Vec<[u32; 3]> {
        self.voxel_key.iter().map(|&k| unpack_key(k)).collect()
    }

    /// For every original index, the position in `kept` of the point whose
    /// feature it receives.
    pub fn source_rows(&self) -> Vec<usize> {
        let mut slot = vec![usize::MAX; self.n_points];
        for (row, &i) in self.kept.iter().enumerate() {
            slot[i] = row;
        }
        for &(d, parent) in &self.parent_of_dropped {
            slot[d] = slot[parent];
        }
        slot
    }

    /// Position in `kept` of each original index, `None` for dropped points.
    pub fn kept_rows(&self) -> Vec<Option<usize>> {
        let mut slot = vec![None; self.n_points];
        for (row, &i) in self.kept.iter().enumerate() {
            slot[i] = Some(row);
        }
        slot
    }
}

pub fn pack_key(g: [u32; 3]) -> u64 {
    (g[0] as u64) | ((g[1] as u64) << KEY_BITS) | ((g[2] as u64) << (2 * KEY_BITS))
}

pub fn unpack_key(k: u64) -> [u32; 3] {
    [
        (k & KEY_MASK) as u32,
        ((k >> KEY_BITS) & KEY_MASK) as u32,
        ((k >> (2 * KEY_BITS)) & KEY_MASK) as u32,
    ]
}

/// Keeps at most one point per voxel of edge `voxel_size` (the lowest original
/// index wins) and links every dropped point to its nearest kept point.
pub fn voxel_sample(cloud: &PointCloud, voxel_size: f64) -> Result<SampleResult> {
    if !(voxel_size > 0.0) || !voxel_size.is_finite() {
        return Err(Error::Config(format!("voxel size {voxel_size} must be positive")));
    }
    let positions = cloud.positions();
    let cells: Vec<[i64; 3]> = positions.iter().map(|p| cell_of(p, voxel_size)).collect();
    let mut lo = [i64::MAX; 3];
    for c in &cells {
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
        }
    }
    let mut keys = Vec::with_capacity(cells.len());
    for c in &cells {
        let mut g = [0u32; 3];
        for a in 0..3 {
            let off = c[a] - lo[a];
            if off > KEY_MASK as i64 {
                return Err(Error::Config(format!(
                    "voxel size {voxel_size} gives more than 2^{KEY_BITS} cells per axis"
                )));
            }
            g[a] = off as u32;
        }
        keys.push(pack_key(g));
    }

    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_unstable_by_key(|&i| (keys[i], i));
    let mut is_kept = vec![false; keys.len()];
    for (pos, &i) in order.iter().enumerate() {
        if pos == 0 || keys[order[pos - 1]] != keys[i] {
            is_kept[i] = true;
        }
    }
    let kept: Vec<usize> = (0..keys.len()).filter(|&i| is_kept[i]).collect();
    let voxel_key = kept.iter().map(|&i| keys[i]).collect();

    let grid = UniformGrid::new(&positions, &kept, voxel_size);
    let parent_of_dropped = (0..keys.len())
        .filter(|&i| !is_kept[i])
        .map(|i| (i, grid.nearest(&positions[i]).expect("at least one kept point")))
        .collect();
    Ok(SampleResult { kept, voxel_key, parent_of_dropped, n_points: keys.len() })
}

/// Expands per-kept-point features to every original point; dropped points
/// copy the row of their nearest kept point.
pub fn nn_upsample<T: Scalar>(kept_features: &Mat<T>, sample: &SampleResult) -> Result<Mat<T>> {
    if kept_features.rows() != sample.kept.len() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} kept points",
            kept_features.rows(),
            sample.kept.len()
        )));
    }
    Ok(kept_features.gather_rows(&sample.source_rows()))
}

pub fn rotation_x(a: f64) -> Mat3 {
    let (s, c) = Float::sin_cos(a);
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

pub fn rotation_y(a: f64) -> Mat3 {
    let (s, c) = Float::sin_cos(a);
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

pub fn rotation_z(a: f64) -> Mat3 {
    let (s, c) = Float::sin_cos(a);
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// `Rz(γ)·Ry(β)·Rx(α)`: rotate about X, then Y, then Z.
pub fn rotation_from_angles(alpha: f64, beta: f64, gamma: f64) -> Mat3 {
    mat_mul3(&rotation_z(gamma), &mat_mul3(&rotation_y(beta), &rotation_x(alpha)))
}

fn sample_angles(rng: &mut impl rand::Rng) -> [f64; 3] {
    core::array::from_fn(|_| rng.random_range(-PI..PI))
}

/// Sequential X, Y, Z rotations with angles uniform on `[-π, π)`.
pub fn random_rotation(seed: u64) -> RigidTransform {
    let [a, b, g] = sample_angles(&mut stream(seed, &[0x726f_74]));
    RigidTransform::rotation(rotation_from_angles(a, b, g))
}

/// Augmentation switches and magnitudes. `None` / zero probability disables
/// an op.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Full random rotation about the origin.
    pub rotate: bool,
    /// Uniform isotropic scale range.
    pub scale: Option<(f64, f64)>,
    /// Probability of mirroring the x and the y axis.
    pub flip_p: [f64; 2],
    /// Gaussian positional jitter sigma and clip.
    pub jitter: Option<(f64, f64)>,
    /// Probability of per-channel min-max stretching, and its blend factor.
    pub auto_contrast: Option<(f64, f64)>,
    /// Uniform color offset bound, shared by all points.
    pub color_translate: Option<f64>,
    /// Per-point Gaussian color noise sigma.
    pub color_jitter: Option<f64>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotate: true,
            scale: Some((0.9, 1.1)),
            flip_p: [0.5, 0.5],
            jitter: Some((0.005, 0.02)),
            auto_contrast: Some((0.2, 0.5)),
            color_translate: Some(0.05),
            color_jitter: Some(0.05),
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            rotate: false,
            scale: None,
            flip_p: [0.0, 0.0],
            jitter: None,
            auto_contrast: None,
            color_translate: None,
            color_jitter: None,
        }
    }
}

/// Applies the enabled augmentations in a fixed order: rotation, scale, flips,
/// jitter, auto-contrast, color translation, color jitter. Geometry is
/// transformed about the origin, which is the center of a normalized cloud.
pub fn augment(cloud: &PointCloud, config: &AugmentConfig, seed: u64) -> PointCloud {
    let mut rng = stream(seed, &[0x6175_67]);
    let mut points = cloud.points.clone();

    if config.rotate {
        let [a, b, g] = sample_angles(&mut rng);
        let r = rotation_from_angles(a, b, g);
        for p in &mut points {
            p.position = mat_vec(&r, &p.position);
            p.normal = unit_or_zero(mat_vec(&r, &p.normal));
        }
    }
    if let Some((lo, hi)) = config.scale {
        let s = if hi > lo { rng.random_range(lo..hi) } else { lo };
        for p in &mut points {
            p.position = p.position.map(|v| v * s);
        }
    }
    for axis in 0..2 {
        let prob = config.flip_p[axis];
        if prob > 0.0 && rng.random::<f64>() < prob {
            for p in &mut points {
                p.position[axis] = -p.position[axis];
                p.normal[axis] = -p.normal[axis];
            }
        }
    }
    if let Some((sigma, clip)) = config.jitter {
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("positive sigma");
            for p in &mut points {
                for a in 0..3 {
                    let d: f64 = normal.sample(&mut rng);
                    p.position[a] += d.clamp(-clip, clip);
                }
            }
        }
    }
    if let Some((prob, blend)) = config.auto_contrast {
        if prob > 0.0 && rng.random::<f64>() < prob {
            for c in 0..3 {
                let lo = points.iter().map(|p| p.color[c]).fold(f64::INFINITY, f64::min);
                let hi = points.iter().map(|p| p.color[c]).fold(f64::NEG_INFINITY, f64::max);
                if hi > lo {
                    for p in &mut points {
                        let stretched = (p.color[c] - lo) / (hi - lo);
                        p.color[c] = (1.0 - blend) * p.color[c] + blend * stretched;
                    }
                }
            }
        }
    }
    if let Some(bound) = config.color_translate {
        if bound > 0.0 {
            let shift: [f64; 3] = core::array::from_fn(|_| rng.random_range(-bound..bound));
            for p in &mut points {
                for c in 0..3 {
                    p.color[c] += shift[c];
                }
            }
        }
    }
    if let Some(sigma) = config.color_jitter {
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("positive sigma");
            for p in &mut points {
                for c in 0..3 {
                    let d: f64 = normal.sample(&mut rng);
                    p.color[c] += d;
                }
            }
        }
    }
    let touched_color =
        config.auto_contrast.is_some() || config.color_translate.is_some() || config.color_jitter.is_some();
    if touched_color {
        for p in &mut points {
            p.color = p.color.map(|v| v.clamp(0.0, 1.0));
        }
    }
    PointCloud { points, parts: cloud.parts.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64, z: f64) -> Point {
        Point::new([x, y, z], [0.0, 0.0, 1.0], [0.5, 0.5, 0.5])
    }

    fn cloud(ps: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(ps.iter().map(|p| pt(p[0], p[1], p[2])).collect()).unwrap()
    }

    #[test]
    fn normalize_two_points() {
        let (c, t) = normalize(&cloud(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])).unwrap();
        assert_eq!(c.points()[0].position, [-0.5, 0.0, 0.0]);
        assert_eq!(c.points()[1].position, [0.5, 0.0, 0.0]);
        assert_eq!(t.scale, 0.5);
    }

    #[test]
    fn normalize_fixed_point_is_identity() {
        let c = cloud(&[[-0.5, -0.2, 0.2], [0.5, 0.2, -0.2]]);
        let (_, t) = normalize(&c).unwrap();
        assert!(t.distance_from_identity() < 1e-12);
    }

    #[test]
    fn normalize_rejects_zero_extent() {
        let c = cloud(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]);
        assert_eq!(normalize(&c), Err(Error::ZeroExtent));
    }

    #[test]
    fn empty_and_non_finite_clouds_are_rejected() {
        assert_eq!(PointCloud::new(vec![]), Err(Error::EmptyCloud));
        assert!(PointCloud::new(vec![pt(f64::NAN, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn coincident_points_keep_lowest_index() {
        let mut ps = vec![[0.9, 0.9, 0.9]; 9];
        ps[3] = [0.1, 0.1, 0.1];
        ps[7] = [0.1, 0.1, 0.1];
        let s = voxel_sample(&cloud(&ps), 0.02).unwrap();
        assert!(s.kept.contains(&3));
        assert!(!s.kept.contains(&7));
        assert!(s.parent_of_dropped.contains(&(7, 3)));
    }

    #[test]
    fn distinct_voxels_are_both_kept() {
        let s = voxel_sample(&cloud(&[[0.001, 0.0, 0.0], [0.5, 0.0, 0.0]]), 0.02).unwrap();
        assert_eq!(s.kept, vec![0, 1]);
        assert!(s.parent_of_dropped.is_empty());
    }

    #[test]
    fn small_cube_collapses_to_one_voxel() {
        // corners of a 0.01 cube placed inside the voxel [0.02, 0.04)^3
        let mut ps = Vec::new();
        for i in 0..8 {
            let b = |k: usize| if i >> k & 1 == 1 { 0.035 } else { 0.025 };
            ps.push([b(0), b(1), b(2)]);
        }
        let s = voxel_sample(&cloud(&ps), 0.02).unwrap();
        assert_eq!(s.kept, vec![0]);
        assert_eq!(s.parent_of_dropped.len(), 7);
    }

    #[test]
    fn upsample_copies_parent_rows() {
        let c = cloud(&[[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [1.0, 0.0, 0.0], [0.51, 0.001, 0.0]]);
        let s = voxel_sample(&c, 0.02).unwrap();
        assert_eq!(s.kept, vec![0, 1, 2]);
        // brute-force nearest kept point for the dropped index
        let d = |a: &Vec3, b: &Vec3| crate::grid::dist2(a, b);
        let pos = c.positions();
        let brute = *s.kept.iter().min_by(|&&a, &&b| d(&pos[a], &pos[3]).total_cmp(&d(&pos[b], &pos[3]))).unwrap();
        assert_eq!(brute, 1);
        let f = Mat::from_vec(3, 2, vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let up = nn_upsample(&f, &s).unwrap();
        assert_eq!(up.row(3), &[3.0, 4.0]);
        assert_eq!(up.row(2), &[5.0, 6.0]);
        assert!(nn_upsample(&Mat::<f32>::zeros(2, 2), &s).is_err());
    }

    #[test]
    fn zero_angles_give_identity() {
        assert_eq!(rotation_from_angles(0.0, 0.0, 0.0), IDENTITY3);
    }

    #[test]
    fn random_rotation_is_proper_and_deterministic() {
        for seed in 0..50 {
            let t = random_rotation(seed);
            let rtr = mat_mul3(&transpose3(&t.rotation), &t.rotation);
            for i in 0..3 {
                for j in 0..3 {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((rtr[i][j] - e).abs() < 1e-6);
                }
            }
            assert!((det3(&t.rotation) - 1.0).abs() < 1e-6);
            assert_eq!(t, random_rotation(seed));
        }
    }

    #[test]
    fn disabled_augmentation_is_identity() {
        let c = cloud(&[[0.1, 0.2, 0.3], [-0.4, 0.1, 0.0]]);
        assert_eq!(augment(&c, &AugmentConfig::disabled(), 9), c);
    }

    #[test]
    fn flip_negates_x() {
        let c = PointCloud::new(vec![Point::new([0.3, 0.2, 0.1], [0.6, 0.0, 0.8], [0.1; 3])]).unwrap();
        let cfg = AugmentConfig { flip_p: [1.0, 0.0], ..AugmentConfig::disabled() };
        let out = augment(&c, &cfg, 1);
        assert_eq!(out.points()[0].position, [-0.3, 0.2, 0.1]);
        assert_eq!(out.points()[0].normal, [-0.6, 0.0, 0.8]);
    }

    #[test]
    fn zero_jitter_leaves_positions() {
        let c = cloud(&[[0.1, 0.2, 0.3]]);
        let cfg = AugmentConfig { jitter: Some((0.0, 0.02)), ..AugmentConfig::disabled() };
        assert_eq!(augment(&c, &cfg, 4), c);
    }

    #[test]
    fn chromatic_ops_clamp_colors() {
        let c = PointCloud::new(vec![
            Point::new([0.0; 3], [0.0, 0.0, 1.0], [0.99, 0.0, 0.5]),
            Point::new([0.1; 3], [0.0, 0.0, 1.0], [0.01, 1.0, 0.5]),
        ])
        .unwrap();
        let cfg = AugmentConfig {
            auto_contrast: Some((1.0, 0.5)),
            color_translate: Some(0.3),
            color_jitter: Some(0.3),
            ..AugmentConfig::disabled()
        };
        for seed in 0..20 {
            for p in augment(&c, &cfg, seed).points() {
                assert!(p.color.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
