//! Data engine geometry: splat renders, mask filtering and merging,
//! back-projection, orientation voting and label assembly.
//!
//! Cameras follow the pinhole convention with x right, y down and z forward
//! in camera space. Pixel `(x, y)` covers `[x, x + 1) × [y, y + 1)` and is
//! stored at `y * width + x`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, RigidTransform, Vec3};
use crate::exec::Executor;
use crate::query::TextEmbedder;
use crate::train::LabelRecord;
use crate::{Error, Result};

/// Reference image area the mask-size thresholds are quoted for.
pub const REFERENCE_AREA: f64 = 500.0 * 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// World to camera.
    pub extrinsics: RigidTransform,
    pub focal: f64,
    pub principal: [f64; 2],
    pub width: u32,
    pub height: u32,
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn unit(v: Vec3) -> Option<Vec3> {
    let n = Float::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    (n > 1e-12).then(|| v.map(|x| x / n))
}

impl Camera {
    /// Camera at `eye` looking at `target`; `up` fixes the roll and falls back
    /// to another axis when parallel to the viewing direction.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, focal: f64, width: u32, height: u32) -> Result<Self> {
        let forward = unit([target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]])
            .ok_or_else(|| Error::Config("camera eye coincides with its target".into()))?;
        let right = unit(cross(forward, up))
            .or_else(|| unit(cross(forward, [0.0, 1.0, 0.0])))
            .or_else(|| unit(cross(forward, [1.0, 0.0, 0.0])))
            .expect("some axis is not parallel");
        let down = cross(forward, right);
        let rotation = [right, down, forward];
        let r = RigidTransform::rotation(rotation).apply(&eye);
        let camera = Self {
            extrinsics: RigidTransform { rotation, translation: r.map(|v| -v), scale: 1.0 },
            focal,
            principal: [width as f64 / 2.0, height as f64 / 2.0],
            width,
            height,
        };
        camera.validate()?;
        Ok(camera)
    }

    pub fn validate(&self) -> Result<()> {
        let [cx, cy] = self.principal;
        if !(self.focal > 0.0) || self.width == 0 || self.height == 0 {
            return Err(Error::Config("camera needs a positive focal length and image size".into()));
        }
        if !(0.0..self.width as f64).contains(&cx) || !(0.0..self.height as f64).contains(&cy) {
            return Err(Error::Config("principal point outside the image".into()));
        }
        Ok(())
    }

    /// Sub-pixel image coordinates and depth, `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64, f64)> {
        let c = self.extrinsics.apply(p);
        if c[2] <= 1e-9 {
            return None;
        }
        Some((self.focal * c[0] / c[2] + self.principal[0], self.focal * c[1] / c[2] + self.principal[1], c[2]))
    }

    pub fn area(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    pub camera_radius: f64,
    /// Fraction of the half-image the bounding sphere of a normalized cloud
    /// spans.
    pub fill: f64,
    /// Half-width of the square splat, in pixels.
    pub splat_radius: u32,
    pub elevation_deg: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { width: 500, height: 500, camera_radius: 2.5, fill: 0.6, splat_radius: 2, elevation_deg: 30.0 }
    }
}

impl RenderConfig {
    /// Focal length that fits a sphere of radius √3/2 (enclosing a normalized
    /// cloud) into `fill` of the half-image.
    pub fn focal(&self) -> Result<f64> {
        let rho = Float::sqrt(3.0f64) / 2.0;
        if !(self.camera_radius > rho) || !(self.fill > 0.0) {
            return Err(Error::Config(format!("camera radius must exceed {rho:.3} and fill must be positive")));
        }
        let half = self.width.min(self.height) as f64 / 2.0;
        Ok(self.fill * half * Float::sqrt(self.camera_radius * self.camera_radius - rho * rho) / rho)
    }

    /// `n` cameras at evenly spaced azimuths, alternating between the upper
    /// and lower elevation ring, all aimed at the origin with +z up.
    pub fn cameras(&self, n: usize) -> Result<Vec<Camera>> {
        let focal = self.focal()?;
        let el = self.elevation_deg.to_radians();
        (0..n)
            .map(|k| {
                let az = core::f64::consts::TAU * k as f64 / n as f64;
                let e = if k % 2 == 0 { el } else { -el };
                let (se, ce) = Float::sin_cos(e);
                let (sa, ca) = Float::sin_cos(az);
                let r = self.camera_radius;
                let eye = [r * ce * ca, r * ce * sa, r * se];
                Camera::look_at(eye, [0.0; 3], [0.0, 0.0, 1.0], focal, self.width, self.height)
            })
            .collect()
    }
}

/// Splat render of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub view_id: usize,
    pub camera: Camera,
    /// Point index winning the depth test at each pixel.
    pub pixel_owner: Vec<Option<u32>>,
    pub depth: Vec<Option<f32>>,
    /// RGB, white background.
    pub image: Vec<[u8; 3]>,
}

impl RenderedView {
    pub fn width(&self) -> u32 {
        self.camera.width
    }

    pub fn height(&self) -> u32 {
        self.camera.height
    }

    /// Points owning at least one pixel.
    pub fn visible_points(&self) -> BTreeSet<u32> {
        self.pixel_owner.iter().flatten().copied().collect()
    }
}

/// Splats every point of `cloud` as a square; the nearest depth wins and
/// equal depths keep the lower index.
pub fn render_view(cloud: &PointCloud, camera: &Camera, view_id: usize, splat_radius: u32) -> RenderedView {
    let (w, h) = (camera.width as i64, camera.height as i64);
    let n = camera.area();
    let mut owner = vec![None; n];
    let mut depth: Vec<Option<f32>> = vec![None; n];
    let mut zbuf = vec![f64::INFINITY; n];
    let r = splat_radius as i64;
    for (i, p) in cloud.points().iter().enumerate() {
        let Some((u, v, z)) = camera.project(&p.position) else { continue };
        let (px, py) = (Float::floor(u) as i64, Float::floor(v) as i64);
        for y in (py - r).max(0)..=(py + r).min(h - 1) {
            for x in (px - r).max(0)..=(px + r).min(w - 1) {
                let k = (y * w + x) as usize;
                if z < zbuf[k] {
                    zbuf[k] = z;
                    owner[k] = Some(i as u32);
                    depth[k] = Some(z as f32);
                }
            }
        }
    }
    let pts = cloud.points();
    let image = owner
        .iter()
        .map(|o| match o {
            Some(i) => pts[*i as usize].color.map(|c| (c.clamp(0.0, 1.0) * 255.0 + 0.5) as u8),
            None => [255; 3],
        })
        .collect();
    RenderedView { view_id, camera: *camera, pixel_owner: owner, depth, image }
}

pub fn render_views(cloud: &PointCloud, n_views: usize, config: &RenderConfig) -> Result<Vec<RenderedView>> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(config
        .cameras(n_views)?
        .iter()
        .enumerate()
        .map(|(k, cam)| render_view(cloud, cam, k, config.splat_radius))
        .collect())
}

/// A 2D mask in one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub view_id: usize,
    /// Sorted, unique pixel indices.
    pub pixels: Vec<u32>,
    pub confidence: f64,
    pub label_text: String,
}

impl MaskRecord {
    pub fn new(view_id: usize, mut pixels: Vec<u32>, confidence: f64) -> Self {
        pixels.sort_unstable();
        pixels.dedup();
        Self { view_id, pixels, confidence, label_text: String::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Minimum pixel count at the reference area.
    pub min_pixels: f64,
    pub max_fraction: f64,
    pub min_confidence: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { min_pixels: 350.0, max_fraction: 0.2, min_confidence: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discard {
    TooSmall,
    TooLarge,
    LowConfidence,
}

/// `Ok(())` keeps the mask.
pub fn filter_mask(mask: &MaskRecord, image_area: usize, config: &FilterConfig) -> core::result::Result<(), Discard> {
    let n = mask.pixels.len() as f64;
    let area = image_area as f64;
    if n < config.min_pixels * area / REFERENCE_AREA {
        Err(Discard::TooSmall)
    } else if n > config.max_fraction * area {
        Err(Discard::TooLarge)
    } else if mask.confidence < config.min_confidence {
        Err(Discard::LowConfidence)
    } else {
        Ok(())
    }
}

/// Unions masks sharing view and label; output sorted by (view, label).
pub fn merge_masks(masks: &[MaskRecord]) -> Vec<MaskRecord> {
    let mut groups: BTreeMap<(usize, &str), (BTreeSet<u32>, f64)> = BTreeMap::new();
    for m in masks {
        let e = groups.entry((m.view_id, &m.label_text)).or_insert((BTreeSet::new(), f64::NEG_INFINITY));
        e.0.extend(m.pixels.iter().copied());
        e.1 = e.1.max(m.confidence);
    }
    groups
        .into_iter()
        .map(|((view_id, label), (px, confidence))| MaskRecord {
            view_id,
            pixels: px.into_iter().collect(),
            confidence,
            label_text: label.into(),
        })
        .collect()
}

/// Owners of the mask's pixels, ascending.
pub fn backproject(mask: &MaskRecord, view: &RenderedView) -> Vec<u32> {
    let set: BTreeSet<u32> = mask
        .pixels
        .iter()
        .filter_map(|&p| view.pixel_owner.get(p as usize).copied().flatten())
        .collect();
    set.into_iter().collect()
}

/// Stand-in for the segmenter, the namer and the orientation judge.
pub trait AnnotationProvider: Sync {
    fn propose_masks(&self, view: &RenderedView) -> core::result::Result<Vec<MaskRecord>, String>;
    fn name_mask(&self, view: &RenderedView, mask: &MaskRecord) -> core::result::Result<String, String>;
    fn orientation_vote(&self, view: &RenderedView) -> core::result::Result<bool, String>;
}

/// Ground-truth provider: one mask per part visible in a view, named after
/// the part owning most of its pixels; votes yes exactly when the view
/// matches a render of the canonical cloud from the same camera.
#[derive(Debug, Clone)]
pub struct OracleProvider {
    pub canonical: PointCloud,
    pub part_names: Vec<String>,
    pub splat_radius: u32,
}

impl OracleProvider {
    pub fn new(canonical: PointCloud, part_names: Vec<String>, splat_radius: u32) -> Result<Self> {
        if canonical.parts().is_none() {
            return Err(Error::Config("oracle provider needs per-point parts".into()));
        }
        Ok(Self { canonical, part_names, splat_radius })
    }

    fn part_of(&self, i: u32) -> i32 {
        self.canonical.parts().expect("checked in new")[i as usize]
    }
}

impl AnnotationProvider for OracleProvider {
    fn propose_masks(&self, view: &RenderedView) -> core::result::Result<Vec<MaskRecord>, String> {
        let mut by: BTreeMap<i32, Vec<u32>> = BTreeMap::new();
        for (px, o) in view.pixel_owner.iter().enumerate() {
            if let Some(i) = o {
                let part = self.part_of(*i);
                if part >= 0 {
                    by.entry(part).or_default().push(px as u32);
                }
            }
        }
        Ok(by.into_values().map(|px| MaskRecord::new(view.view_id, px, 1.0)).collect())
    }

    fn name_mask(&self, view: &RenderedView, mask: &MaskRecord) -> core::result::Result<String, String> {
        let mut votes: BTreeMap<i32, usize> = BTreeMap::new();
        for &p in &mask.pixels {
            if let Some(Some(i)) = view.pixel_owner.get(p as usize) {
                *votes.entry(self.part_of(*i)).or_default() += 1;
            }
        }
        let best = votes.iter().filter(|(p, _)| **p >= 0).max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)));
        match best {
            Some((&p, _)) => self.part_names.get(p as usize).cloned().ok_or_else(|| format!("part id {p} has no name")),
            None => Err("mask covers no labeled point".into()),
        }
    }

    fn orientation_vote(&self, view: &RenderedView) -> core::result::Result<bool, String> {
        let reference = render_view(&self.canonical, &view.camera, view.view_id, self.splat_radius);
        Ok(reference.pixel_owner == view.pixel_owner)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrientationChoice {
    pub index: usize,
    pub rotation: RigidTransform,
    /// Share of yes votes per candidate.
    pub yes_fraction: Vec<f64>,
}

/// Renders the cloud under each candidate transform and keeps the one with the
/// highest share of yes votes; ties keep the earliest candidate.
pub fn choose_orientation(
    cloud: &PointCloud,
    candidates: &[RigidTransform],
    provider: &dyn AnnotationProvider,
    n_views: usize,
    config: &RenderConfig,
) -> Result<OrientationChoice> {
    if candidates.is_empty() {
        return Err(Error::Config("no candidate orientations".into()));
    }
    let mut yes_fraction = Vec::with_capacity(candidates.len());
    for t in candidates {
        let views = render_views(&cloud.transformed(t), n_views, config)?;
        let mut yes = 0;
        for v in &views {
            let vote = provider
                .orientation_vote(v)
                .map_err(|message| Error::Provider { view: v.view_id, mask: None, message })?;
            yes += vote as usize;
        }
        yes_fraction.push(if views.is_empty() { 0.0 } else { yes as f64 / views.len() as f64 });
    }
    let mut index = 0;
    for (k, &f) in yes_fraction.iter().enumerate() {
        if f > yes_fraction[index] {
            index = k;
        }
    }
    Ok(OrientationChoice { index, rotation: candidates[index], yes_fraction })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub n_views: usize,
    pub render: RenderConfig,
    pub filter: FilterConfig,
    /// Objects with fewer label records are flagged.
    pub min_labels: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { n_views: 10, render: RenderConfig::default(), filter: FilterConfig::default(), min_labels: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineStats {
    pub proposed: usize,
    pub too_small: usize,
    pub too_large: usize,
    pub low_confidence: usize,
    pub merged: usize,
    pub empty: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    /// Sorted by view, then label text.
    pub records: Vec<LabelRecord>,
    pub insufficient: bool,
    pub stats: EngineStats,
}

/// Renders, proposes, filters, names, merges per view, back-projects and
/// embeds. Point indices refer to `cloud`.
pub fn build_labels<E: Executor>(
    object_id: &str,
    cloud: &PointCloud,
    provider: &dyn AnnotationProvider,
    embedder: &dyn TextEmbedder,
    config: &EngineConfig,
    exec: &E,
) -> Result<Annotation> {
    let views = render_views(cloud, config.n_views, &config.render)?;
    let per_view = exec.map(&views, |view| -> Result<(Vec<(MaskRecord, Vec<u32>)>, EngineStats)> {
        let perr = |mask: Option<usize>| move |message| Error::Provider { view: view.view_id, mask, message };
        let mut stats = EngineStats::default();
        let proposed = provider.propose_masks(view).map_err(perr(None))?;
        stats.proposed = proposed.len();
        let mut named = Vec::new();
        for (k, mut m) in proposed.into_iter().enumerate() {
            m.view_id = view.view_id;
            if m.pixels.iter().any(|&p| p as usize >= view.camera.area()) {
                return Err(Error::Provider {
                    view: view.view_id,
                    mask: Some(k),
                    message: "mask pixel outside the image".into(),
                });
            }
            match filter_mask(&m, view.camera.area(), &config.filter) {
                Err(Discard::TooSmall) => stats.too_small += 1,
                Err(Discard::TooLarge) => stats.too_large += 1,
                Err(Discard::LowConfidence) => stats.low_confidence += 1,
                Ok(()) => {
                    m.label_text = provider.name_mask(view, &m).map_err(perr(Some(k)))?;
                    named.push(m);
                }
            }
        }
        let merged = merge_masks(&named);
        stats.merged = named.len() - merged.len();
        let mut out = Vec::new();
        for m in merged {
            let pts = backproject(&m, view);
            if pts.is_empty() {
                stats.empty += 1;
            } else {
                out.push((m, pts));
            }
        }
        Ok((out, stats))
    });

    let mut stats = EngineStats::default();
    let mut masks = Vec::new();
    for r in per_view {
        let (m, s) = r?;
        stats.proposed += s.proposed;
        stats.too_small += s.too_small;
        stats.too_large += s.too_large;
        stats.low_confidence += s.low_confidence;
        stats.merged += s.merged;
        stats.empty += s.empty;
        masks.extend(m);
    }
    let texts: BTreeSet<&str> = masks.iter().map(|(m, _)| m.label_text.as_str()).collect();
    let mut embeddings = BTreeMap::new();
    for t in texts {
        embeddings.insert(t, embedder.embed(t)?);
    }
    let records: Vec<LabelRecord> = masks
        .iter()
        .map(|(m, pts)| LabelRecord {
            object_id: object_id.into(),
            point_indices: pts.iter().map(|&p| p as usize).collect(),
            label_text: m.label_text.clone(),
            embedding: embeddings[m.label_text.as_str()].clone(),
        })
        .collect();
    let insufficient = records.len() < config.min_labels;
    Ok(Annotation { records, insufficient, stats })
}

/// Label quality against ground truth: for each part, the precision of the
/// records carrying its name and the recall of its points visible in
/// `views`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSoundness {
    pub part: String,
    pub precision: f64,
    pub recall: f64,
    pub visible: usize,
}

pub fn label_soundness(
    parts: &[i32],
    part_names: &[String],
    records: &[LabelRecord],
    views: &[RenderedView],
) -> Vec<PartSoundness> {
    let visible: BTreeSet<u32> = views.iter().flat_map(|v| v.visible_points()).collect();
    part_names
        .iter()
        .enumerate()
        .filter_map(|(pid, name)| {
            let pid = pid as i32;
            let vis: BTreeSet<usize> =
                visible.iter().map(|&i| i as usize).filter(|&i| parts[i] == pid).collect();
            if vis.is_empty() {
                return None;
            }
            let labeled: BTreeSet<usize> = records
                .iter()
                .filter(|r| &r.label_text == name)
                .flat_map(|r| r.point_indices.iter().copied())
                .collect();
            let hits = labeled.iter().filter(|&&i| parts[i] == pid).count();
            let precision = if labeled.is_empty() { 1.0 } else { hits as f64 / labeled.len() as f64 };
            let recall = vis.iter().filter(|i| labeled.contains(i)).count() as f64 / vis.len() as f64;
            Some(PartSoundness { part: name.clone(), precision, recall, visible: vis.len() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::synth_dataset;
    use crate::cloud::{rotation_z, Point};
    use crate::exec::Sequential;
    use crate::query::MockEmbedder;

    fn pt(p: Vec3) -> Point {
        Point::new(p, [0.0, 0.0, 1.0], [0.2, 0.4, 0.6])
    }

    fn cam_on_z() -> Camera {
        Camera::look_at([0.0, 0.0, 2.0], [0.0; 3], [0.0, 1.0, 0.0], 400.0, 500, 500).unwrap()
    }

    #[test]
    fn center_point_projects_to_principal_pixel() {
        let cloud = PointCloud::new(vec![pt([0.0; 3])]).unwrap();
        let v = render_view(&cloud, &cam_on_z(), 0, 0);
        assert_eq!(v.pixel_owner[250 * 500 + 250], Some(0));
        assert_eq!(v.pixel_owner.iter().flatten().count(), 1);
        assert_eq!(v.depth[250 * 500 + 250], Some(2.0));
    }

    #[test]
    fn nearer_point_wins() {
        let cloud = PointCloud::new(vec![pt([0.0, 0.0, -0.3]), pt([0.0, 0.0, 0.3])]).unwrap();
        let v = render_view(&cloud, &cam_on_z(), 0, 2);
        assert!(v.pixel_owner.iter().flatten().all(|&o| o == 1));
        assert_eq!(v.pixel_owner.iter().flatten().count(), 25);
        for (o, d) in v.pixel_owner.iter().zip(&v.depth) {
            assert_eq!(o.is_some(), d.is_some());
        }
    }

    #[test]
    fn camera_axes_follow_the_pinhole_convention() {
        let c = cam_on_z();
        let (u, v, _) = c.project(&[0.1, 0.0, 0.0]).unwrap();
        assert!(u > 250.0 && (v - 250.0).abs() < 1e-9);
        let (_, v, _) = c.project(&[0.0, 0.1, 0.0]).unwrap();
        assert!(v < 250.0);
        assert!(c.project(&[0.0, 0.0, 3.0]).is_none());
        assert!(Camera::look_at([0.0; 3], [0.0; 3], [0.0, 0.0, 1.0], 1.0, 10, 10).is_err());
    }

    #[test]
    fn cube_corners_are_all_seen() {
        let mut pts = Vec::new();
        for k in 0..8 {
            pts.push(pt([(k & 1) as f64 - 0.5, ((k >> 1) & 1) as f64 - 0.5, ((k >> 2) & 1) as f64 - 0.5]));
        }
        let cloud = PointCloud::new(pts).unwrap();
        let views = render_views(&cloud, 10, &RenderConfig::default()).unwrap();
        let seen: BTreeSet<u32> = views.iter().flat_map(|v| v.visible_points()).collect();
        assert_eq!(seen.len(), 8);
        assert_eq!(views, render_views(&cloud, 10, &RenderConfig::default()).unwrap());
    }

    #[test]
    fn filter_thresholds() {
        let m = |n: u32, c: f64| MaskRecord::new(0, (0..n).collect(), c);
        let f = FilterConfig::default();
        assert_eq!(filter_mask(&m(349, 1.0), 250_000, &f), Err(Discard::TooSmall));
        assert_eq!(filter_mask(&m(350, 1.0), 250_000, &f), Ok(()));
        assert_eq!(filter_mask(&m(50_001, 1.0), 250_000, &f), Err(Discard::TooLarge));
        assert_eq!(filter_mask(&m(50_000, 1.0), 250_000, &f), Ok(()));
        assert_eq!(filter_mask(&m(1000, 0.99), 250_000, &f), Ok(()));
        assert_eq!(filter_mask(&m(1000, 0.5), 250_000, &f), Err(Discard::LowConfidence));
        // thresholds scale with the image
        assert_eq!(filter_mask(&m(87, 1.0), 62_500, &f), Err(Discard::TooSmall));
        assert_eq!(filter_mask(&m(88, 1.0), 62_500, &f), Ok(()));
    }

    fn named(view: usize, px: &[u32], label: &str, c: f64) -> MaskRecord {
        MaskRecord { label_text: label.into(), ..MaskRecord::new(view, px.to_vec(), c) }
    }

    #[test]
    fn merging_groups_by_view_and_label() {
        let out = merge_masks(&[named(0, &[1, 2], "leg", 0.9), named(0, &[5], "leg", 0.95)]);
        assert_eq!(out, vec![named(0, &[1, 2, 5], "leg", 0.95)]);
        assert_eq!(merge_masks(&[named(0, &[1], "leg", 1.0), named(1, &[1], "leg", 1.0)]).len(), 2);
        let three = [named(0, &[1], "a", 1.0), named(0, &[2], "b", 1.0), named(0, &[3], "a", 1.0)];
        assert_eq!(merge_masks(&three).len(), 2);
    }

    #[test]
    fn backprojection_examples() {
        let cloud = PointCloud::new(vec![pt([0.0; 3])]).unwrap();
        let v = render_view(&cloud, &cam_on_z(), 0, 2);
        assert_eq!(backproject(&MaskRecord::new(0, (0..250_000).collect(), 1.0), &v), vec![0]);
        assert!(backproject(&MaskRecord::new(0, vec![0, 1, 2], 1.0), &v).is_empty());
    }

    struct Votes(Vec<bool>, core::sync::atomic::AtomicUsize);

    impl AnnotationProvider for Votes {
        fn propose_masks(&self, _: &RenderedView) -> core::result::Result<Vec<MaskRecord>, String> {
            Ok(vec![])
        }
        fn name_mask(&self, _: &RenderedView, _: &MaskRecord) -> core::result::Result<String, String> {
            Err("unused".into())
        }
        fn orientation_vote(&self, _: &RenderedView) -> core::result::Result<bool, String> {
            let k = self.1.fetch_add(1, core::sync::atomic::Ordering::SeqCst);
            Ok(self.0[k])
        }
    }

    fn scripted(a: usize, b: usize) -> Votes {
        let mut v: Vec<bool> = (0..10).map(|k| k < a).collect();
        v.extend((0..10).map(|k| k < b));
        Votes(v, Default::default())
    }

    #[test]
    fn orientation_voting_rule() {
        let cloud = PointCloud::new(vec![pt([0.0; 3]), pt([0.3, 0.1, 0.0])]).unwrap();
        let cands = [RigidTransform::identity(), RigidTransform::rotation(rotation_z(1.0))];
        let cfg = RenderConfig::default();
        assert_eq!(choose_orientation(&cloud, &cands, &scripted(10, 10), 10, &cfg).unwrap().index, 0);
        let c = choose_orientation(&cloud, &cands, &scripted(8, 5), 10, &cfg).unwrap();
        assert_eq!((c.index, c.yes_fraction.clone()), (0, vec![0.8, 0.5]));
        assert_eq!(choose_orientation(&cloud, &cands, &scripted(3, 9), 10, &cfg).unwrap().index, 1);
        assert!(choose_orientation(&cloud, &[], &scripted(0, 0), 10, &cfg).is_err());
    }

    #[test]
    fn no_masks_flags_insufficient_labels() {
        let cloud = PointCloud::new(vec![pt([0.0; 3]), pt([0.3, 0.1, 0.0])]).unwrap();
        let a = build_labels("o", &cloud, &scripted(0, 0), &MockEmbedder::new(8), &EngineConfig::default(), &Sequential)
            .unwrap();
        assert!(a.records.is_empty() && a.insufficient);
    }

    #[test]
    fn oracle_labels_are_sound() {
        let objs = synth_dataset(3, 4, (2, 3)).unwrap();
        let cfg = EngineConfig::default();
        for o in &objs {
            let provider = OracleProvider::new(o.cloud.clone(), o.part_names.clone(), cfg.render.splat_radius).unwrap();
            let a = build_labels(&o.object_id, &o.cloud, &provider, &MockEmbedder::new(8), &cfg, &Sequential).unwrap();
            let texts: BTreeSet<&str> = a.records.iter().map(|r| r.label_text.as_str()).collect();
            assert!(texts.len() >= 2, "{:?}", a.stats);
            let views = render_views(&o.cloud, cfg.n_views, &cfg.render).unwrap();
            for s in label_soundness(&o.gt, &o.part_names, &a.records, &views) {
                assert_eq!(s.precision, 1.0, "{s:?}");
                assert!(s.recall >= 0.5, "{s:?}");
            }
        }
    }

    #[test]
    fn oracle_votes_for_the_identity() {
        let o = &synth_dataset(4, 1, (3, 3)).unwrap()[0];
        let provider = OracleProvider::new(o.cloud.clone(), o.part_names.clone(), 2).unwrap();
        let cands = [
            RigidTransform::rotation(rotation_z(0.7)),
            RigidTransform::identity(),
            RigidTransform::rotation(crate::cloud::rotation_x(core::f64::consts::PI)),
        ];
        let c = choose_orientation(&o.cloud, &cands, &provider, 10, &RenderConfig::default()).unwrap();
        assert_eq!(c.index, 1);
        assert_eq!(c.yes_fraction[1], 1.0);
    }
}
