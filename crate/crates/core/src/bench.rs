//! Benchmark data model, class-average mIoU and the evaluation harness.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cloud::{normalize, random_rotation, Point, PointCloud, Vec3};
use crate::exec::Executor;
use crate::query::{render_prompt, segment_features, PointFeaturizer, TextEmbedder};
use crate::rng::{derive_seed, hash_bytes, stream, Rng};
use crate::{Error, Mat, Result, UNLABELED};

/// An object with per-point ground-truth part ids.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkObject {
    pub object_id: String,
    pub category: String,
    pub cloud: PointCloud,
    pub part_names: Vec<String>,
    /// Index into `part_names`, or [`UNLABELED`].
    pub gt: Vec<i32>,
}

impl BenchmarkObject {
    pub fn validate(&self) -> Result<()> {
        if self.gt.len() != self.cloud.len() {
            return Err(Error::Shape(format!(
                "object {}: {} gt entries for {} points",
                self.object_id,
                self.gt.len(),
                self.cloud.len()
            )));
        }
        let n = self.part_names.len() as i32;
        if let Some(bad) = self.gt.iter().find(|&&g| g != UNLABELED && !(0..n).contains(&g)) {
            return Err(Error::Shape(format!("object {}: part id {bad} with {n} part names", self.object_id)));
        }
        Ok(())
    }

    /// Part ids that label at least one point, ascending.
    pub fn present_parts(&self) -> Vec<usize> {
        let mut seen = vec![false; self.part_names.len()];
        for &g in &self.gt {
            if g >= 0 {
                seen[g as usize] = true;
            }
        }
        (0..seen.len()).filter(|&p| seen[p]).collect()
    }
}

/// IoU of the point sets labeled `part` in `pred` and `gt`, ignoring points
/// whose ground truth is [`UNLABELED`]. Two empty sets score 1.
pub fn part_iou(pred: &[i32], gt: &[i32], part: i32) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        if g == UNLABELED {
            continue;
        }
        let (a, b) = (p == part, g == part);
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartScore {
    pub part: String,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectScore {
    pub object_id: String,
    pub category: String,
    pub parts: Vec<PartScore>,
    pub miou: f64,
}

/// Part IoUs over the parts present in the ground truth and their mean.
/// `None` when no point is labeled.
pub fn object_score(obj: &BenchmarkObject, pred: &[i32]) -> Option<ObjectScore> {
    let present = obj.present_parts();
    if present.is_empty() {
        return None;
    }
    let parts: Vec<PartScore> = present
        .iter()
        .map(|&p| PartScore { part: obj.part_names[p].clone(), iou: part_iou(pred, &obj.gt, p as i32) })
        .collect();
    let miou = parts.iter().map(|p| p.iou).sum::<f64>() / parts.len() as f64;
    Some(ObjectScore { object_id: obj.object_id.clone(), category: obj.category.clone(), parts, miou })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: String,
    pub objects: usize,
    pub miou: f64,
}

/// Mean of object mIoUs per category, then mean over categories.
pub fn class_miou(objects: &[ObjectScore]) -> Result<(Vec<CategoryScore>, f64)> {
    if objects.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut by: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for o in objects {
        by.entry(&o.category).or_default().push(o.miou);
    }
    let cats: Vec<CategoryScore> = by
        .into_iter()
        .map(|(c, mut v)| {
            v.sort_by(f64::total_cmp);
            CategoryScore { category: c.to_string(), objects: v.len(), miou: v.iter().sum::<f64>() / v.len() as f64 }
        })
        .collect();
    let mut vals: Vec<f64> = cats.iter().map(|c| c.miou).collect();
    vals.sort_by(f64::total_cmp);
    let overall = vals.iter().sum::<f64>() / vals.len() as f64;
    Ok((cats, overall))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationMode {
    #[default]
    Canonical,
    Rotated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub template: String,
    pub rotation: RotationMode,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { template: "{part} of a {object}".into(), rotation: RotationMode::Canonical, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub template: String,
    pub rotation: RotationMode,
    pub seed: u64,
    pub objects: Vec<ObjectScore>,
    pub categories: Vec<CategoryScore>,
    /// Class-average mIoU in [0, 1].
    pub overall: f64,
}

/// Scores and aggregated mIoU of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub objects: Vec<ObjectScore>,
    pub categories: Vec<CategoryScore>,
    pub overall: f64,
}

/// Segments every object from precomputed full-resolution features, querying
/// `prompt(part_name, category)` for each of its parts.
pub fn score_objects(
    dataset: &[BenchmarkObject],
    features: &[Mat<f32>],
    prompt: &dyn Fn(&str, &str) -> Result<String>,
    embedder: &dyn TextEmbedder,
) -> Result<Scored> {
    if features.len() != dataset.len() {
        return Err(Error::Shape(format!("{} feature sets for {} objects", features.len(), dataset.len())));
    }
    let mut objects = Vec::new();
    for (obj, f) in dataset.iter().zip(features) {
        obj.validate()?;
        if obj.part_names.is_empty() {
            continue;
        }
        let queries: Vec<String> =
            obj.part_names.iter().map(|p| prompt(p, &obj.category)).collect::<Result<_>>()?;
        let result = segment_features(f, &queries, embedder)?;
        if let Some(s) = object_score(obj, &result.assignment) {
            objects.push(s);
        }
    }
    let (categories, overall) = class_miou(&objects)?;
    Ok(Scored { objects, categories, overall })
}

/// Rotation applied to an object under [`RotationMode::Rotated`].
pub fn eval_rotation(seed: u64, object_id: &str) -> crate::cloud::RigidTransform {
    random_rotation(derive_seed(seed, &[0x726f_74, hash_bytes(object_id.as_bytes())]))
}

/// Full-resolution features of each object in the pose the mode demands.
pub fn eval_features<E: Executor>(
    model: &dyn PointFeaturizer,
    dataset: &[BenchmarkObject],
    rotation: RotationMode,
    seed: u64,
    exec: &E,
) -> Result<Vec<Mat<f32>>> {
    exec.map(dataset, |o| match rotation {
        RotationMode::Canonical => model.point_features(&o.cloud),
        RotationMode::Rotated => model.point_features(&o.cloud.transformed(&eval_rotation(seed, &o.object_id))),
    })
    .into_iter()
    .collect()
}

pub fn evaluate<E: Executor>(
    model: &dyn PointFeaturizer,
    dataset: &[BenchmarkObject],
    config: &EvalConfig,
    embedder: &dyn TextEmbedder,
    exec: &E,
) -> Result<EvalReport> {
    let features = eval_features(model, dataset, config.rotation, config.seed, exec)?;
    let prompt = |part: &str, object: &str| render_prompt(&config.template, part, object);
    let s = score_objects(dataset, &features, &prompt, embedder)?;
    Ok(EvalReport {
        template: config.template.clone(),
        rotation: config.rotation,
        seed: config.seed,
        objects: s.objects,
        categories: s.categories,
        overall: s.overall,
    })
}

/// Every point assigned to one of its object's parts uniformly at random.
pub fn random_baseline(dataset: &[BenchmarkObject], seed: u64) -> Result<Scored> {
    let mut objects = Vec::new();
    for obj in dataset {
        obj.validate()?;
        let n = obj.part_names.len();
        if n == 0 {
            continue;
        }
        let mut rng = stream(seed, &[0x7261_6e64, hash_bytes(obj.object_id.as_bytes())]);
        let pred: Vec<i32> = (0..obj.cloud.len()).map(|_| rng.random_range(0..n) as i32).collect();
        if let Some(s) = object_score(obj, &pred) {
            objects.push(s);
        }
    }
    let (categories, overall) = class_miou(&objects)?;
    Ok(Scored { objects, categories, overall })
}

/// Seeded disjoint split of objects into (train, test).
pub fn split_objects(dataset: &[BenchmarkObject], train_ratio: f64, seed: u64) -> (Vec<BenchmarkObject>, Vec<BenchmarkObject>) {
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut stream(seed, &[0x7370_6c74]));
    let n_train = (dataset.len() as f64 * train_ratio).round() as usize;
    let (a, b) = idx.split_at(n_train.min(dataset.len()));
    let pick = |ids: &[usize]| {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.into_iter().map(|i| dataset[i].clone()).collect()
    };
    (pick(a), pick(b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Box([f64; 3]),
    Sphere(f64),
    /// Radius and half-length along the given axis.
    Cylinder(f64, f64, usize),
}

struct PartKind {
    name: &'static str,
    color: [f64; 3],
    shape: Shape,
    anchor: Vec3,
}

const fn part(name: &'static str, color: [f64; 3], shape: Shape, anchor: Vec3) -> PartKind {
    PartKind { name, color, shape, anchor }
}

const WOOD: [f64; 3] = [0.55, 0.35, 0.2];
const BLACK: [f64; 3] = [0.1, 0.1, 0.1];
const WHITE: [f64; 3] = [0.92, 0.92, 0.9];

/// Categories with five part slots each, in a canonical z-up frame.
fn catalog() -> [(&'static str, [PartKind; 5]); 4] {
    use Shape::*;
    [
        (
            "chair",
            [
                part("seat", WOOD, Box([0.25, 0.25, 0.03]), [0.0, 0.0, 0.0]),
                part("back", WOOD, Box([0.25, 0.03, 0.25]), [0.0, 0.24, 0.28]),
                part("leg", BLACK, Cylinder(0.03, 0.2, 2), [0.2, -0.2, -0.23]),
                part("arm", [0.6, 0.6, 0.62], Box([0.03, 0.2, 0.03]), [0.27, 0.0, 0.15]),
                part("cushion", [0.8, 0.15, 0.15], Box([0.2, 0.2, 0.03]), [0.0, -0.02, 0.06]),
            ],
        ),
        (
            "lamp",
            [
                part("base", BLACK, Cylinder(0.18, 0.03, 2), [0.0, 0.0, -0.4]),
                part("pole", [0.75, 0.75, 0.78], Cylinder(0.025, 0.3, 2), [0.0, 0.0, -0.07]),
                part("shade", [0.95, 0.85, 0.3], Sphere(0.17), [0.0, 0.0, 0.3]),
                part("switch", [0.85, 0.1, 0.1], Box([0.06, 0.06, 0.04]), [0.13, 0.0, -0.33]),
                part("cord", BLACK, Cylinder(0.015, 0.15, 0), [-0.32, 0.0, -0.42]),
            ],
        ),
        (
            "mug",
            [
                part("body", WHITE, Cylinder(0.2, 0.25, 2), [0.0, 0.0, 0.0]),
                part("handle", WHITE, Box([0.08, 0.03, 0.15]), [0.28, 0.0, 0.0]),
                part("lid", [0.2, 0.35, 0.8], Cylinder(0.21, 0.02, 2), [0.0, 0.0, 0.28]),
                part("logo", [0.85, 0.1, 0.1], Box([0.08, 0.02, 0.08]), [0.0, -0.21, 0.0]),
                part("spoon", [0.75, 0.75, 0.78], Cylinder(0.015, 0.2, 2), [-0.08, 0.05, 0.35]),
            ],
        ),
        (
            "car",
            [
                part("body", [0.2, 0.3, 0.75], Box([0.45, 0.2, 0.1]), [0.0, 0.0, 0.0]),
                part("wheel", BLACK, Cylinder(0.09, 0.03, 1), [0.3, -0.22, -0.1]),
                part("window", [0.6, 0.85, 0.95], Box([0.2, 0.18, 0.07]), [-0.05, 0.0, 0.17]),
                part("light", [0.95, 0.85, 0.3], Sphere(0.07), [0.46, 0.12, 0.02]),
                part("bumper", [0.6, 0.6, 0.62], Box([0.03, 0.2, 0.03]), [-0.48, 0.0, -0.06]),
            ],
        ),
    ]
}

/// Part names the synthetic generator can emit, sorted and unique.
pub fn synth_vocabulary() -> Vec<String> {
    let mut v: Vec<String> = catalog().iter().flat_map(|(_, ps)| ps.iter().map(|p| p.name.to_string())).collect();
    v.sort();
    v.dedup();
    v
}

fn unit(rng: &mut Rng) -> Vec3 {
    loop {
        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = Float::sqrt(n2);
            return v.map(|x| x / n);
        }
    }
}

/// A point and outward normal on the surface of `shape` centered at origin.
fn surface_point(shape: Shape, rng: &mut Rng) -> (Vec3, Vec3) {
    match shape {
        Shape::Box(h) => {
            let areas = [h[1] * h[2], h[0] * h[2], h[0] * h[1]];
            let total: f64 = areas.iter().sum();
            let mut pick = rng.random_range(0.0..total);
            let mut axis = 2;
            for (a, &w) in areas.iter().enumerate() {
                if pick < w {
                    axis = a;
                    break;
                }
                pick -= w;
            }
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mut p = [0.0; 3];
            let mut n = [0.0; 3];
            for a in 0..3 {
                p[a] = if a == axis { sign * h[a] } else { rng.random_range(-h[a]..h[a]) };
            }
            n[axis] = sign;
            (p, n)
        }
        Shape::Sphere(r) => {
            let n = unit(rng);
            (n.map(|v| v * r), n)
        }
        Shape::Cylinder(r, half, axis) => {
            let side = 2.0 * core::f64::consts::PI * r * 2.0 * half;
            let caps = 2.0 * core::f64::consts::PI * r * r;
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            let t = rng.random_range(0.0..core::f64::consts::TAU);
            let (s, c) = Float::sin_cos(t);
            let mut p = [0.0; 3];
            let mut n = [0.0; 3];
            if rng.random_range(0.0..side + caps) < side {
                p[u] = r * c;
                p[v] = r * s;
                p[axis] = rng.random_range(-half..half);
                n[u] = c;
                n[v] = s;
            } else {
                let rr = r * Float::sqrt(rng.random::<f64>());
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                p[u] = rr * c;
                p[v] = rr * s;
                p[axis] = sign * half;
                n[axis] = sign;
            }
            (p, n)
        }
    }
}

fn scaled(shape: Shape, k: f64) -> Shape {
    match shape {
        Shape::Box(h) => Shape::Box(h.map(|v| v * k)),
        Shape::Sphere(r) => Shape::Sphere(r * k),
        Shape::Cylinder(r, h, a) => Shape::Cylinder(r * k, h * k, a),
    }
}

/// Procedural multi-part objects in a canonical upright pose, normalized.
/// Each object has between `parts_range.0` and `parts_range.1` parts, each
/// with 40 to 80 surface points and a color tied to its name.
pub fn synth_dataset(seed: u64, n_objects: usize, parts_range: (usize, usize)) -> Result<Vec<BenchmarkObject>> {
    let (lo, hi) = parts_range;
    if lo < 2 || hi > 5 || lo > hi {
        return Err(Error::Config(format!("parts range {lo}..={hi} must lie within 2..=5")));
    }
    let cats = catalog();
    let mut out = Vec::with_capacity(n_objects);
    for i in 0..n_objects {
        let mut rng = stream(seed, &[0x7379_6e74, i as u64]);
        let (category, kinds) = &cats[rng.random_range(0..cats.len())];
        let k = rng.random_range(lo..=hi);
        let mut slots: Vec<usize> = (0..5).collect();
        slots.shuffle(&mut rng);
        let mut slots = slots[..k].to_vec();
        slots.sort_unstable();

        let tint: [f64; 3] = core::array::from_fn(|_| rng.random_range(-0.05..0.05));
        let mut points = Vec::new();
        let mut gt = Vec::new();
        let mut part_names = Vec::new();
        for (pid, &s) in slots.iter().enumerate() {
            let kind = &kinds[s];
            let shape = scaled(kind.shape, rng.random_range(0.85..1.15));
            let center: Vec3 = core::array::from_fn(|a| kind.anchor[a] + rng.random_range(-0.03..0.03));
            let n = rng.random_range(40..=80);
            for _ in 0..n {
                let (p, nrm) = surface_point(shape, &mut rng);
                let pos = core::array::from_fn(|a| center[a] + p[a]);
                let color = core::array::from_fn(|a| {
                    (kind.color[a] + tint[a] + rng.random_range(-0.04..0.04)).clamp(0.0, 1.0)
                });
                points.push(Point::new(pos, nrm, color));
                gt.push(pid as i32);
            }
            part_names.push(kind.name.to_string());
        }
        let raw = PointCloud::with_parts(points, gt.clone())?;
        let (cloud, _) = normalize(&raw)?;
        out.push(BenchmarkObject {
            object_id: format!("synth-{seed}-{i:05}"),
            category: category.to_string(),
            cloud,
            part_names,
            gt,
        });
    }
    Ok(out)
}
