//! Text queries against per-point embeddings.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};

use crate::bench::{score_objects, BenchmarkObject};
use crate::cloud::{nn_upsample, PointCloud};
use crate::exec::Executor;
use crate::mat::{dot, norm};
use crate::net::{forward_with_plan, ModelState};
use crate::rng::{hash_bytes, stream};
use crate::{Error, Mat, Result, NO_LABEL};

/// Maps text to a unit vector.
pub trait TextEmbedder: Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vec<f32>>;

    /// Embeds every text, one row each.
    fn embed_all(&self, texts: &[String]) -> Result<Mat<f32>> {
        let mut data = Vec::with_capacity(texts.len() * self.dim());
        for t in texts {
            let v = self.embed(t)?;
            if v.len() != self.dim() {
                return Err(Error::Embedder {
                    text: t.clone(),
                    message: format!("{} dims, expected {}", v.len(), self.dim()),
                });
            }
            data.extend(v);
        }
        Mat::from_vec(texts.len(), self.dim(), data)
    }
}

/// Pseudo-random unit vector per text, seeded by a byte hash of the text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim, seed: 0 }
    }
}

impl TextEmbedder for MockEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        let mut rng = stream(self.seed, &[hash_bytes(text.as_bytes())]);
        let v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(crate::mat::normalized(&v).into_iter().map(|x| x as f32).collect())
    }
}

impl<E: TextEmbedder + ?Sized> TextEmbedder for &E {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        (**self).embed(text)
    }
}

/// Anything that yields one feature row per point of a cloud.
pub trait PointFeaturizer: Sync {
    fn point_features(&self, cloud: &PointCloud) -> Result<Mat<f32>>;
}

impl PointFeaturizer for ModelState {
    /// Forward pass on the kept points, then nearest-kept upsampling.
    fn point_features(&self, cloud: &PointCloud) -> Result<Mat<f32>> {
        let f = forward_with_plan(cloud, self)?;
        nn_upsample(&f.features, &f.plan.sample)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub queries: Vec<String>,
    /// `N × Q` cosine similarities.
    pub scores: Mat<f32>,
    /// Winning query per point, or [`NO_LABEL`].
    pub assignment: Vec<i32>,
}

impl QueryResult {
    /// Row maxima of `scores`.
    pub fn max_scores(&self) -> Vec<f32> {
        (0..self.scores.rows())
            .map(|r| self.scores.row(r).iter().copied().fold(f32::NEG_INFINITY, f32::max))
            .collect()
    }
}

/// Pairwise cosine similarity; zero rows on either side score 0.
pub fn score(features: &Mat<f32>, queries: &Mat<f32>) -> Result<Mat<f32>> {
    if features.cols() != queries.cols() {
        return Err(Error::Shape(format!(
            "features have {} dims, queries {}",
            features.cols(),
            queries.cols()
        )));
    }
    let to64 = |m: &Mat<f32>, r: usize| -> Vec<f64> { m.row(r).iter().map(|&v| v as f64).collect() };
    let q: Vec<(Vec<f64>, f64)> = (0..queries.rows())
        .map(|j| {
            let v = to64(queries, j);
            let n = norm(&v);
            (v, n)
        })
        .collect();
    let mut out = Mat::zeros(features.rows(), queries.rows());
    for i in 0..features.rows() {
        let f = to64(features, i);
        let nf = norm(&f);
        for (j, (qv, nq)) in q.iter().enumerate() {
            if nf > 0.0 && *nq > 0.0 {
                let c = (dot(&f, qv) / (nf * nq)).clamp(-1.0, 1.0);
                out.set(i, j, c as f32);
            }
        }
    }
    Ok(out)
}

/// Argmax per row when the maximum is positive, otherwise [`NO_LABEL`].
/// Ties go to the lowest query index.
pub fn assign(scores: &Mat<f32>) -> Vec<i32> {
    (0..scores.rows())
        .map(|r| {
            let mut best = NO_LABEL;
            let mut best_s = 0.0f32;
            for (j, &s) in scores.row(r).iter().enumerate() {
                if s > best_s {
                    best_s = s;
                    best = j as i32;
                }
            }
            best
        })
        .collect()
}

/// Substitutes `{part}` and `{object}`; any other `{name}` is an error.
pub fn render_prompt(template: &str, part: &str, object: &str) -> Result<String> {
    let mut out = String::with_capacity(template.len() + part.len() + object.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                match &after[..close] {
                    "part" => out.push_str(part),
                    "object" => out.push_str(object),
                    other => return Err(Error::Template(format!("unknown placeholder `{{{other}}}`"))),
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Scores precomputed per-point features against embedded queries.
pub fn segment_features(features: &Mat<f32>, queries: &[String], embedder: &dyn TextEmbedder) -> Result<QueryResult> {
    if queries.is_empty() {
        return Err(Error::NoQueries);
    }
    let q = embedder.embed_all(queries)?;
    let scores = score(features, &q)?;
    let assignment = assign(&scores);
    Ok(QueryResult { queries: queries.to_vec(), scores, assignment })
}

/// Full-resolution segmentation of a normalized cloud.
pub fn segment(
    cloud: &PointCloud,
    model: &dyn PointFeaturizer,
    queries: &[String],
    embedder: &dyn TextEmbedder,
) -> Result<QueryResult> {
    if queries.is_empty() {
        return Err(Error::NoQueries);
    }
    let features = model.point_features(cloud)?;
    segment_features(&features, queries, embedder)
}

/// Chosen prompt per part name and the score it reached.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSearch {
    pub chosen: BTreeMap<String, String>,
    pub miou: f64,
    /// Class mIoU after each completed pass.
    pub pass_miou: Vec<f64>,
}

/// Coordinate ascent over candidate prompts: each pass visits the parts in
/// name order and keeps, for each, the candidate with the highest class mIoU
/// while the others stay fixed. Ties keep the lowest candidate index.
/// Parts without candidates are queried by their own name.
pub fn topk_prompt_search<E: Executor>(
    model: &dyn PointFeaturizer,
    dataset: &[BenchmarkObject],
    candidates: &BTreeMap<String, Vec<String>>,
    passes: usize,
    embedder: &dyn TextEmbedder,
    exec: &E,
) -> Result<PromptSearch> {
    if let Some((part, _)) = candidates.iter().find(|(_, c)| c.is_empty()) {
        return Err(Error::NoCandidates(part.clone()));
    }
    let features: Vec<Mat<f32>> = exec
        .map(dataset, |o| model.point_features(&o.cloud))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut chosen: BTreeMap<String, String> = candidates.iter().map(|(p, c)| (p.clone(), c[0].clone())).collect();
    let evaluate = |chosen: &BTreeMap<String, String>| -> Result<f64> {
        let prompt = |part: &str, _: &str| Ok(chosen.get(part).cloned().unwrap_or_else(|| part.to_string()));
        Ok(score_objects(dataset, &features, &prompt, embedder)?.overall)
    };
    let mut best = evaluate(&chosen)?;
    let mut pass_miou = Vec::with_capacity(passes);
    for _ in 0..passes {
        for (part, cands) in candidates {
            let mut keep = chosen[part].clone();
            let mut keep_score = f64::NEG_INFINITY;
            for c in cands {
                let mut trial = chosen.clone();
                trial.insert(part.clone(), c.clone());
                let s = evaluate(&trial)?;
                if s > keep_score {
                    keep_score = s;
                    keep = c.clone();
                }
            }
            chosen.insert(part.clone(), keep);
            best = keep_score;
        }
        pass_miou.push(best);
    }
    Ok(PromptSearch { chosen, miou: best, pass_miou })
}

/// Whether `v` has unit length within `tol`.
pub fn is_unit(v: &[f32], tol: f32) -> bool {
    let n: f32 = v.iter().map(|x| x * x).sum::<f32>();
    Float::abs(Float::sqrt(n) - 1.0) <= tol
}
