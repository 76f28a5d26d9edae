//! Contrastive training of the point transformer.
//!
//! Every label of every object in a batch is pooled to one feature (mean of
//! its kept points, then L2-normalized) and matched against all label
//! embeddings of the batch with a softmax cross-entropy. A batch runs in three
//! passes: per-object forward tapes, the loss and its gradient with respect to
//! the pooled features, then per-object backward passes whose parameter
//! gradients are summed in object order. The per-object passes go through an
//! [`Executor`], and the result is identical to a sequential run.

mod gradcheck;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use gradcheck::{gradient_check, GradCheckEntry};

use crate::cloud::{augment, AugmentConfig, PointCloud};
use crate::exec::Executor;
use crate::mat::{dot, norm};
use crate::net::{forward_graph, Graph, ModelConfig, ModelState, ParamStore, Plan, Tensor};
use crate::rng::{derive_seed, stream};
use crate::tape::{Groups, Var};
use crate::{Error, Mat, Result, Scalar};

const TAG_SPLIT: u64 = 0x7370_6c69;
const TAG_SHUFFLE: u64 = 0x7368_7566;
const TAG_AUGMENT: u64 = 0x6175_676d;

/// A set of points of one object paired with a text embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub object_id: String,
    /// Indices into the object's point cloud, before voxel sampling.
    pub point_indices: Vec<usize>,
    pub label_text: String,
    pub embedding: Vec<f32>,
}

/// An object ready for training: a normalized cloud and its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainObject {
    pub id: String,
    pub cloud: PointCloud,
    pub labels: Vec<LabelRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_objects: usize,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub split_ratio: f64,
    /// Divides every similarity inside the softmax.
    pub temperature: f64,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_objects: 64,
            epochs: 80,
            lr_start: 3e-4,
            lr_end: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            split_ratio: 0.9,
            temperature: 1.0,
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr_end > 0.0 && self.lr_end <= self.lr_start) {
            return bad("need 0 < lr_end <= lr_start");
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad("need 0 < split_ratio < 1");
        }
        if self.batch_objects == 0 {
            return bad("batch_objects must be positive");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }
}

/// Cosine annealing from `lr_start` at epoch 0 to `lr_end` at `epochs`.
pub fn cosine_lr(epoch: usize, config: &TrainConfig) -> f64 {
    let (s, e) = (config.lr_start, config.lr_end);
    if config.epochs == 0 {
        return s;
    }
    let t = epoch as f64 / config.epochs as f64;
    e + 0.5 * (s - e) * (1.0 + Float::cos(core::f64::consts::PI * t))
}

/// Mean of the selected rows, L2-normalized.
pub fn pool_label_feature<T: Scalar>(features: &Mat<T>, indices: &[usize]) -> Vec<T> {
    let mut acc = vec![T::zero(); features.cols()];
    for &i in indices {
        for (a, &v) in acc.iter_mut().zip(features.row(i)) {
            *a = *a + v;
        }
    }
    let inv = T::one() / T::lit(indices.len().max(1) as f64);
    acc.iter_mut().for_each(|a| *a = *a * inv);
    crate::mat::normalized(&acc)
}

fn check_pairs(pooled: &[Vec<f64>], labels: &[Vec<f64>]) -> Result<()> {
    if pooled.len() != labels.len() {
        return Err(Error::Shape(format!("{} pooled features for {} labels", pooled.len(), labels.len())));
    }
    if pooled.is_empty() {
        return Err(Error::Shape("contrastive loss needs at least one pair".into()));
    }
    let d = labels[0].len();
    if pooled.iter().chain(labels).any(|v| v.len() != d) {
        return Err(Error::Shape("feature dimensions differ".into()));
    }
    Ok(())
}

/// Mean softmax cross-entropy of each pooled feature against all labels, with
/// temperature 1.
pub fn contrastive_loss(pooled: &[Vec<f64>], labels: &[Vec<f64>]) -> Result<f64> {
    Ok(contrastive_loss_grad(pooled, labels, 1.0)?.0)
}

/// Loss and its gradient with respect to each pooled feature.
pub fn contrastive_loss_grad(
    pooled: &[Vec<f64>],
    labels: &[Vec<f64>],
    temperature: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_pairs(pooled, labels)?;
    let b = pooled.len();
    let d = labels[0].len();
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(b);
    let mut logits = vec![0.0; b];
    for (i, f) in pooled.iter().enumerate() {
        for (j, t) in labels.iter().enumerate() {
            logits[j] = dot(f, t) / temperature;
        }
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|&s| Float::exp(s - m)).sum();
        loss += m + Float::ln(z) - logits[i];

        let mut g = vec![0.0; d];
        for (j, t) in labels.iter().enumerate() {
            let p = Float::exp(logits[j] - m) / z - if i == j { 1.0 } else { 0.0 };
            for (gk, &tk) in g.iter_mut().zip(t) {
                *gk += p * tk;
            }
        }
        let s = 1.0 / (temperature * b as f64);
        g.iter_mut().for_each(|v| *v *= s);
        grads.push(g);
    }
    Ok((loss / b as f64, grads))
}

/// Per-parameter Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &BTreeMap<String, Tensor>) -> Self {
        let zeros: BTreeMap<String, Vec<f64>> =
            params.iter().map(|(k, t)| (k.clone(), vec![0.0; t.numel()])).collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One bias-corrected Adam update. Parameters without a gradient entry get
/// a zero gradient.
pub fn adam_step(
    params: &mut BTreeMap<String, Tensor>,
    grads: &BTreeMap<String, Mat<f32>>,
    state: &mut OptimizerState,
    lr: f64,
    config: &TrainConfig,
) -> Result<()> {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - Float::powi(config.beta1, t);
    let c2 = 1.0 - Float::powi(config.beta2, t);
    for (name, p) in params.iter_mut() {
        let m = state.m.get_mut(name).ok_or_else(|| Error::MissingParam(name.clone()))?;
        let v = state.v.get_mut(name).ok_or_else(|| Error::MissingParam(name.clone()))?;
        let g = grads.get(name).map(Mat::data);
        if g.is_some_and(|g| g.len() != p.numel()) || m.len() != p.numel() {
            return Err(Error::Shape(format!("gradient or moment of `{name}` does not match")));
        }
        for k in 0..p.numel() {
            let gk = g.map_or(0.0, |g| g[k] as f64);
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * gk;
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * gk * gk;
            let step = lr * (m[k] / c1) / (Float::sqrt(v[k] / c2) + config.eps);
            p.data[k] = (p.data[k] as f64 - step) as f32;
        }
    }
    Ok(())
}

/// An object after augmentation and voxel sampling, with its labels mapped
/// to kept rows.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cloud: PointCloud,
    pub plan: Plan,
    /// Kept rows of each surviving label.
    pub rows: Groups,
    /// Unit label embeddings, aligned with `rows`.
    pub targets: Vec<Vec<f64>>,
    /// Labels with no kept point.
    pub skipped: usize,
}

/// Checks label indices and embedding sizes against the object.
pub fn validate_object(obj: &TrainObject, out_dim: usize) -> Result<()> {
    for l in &obj.labels {
        if let Some(&bad) = l.point_indices.iter().find(|&&i| i >= obj.cloud.len()) {
            return Err(Error::LabelIndex { object: obj.id.clone(), index: bad, len: obj.cloud.len() });
        }
        if l.embedding.len() != out_dim {
            return Err(Error::Shape(format!(
                "embedding of `{}` has {} dims, model emits {out_dim}",
                l.label_text,
                l.embedding.len()
            )));
        }
        if !l.embedding.iter().all(|v| v.is_finite()) || l.embedding.iter().all(|&v| v == 0.0) {
            return Err(Error::NonFinite(format!("embedding of `{}`", l.label_text)));
        }
    }
    Ok(())
}

/// Augments (when `augment` is given, with its seed) and voxel-samples one
/// object.
pub fn prepare(obj: &TrainObject, model: &ModelConfig, augmentation: Option<(&AugmentConfig, u64)>) -> Result<Prepared> {
    validate_object(obj, model.out_dim)?;
    let cloud = match augmentation {
        Some((cfg, seed)) => augment(&obj.cloud, cfg, seed),
        None => obj.cloud.clone(),
    };
    let plan = Plan::new(&cloud, model)?;
    let kept = plan.sample.kept_rows();
    let mut rows = Groups::new();
    let mut targets = Vec::new();
    let mut skipped = 0;
    let mut members = Vec::new();
    for l in &obj.labels {
        members.clear();
        members.extend(l.point_indices.iter().filter_map(|&i| kept[i]));
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            skipped += 1;
            continue;
        }
        rows.push(&members);
        let e: Vec<f64> = l.embedding.iter().map(|&v| v as f64).collect();
        targets.push(crate::mat::normalized(&e));
    }
    Ok(Prepared { cloud, plan, rows, targets, skipped })
}

/// Loss of one batch and, if requested, the summed parameter gradients.
#[derive(Debug, Clone)]
pub struct BatchOutput<T> {
    pub loss: f64,
    pub labels: usize,
    pub grads: Option<BTreeMap<String, Mat<T>>>,
}

/// Runs the contrastive objective over every label of `items`. Returns
/// `None` when no item has a surviving label.
pub fn batch_loss<T: Scalar, E: Executor>(
    items: &[&Prepared],
    store: &ParamStore<T>,
    model: &ModelConfig,
    temperature: f64,
    exec: &E,
    with_grad: bool,
) -> Result<Option<BatchOutput<T>>> {
    let active: Vec<&Prepared> = items.iter().copied().filter(|p| !p.rows.is_empty()).collect();
    if active.is_empty() {
        return Ok(None);
    }

    let forwards = exec.map(&active, |p| -> Result<(Graph<'_, T>, Var)> {
        let mut g = Graph::new(store);
        let out = forward_graph(&mut g, model, &p.plan, &p.cloud)?;
        let pooled = g.tape.group_mean(out, p.rows.clone());
        Ok((g, pooled))
    });
    let forwards: Vec<(Graph<'_, T>, Var)> = forwards.into_iter().collect::<Result<_>>()?;

    let mut means = Vec::new();
    let mut pooled = Vec::new();
    let mut targets = Vec::new();
    for ((g, v), p) in forwards.iter().zip(&active) {
        let m = g.value(*v);
        for r in 0..m.rows() {
            let row: Vec<f64> = m.row(r).iter().map(|x| x.as_f64()).collect();
            let n = norm(&row);
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::NonFinite("pooled label feature".into()));
            }
            pooled.push(row.iter().map(|x| x / n).collect::<Vec<f64>>());
            means.push(n);
        }
        targets.extend(p.targets.iter().cloned());
    }
    let (loss, dfs) = contrastive_loss_grad(&pooled, &targets, temperature)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let labels = pooled.len();
    if !with_grad {
        return Ok(Some(BatchOutput { loss, labels, grads: None }));
    }

    // d/dm of m/|m| applied to the loss gradient
    let mut seeds = Vec::with_capacity(forwards.len());
    let mut k = 0;
    for (g, v) in forwards {
        let rows = g.value(v).rows();
        let cols = g.value(v).cols();
        let mut seed = Mat::zeros(rows, cols);
        for r in 0..rows {
            let (f, gf, n) = (&pooled[k], &dfs[k], means[k]);
            let proj = dot(f, gf);
            for c in 0..cols {
                seed.set(r, c, T::lit((gf[c] - f[c] * proj) / n));
            }
            k += 1;
        }
        seeds.push((g, v, seed));
    }
    let per_object = exec.map(&seeds, |(g, v, seed)| {
        let grads = g.tape.backward(&[(*v, seed.clone())]);
        g.param_vars()
            .iter()
            .filter_map(|(name, &pv)| grads.get(pv).map(|m| (name.clone(), m.clone())))
            .collect::<Vec<_>>()
    });
    let mut total: BTreeMap<String, Mat<T>> = BTreeMap::new();
    for list in per_object {
        for (name, m) in list {
            match total.get_mut(&name) {
                Some(acc) => acc.add_assign(&m),
                None => {
                    total.insert(name, m);
                }
            }
        }
    }
    if let Some((name, _)) = total.iter().find(|(_, m)| !m.all_finite()) {
        return Err(Error::NonFiniteGradient(name.clone()));
    }
    Ok(Some(BatchOutput { loss, labels, grads: Some(total) }))
}

/// Seeded 90:10-style split of `n` objects into (train, val) indices.
/// Training keeps at least one object; validation may be empty.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, &[TAG_SPLIT]));
    let n_train = ((n as f64 * ratio).round() as usize).clamp(n.min(1), n);
    let val = idx.split_off(n_train);
    idx.sort_unstable();
    let mut val = val;
    val.sort_unstable();
    (idx, val)
}

/// Seed of the augmentation stream of dataset object `index` in `epoch`.
pub fn augment_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    derive_seed(seed, &[TAG_AUGMENT, epoch as u64, index as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub skipped_labels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub last: ModelState,
    /// Lowest validation loss seen; equals `last` without a validation set.
    pub best: ModelState,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
}

pub fn fit<E: Executor>(dataset: &[TrainObject], config: &TrainConfig, state: ModelState, exec: &E) -> Result<FitOutcome> {
    fit_with(dataset, config, state, exec, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with<E: Executor>(
    dataset: &[TrainObject],
    config: &TrainConfig,
    mut state: ModelState,
    exec: &E,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutcome> {
    config.validate()?;
    state.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let model = state.config.clone();
    for obj in dataset {
        validate_object(obj, model.out_dim)?;
    }
    let (train, val) = split_indices(dataset.len(), config.split_ratio, config.seed);
    let val_items: Vec<Prepared> = exec
        .map(&val, |&i| prepare(&dataset[i], &model, None))
        .into_iter()
        .collect::<Result<_>>()?;

    let mut opt = OptimizerState::new(&state.params);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best = state.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = None;

    for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config);
        let mut order = train.clone();
        order.shuffle(&mut stream(config.seed, &[TAG_SHUFFLE, epoch as u64]));
        let mut losses = Vec::new();
        let mut skipped = 0;
        for batch in order.chunks(config.batch_objects) {
            let items: Vec<Prepared> = exec
                .map(batch, |&i| {
                    let seed = augment_seed(config.seed, epoch, i);
                    prepare(&dataset[i], &model, Some((&config.augment, seed)))
                })
                .into_iter()
                .collect::<Result<_>>()?;
            skipped += items.iter().map(|p| p.skipped).sum::<usize>();
            let refs: Vec<&Prepared> = items.iter().collect();
            let store = state.store::<f32>();
            if let Some(out) = batch_loss(&refs, &store, &model, config.temperature, exec, true)? {
                losses.push(out.loss);
                adam_step(&mut state.params, out.grads.as_ref().expect("requested"), &mut opt, lr, config)?;
            }
        }
        let train_loss = mean(&losses);
        let val_loss = validation_loss(&val_items, &state, config, exec)?;
        if let Some(v) = val_loss {
            if v < best_loss {
                best_loss = v;
                best = state.clone();
                best_epoch = Some(epoch);
            }
        }
        let record = EpochRecord { epoch, lr, train_loss, val_loss, skipped_labels: skipped };
        on_epoch(&record);
        history.push(record);
    }
    if best_epoch.is_none() {
        best = state.clone();
    }
    Ok(FitOutcome { last: state, best, best_epoch, history })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Mean batch loss over the validation objects, batched like training.
fn validation_loss<E: Executor>(
    items: &[Prepared],
    state: &ModelState,
    config: &TrainConfig,
    exec: &E,
) -> Result<Option<f64>> {
    let store = state.store::<f32>();
    let mut losses = Vec::new();
    for batch in items.chunks(config.batch_objects) {
        let refs: Vec<&Prepared> = batch.iter().collect();
        if let Some(out) = batch_loss(&refs, &store, &state.config, config.temperature, exec, false)? {
            losses.push(out.loss);
        }
    }
    Ok((!losses.is_empty()).then(|| mean(&losses)))
}
