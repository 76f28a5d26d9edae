//! Subcommands of the `find3d` binary.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use find3d_core::bench::{evaluate, split_objects, synth_dataset, EvalConfig, EvalReport, RotationMode};
use find3d_core::cloud::{normalize, rotation_x, rotation_y, PointCloud, RigidTransform};
use find3d_core::engine::{build_labels, choose_orientation, AnnotationProvider, EngineConfig, OracleProvider};
use find3d_core::net::{describe, ModelConfig, ModelState};
use find3d_core::query::{segment_features, MockEmbedder, PointFeaturizer};
use find3d_core::train::{fit_with, FitOutcome, LabelRecord, TrainConfig, TrainObject};
use serde::{Deserialize, Serialize};

use crate::annotations::{read_annotations, write_annotations};
use crate::checkpoint;
use crate::manifest::{load_dataset, write_dataset, Manifest};
use crate::ply::{read_ply, write_ply, PlyFormat};
use crate::remote::{CacheEmbedder, RemoteEmbedder, RemoteProvider, EMBEDDER_ENV};
use crate::report::{history_csv, write_report, QueryJson};
use crate::server::{serve, ServiceState, SharedEmbedder};
use crate::RayonExecutor;

#[derive(Debug, Parser)]
#[command(name = "find3d", version, about = "Open-vocabulary part segmentation of point clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a procedural multi-part dataset with ground truth.
    Synth(SynthArgs),
    /// Run the data engine over a manifest and write label records.
    Annotate(AnnotateArgs),
    /// Train a model on annotated objects.
    Train(TrainArgs),
    /// Segment one PLY cloud with text queries.
    Segment(SegmentArgs),
    /// Score a checkpoint on a labeled manifest.
    Eval(EvalArgs),
    /// Serve the query API over a manifest.
    Serve(ServeArgs),
    /// Print parameter counts of a model configuration.
    Describe(DescribeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedderKind {
    /// Seeded pseudo-random unit vector per text.
    Mock,
    /// JSON-lines cache, falling back to the remote embedder when configured.
    Cache,
    /// `POST /embed` at the embedder URL.
    Remote,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedderArgs {
    #[arg(long, value_enum, default_value_t = EmbedderKind::Mock)]
    pub embedder: EmbedderKind,
    /// Seed of the mock embedder.
    #[arg(long, default_value_t = 0)]
    pub embedder_seed: u64,
    /// Cache file for `--embedder cache`.
    #[arg(long)]
    pub embedding_cache: Option<PathBuf>,
}

impl EmbedderArgs {
    pub fn build(&self, dim: usize) -> anyhow::Result<SharedEmbedder> {
        Ok(match self.embedder {
            EmbedderKind::Mock => Arc::new(MockEmbedder { dim, seed: self.embedder_seed }),
            EmbedderKind::Remote => Arc::new(RemoteEmbedder::from_env(dim)?),
            EmbedderKind::Cache => {
                let path = self.embedding_cache.as_deref().context("--embedder cache needs --embedding-cache")?;
                let remote = match std::env::var(EMBEDDER_ENV) {
                    Ok(url) => Some(RemoteEmbedder::new(url, dim)?),
                    Err(_) => None,
                };
                Arc::new(CacheEmbedder::open(path, dim, remote)?)
            }
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory; receives `manifest.json` and one PLY + labels file per object.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub objects: usize,
    #[arg(long, default_value_t = 2)]
    pub min_parts: usize,
    #[arg(long, default_value_t = 5)]
    pub max_parts: usize,
    /// Also write `train.json` and `test.json` manifests splitting the
    /// objects with this train fraction.
    #[arg(long)]
    pub split: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    /// Ground-truth masks and names from the labels file.
    Oracle,
    /// HTTP provider at the annotator URL.
    Remote,
}

#[derive(Debug, Clone, Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// JSON-lines output; the embedding matrix goes next to it as `.fnde`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ProviderKind::Oracle)]
    pub provider: ProviderKind,
    /// Data-engine settings as JSON; defaults are 10 views of 500×500 pixels.
    #[arg(long)]
    pub engine_config: Option<PathBuf>,
    /// Width of the label embeddings; must match the model's output width.
    #[arg(long, default_value_t = 32)]
    pub embed_dim: usize,
    /// Vote among axis-aligned up-directions before labeling.
    #[arg(long)]
    pub orient: bool,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
}

/// Training config file: every [`TrainConfig`] field at top level plus the
/// model shape (toy by default) and the initialization seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainFile {
    #[serde(flatten)]
    pub train: TrainConfig,
    #[serde(default = "ModelConfig::toy")]
    pub model: ModelConfig,
    #[serde(default)]
    pub init_seed: u64,
}

impl Default for TrainFile {
    fn default() -> Self {
        Self { train: TrainConfig::default(), model: ModelConfig::toy(), init_seed: 0 }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// JSON config; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Manifest providing the clouds the annotations index.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    /// Last-epoch checkpoint; the best-validation one is written beside it
    /// with `.best` before the extension and the loss history as `.history.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub cloud: PathBuf,
    /// Part query; repeat for several.
    #[arg(long = "query", required = true)]
    pub queries: Vec<String>,
    /// Colored PLY output.
    #[arg(long)]
    pub out_ply: PathBuf,
    /// Query result JSON output.
    #[arg(long)]
    pub out_json: PathBuf,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Prompt template with `{part}` and optionally `{object}`.
    #[arg(long, default_value = "{part} of a {object}")]
    pub template: String,
    #[arg(long, value_enum, default_value_t = Rotation::Canonical)]
    pub rotation: Rotation,
    /// Seed of the per-object rotations.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path stem; writes `<stem>.json` and `<stem>.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Rotation {
    Canonical,
    Rotated,
}

impl From<Rotation> for RotationMode {
    fn from(r: Rotation) -> Self {
        match r {
            Rotation::Canonical => Self::Canonical,
            Rotation::Rotated => Self::Rotated,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DescribeArgs {
    /// Model config JSON; the toy config when omitted.
    #[arg(long, conflicts_with = "paper_scale")]
    pub config: Option<PathBuf>,
    /// The full-size architecture.
    #[arg(long)]
    pub paper_scale: bool,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a).map(|_| ()),
        Command::Annotate(a) => cmd_annotate(&a).map(|_| ()),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Segment(a) => cmd_segment(&a).map(|_| ()),
        Command::Eval(a) => {
            let r = cmd_eval(&a)?;
            println!("overall mIoU {:.4}", r.overall);
            Ok(())
        }
        Command::Serve(a) => cmd_serve(&a),
        Command::Describe(a) => cmd_describe(&a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn cmd_synth(a: &SynthArgs) -> anyhow::Result<Manifest> {
    let objects = synth_dataset(a.seed, a.objects, (a.min_parts, a.max_parts))?;
    let path = a.out.join("manifest.json");
    let m = write_dataset(&path, &format!("synth-{}", a.seed), &objects)?;
    if let Some(ratio) = a.split {
        if !(ratio > 0.0 && ratio < 1.0) {
            bail!("--split must lie strictly between 0 and 1");
        }
        let (train, test) = split_objects(&objects, ratio, a.seed);
        for (name, part) in [("train", train), ("test", test)] {
            let ids: std::collections::BTreeSet<&str> = part.iter().map(|o| o.object_id.as_str()).collect();
            let sub = Manifest {
                name: format!("{}-{name}", m.name),
                objects: m.objects.iter().filter(|e| ids.contains(e.id.as_str())).cloned().collect(),
            };
            sub.write(&a.out.join(format!("{name}.json")))?;
        }
    }
    println!("wrote {} objects to {}", objects.len(), path.display());
    Ok(m)
}

/// Identity first, then the other axis-aligned up-directions.
pub fn orientation_candidates() -> Vec<RigidTransform> {
    use std::f64::consts::{FRAC_PI_2, PI};
    [rotation_x(0.0), rotation_x(FRAC_PI_2), rotation_x(-FRAC_PI_2), rotation_x(PI), rotation_y(FRAC_PI_2), rotation_y(-FRAC_PI_2)]
        .into_iter()
        .map(RigidTransform::rotation)
        .collect()
}

pub fn cmd_annotate(a: &AnnotateArgs) -> anyhow::Result<Vec<LabelRecord>> {
    let (_, objects) = load_dataset(&a.manifest)?;
    let config: EngineConfig = match &a.engine_config {
        Some(p) => read_json(p)?,
        None => EngineConfig::default(),
    };
    let embedder = a.embedder.build(a.embed_dim)?;
    let remote = match a.provider {
        ProviderKind::Remote => Some(RemoteProvider::from_env()?),
        ProviderKind::Oracle => None,
    };
    let exec = RayonExecutor;
    let mut records = Vec::new();
    for o in &objects {
        let oracle;
        let provider: &dyn AnnotationProvider = match &remote {
            Some(r) => r,
            None => {
                let cloud = PointCloud::with_parts(o.cloud.points().to_vec(), o.gt.clone())?;
                oracle = OracleProvider::new(cloud, o.part_names.clone(), config.render.splat_radius)?;
                &oracle
            }
        };
        let cloud = if a.orient {
            let choice = choose_orientation(&o.cloud, &orientation_candidates(), provider, config.n_views, &config.render)
                .with_context(|| format!("orienting {}", o.object_id))?;
            o.cloud.transformed(&choice.rotation)
        } else {
            o.cloud.clone()
        };
        let ann = build_labels(&o.object_id, &cloud, provider, &*embedder, &config, &exec)
            .with_context(|| format!("annotating {}", o.object_id))?;
        let flag = if ann.insufficient { " (insufficient)" } else { "" };
        println!("{}: {} labels{flag}", o.object_id, ann.records.len());
        records.extend(ann.records);
    }
    write_annotations(&a.out, &records)?;
    Ok(records)
}

/// `<stem>.best.<ext>` beside `out`.
pub fn best_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(e) => format!("{stem}.best.{}", e.to_string_lossy()),
        None => format!("{stem}.best"),
    };
    out.with_file_name(name)
}

pub fn history_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.history.csv"))
}

/// Groups records by object, in manifest order; objects without records are
/// left out.
pub fn train_objects(
    objects: Vec<find3d_core::bench::BenchmarkObject>,
    records: Vec<LabelRecord>,
) -> anyhow::Result<Vec<TrainObject>> {
    let mut by: BTreeMap<String, Vec<LabelRecord>> = BTreeMap::new();
    for r in records {
        by.entry(r.object_id.clone()).or_default().push(r);
    }
    let mut out = Vec::new();
    for o in objects {
        if let Some(labels) = by.remove(&o.object_id) {
            out.push(TrainObject { id: o.object_id, cloud: o.cloud, labels });
        }
    }
    if let Some(id) = by.keys().next() {
        bail!("annotations reference object `{id}` missing from the manifest");
    }
    Ok(out)
}

pub fn cmd_train(a: &TrainArgs) -> anyhow::Result<FitOutcome> {
    let file: TrainFile = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainFile::default(),
    };
    let (_, objects) = load_dataset(&a.manifest)?;
    let records = read_annotations(&a.annotations)?;
    let dataset = train_objects(objects, records)?;
    let init = ModelState::init(file.model.clone(), file.init_seed)?;
    let quiet = a.quiet;
    let outcome = fit_with(&dataset, &file.train, init, &RayonExecutor, |r| {
        if !quiet {
            let val = r.val_loss.map_or_else(|| "-".into(), |v| format!("{v:.5}"));
            eprintln!("epoch {:3} lr {:.2e} train {:.5} val {val} skipped {}", r.epoch, r.lr, r.train_loss, r.skipped_labels);
        }
    })?;
    checkpoint::save(&a.out, &outcome.last)?;
    checkpoint::save(&best_path(&a.out), &outcome.best)?;
    let hist = history_path(&a.out);
    std::fs::write(&hist, history_csv(&outcome.history)).with_context(|| format!("writing {}", hist.display()))?;
    Ok(outcome)
}

/// Distinct colors for assignments; points with no label are gray.
pub const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [170, 110, 40],
];
pub const NO_LABEL_COLOR: [u8; 3] = [128, 128, 128];

pub fn assignment_colors(assignment: &[i32]) -> Vec<[u8; 3]> {
    assignment
        .iter()
        .map(|&a| if a < 0 { NO_LABEL_COLOR } else { PALETTE[a as usize % PALETTE.len()] })
        .collect()
}

/// Loads and normalizes a PLY cloud the way manifests are loaded.
pub fn load_cloud(path: &Path) -> anyhow::Result<PointCloud> {
    let cloud = read_ply(path)?;
    let (cloud, _) = normalize(&cloud).with_context(|| format!("normalizing {}", path.display()))?;
    Ok(cloud)
}

pub fn cmd_segment(a: &SegmentArgs) -> anyhow::Result<QueryJson> {
    if a.queries.is_empty() {
        bail!("at least one --query is required");
    }
    let model = checkpoint::load(&a.checkpoint)?;
    let cloud = load_cloud(&a.cloud)?;
    let embedder = a.embedder.build(model.config.out_dim)?;
    let features = model.point_features(&cloud)?;
    let result = segment_features(&features, &a.queries, &*embedder)?;
    let json = QueryJson::from(&result);
    write_ply(&a.out_ply, &cloud, PlyFormat::BinaryLittleEndian, Some(&assignment_colors(&result.assignment)))?;
    std::fs::write(&a.out_json, json.to_bytes()).with_context(|| format!("writing {}", a.out_json.display()))?;
    Ok(json)
}

pub fn cmd_eval(a: &EvalArgs) -> anyhow::Result<EvalReport> {
    let model = checkpoint::load(&a.checkpoint)?;
    let (_, objects) = load_dataset(&a.manifest)?;
    let embedder = a.embedder.build(model.config.out_dim)?;
    let config = EvalConfig { template: a.template.clone(), rotation: a.rotation.into(), seed: a.seed };
    let report = evaluate(&model, &objects, &config, &*embedder, &RayonExecutor)?;
    write_report(&a.out, &report)?;
    Ok(report)
}

pub fn cmd_serve(a: &ServeArgs) -> anyhow::Result<()> {
    let model = checkpoint::load(&a.checkpoint)?;
    let (_, objects) = load_dataset(&a.manifest)?;
    let embedder = a.embedder.build(model.config.out_dim)?;
    let state = Arc::new(ServiceState::new(Arc::new(model), embedder, objects));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(serve(state, SocketAddr::new(a.host, a.port)))?;
    Ok(())
}

pub fn cmd_describe(a: &DescribeArgs) -> anyhow::Result<()> {
    let config = match (&a.config, a.paper_scale) {
        (Some(p), _) => read_json(p)?,
        (None, true) => ModelConfig::paper_scale(),
        (None, false) => ModelConfig::toy(),
    };
    config.validate()?;
    let d = describe(&config);
    println!("{} parameters in {} tensors", d.total, d.tensors);
    for (class, n) in d.by_class {
        println!("  {class:?}: {n}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn segment_requires_a_query() {
        let err = Cli::try_parse_from(["find3d", "segment", "--checkpoint", "c", "--cloud", "x.ply", "--out-ply", "o.ply", "--out-json", "o.json"])
            .unwrap_err();
        assert_eq!(err.kind(), clap::error::ErrorKind::MissingRequiredArgument);
    }

    #[test]
    fn derived_paths() {
        assert_eq!(best_path(Path::new("/t/model.fnd3")), PathBuf::from("/t/model.best.fnd3"));
        assert_eq!(best_path(Path::new("model")), PathBuf::from("model.best"));
        assert_eq!(history_path(Path::new("/t/model.fnd3")), PathBuf::from("/t/model.history.csv"));
    }

    #[test]
    fn train_file_defaults_and_overrides() {
        let f: TrainFile = serde_json::from_str(r#"{"epochs": 3, "seed": 9}"#).unwrap();
        assert_eq!(f.train.epochs, 3);
        assert_eq!(f.train.seed, 9);
        assert_eq!(f.train.batch_objects, 64);
        assert_eq!(f.model, ModelConfig::toy());
        let text = serde_json::to_string(&TrainFile::default()).unwrap();
        assert_eq!(serde_json::from_str::<TrainFile>(&text).unwrap(), TrainFile::default());
    }

    #[test]
    fn palette_marks_no_label_gray() {
        assert_eq!(assignment_colors(&[-1, 0, 12]), vec![NO_LABEL_COLOR, PALETTE[0], PALETTE[0]]);
    }

    #[test]
    fn orientation_candidates_start_with_identity() {
        let c = orientation_candidates();
        assert_eq!(c.len(), 6);
        assert!(c[0].distance_from_identity() < 1e-12);
        assert!(c[1..].iter().all(|t| t.distance_from_identity() > 0.5));
    }
}
