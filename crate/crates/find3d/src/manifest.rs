//! Dataset manifests.
//!
//! `{name, objects: [{id, category, cloud, labels}]}` where `cloud` is a PLY
//! file and `labels` a `{part_names, gt}` JSON file, both relative to the
//! manifest. Loaded clouds are normalized to the unit bounding box.

use std::path::{Path, PathBuf};

use find3d_core::bench::BenchmarkObject;
use find3d_core::cloud::normalize;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ply::{read_ply, write_ply, PlyFormat};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub category: String,
    pub cloud: String,
    pub labels: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub objects: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsFile {
    pub part_names: Vec<String>,
    pub gt: Vec<i32>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::format(path, e))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(Error::io(path))
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let m: Self = read_json(path)?;
        let mut ids = std::collections::BTreeSet::new();
        if let Some(dup) = m.objects.iter().find(|o| !ids.insert(o.id.as_str())) {
            return Err(Error::format(path, format!("duplicate object id `{}`", dup.id)));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

/// Loads one object, normalizing its cloud.
pub fn load_object(base: &Path, entry: &ManifestEntry) -> Result<BenchmarkObject> {
    let cloud_path = base.join(&entry.cloud);
    let cloud = read_ply(&cloud_path)?;
    let (cloud, _) = normalize(&cloud).map_err(|e| Error::format(&cloud_path, e))?;
    let labels_path = base.join(&entry.labels);
    let labels: LabelsFile = read_json(&labels_path)?;
    let obj = BenchmarkObject {
        object_id: entry.id.clone(),
        category: entry.category.clone(),
        cloud,
        part_names: labels.part_names,
        gt: labels.gt,
    };
    obj.validate().map_err(|e| Error::format(&labels_path, e))?;
    Ok(obj)
}

/// Every object of a manifest, in manifest order.
pub fn load_dataset(manifest: &Path) -> Result<(Manifest, Vec<BenchmarkObject>)> {
    let m = Manifest::read(manifest)?;
    let base = base_dir(manifest);
    let objects = m.objects.iter().map(|e| load_object(&base, e)).collect::<Result<_>>()?;
    Ok((m, objects))
}

/// Writes each object as `<id>.ply` plus `<id>.labels.json` under the
/// manifest's directory, then the manifest itself.
pub fn write_dataset(manifest: &Path, name: &str, objects: &[BenchmarkObject]) -> Result<Manifest> {
    let base = base_dir(manifest);
    std::fs::create_dir_all(&base).map_err(Error::io(&base))?;
    let mut entries = Vec::with_capacity(objects.len());
    for o in objects {
        o.validate()?;
        let cloud = format!("{}.ply", o.object_id);
        let labels = format!("{}.labels.json", o.object_id);
        write_ply(&base.join(&cloud), &o.cloud, PlyFormat::BinaryLittleEndian, None)?;
        write_json(&base.join(&labels), &LabelsFile { part_names: o.part_names.clone(), gt: o.gt.clone() })?;
        entries.push(ManifestEntry { id: o.object_id.clone(), category: o.category.clone(), cloud, labels });
    }
    let m = Manifest { name: name.to_string(), objects: entries };
    m.write(manifest)?;
    Ok(m)
}
