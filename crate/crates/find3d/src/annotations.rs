//! Label records as JSON lines plus an FNDE embedding matrix.
//!
//! Each line is `{object_id, label_text, point_indices, embedding_ref: {file,
//! row}}`; `file` is resolved relative to the JSONL file. The matrix file is
//! `"FNDE"`, rows `u32`, dim `u32`, then row-major `f32`, all little-endian.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use find3d_core::train::LabelRecord;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SIDECAR_MAGIC: &[u8; 4] = b"FNDE";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingRef {
    pub file: String,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationLine {
    pub object_id: String,
    pub label_text: String,
    pub point_indices: Vec<u32>,
    pub embedding_ref: EmbeddingRef,
}

/// Row-major embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Sidecar {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl Sidecar {
    pub fn row(&self, i: usize) -> Option<&[f32]> {
        (i < self.rows).then(|| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let rows = u32::try_from(self.rows).map_err(|_| Error::Sidecar("too many rows".into()))?;
        let dim = u32::try_from(self.dim).map_err(|_| Error::Sidecar("dimension too large".into()))?;
        if self.data.len() != self.rows * self.dim {
            return Err(Error::Sidecar("data length differs from rows × dim".into()));
        }
        let mut buf = Vec::with_capacity(12 + 4 * self.data.len());
        buf.extend_from_slice(SIDECAR_MAGIC);
        buf.extend_from_slice(&rows.to_le_bytes());
        buf.extend_from_slice(&dim.to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        Ok(buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != SIDECAR_MAGIC {
            return Err(Error::Sidecar("missing FNDE header".into()));
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = rows.checked_mul(dim).and_then(|n| n.checked_mul(4)).and_then(|n| n.checked_add(12));
        if expected != Some(bytes.len()) {
            return Err(Error::Sidecar(format!("{rows}×{dim} header but {} bytes", bytes.len())));
        }
        let data = bytes[12..].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        Ok(Self { rows, dim, data })
    }
}

/// Sidecar path written next to `jsonl`.
pub fn sidecar_path(jsonl: &Path) -> PathBuf {
    jsonl.with_extension("fnde")
}

/// Writes `records` to `jsonl` and their embeddings to the sidecar next to it.
pub fn write_annotations(jsonl: &Path, records: &[LabelRecord]) -> Result<()> {
    let side = sidecar_path(jsonl);
    let dim = records.first().map_or(0, |r| r.embedding.len());
    if records.iter().any(|r| r.embedding.len() != dim) {
        return Err(Error::Sidecar("records disagree on embedding dimension".into()));
    }
    let matrix = Sidecar { rows: records.len(), dim, data: records.iter().flat_map(|r| r.embedding.iter().copied()).collect() };
    std::fs::write(&side, matrix.encode()?).map_err(Error::io(&side))?;
    let file_name = side.file_name().unwrap().to_string_lossy().into_owned();
    let f = File::create(jsonl).map_err(Error::io(jsonl))?;
    let mut w = BufWriter::new(f);
    for (row, r) in records.iter().enumerate() {
        let line = AnnotationLine {
            object_id: r.object_id.clone(),
            label_text: r.label_text.clone(),
            point_indices: r.point_indices.iter().map(|&i| i as u32).collect(),
            embedding_ref: EmbeddingRef { file: file_name.clone(), row },
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::format(jsonl, e))?;
        w.write_all(b"\n").map_err(Error::io(jsonl))?;
    }
    w.flush().map_err(Error::io(jsonl))
}

/// Reads records in file order. Blank lines are skipped; any malformed line
/// or dangling embedding reference is reported with its 1-based line number.
pub fn read_annotations(jsonl: &Path) -> Result<Vec<LabelRecord>> {
    let f = File::open(jsonl).map_err(Error::io(jsonl))?;
    let base = jsonl.parent().unwrap_or(Path::new("."));
    let mut sidecars: BTreeMap<String, Sidecar> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let at = |message: String| Error::Line { path: jsonl.to_path_buf(), line: i + 1, message };
        let line = line.map_err(|e| at(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationLine = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        if !sidecars.contains_key(&rec.embedding_ref.file) {
            let p = base.join(&rec.embedding_ref.file);
            let bytes = std::fs::read(&p).map_err(|e| at(format!("{}: {e}", p.display())))?;
            let m = Sidecar::decode(&bytes).map_err(|e| at(format!("{}: {e}", p.display())))?;
            sidecars.insert(rec.embedding_ref.file.clone(), m);
        }
        let m = &sidecars[&rec.embedding_ref.file];
        let emb = m
            .row(rec.embedding_ref.row)
            .ok_or_else(|| at(format!("row {} outside {} rows of {}", rec.embedding_ref.row, m.rows, rec.embedding_ref.file)))?;
        out.push(LabelRecord {
            object_id: rec.object_id,
            point_indices: rec.point_indices.into_iter().map(|i| i as usize).collect(),
            label_text: rec.label_text,
            embedding: emb.to_vec(),
        });
    }
    Ok(out)
}
