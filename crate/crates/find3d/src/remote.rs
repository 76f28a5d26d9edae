//! HTTP-backed annotation provider and text embedder, plus the on-disk
//! embedding cache.
//!
//! Masks travel as row-major run-length counts alternating background and
//! foreground, starting with background (a leading zero when pixel 0 is set).

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine as _;
use find3d_core::engine::{AnnotationProvider, MaskRecord, RenderedView};
use find3d_core::query::TextEmbedder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ANNOTATOR_ENV: &str = "FIND3D_ANNOTATOR_URL";
pub const EMBEDDER_ENV: &str = "FIND3D_EMBEDDER_URL";

/// Run-length counts of a sorted pixel list over an image of `area` pixels.
pub fn rle_encode(pixels: &[u32], area: usize) -> Vec<u32> {
    let mut counts = Vec::new();
    let mut run_start = 0u32;
    let mut on = false;
    let mut prev: Option<u32> = None;
    for &p in pixels {
        if prev.is_some_and(|q| q + 1 == p) {
            prev = Some(p);
            continue;
        }
        if let Some(q) = prev {
            counts.push(q + 1 - run_start);
            run_start = q + 1;
        }
        counts.push(p - run_start);
        run_start = p;
        on = true;
        prev = Some(p);
    }
    if let Some(q) = prev {
        counts.push(q + 1 - run_start);
        run_start = q + 1;
    }
    let rest = area as u32 - run_start;
    if rest > 0 || !on {
        counts.push(rest);
    }
    counts
}

pub fn rle_decode(counts: &[u32], area: usize) -> std::result::Result<Vec<u32>, String> {
    let mut out = Vec::new();
    let mut at: u64 = 0;
    for (k, &c) in counts.iter().enumerate() {
        let end = at + c as u64;
        if end > area as u64 {
            return Err(format!("runs cover {end} pixels of a {area}-pixel image"));
        }
        if k % 2 == 1 {
            out.extend(at as u32..end as u32);
        }
        at = end;
    }
    if at != area as u64 {
        return Err(format!("runs cover {at} pixels of a {area}-pixel image"));
    }
    Ok(out)
}

pub fn encode_png(view: &RenderedView) -> std::result::Result<Vec<u8>, String> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, view.width(), view.height());
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| e.to_string())?;
        let data: Vec<u8> = view.image.iter().flatten().copied().collect();
        w.write_image_data(&data).map_err(|e| e.to_string())?;
    }
    Ok(buf)
}

fn client() -> Result<reqwest::blocking::Client> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(120))
        .build()
        .map_err(|e| Error::Http(e.to_string()))
}

fn env_url(var: &str) -> Result<String> {
    let url = std::env::var(var).map_err(|_| Error::Http(format!("{var} is not set")))?;
    Ok(url.trim_end_matches('/').to_string())
}

fn check(resp: reqwest::blocking::Response) -> std::result::Result<reqwest::blocking::Response, String> {
    let status = resp.status();
    if status.is_success() {
        Ok(resp)
    } else {
        let body = resp.text().unwrap_or_default();
        Err(format!("status {status}: {body}"))
    }
}

#[derive(Debug, Deserialize)]
struct WireMask {
    rle: Vec<u32>,
    confidence: f64,
}

#[derive(Debug, Deserialize)]
struct MasksResponse {
    masks: Vec<WireMask>,
}

#[derive(Debug, Serialize)]
struct NameRequest<'a> {
    image: String,
    rle: &'a [u32],
}

#[derive(Debug, Deserialize)]
struct NameResponse {
    text: String,
}

#[derive(Debug, Deserialize)]
struct OrientResponse {
    vote: String,
}

/// Annotation provider speaking the `/masks`, `/name`, `/orient` protocol.
pub struct RemoteProvider {
    base: String,
    client: reqwest::blocking::Client,
}

impl RemoteProvider {
    pub fn new(base: impl Into<String>) -> Result<Self> {
        Ok(Self { base: base.into().trim_end_matches('/').to_string(), client: client()? })
    }

    pub fn from_env() -> Result<Self> {
        Self::new(env_url(ANNOTATOR_ENV)?)
    }

    fn post_png(&self, route: &str, view: &RenderedView) -> std::result::Result<reqwest::blocking::Response, String> {
        let png = encode_png(view)?;
        let resp = self
            .client
            .post(format!("{}{route}", self.base))
            .header("content-type", "image/png")
            .body(png)
            .send()
            .map_err(|e| e.to_string())?;
        check(resp)
    }
}

impl AnnotationProvider for RemoteProvider {
    fn propose_masks(&self, view: &RenderedView) -> std::result::Result<Vec<MaskRecord>, String> {
        let r: MasksResponse = self.post_png("/masks", view)?.json().map_err(|e| e.to_string())?;
        let area = view.camera.area();
        r.masks
            .into_iter()
            .map(|m| Ok(MaskRecord::new(view.view_id, rle_decode(&m.rle, area)?, m.confidence)))
            .collect()
    }

    fn name_mask(&self, view: &RenderedView, mask: &MaskRecord) -> std::result::Result<String, String> {
        let png = encode_png(view)?;
        let rle = rle_encode(&mask.pixels, view.camera.area());
        let body = NameRequest { image: base64::engine::general_purpose::STANDARD.encode(png), rle: &rle };
        let resp = self.client.post(format!("{}/name", self.base)).json(&body).send().map_err(|e| e.to_string())?;
        let r: NameResponse = check(resp)?.json().map_err(|e| e.to_string())?;
        Ok(r.text)
    }

    fn orientation_vote(&self, view: &RenderedView) -> std::result::Result<bool, String> {
        let r: OrientResponse = self.post_png("/orient", view)?.json().map_err(|e| e.to_string())?;
        match r.vote.as_str() {
            "yes" => Ok(true),
            "no" => Ok(false),
            other => Err(format!("vote `{other}` is neither yes nor no")),
        }
    }
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Text embedder behind `POST /embed`.
pub struct RemoteEmbedder {
    base: String,
    dim: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(base: impl Into<String>, dim: usize) -> Result<Self> {
        Ok(Self { base: base.into().trim_end_matches('/').to_string(), dim, client: client()? })
    }

    pub fn from_env(dim: usize) -> Result<Self> {
        Self::new(env_url(EMBEDDER_ENV)?, dim)
    }

    pub fn fetch(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f32>>, String> {
        let resp = self
            .client
            .post(format!("{}/embed", self.base))
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| e.to_string())?;
        let r: EmbedResponse = check(resp)?.json().map_err(|e| e.to_string())?;
        if r.vectors.len() != texts.len() {
            return Err(format!("{} vectors for {} texts", r.vectors.len(), texts.len()));
        }
        Ok(r.vectors)
    }
}

impl TextEmbedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> find3d_core::Result<Vec<f32>> {
        let v = self.fetch(&[text.to_string()]).map_err(|message| find3d_core::Error::Embedder { text: text.into(), message })?;
        Ok(v.into_iter().next().unwrap())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheLine {
    text: String,
    vector: Vec<f32>,
}

/// JSON-lines `{text, vector}` cache. Misses go to `remote` when one is set
/// and the answer is appended to the file; without a remote a miss is an
/// error.
pub struct CacheEmbedder<R: TextEmbedder = RemoteEmbedder> {
    path: PathBuf,
    dim: usize,
    entries: Mutex<BTreeMap<String, Vec<f32>>>,
    remote: Option<R>,
}

impl<R: TextEmbedder> CacheEmbedder<R> {
    /// Opens `path`, creating nothing until the first appended miss. Later
    /// lines override earlier ones for the same text.
    pub fn open(path: &Path, dim: usize, remote: Option<R>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        if path.exists() {
            let f = std::fs::File::open(path).map_err(Error::io(path))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let at = |message: String| Error::Line { path: path.to_path_buf(), line: i + 1, message };
                let line = line.map_err(|e| at(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let c: CacheLine = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
                if c.vector.len() != dim {
                    return Err(at(format!("{} dims, expected {dim}", c.vector.len())));
                }
                entries.insert(c.text, c.vector);
            }
        }
        Ok(Self { path: path.to_path_buf(), dim, entries: Mutex::new(entries), remote })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<R: TextEmbedder> TextEmbedder for CacheEmbedder<R> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> find3d_core::Result<Vec<f32>> {
        let err = |message: String| find3d_core::Error::Embedder { text: text.into(), message };
        let mut entries = self.entries.lock().unwrap();
        if let Some(v) = entries.get(text) {
            return Ok(v.clone());
        }
        let remote = self.remote.as_ref().ok_or_else(|| err("not in cache and no remote embedder configured".into()))?;
        let v = remote.embed(text)?;
        if v.len() != self.dim {
            return Err(err(format!("{} dims, expected {}", v.len(), self.dim)));
        }
        let mut line = serde_json::to_string(&CacheLine { text: text.into(), vector: v.clone() }).map_err(|e| err(e.to_string()))?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| err(format!("{}: {e}", self.path.display())))?;
        f.write_all(line.as_bytes()).map_err(|e| err(format!("{}: {e}", self.path.display())))?;
        entries.insert(text.into(), v.clone());
        Ok(v)
    }
}
