//! Data model and on-disk formats.
//!
//! A dataset is a line-delimited JSON file with one [`Trajectory`] per line.
//! Per-frame embeddings live in sidecar blobs of little-endian `f32`, row-major,
//! one row every `stride` frames. Blobs are resolved relative to the dataset
//! file and read only when [`load_embeddings`] is called.
//!
//! Retrieval output is a single JSON document, the [`RetrievalManifest`].

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower and upper bound of a training weight.
pub const WEIGHT_MIN: f64 = 0.01;
pub const WEIGHT_MAX: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Play,
    Hand,
}

/// Reference from a trajectory to its embedding blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRef {
    pub file: String,
    pub stride: usize,
    pub dim: usize,
    pub dtype: String,
    pub layout: String,
    /// Directory `file` is relative to. Set by [`load_dataset`].
    #[serde(skip)]
    pub root: Option<PathBuf>,
}

impl EmbeddingRef {
    pub fn new(file: impl Into<String>, stride: usize, dim: usize) -> Self {
        EmbeddingRef {
            file: file.into(),
            stride,
            dim,
            dtype: "f32".to_owned(),
            layout: "row-major".to_owned(),
            root: None,
        }
    }

    pub fn resolved_path(&self) -> PathBuf {
        match &self.root {
            Some(root) => root.join(&self.file),
            None => PathBuf::from(&self.file),
        }
    }
}

/// One recorded episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub id: String,
    pub source: Source,
    pub fps: f64,
    /// Tracked 2D point per frame, in pixels.
    pub track: Vec<[f64; 2]>,
    /// Velocity or acceleration magnitude per frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kin: Option<Vec<f64>>,
    /// Opaque per-frame action vectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<EmbeddingRef>,
    /// Free-form producer metadata, carried through untouched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<BTreeMap<String, serde_json::Value>>,
}

impl Trajectory {
    pub fn new(id: impl Into<String>, source: Source, fps: f64, track: Vec<[f64; 2]>) -> Self {
        Trajectory {
            id: id.into(),
            source,
            fps,
            track,
            kin: None,
            actions: None,
            embeddings: None,
            meta: None,
        }
    }

    pub fn len(&self) -> usize {
        self.track.len()
    }

    pub fn is_empty(&self) -> bool {
        self.track.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| {
            Err(Error::Validation(format!(
                "trajectory `{}`: {msg}",
                self.id
            )))
        };
        if self.id.is_empty() {
            return Err(Error::Validation("trajectory id must be non-empty".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return fail(format!("fps > 0 violated (fps = {})", self.fps));
        }
        let n = self.track.len();
        if n < 2 {
            return fail(format!("N ≥ 2 violated (N = {n})"));
        }
        if let Some(t) = self
            .track
            .iter()
            .position(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return fail(format!("non-finite track coordinate at frame {t}"));
        }
        if let Some(kin) = &self.kin {
            if kin.len() != n {
                return fail(format!("|kin| = N violated ({} vs {n})", kin.len()));
            }
            if let Some(t) = kin.iter().position(|k| !(k.is_finite() && *k >= 0.0)) {
                return fail(format!(
                    "kin must be finite and ≥ 0 (frame {t}: {})",
                    kin[t]
                ));
            }
        }
        if let Some(actions) = &self.actions {
            if actions.len() != n {
                return fail(format!("|actions| = N violated ({} vs {n})", actions.len()));
            }
            let dim = actions[0].len();
            if let Some(t) = actions.iter().position(|a| a.len() != dim) {
                return fail(format!("action dimension changes at frame {t}"));
            }
        }
        if let Some(e) = &self.embeddings {
            if e.stride == 0 {
                return fail("embedding stride ≥ 1 violated".into());
            }
            if e.dim == 0 {
                return fail("embedding dim ≥ 1 violated".into());
            }
            if e.dtype != "f32" {
                return fail(format!("unsupported embedding dtype `{}`", e.dtype));
            }
            if e.layout != "row-major" {
                return fail(format!("unsupported embedding layout `{}`", e.layout));
            }
        }
        Ok(())
    }
}

/// Strided per-frame embeddings of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    stride: usize,
    dim: usize,
    frames: usize,
    data: Vec<f32>,
}

/// Number of stored rows for a trajectory of `frames` frames.
pub fn row_count(frames: usize, stride: usize) -> usize {
    frames.div_ceil(stride)
}

impl EmbeddingTable {
    /// Builds a table from row-major `data` covering a trajectory of `frames` frames.
    pub fn new(frames: usize, stride: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if stride == 0 || dim == 0 {
            return Err(Error::Validation(format!(
                "embedding stride and dim must be ≥ 1 (stride {stride}, dim {dim})"
            )));
        }
        let rows = row_count(frames, stride);
        if data.len() != rows * dim {
            return Err(Error::Validation(format!(
                "embedding table has {} values, expected {rows}×{dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite embedding entry at row {}, col {}",
                i / dim,
                i % dim
            )));
        }
        Ok(EmbeddingTable {
            stride,
            dim,
            frames,
            data,
        })
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Frame count of the owning trajectory.
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn to_blob(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_blob(frames: usize, stride: usize, dim: usize, blob: &[u8]) -> Result<Self> {
        let expected = row_count(frames, stride.max(1)) * dim * 4;
        if blob.len() != expected {
            return Err(Error::SizeMismatch {
                path: PathBuf::new(),
                expected,
                found: blob.len(),
            });
        }
        let data = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(frames, stride, dim, data)
    }
}

/// Reads a dataset file. Embedding blobs are not opened.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut traj: Trajectory = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        traj.validate().map_err(|e| match e {
            Error::Validation(msg) => {
                Error::Validation(format!("{}:{lineno}: {msg}", path.display()))
            }
            other => other,
        })?;
        if !seen.insert(traj.id.clone()) {
            return Err(Error::Validation(format!(
                "{}:{lineno}: duplicate trajectory id `{}`",
                path.display(),
                traj.id
            )));
        }
        if let Some(e) = &mut traj.embeddings {
            e.root = Some(root.clone());
        }
        out.push(traj);
    }
    Ok(out)
}

/// Serializes one trajectory as a dataset line (no trailing newline).
pub fn trajectory_to_line(traj: &Trajectory) -> Result<String> {
    traj.validate()?;
    serde_json::to_string(traj).map_err(|e| Error::Validation(e.to_string()))
}

/// Writes trajectories as a dataset file. Blobs are written separately with
/// [`write_embeddings`].
pub fn write_dataset(path: impl AsRef<Path>, trajectories: &[Trajectory]) -> Result<()> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    let mut buf = String::new();
    for traj in trajectories {
        if !seen.insert(traj.id.as_str()) {
            return Err(Error::Validation(format!(
                "duplicate trajectory id `{}`",
                traj.id
            )));
        }
        buf.push_str(&trajectory_to_line(traj)?);
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes())
}

pub fn write_embeddings(path: impl AsRef<Path>, table: &EmbeddingTable) -> Result<()> {
    write_atomic(path.as_ref(), &table.to_blob())
}

/// Reads and decodes the embedding blob referenced by `traj`.
pub fn load_embeddings(traj: &Trajectory) -> Result<EmbeddingTable> {
    let eref = traj
        .embeddings
        .as_ref()
        .ok_or_else(|| Error::MissingEmbeddings(traj.id.clone()))?;
    let path = eref.resolved_path();
    let blob = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    EmbeddingTable::from_blob(traj.len(), eref.stride, eref.dim, &blob).map_err(|e| match e {
        Error::SizeMismatch {
            expected, found, ..
        } => Error::SizeMismatch {
            path: path.clone(),
            expected,
            found,
        },
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    /// Euclidean distance between relative 2D path deltas.
    #[default]
    Path,
    /// Euclidean distance between per-frame embeddings.
    Embedding,
}

/// Which set of matches a weight normalization runs over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScope {
    /// Each query segment's own top-K.
    #[default]
    PerQuery,
    /// All matches of the manifest together.
    Union,
}

/// Name of the weight normalization recorded in every manifest.
pub const WEIGHT_NORMALIZATION: &str = "sum-ratio-exp-minmax";

/// Run parameters recorded in a manifest header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestParams {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub epsilon: f64,
    pub min_len: usize,
    pub use_visual_filter: bool,
    pub distance_mode: DistanceMode,
    pub seed: u64,
    pub split_even: Option<usize>,
    pub weight_scope: WeightScope,
    pub weight_normalization: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestMatch {
    pub query_traj_id: String,
    pub query_start: usize,
    pub query_end: usize,
    pub traj_id: String,
    pub seg_start: usize,
    pub seg_end: usize,
    pub match_start: usize,
    pub match_end: usize,
    pub cost_path: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_visual: Option<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalManifest {
    pub query_id: String,
    pub params: ManifestParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub matches: Vec<ManifestMatch>,
}

impl RetrievalManifest {
    /// Checks every manifest invariant. Matches are grouped by query segment;
    /// each group must be sorted by `(cost_path, traj_id, seg_start)` and hold
    /// at most `K` entries.
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if p.k == 0 || p.m == 0 {
            return Err(Error::Validation("M and K must be ≥ 1".into()));
        }
        if p.use_visual_filter && p.k > p.m {
            return Err(Error::Validation(format!(
                "K ≤ M violated (K = {}, M = {})",
                p.k, p.m
            )));
        }
        if !(p.epsilon.is_finite() && p.epsilon > 0.0) {
            return Err(Error::Validation(format!(
                "epsilon > 0 violated ({})",
                p.epsilon
            )));
        }
        let mut groups: BTreeMap<(&str, usize, usize), Vec<&ManifestMatch>> = BTreeMap::new();
        for (i, m) in self.matches.iter().enumerate() {
            let fail = |msg: String| Err(Error::Validation(format!("matches[{i}]: {msg}")));
            if !(m.seg_start <= m.match_start
                && m.match_start <= m.match_end
                && m.match_end <= m.seg_end
                && m.seg_start < m.seg_end)
            {
                return fail(format!(
                    "seg_start ≤ match_start ≤ match_end ≤ seg_end violated ({} {} {} {})",
                    m.seg_start, m.match_start, m.match_end, m.seg_end
                ));
            }
            if m.query_start >= m.query_end {
                return fail("query_start < query_end violated".into());
            }
            if !(m.cost_path.is_finite() && m.cost_path >= 0.0) {
                return fail(format!(
                    "cost_path must be finite and ≥ 0 ({})",
                    m.cost_path
                ));
            }
            if let Some(v) = m.cost_visual {
                if !(v.is_finite() && v >= 0.0) {
                    return fail(format!("cost_visual must be finite and ≥ 0 ({v})"));
                }
            }
            if !(WEIGHT_MIN..=WEIGHT_MAX).contains(&m.weight) {
                return fail(format!("weight {} outside [0.01, 100]", m.weight));
            }
            groups
                .entry((m.query_traj_id.as_str(), m.query_start, m.query_end))
                .or_default()
                .push(m);
        }
        for ((q, qs, qe), group) in &groups {
            if group.len() > p.k {
                return Err(Error::Validation(format!(
                    "query {q}[{qs}..{qe}) has {} matches, more than K = {}",
                    group.len(),
                    p.k
                )));
            }
            for w in group.windows(2) {
                let key = |m: &ManifestMatch| (m.cost_path, m.traj_id.clone(), m.seg_start);
                let (a, b) = (key(w[0]), key(w[1]));
                let ordered =
                    a.0.total_cmp(&b.0)
                        .then_with(|| a.1.cmp(&b.1))
                        .then(a.2.cmp(&b.2));
                if ordered.is_gt() {
                    return Err(Error::Validation(format!(
                        "query {q}[{qs}..{qe}) matches not sorted by cost_path"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Serializes a manifest, refusing one that breaks its invariants.
pub fn manifest_to_string(m: &RetrievalManifest) -> Result<String> {
    m.validate()?;
    let mut s = serde_json::to_string_pretty(m).map_err(|e| Error::Validation(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn manifest_from_str(s: &str) -> Result<RetrievalManifest> {
    let de = &mut serde_json::Deserializer::from_str(s);
    let m: RetrievalManifest = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    m.validate()?;
    Ok(m)
}

pub fn write_manifest(m: &RetrievalManifest, path: impl AsRef<Path>) -> Result<()> {
    let s = manifest_to_string(m)?;
    write_atomic(path.as_ref(), s.as_bytes())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<RetrievalManifest> {
    let path = path.as_ref();
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    manifest_from_str(&s)
}
