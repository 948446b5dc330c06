//! Retrieval relevance on labeled synthetic data.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathops::{split_even, DEFAULT_MIN_LEN};
use crate::retrieval::{retrieve, RetrievalParams};
use crate::trajdata::{DistanceMode, RetrievalManifest};
use crate::visfilter::filter_top_m;

use super::generate::{gen_hand, gen_play, HandConfig, SegmentLabel, SynthConfig, SYNTH_EPSILON};
use super::motifs::MotifLibrary;

/// Ground-truth motif per `(traj_id, start, end)`.
#[derive(Clone, Debug, Default)]
pub struct Labels(HashMap<(String, usize, usize), String>);

impl Labels {
    pub fn new(segments: &[SegmentLabel]) -> Self {
        Labels(
            segments
                .iter()
                .map(|l| ((l.traj_id.clone(), l.start, l.end), l.motif.clone()))
                .collect(),
        )
    }

    pub fn get(&self, traj_id: &str, start: usize, end: usize) -> Option<&str> {
        self.0
            .get(&(traj_id.to_owned(), start, end))
            .map(String::as_str)
    }

    fn require(&self, traj_id: &str, start: usize, end: usize) -> Result<&str> {
        self.get(traj_id, start, end)
            .ok_or_else(|| Error::Unlabeled {
                traj_id: traj_id.to_owned(),
                start,
                end,
            })
    }
}

/// Fraction of the manifest's matches whose segment carries `query_motif`.
/// An empty manifest scores zero.
pub fn precision_at_k(
    manifest: &RetrievalManifest,
    labels: &Labels,
    query_motif: &str,
) -> Result<f64> {
    let mut hits = 0usize;
    for m in &manifest.matches {
        if labels.require(&m.traj_id, m.seg_start, m.seg_end)? == query_motif {
            hits += 1;
        }
    }
    Ok(if manifest.matches.is_empty() {
        0.0
    } else {
        hits as f64 / manifest.matches.len() as f64
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Visual filter, then path S-DTW.
    #[serde(rename = "HAND")]
    Hand,
    /// Path S-DTW over every play segment.
    #[serde(rename = "HAND(-VF)")]
    HandNoFilter,
    /// Embedding S-DTW over every play segment.
    #[serde(rename = "embedding-sdtw")]
    EmbeddingSdtw,
    /// Top-K by visual cost alone.
    #[serde(rename = "visual-rank")]
    VisualRank,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::Hand,
        Mode::HandNoFilter,
        Mode::EmbeddingSdtw,
        Mode::VisualRank,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Hand => "HAND",
            Mode::HandNoFilter => "HAND(-VF)",
            Mode::EmbeddingSdtw => "embedding-sdtw",
            Mode::VisualRank => "visual-rank",
        }
    }

    fn params(self, cfg: &BenchConfig, seed: u64) -> RetrievalParams {
        RetrievalParams {
            m: cfg.m,
            k: cfg.k,
            use_visual_filter: self == Mode::Hand,
            distance_mode: if self == Mode::EmbeddingSdtw {
                DistanceMode::Embedding
            } else {
                DistanceMode::Path
            },
            epsilon: cfg.epsilon,
            min_len: cfg.min_len,
            seed,
            ..RetrievalParams::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub name: String,
    pub synth: SynthConfig,
    /// Motifs a hand demonstration is generated for, one query each.
    pub queries: Vec<String>,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub epsilon: f64,
    pub min_len: usize,
    pub hand_offset: [f64; 2],
}

impl BenchConfig {
    /// Every library motif queried against the default play data.
    pub fn standard(lib: &MotifLibrary) -> Self {
        let synth = SynthConfig::default();
        BenchConfig {
            name: "default".into(),
            queries: lib.names().take(synth.tasks).map(str::to_owned).collect(),
            synth,
            k: 25,
            m: 100,
            epsilon: SYNTH_EPSILON,
            min_len: DEFAULT_MIN_LEN,
            hand_offset: [0.0, 0.0],
        }
    }

    /// Same data, queried only with motifs whose paths have a twin.
    pub fn confusable(lib: &MotifLibrary) -> Self {
        let queries = lib
            .confusable_pairs()
            .into_iter()
            .flat_map(|(a, b)| [a.to_owned(), b.to_owned()])
            .collect();
        BenchConfig {
            name: "confusable".into(),
            queries,
            ..Self::standard(lib)
        }
    }
}

/// Mean precision over the configured queries for one seed and mode.
pub fn evaluate_seed(lib: &MotifLibrary, cfg: &BenchConfig, seed: u64, mode: Mode) -> Result<f64> {
    let data = gen_play(lib, &cfg.synth, seed)?;
    let play = data.segments(cfg.epsilon, cfg.min_len)?;
    let labels = Labels::new(&data.labels);
    let mut hand_cfg = HandConfig::for_play(&cfg.synth);
    hand_cfg.offset = cfg.hand_offset;
    let mut total = 0.0;
    for motif in &cfg.queries {
        total += query_precision(lib, &play, &labels, motif, &hand_cfg, cfg, seed, mode)?;
    }
    Ok(total / cfg.queries.len().max(1) as f64)
}

#[allow(clippy::too_many_arguments)]
fn query_precision(
    lib: &MotifLibrary,
    play: &[crate::pathops::Segment],
    labels: &Labels,
    motif: &str,
    hand_cfg: &HandConfig,
    cfg: &BenchConfig,
    seed: u64,
    mode: Mode,
) -> Result<f64> {
    let (hand, table) = gen_hand(lib, motif, hand_cfg, seed)?;
    let query = split_even(&hand, 1, cfg.min_len)?
        .remove(0)
        .with_embeddings(std::sync::Arc::new(table));
    if mode == Mode::VisualRank {
        let top = filter_top_m(&query, play, cfg.k)?;
        let mut hits = 0;
        for v in &top {
            if labels.require(&v.segment.traj_id, v.segment.start, v.segment.end)? == motif {
                hits += 1;
            }
        }
        return Ok(if top.is_empty() {
            0.0
        } else {
            hits as f64 / top.len() as f64
        });
    }
    let manifest = retrieve(&[query], play, &mode.params(cfg, seed))?;
    precision_at_k(&manifest, labels, motif)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeReport {
    pub name: String,
    pub precision_mean: f64,
    /// Population standard deviation across seeds.
    pub precision_std: f64,
    pub precision_per_seed: Vec<f64>,
    pub wallclock_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchReport {
    pub cfg: BenchConfig,
    pub seeds: Vec<u64>,
    pub modes: Vec<ModeReport>,
}

impl BenchReport {
    pub fn mode(&self, mode: Mode) -> Option<&ModeReport> {
        self.modes.iter().find(|m| m.name == mode.name())
    }

    /// Copy with every wall-clock reading zeroed.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for m in &mut r.modes {
            m.wallclock_s = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        let mut s =
            serde_json::to_string_pretty(self).map_err(|e| Error::Validation(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Parses a report and checks it against the report schema.
    pub fn from_json(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let r: BenchReport = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(format!("bench report: {m}")));
        if self.seeds.is_empty() {
            return fail("no seeds".into());
        }
        for m in &self.modes {
            if m.precision_per_seed.len() != self.seeds.len() {
                return fail(format!("{}: one precision per seed required", m.name));
            }
            let all = m
                .precision_per_seed
                .iter()
                .chain([&m.precision_mean, &m.precision_std]);
            if all.clone().any(|p| !(0.0..=1.0).contains(p)) {
                return fail(format!("{}: precision outside [0, 1]", m.name));
            }
            if !(m.wallclock_s.is_finite() && m.wallclock_s >= 0.0) {
                return fail(format!("{}: invalid wallclock", m.name));
            }
        }
        Ok(())
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs every mode on every seed.
pub fn compare_modes(lib: &MotifLibrary, cfg: &BenchConfig, seeds: &[u64]) -> Result<BenchReport> {
    compare_selected(lib, cfg, seeds, &Mode::ALL)
}

pub fn compare_selected(
    lib: &MotifLibrary,
    cfg: &BenchConfig,
    seeds: &[u64],
    modes: &[Mode],
) -> Result<BenchReport> {
    if seeds.len() < 3 {
        return Err(Error::InvalidParams(format!(
            "at least 3 seeds required, got {}",
            seeds.len()
        )));
    }
    if cfg.queries.is_empty() {
        return Err(Error::InvalidParams("no query motifs configured".into()));
    }
    let mut per_mode = vec![(Vec::new(), 0.0f64); modes.len()];
    for &seed in seeds {
        let data = gen_play(lib, &cfg.synth, seed)?;
        let play = data.segments(cfg.epsilon, cfg.min_len)?;
        let labels = Labels::new(&data.labels);
        let mut hand_cfg = HandConfig::for_play(&cfg.synth);
        hand_cfg.offset = cfg.hand_offset;
        for (mode, (precisions, secs)) in modes.iter().zip(&mut per_mode) {
            let t0 = Instant::now();
            let mut total = 0.0;
            for motif in &cfg.queries {
                total += query_precision(lib, &play, &labels, motif, &hand_cfg, cfg, seed, *mode)?;
            }
            *secs += t0.elapsed().as_secs_f64();
            precisions.push(total / cfg.queries.len() as f64);
        }
    }
    let modes = modes
        .iter()
        .zip(per_mode)
        .map(|(mode, (precision_per_seed, wallclock_s))| {
            let (precision_mean, precision_std) = mean_std(&precision_per_seed);
            ModeReport {
                name: mode.name().to_owned(),
                precision_mean,
                precision_std,
                precision_per_seed,
                wallclock_s,
            }
        })
        .collect();
    Ok(BenchReport {
        cfg: cfg.clone(),
        seeds: seeds.to_vec(),
        modes,
    })
}
