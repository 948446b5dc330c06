//! Labeled synthetic play data and hand demonstrations.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathops::{segment_kinematic, Segment};
use crate::trajdata::{
    write_dataset, write_embeddings, EmbeddingRef, EmbeddingTable, Source, Trajectory,
};

use super::motifs::{blend, occlusion, MotifLibrary, EMBED_DIM};

/// Tracks are rounded to this many steps per pixel, so translating a track by
/// whole pixels leaves its deltas bit-identical.
pub const TRACK_GRID: f64 = 256.0;

/// Kinematic magnitude floor while moving; pauses are exactly zero.
pub const MOTION_KIN_FLOOR: f64 = 1.0;

/// Cut threshold separating motion from pauses in generated data.
pub const SYNTH_EPSILON: f64 = 0.5;

fn quantize(v: f64) -> f64 {
    (v * TRACK_GRID).round() / TRACK_GRID
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Number of library motifs in play, taken from the front of the library.
    pub tasks: usize,
    /// Trajectories generated per task; each contains that task's motif.
    pub per_task: usize,
    pub motifs_per_traj: usize,
    /// Track noise, pixels.
    pub sigma_p: f64,
    /// Embedding noise of play frames; hand frames get twice this.
    pub sigma_e: f64,
    pub stride: usize,
    /// Inclusive range of pause lengths between motifs, frames.
    pub pause_frames: [usize; 2],
    pub fps: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            tasks: 6,
            per_task: 40,
            motifs_per_traj: 3,
            sigma_p: 2.0,
            sigma_e: 0.05,
            stride: 1,
            pause_frames: [4, 8],
            fps: 30.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self, lib: &MotifLibrary) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_owned()));
        if self.tasks == 0 || self.tasks > lib.motifs().len() {
            return bad("tasks must be between 1 and the library size");
        }
        if self.per_task == 0 || self.motifs_per_traj == 0 || self.stride == 0 {
            return bad("per_task, motifs_per_traj and stride must be ≥ 1");
        }
        if !(self.sigma_p >= 0.0 && self.sigma_e >= 0.0) {
            return bad("noise levels must be ≥ 0");
        }
        if self.pause_frames[0] == 0 || self.pause_frames[0] > self.pause_frames[1] {
            return bad("pause_frames must be a non-empty range starting at ≥ 1");
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad("fps must be > 0");
        }
        Ok(())
    }
}

/// Ground truth for one generated motion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentLabel {
    pub traj_id: String,
    pub start: usize,
    pub end: usize,
    pub motif: String,
}

/// Contents of `labels.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelFile {
    pub cfg: SynthConfig,
    pub seed: u64,
    pub segments: Vec<SegmentLabel>,
}

#[derive(Clone, Debug)]
pub struct LabeledDataset {
    pub cfg: SynthConfig,
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
    /// Embeddings, parallel to `trajectories`.
    pub tables: Vec<Arc<EmbeddingTable>>,
    pub labels: Vec<SegmentLabel>,
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated ≥ 0")
}

fn strided_table(frames: &[Vec<f32>], stride: usize) -> Result<EmbeddingTable> {
    let data = frames.iter().step_by(stride).flatten().copied().collect();
    EmbeddingTable::new(frames.len(), stride, EMBED_DIM, data)
}

fn noisy(v: Vec<f32>, rng: &mut ChaCha8Rng, noise: &Normal<f64>) -> Vec<f32> {
    v.into_iter()
        .map(|x| (f64::from(x) + noise.sample(rng)) as f32)
        .collect()
}

/// Generates play trajectories made of motifs separated by stationary pauses.
///
/// Every trajectory of task `t` contains motif `t` once, at a random position;
/// its other motifs are drawn uniformly with replacement from the first
/// `tasks` motifs.
pub fn gen_play(lib: &MotifLibrary, cfg: &SynthConfig, seed: u64) -> Result<LabeledDataset> {
    cfg.validate(lib)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let track_noise = normal(cfg.sigma_p);
    let emb_noise = normal(cfg.sigma_e);
    let mut out = LabeledDataset {
        cfg: cfg.clone(),
        seed,
        trajectories: Vec::new(),
        tables: Vec::new(),
        labels: Vec::new(),
    };

    for task in 0..cfg.tasks {
        for i in 0..cfg.per_task {
            let id = format!("play-{:04}", task * cfg.per_task + i);
            let own_slot = rng.random_range(0..cfg.motifs_per_traj);
            let sequence: Vec<usize> = (0..cfg.motifs_per_traj)
                .map(|slot| {
                    if slot == own_slot {
                        task
                    } else {
                        rng.random_range(0..cfg.tasks)
                    }
                })
                .collect();

            let mut pos = [
                rng.random_range(120.0..520.0),
                rng.random_range(120.0..360.0),
            ];
            let mut clean: Vec<[f64; 2]> = Vec::new();
            let mut kin: Vec<f64> = Vec::new();
            // (anchor motif, occlusion) per frame
            let mut look: Vec<(usize, f64)> = Vec::new();
            let mut labels = Vec::new();

            let pause =
                |rng: &mut ChaCha8Rng| rng.random_range(cfg.pause_frames[0]..=cfg.pause_frames[1]);
            let lead = pause(&mut rng);
            for _ in 0..lead {
                clean.push(pos);
                kin.push(0.0);
                look.push((sequence[0], occlusion(0.0)));
            }
            for &motif_idx in &sequence {
                let motif = &lib.motifs()[motif_idx];
                let frames = rng.random_range(motif.frames.0..=motif.frames.1);
                let scale = rng.random_range(0.85..1.15);
                let offsets = motif.clean_offsets(frames, scale);
                let start = clean.len();
                let base = pos;
                for (k, o) in offsets.iter().enumerate() {
                    let p = [base[0] + o[0], base[1] + o[1]];
                    let next = offsets.get(k + 1).unwrap_or(o);
                    let prev = if k > 0 { &offsets[k - 1] } else { o };
                    let step = if k + 1 < frames {
                        [next[0] - o[0], next[1] - o[1]]
                    } else {
                        [o[0] - prev[0], o[1] - prev[1]]
                    };
                    clean.push(p);
                    kin.push(MOTION_KIN_FLOOR + (step[0] * step[0] + step[1] * step[1]).sqrt());
                    look.push((motif_idx, occlusion(k as f64 / (frames - 1) as f64)));
                    pos = p;
                }
                labels.push(SegmentLabel {
                    traj_id: id.clone(),
                    start,
                    end: clean.len(),
                    motif: motif.name.clone(),
                });
                for _ in 0..pause(&mut rng) {
                    clean.push(pos);
                    kin.push(0.0);
                    look.push((motif_idx, occlusion(1.0)));
                }
            }

            let track: Vec<[f64; 2]> = clean
                .iter()
                .map(|p| {
                    [
                        quantize(p[0] + track_noise.sample(&mut rng)),
                        quantize(p[1] + track_noise.sample(&mut rng)),
                    ]
                })
                .collect();
            let actions: Vec<Vec<f64>> = (0..clean.len())
                .map(|t| match clean.get(t + 1) {
                    Some(n) => vec![n[0] - clean[t][0], n[1] - clean[t][1]],
                    None => vec![0.0, 0.0],
                })
                .collect();
            let frames: Vec<Vec<f32>> = look
                .iter()
                .zip(&clean)
                .map(|(&(m, occ), &p)| {
                    let v = blend(&lib.motifs()[m].anchor, &lib.robot_look(p), occ);
                    noisy(v, &mut rng, &emb_noise)
                })
                .collect();

            let mut traj = Trajectory::new(id.clone(), Source::Play, cfg.fps, track);
            traj.kin = Some(kin);
            traj.actions = Some(actions);
            traj.embeddings = Some(EmbeddingRef::new(
                format!("emb/{id}.bin"),
                cfg.stride,
                EMBED_DIM,
            ));
            traj.validate()?;
            out.tables
                .push(Arc::new(strided_table(&frames, cfg.stride)?));
            out.trajectories.push(traj);
            out.labels.extend(labels);
        }
    }
    Ok(out)
}

impl LabeledDataset {
    /// Kinematic segmentation of every trajectory, with embeddings attached.
    pub fn segments(&self, epsilon: f64, min_len: usize) -> Result<Vec<Segment>> {
        let mut out = Vec::new();
        for (traj, table) in self.trajectories.iter().zip(&self.tables) {
            out.extend(
                segment_kinematic(traj, epsilon, min_len)?
                    .into_iter()
                    .map(|s| s.with_embeddings(table.clone())),
            );
        }
        Ok(out)
    }

    pub fn label_file(&self) -> LabelFile {
        LabelFile {
            cfg: self.cfg.clone(),
            seed: self.seed,
            segments: self.labels.clone(),
        }
    }

    /// Writes `play.jsonl`, `emb/*.bin` and `labels.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        write_trajectories(dir, "play.jsonl", &self.trajectories, &self.tables)?;
        let labels = serde_json::to_string_pretty(&self.label_file())
            .map_err(|e| Error::Validation(e.to_string()))?;
        std::fs::write(dir.join("labels.json"), labels + "\n")
            .map_err(|e| Error::io(dir.join("labels.json"), e))
    }
}

/// Writes a dataset file named `name` in `dir` plus one blob per trajectory at
/// the path its embedding reference names.
pub fn write_trajectories(
    dir: &Path,
    name: &str,
    trajectories: &[Trajectory],
    tables: &[Arc<EmbeddingTable>],
) -> Result<()> {
    for (traj, table) in trajectories.iter().zip(tables) {
        if let Some(e) = &traj.embeddings {
            write_embeddings(dir.join(&e.file), table)?;
        }
    }
    write_dataset(dir.join(name), trajectories)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelFile> {
    let path = path.as_ref();
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&s);
    serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HandConfig {
    pub sigma_p: f64,
    pub sigma_e: f64,
    /// Global translation of the whole track, pixels.
    pub offset: [f64; 2],
    pub stride: usize,
}

impl HandConfig {
    /// Hand settings matching a play configuration: same track noise, twice
    /// the embedding noise.
    pub fn for_play(cfg: &SynthConfig) -> Self {
        HandConfig {
            sigma_p: cfg.sigma_p,
            sigma_e: 2.0 * cfg.sigma_e,
            offset: [0.0, 0.0],
            stride: cfg.stride,
        }
    }
}

/// Where hand demonstrations start before `offset` is applied.
pub const HAND_ORIGIN: [f64; 2] = [320.0, 240.0];

/// One clean-length hand demonstration of `motif`.
///
/// The noise draws depend on `(seed, motif)` only, so changing `offset`
/// translates the track without changing anything else.
pub fn gen_hand(
    lib: &MotifLibrary,
    motif: &str,
    cfg: &HandConfig,
    seed: u64,
) -> Result<(Trajectory, EmbeddingTable)> {
    let idx = lib.index_of(motif)?;
    if cfg.stride == 0 || !(cfg.sigma_p >= 0.0 && cfg.sigma_e >= 0.0) {
        return Err(Error::InvalidParams(
            "hand stride ≥ 1 and noise ≥ 0 required".into(),
        ));
    }
    let m = &lib.motifs()[idx];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + idx as u64);
    let (track_noise, emb_noise) = (normal(cfg.sigma_p), normal(cfg.sigma_e));
    let frames = m.canonical_frames();
    let offsets = m.clean_offsets(frames, 1.0);
    let base = [
        HAND_ORIGIN[0] + cfg.offset[0],
        HAND_ORIGIN[1] + cfg.offset[1],
    ];
    let track: Vec<[f64; 2]> = offsets
        .iter()
        .map(|o| {
            let dx = quantize(o[0] + track_noise.sample(&mut rng));
            let dy = quantize(o[1] + track_noise.sample(&mut rng));
            [base[0] + dx, base[1] + dy]
        })
        .collect();
    let embeds: Vec<Vec<f32>> = (0..frames)
        .map(|k| {
            let v = blend(
                &m.anchor,
                lib.hand_look(),
                occlusion(k as f64 / (frames - 1) as f64),
            );
            noisy(v, &mut rng, &emb_noise)
        })
        .collect();
    let id = format!("hand-{motif}");
    let mut traj = Trajectory::new(id.clone(), Source::Hand, 30.0, track);
    traj.embeddings = Some(EmbeddingRef::new(
        format!("emb/{id}.bin"),
        cfg.stride,
        EMBED_DIM,
    ));
    traj.validate()?;
    Ok((traj, strided_table(&embeds, cfg.stride)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathops::{kinematic_spans, to_relative, DEFAULT_MIN_LEN};

    fn small() -> SynthConfig {
        SynthConfig {
            per_task: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_data() {
        let lib = MotifLibrary::standard();
        let a = gen_play(&lib, &small(), 7).unwrap();
        let b = gen_play(&lib, &small(), 7).unwrap();
        assert_eq!(a.trajectories, b.trajectories);
        assert_eq!(a.tables, b.tables);
        assert_eq!(a.labels, b.labels);
        let c = gen_play(&lib, &small(), 8).unwrap();
        assert_ne!(a.trajectories, c.trajectories);
    }

    #[test]
    fn noise_free_single_motif_segments_exactly() {
        let lib = MotifLibrary::standard();
        let cfg = SynthConfig {
            sigma_p: 0.0,
            motifs_per_traj: 1,
            per_task: 4,
            ..SynthConfig::default()
        };
        let d = gen_play(&lib, &cfg, 1).unwrap();
        for (traj, label) in d.trajectories.iter().zip(&d.labels) {
            let segs = segment_kinematic(traj, SYNTH_EPSILON, DEFAULT_MIN_LEN).unwrap();
            assert_eq!(segs.len(), 1);
            assert_eq!((segs[0].start, segs[0].end), (label.start, label.end));
        }
    }

    #[test]
    fn default_config_has_720_labeled_segments() {
        let lib = MotifLibrary::standard();
        let d = gen_play(&lib, &SynthConfig::default(), 0).unwrap();
        assert_eq!(d.trajectories.len(), 240);
        assert_eq!(d.labels.len(), 720);
        let segs = d.segments(SYNTH_EPSILON, DEFAULT_MIN_LEN).unwrap();
        assert_eq!(segs.len(), 720);
        for name in lib.names() {
            assert!(d.labels.iter().filter(|l| l.motif == name).count() >= 40);
        }
    }

    #[test]
    fn kin_cuts_are_the_labels() {
        let lib = MotifLibrary::standard();
        let d = gen_play(&lib, &small(), 3).unwrap();
        for traj in &d.trajectories {
            let spans = kinematic_spans(traj.kin.as_ref().unwrap(), SYNTH_EPSILON, 1);
            let expected: Vec<(usize, usize)> = d
                .labels
                .iter()
                .filter(|l| l.traj_id == traj.id)
                .map(|l| (l.start, l.end))
                .collect();
            assert_eq!(spans, expected);
        }
    }

    #[test]
    fn strided_embeddings() {
        let lib = MotifLibrary::standard();
        let cfg = SynthConfig {
            stride: 3,
            ..small()
        };
        let d = gen_play(&lib, &cfg, 2).unwrap();
        for (t, table) in d.trajectories.iter().zip(&d.tables) {
            assert_eq!(table.rows(), t.len().div_ceil(3));
            assert_eq!(table.stride(), 3);
        }
    }

    #[test]
    fn clean_hand_has_canonical_deltas() {
        let lib = MotifLibrary::standard();
        let cfg = HandConfig {
            sigma_p: 0.0,
            sigma_e: 0.0,
            offset: [0.0, 0.0],
            stride: 1,
        };
        for name in lib.names() {
            let (t, _) = gen_hand(&lib, name, &cfg, 0).unwrap();
            let m = lib.get(name).unwrap();
            let canonical: Vec<[f64; 2]> = m
                .clean_offsets(m.canonical_frames(), 1.0)
                .iter()
                .map(|o| [quantize(o[0]), quantize(o[1])])
                .collect();
            assert_eq!(
                to_relative(&t.track).unwrap(),
                to_relative(&canonical).unwrap()
            );
            assert_eq!(t.source, Source::Hand);
        }
    }

    #[test]
    fn hand_offset_only_translates() {
        let lib = MotifLibrary::standard();
        let mut cfg = HandConfig::for_play(&SynthConfig::default());
        let (a, ea) = gen_hand(&lib, "scoop", &cfg, 5).unwrap();
        cfg.offset = [37.0, -12.0];
        let (b, eb) = gen_hand(&lib, "scoop", &cfg, 5).unwrap();
        assert_eq!(ea, eb);
        for (p, q) in a.track.iter().zip(&b.track) {
            assert_eq!([p[0] + 37.0, p[1] - 12.0], *q);
        }
        assert_eq!(
            to_relative(&a.track).unwrap(),
            to_relative(&b.track).unwrap()
        );
    }

    #[test]
    fn unknown_hand_motif() {
        let lib = MotifLibrary::standard();
        let cfg = HandConfig::for_play(&SynthConfig::default());
        assert!(matches!(
            gen_hand(&lib, "wave", &cfg, 0),
            Err(Error::UnknownMotif(_))
        ));
    }

    #[test]
    fn config_validation() {
        let lib = MotifLibrary::standard();
        for cfg in [
            SynthConfig {
                tasks: 0,
                ..small()
            },
            SynthConfig {
                tasks: 7,
                ..small()
            },
            SynthConfig {
                stride: 0,
                ..small()
            },
            SynthConfig {
                sigma_p: -1.0,
                ..small()
            },
            SynthConfig {
                pause_frames: [0, 3],
                ..small()
            },
        ] {
            assert!(gen_play(&lib, &cfg, 0).is_err(), "{cfg:?}");
        }
    }
}
