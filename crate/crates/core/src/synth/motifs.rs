//! Parametric 2D motion primitives and the synthetic appearance model.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Width of every synthetic embedding.
pub const EMBED_DIM: usize = 16;

/// Occlusion weight at the first and last frame of a motion. Mid-motion frames
/// are dominated by the arm or hand, the boundaries by the scene.
pub const BOUNDARY_OCCLUSION: f64 = 0.15;

/// Seed of the fixed appearance vectors. Part of the library definition, not
/// of any benchmark run.
const LIBRARY_SEED: u64 = 0x004a_4e44_5f4c_4942;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    /// Straight diagonal reach up and to the right.
    LineReach,
    /// Overhead arc followed by a short downward press.
    ArcPress,
    /// Up, across, down.
    PickLiftPlace,
    /// Horizontal stroke to the right.
    Stroke,
    /// Dip down and back up while moving right.
    Scoop,
}

fn ease(u: f64) -> f64 {
    0.5 - 0.5 * (PI * u.clamp(0.0, 1.0)).cos()
}

/// Piecewise motion: `u` in `[lo, hi)` eases along one leg.
fn leg(u: f64, lo: f64, hi: f64) -> f64 {
    ease((u - lo) / (hi - lo))
}

impl Shape {
    /// Displacement from the motion's start at phase `u ∈ [0, 1]`, for unit
    /// amplitude. Image coordinates, so negative `y` is up.
    pub fn offset(self, u: f64) -> [f64; 2] {
        match self {
            Shape::LineReach => {
                let s = ease(u);
                [s, -0.6 * s]
            }
            Shape::ArcPress => {
                let a = leg(u, 0.0, 0.75);
                let theta = PI * (1.0 - a);
                let press = leg(u, 0.75, 1.0);
                [0.5 + 0.5 * theta.cos(), -0.5 * theta.sin() + 0.25 * press]
            }
            Shape::PickLiftPlace => {
                let up = leg(u, 0.0, 1.0 / 3.0);
                let across = leg(u, 1.0 / 3.0, 2.0 / 3.0);
                let down = leg(u, 2.0 / 3.0, 1.0);
                [across, -0.5 * up + 0.5 * down]
            }
            Shape::Stroke => [ease(u), 0.0],
            Shape::Scoop => {
                let s = ease(u);
                [s, 0.4 * (PI * s).sin()]
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Motif {
    pub name: String,
    pub shape: Shape,
    /// Nominal extent in pixels.
    pub amplitude: f64,
    /// Inclusive range of motion lengths, in frames.
    pub frames: (usize, usize),
    /// Scene appearance while this motif is performed.
    pub anchor: Vec<f32>,
}

impl Motif {
    /// Frame count used for clean demonstrations.
    pub fn canonical_frames(&self) -> usize {
        (self.frames.0 + self.frames.1) / 2
    }

    /// Noise-free positions relative to the start, `frames` samples.
    pub fn clean_offsets(&self, frames: usize, scale: f64) -> Vec<[f64; 2]> {
        let last = (frames - 1).max(1) as f64;
        (0..frames)
            .map(|k| {
                let o = self.shape.offset(k as f64 / last);
                [o[0] * self.amplitude * scale, o[1] * self.amplitude * scale]
            })
            .collect()
    }
}

/// Named motifs plus the fixed appearance vectors of the two embodiments.
#[derive(Clone, Debug)]
pub struct MotifLibrary {
    motifs: Vec<Motif>,
    robot_look: Vec<f32>,
    hand_look: Vec<f32>,
    /// Maps 4 positional features of the gripper into embedding space.
    pose_basis: Vec<[f32; 4]>,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, norm: f64) -> Vec<f32> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / len * norm) as f32).collect()
}

impl MotifLibrary {
    /// Six motifs: line-reach, arc-press, pick-lift-place, slide, push, scoop.
    /// `slide` and `push` trace the same path and differ only in appearance.
    pub fn standard() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(LIBRARY_SEED);
        let spec = [
            ("line-reach", Shape::LineReach),
            ("arc-press", Shape::ArcPress),
            ("pick-lift-place", Shape::PickLiftPlace),
            ("slide", Shape::Stroke),
            ("push", Shape::Stroke),
            ("scoop", Shape::Scoop),
        ];
        let motifs = spec
            .iter()
            .map(|&(name, shape)| Motif {
                name: name.to_owned(),
                shape,
                amplitude: 160.0,
                frames: (36, 52),
                anchor: gaussian_vec(&mut rng, EMBED_DIM, 1.0),
            })
            .collect();
        let robot_look = gaussian_vec(&mut rng, EMBED_DIM, 1.0);
        let hand_look = gaussian_vec(&mut rng, EMBED_DIM, 1.0);
        let pose_basis = (0..EMBED_DIM)
            .map(|_| {
                let v = gaussian_vec(&mut rng, 4, 0.5);
                [v[0], v[1], v[2], v[3]]
            })
            .collect();
        MotifLibrary {
            motifs,
            robot_look,
            hand_look,
            pose_basis,
        }
    }

    pub fn motifs(&self) -> &[Motif] {
        &self.motifs
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.motifs.iter().map(|m| m.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.motifs
            .iter()
            .position(|m| m.name == name)
            .ok_or_else(|| Error::UnknownMotif(name.to_owned()))
    }

    pub fn get(&self, name: &str) -> Result<&Motif> {
        self.index_of(name).map(|i| &self.motifs[i])
    }

    /// Pairs of motifs whose paths are indistinguishable.
    pub fn confusable_pairs(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        for (i, a) in self.motifs.iter().enumerate() {
            for b in &self.motifs[i + 1..] {
                if a.shape == b.shape && a.amplitude == b.amplitude && a.frames == b.frames {
                    out.push((a.name.as_str(), b.name.as_str()));
                }
            }
        }
        out
    }

    /// Robot appearance with the gripper at `pos`.
    pub fn robot_look(&self, pos: [f64; 2]) -> Vec<f32> {
        let feats = [
            (pos[0] / 97.0).sin(),
            (pos[0] / 97.0).cos(),
            (pos[1] / 83.0).sin(),
            (pos[1] / 83.0).cos(),
        ];
        self.robot_look
            .iter()
            .zip(&self.pose_basis)
            .map(|(&base, w)| {
                let pose: f64 = w.iter().zip(feats).map(|(&wi, f)| f64::from(wi) * f).sum();
                (f64::from(base) + pose) as f32
            })
            .collect()
    }

    /// Hand appearance; independent of where the hand is.
    pub fn hand_look(&self) -> &[f32] {
        &self.hand_look
    }
}

/// How much the embodiment hides the scene at phase `u` of a motion.
pub fn occlusion(u: f64) -> f64 {
    BOUNDARY_OCCLUSION + (1.0 - BOUNDARY_OCCLUSION) * (PI * u.clamp(0.0, 1.0)).sin()
}

/// Blend of scene anchor and embodiment appearance.
pub fn blend(anchor: &[f32], look: &[f32], occ: f64) -> Vec<f32> {
    anchor
        .iter()
        .zip(look)
        .map(|(&a, &l)| ((1.0 - occ) * f64::from(a) + occ * f64::from(l)) as f32)
        .collect()
}
