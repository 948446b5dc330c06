//! Seeded fixtures shared by the benchmarks.

use std::sync::Arc;

use handrv_core::trajdata::EmbeddingRef;
use handrv_core::{EmbeddingTable, RelativePath, Segment, Source, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EMBED_DIM: usize = 16;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` random steps of up to 4 px per axis.
pub fn random_path(rng: &mut ChaCha8Rng, n: usize) -> RelativePath {
    let d = (0..n)
        .map(|_| [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)])
        .collect();
    RelativePath::from_deltas(d).expect("finite deltas")
}

/// A whole-trajectory segment of `frames` frames with random embeddings.
pub fn random_segment(rng: &mut ChaCha8Rng, id: String, frames: usize) -> Segment {
    let mut p = [rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)];
    let track = (0..frames)
        .map(|_| {
            p[0] += rng.random_range(-4.0..4.0);
            p[1] += rng.random_range(-4.0..4.0);
            p
        })
        .collect();
    let data = (0..frames * EMBED_DIM)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let table = EmbeddingTable::new(frames, 1, EMBED_DIM, data).expect("sized table");
    let mut t = Trajectory::new(id, Source::Play, 30.0, track);
    t.embeddings = Some(EmbeddingRef::new("unused.bin", 1, EMBED_DIM));
    Segment::from_trajectory(&t, 0, frames)
        .expect("valid span")
        .with_embeddings(Arc::new(table))
}

/// `count` candidates with lengths uniform in 30..=90 frames.
pub fn play_set(seed: u64, count: usize) -> Vec<Segment> {
    let mut rng = rng(seed);
    (0..count)
        .map(|i| {
            let n = rng.random_range(30..=90);
            random_segment(&mut rng, format!("play-{i:05}"), n)
        })
        .collect()
}
