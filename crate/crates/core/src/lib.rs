//! Retrieval of play-data sub-trajectories that move like a single 2D query path.
//!
//! The pipeline segments every trajectory, keeps the play segments whose first
//! and last frames look like the query's, aligns the query's relative path
//! against each survivor with subsequence DTW, and writes the `K` cheapest
//! matches with normalized training weights to a manifest.

pub mod error;
pub mod pathops;
pub mod plot;
pub mod retrieval;
pub mod sdtw;
pub mod synth;
pub mod trajdata;
pub mod visfilter;

pub use error::{Error, Result};
pub use pathops::{segment_kinematic, split_even, to_relative, RelativePath, Segment};
pub use retrieval::{normalize_weights, rank_matches, retrieve, RetrievalParams};
pub use sdtw::{dtw_full, sdtw_banded, sdtw_match, sdtw_oracle, MatchResult};
pub use trajdata::{
    load_dataset, load_embeddings, read_manifest, write_manifest, DistanceMode, EmbeddingTable,
    RetrievalManifest, Source, Trajectory, WeightScope,
};
pub use visfilter::{filter_top_m, visual_cost, VisualCost};
