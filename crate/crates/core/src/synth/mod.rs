//! Labeled synthetic play and hand data, and the relevance benchmark.

pub mod bench;
pub mod generate;
pub mod motifs;

pub use bench::{
    compare_modes, compare_selected, evaluate_seed, precision_at_k, BenchConfig, BenchReport,
    Labels, Mode, ModeReport,
};
pub use generate::{
    gen_hand, gen_play, read_labels, HandConfig, LabelFile, LabeledDataset, SegmentLabel,
    SynthConfig, SYNTH_EPSILON,
};
pub use motifs::{Motif, MotifLibrary, Shape, EMBED_DIM};
