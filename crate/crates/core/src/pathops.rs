//! Relative paths and sub-trajectory segmentation.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::trajdata::{EmbeddingTable, Trajectory};

/// Default minimum segment length, in frames.
pub const DEFAULT_MIN_LEN: usize = 5;

/// Percentile of the dataset's kinematic magnitudes used as the default cut
/// threshold.
pub const DEFAULT_EPSILON_PERCENTILE: f64 = 10.0;

/// Per-frame displacement of a tracked point, `track[t + 1] - track[t]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RelativePath {
    deltas: Vec<[f64; 2]>,
}

impl RelativePath {
    /// Wraps precomputed deltas. Fails on non-finite entries.
    pub fn from_deltas(deltas: Vec<[f64; 2]>) -> Result<Self> {
        if let Some(i) = deltas
            .iter()
            .position(|d| !(d[0].is_finite() && d[1].is_finite()))
        {
            return Err(Error::Validation(format!("non-finite delta at index {i}")));
        }
        Ok(RelativePath { deltas })
    }

    pub fn deltas(&self) -> &[[f64; 2]] {
        &self.deltas
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }
}

pub fn to_relative(track: &[[f64; 2]]) -> Result<RelativePath> {
    if track.len() < 2 {
        return Err(Error::DegeneratePath(format!(
            "a relative path needs at least 2 points, got {}",
            track.len()
        )));
    }
    RelativePath::from_deltas(relative_deltas(track))
}

fn relative_deltas(track: &[[f64; 2]]) -> Vec<[f64; 2]> {
    track
        .windows(2)
        .map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]])
        .collect()
}

/// A contiguous frame range `[start, end)` of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub traj_id: Arc<str>,
    pub start: usize,
    pub end: usize,
    pub relpath: RelativePath,
    /// Embeddings of the whole parent trajectory, when attached.
    pub embeddings: Option<Arc<EmbeddingTable>>,
}

impl Segment {
    /// Cuts `[start, end)` out of `traj`. A one-frame segment has an empty path.
    pub fn from_trajectory(traj: &Trajectory, start: usize, end: usize) -> Result<Self> {
        if !(start < end && end <= traj.len()) {
            return Err(Error::Validation(format!(
                "segment [{start}, {end}) outside trajectory `{}` of {} frames",
                traj.id,
                traj.len()
            )));
        }
        Ok(Segment {
            traj_id: Arc::from(traj.id.as_str()),
            start,
            end,
            relpath: RelativePath {
                deltas: relative_deltas(&traj.track[start..end]),
            },
            embeddings: None,
        })
    }

    pub fn with_embeddings(mut self, table: Arc<EmbeddingTable>) -> Self {
        self.embeddings = Some(table);
        self
    }

    /// Length in frames.
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Frame ranges left after cutting at every maximal run of `kin < epsilon`
/// and dropping ranges shorter than `min_len`.
pub fn kinematic_spans(kin: &[f64], epsilon: f64, min_len: usize) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut run_start = None;
    for (t, &k) in kin.iter().enumerate() {
        match (k < epsilon, run_start) {
            (false, None) => run_start = Some(t),
            (true, Some(s)) => {
                spans.push((s, t));
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        spans.push((s, kin.len()));
    }
    spans.retain(|&(s, e)| e - s >= min_len.max(1));
    spans
}

pub fn segment_kinematic(traj: &Trajectory, epsilon: f64, min_len: usize) -> Result<Vec<Segment>> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidParams(format!(
            "epsilon must be > 0, got {epsilon}"
        )));
    }
    let kin = traj
        .kin
        .as_deref()
        .ok_or_else(|| Error::MissingKinematics(traj.id.clone()))?;
    kinematic_spans(kin, epsilon, min_len)
        .into_iter()
        .map(|(s, e)| Segment::from_trajectory(traj, s, e))
        .collect()
}

/// Splits `traj` into `n` contiguous segments whose lengths differ by at most
/// one. Leftover frames go to the earliest segments.
pub fn split_even(traj: &Trajectory, n: usize, min_len: usize) -> Result<Vec<Segment>> {
    let frames = traj.len();
    if n == 0 || n * min_len.max(1) > frames {
        return Err(Error::InfeasibleSplit {
            frames,
            parts: n,
            min_len,
        });
    }
    let (base, extra) = (frames / n, frames % n);
    let mut start = 0;
    (0..n)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let seg = Segment::from_trajectory(traj, start, start + len);
            start += len;
            seg
        })
        .collect()
}

/// Default cut threshold: the nearest-rank `percentile` of all kinematic
/// magnitudes. When that lands on zero, the smallest positive magnitude is used
/// so that exactly the stationary frames become cuts. `None` if no trajectory
/// has a positive magnitude.
pub fn default_epsilon<'a>(
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
    percentile: f64,
) -> Option<f64> {
    let mut values: Vec<f64> = trajectories
        .into_iter()
        .filter_map(|t| t.kin.as_deref())
        .flatten()
        .copied()
        .collect();
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let rank = ((percentile / 100.0) * values.len() as f64).ceil() as usize;
    let eps = values[rank.clamp(1, values.len()) - 1];
    if eps > 0.0 {
        Some(eps)
    } else {
        values.into_iter().find(|v| *v > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajdata::Source;
    use proptest::prelude::*;

    fn traj_with_kin(kin: Vec<f64>) -> Trajectory {
        let n = kin.len();
        let mut t = Trajectory::new(
            "t",
            Source::Play,
            10.0,
            (0..n).map(|i| [i as f64, 0.0]).collect(),
        );
        t.kin = Some(kin);
        t
    }

    fn spans(segs: &[Segment]) -> Vec<(usize, usize)> {
        segs.iter().map(|s| (s.start, s.end)).collect()
    }

    #[test]
    fn stationary_path_has_zero_deltas() {
        let p = to_relative(&[[5.0, 5.0]; 4]).unwrap();
        assert_eq!(p.deltas(), &[[0.0, 0.0]; 3]);
    }

    #[test]
    fn deltas_are_forward_differences() {
        let p = to_relative(&[[0.0, 0.0], [2.0, 1.0], [3.0, 3.0]]).unwrap();
        assert_eq!(p.deltas(), &[[2.0, 1.0], [1.0, 2.0]]);
    }

    #[test]
    fn single_point_is_degenerate() {
        assert!(matches!(
            to_relative(&[[1.0, 1.0]]),
            Err(Error::DegeneratePath(_))
        ));
        assert!(matches!(to_relative(&[]), Err(Error::DegeneratePath(_))));
    }

    #[test]
    fn kinematic_cuts_hand_trace() {
        let t = traj_with_kin(vec![0.5, 0.6, 0.02, 0.7, 0.8, 0.01, 0.9]);
        let segs = segment_kinematic(&t, 0.05, 1).unwrap();
        assert_eq!(spans(&segs), vec![(0, 2), (3, 5), (6, 7)]);
        assert!(segs[2].relpath.is_empty());
        assert_eq!(segs[0].relpath.deltas(), &[[1.0, 0.0]]);
    }

    #[test]
    fn kinematic_no_cut_points() {
        let t = traj_with_kin(vec![1.0; 8]);
        assert_eq!(spans(&segment_kinematic(&t, 0.5, 5).unwrap()), vec![(0, 8)]);
    }

    #[test]
    fn kinematic_all_below() {
        let t = traj_with_kin(vec![0.1; 8]);
        assert!(segment_kinematic(&t, 0.5, 1).unwrap().is_empty());
    }

    #[test]
    fn kinematic_pause_run_is_one_cut() {
        let t = traj_with_kin(vec![1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(
            spans(&segment_kinematic(&t, 0.5, 1).unwrap()),
            vec![(0, 2), (5, 7)]
        );
    }

    #[test]
    fn kinematic_short_segments_dropped() {
        let t = traj_with_kin(vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(spans(&segment_kinematic(&t, 0.5, 5).unwrap()), vec![(3, 8)]);
    }

    #[test]
    fn kinematic_requires_kin() {
        let mut t = traj_with_kin(vec![1.0; 4]);
        t.kin = None;
        assert!(matches!(
            segment_kinematic(&t, 0.5, 1),
            Err(Error::MissingKinematics(_))
        ));
        let t = traj_with_kin(vec![1.0; 4]);
        assert!(matches!(
            segment_kinematic(&t, 0.0, 1),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn even_split_examples() {
        let t = traj_with_kin(vec![1.0; 10]);
        assert_eq!(spans(&split_even(&t, 2, 5).unwrap()), vec![(0, 5), (5, 10)]);
        assert_eq!(
            spans(&split_even(&t, 3, 3).unwrap()),
            vec![(0, 4), (4, 7), (7, 10)]
        );
        assert_eq!(spans(&split_even(&t, 1, 5).unwrap()), vec![(0, 10)]);
    }

    #[test]
    fn even_split_infeasible() {
        let t = traj_with_kin(vec![1.0; 10]);
        assert!(matches!(
            split_even(&t, 3, 5),
            Err(Error::InfeasibleSplit { .. })
        ));
        assert!(matches!(
            split_even(&t, 0, 1),
            Err(Error::InfeasibleSplit { .. })
        ));
        assert!(matches!(
            split_even(&t, 11, 1),
            Err(Error::InfeasibleSplit { .. })
        ));
    }

    #[test]
    fn default_epsilon_percentile() {
        let kin: Vec<f64> = (1..=20).map(f64::from).collect();
        let t = traj_with_kin(kin);
        // nearest rank ceil(0.1 * 20) = 2
        assert_eq!(default_epsilon([&t], 10.0), Some(2.0));
    }

    #[test]
    fn default_epsilon_skips_zero() {
        let mut kin = vec![0.0; 5];
        kin.extend([1.5, 1.2, 3.0]);
        let t = traj_with_kin(kin);
        assert_eq!(default_epsilon([&t], 10.0), Some(1.2));
        let z = traj_with_kin(vec![0.0; 3]);
        assert_eq!(default_epsilon([&z], 10.0), None);
    }

    fn grid_coord() -> impl Strategy<Value = f64> {
        // multiples of 1/256 px: sums and differences stay exact
        (-200_000i64..200_000).prop_map(|v| v as f64 / 256.0)
    }

    proptest! {
        #[test]
        fn translation_invariant(
            track in prop::collection::vec([grid_coord(), grid_coord()], 2..40),
            dx in grid_coord(),
            dy in grid_coord(),
        ) {
            let shifted: Vec<[f64; 2]> = track.iter().map(|p| [p[0] + dx, p[1] + dy]).collect();
            prop_assert_eq!(to_relative(&track).unwrap(), to_relative(&shifted).unwrap());
        }

        #[test]
        fn kinematic_coverage(
            kin in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..2.0], 1..80),
            eps in 0.05f64..1.5,
            min_len in 1usize..8,
        ) {
            let all = kinematic_spans(&kin, eps, 1);
            let kept = kinematic_spans(&kin, eps, min_len);
            let mut covered = vec![false; kin.len()];
            let mut last_end = 0;
            for &(s, e) in &all {
                prop_assert!(s >= last_end && s < e);
                last_end = e;
                for c in &mut covered[s..e] {
                    *c = true;
                }
            }
            for (t, c) in covered.iter().enumerate() {
                // every frame is either inside a segment or a below-threshold cut
                prop_assert_eq!(*c, kin[t] >= eps);
            }
            for &(s, e) in &kept {
                prop_assert!(e - s >= min_len);
                prop_assert!(all.contains(&(s, e)));
            }
            prop_assert_eq!(
                kept.len(),
                all.iter().filter(|(s, e)| e - s >= min_len).count()
            );
        }

        #[test]
        fn even_split_lengths(frames in 1usize..200, n in 1usize..20) {
            prop_assume!(n <= frames);
            let t = traj_with_kin(vec![1.0; frames.max(2)]);
            let segs = split_even(&t, n, 1).unwrap();
            let lens: Vec<usize> = segs.iter().map(Segment::len).collect();
            prop_assert_eq!(lens.iter().sum::<usize>(), t.len());
            let (lo, hi) = (lens.iter().min().unwrap(), lens.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            prop_assert!(lens.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
