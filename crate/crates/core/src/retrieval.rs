//! The retrieval loop: visual filter, subsequence alignment, top-K, weights.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathops::{Segment, DEFAULT_MIN_LEN};
use crate::sdtw::{delta_distance, embedding_distance, sdtw_match_by, MatchResult};
use crate::trajdata::{
    DistanceMode, ManifestMatch, ManifestParams, RetrievalManifest, WeightScope, WEIGHT_MAX,
    WEIGHT_MIN, WEIGHT_NORMALIZATION,
};
use crate::visfilter::{boundary_embedding, filter_top_m, segment_order, VisualCost};

pub const WARN_EMPTY_PLAY: &str = "empty play set";
pub const WARN_EMPTY_QUERY: &str = "no query segments";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    /// Candidates kept by the visual filter.
    pub m: usize,
    /// Matches kept per query segment.
    pub k: usize,
    pub use_visual_filter: bool,
    pub distance_mode: DistanceMode,
    /// Kinematic cut threshold the segments were produced with.
    pub epsilon: f64,
    pub min_len: usize,
    pub seed: u64,
    /// Number of even parts each hand trajectory was split into, if any.
    pub split_even: Option<usize>,
    pub weight_scope: WeightScope,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        RetrievalParams {
            m: 100,
            k: 25,
            use_visual_filter: true,
            distance_mode: DistanceMode::Path,
            epsilon: 0.5,
            min_len: DEFAULT_MIN_LEN,
            seed: 0,
            split_even: None,
            weight_scope: WeightScope::PerQuery,
        }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 {
            return Err(Error::InvalidParams("M and K must be ≥ 1".into()));
        }
        if self.use_visual_filter && self.k > self.m {
            return Err(Error::InvalidParams(format!(
                "K ≤ M violated (K = {}, M = {})",
                self.k, self.m
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidParams(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn manifest_params(&self) -> ManifestParams {
        ManifestParams {
            m: self.m,
            k: self.k,
            epsilon: self.epsilon,
            min_len: self.min_len,
            use_visual_filter: self.use_visual_filter,
            distance_mode: self.distance_mode,
            seed: self.seed,
            split_even: self.split_even,
            weight_scope: self.weight_scope,
            weight_normalization: WEIGHT_NORMALIZATION.to_owned(),
        }
    }
}

/// A candidate segment with its alignment against one query.
#[derive(Clone, Copy, Debug)]
pub struct ScoredMatch<'a> {
    pub segment: &'a Segment,
    pub result: MatchResult,
    pub visual: Option<VisualCost>,
}

fn match_order(a: &ScoredMatch, b: &ScoredMatch) -> Ordering {
    a.result
        .cost
        .total_cmp(&b.result.cost)
        .then_with(|| segment_order(a.segment, b.segment))
}

/// The `k` cheapest matches by `(cost, traj_id, start)`.
pub fn rank_matches(mut matches: Vec<ScoredMatch<'_>>, k: usize) -> Vec<ScoredMatch<'_>> {
    if k < matches.len() && k > 0 {
        matches.select_nth_unstable_by(k - 1, match_order);
    }
    matches.truncate(k);
    matches.sort_unstable_by(match_order);
    matches
}

/// Maps alignment costs to training weights in `[0.01, 100]`.
///
/// Costs are divided by their sum, passed through `exp(-c)`, then mapped
/// affinely so the cheapest match gets 100 and the dearest 0.01. When all
/// costs are equal, or sum to zero, every weight is 1.
pub fn normalize_weights(costs: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(Error::InvalidCost(bad));
    }
    let total: f64 = costs.iter().sum();
    let first = match costs.first() {
        Some(&c) => c,
        None => return Ok(Vec::new()),
    };
    if total == 0.0 || !total.is_finite() || costs.iter().all(|&c| c == first) {
        return Ok(vec![1.0; costs.len()]);
    }
    let u: Vec<f64> = costs.iter().map(|c| (-(c / total)).exp()).collect();
    let (lo, hi) = u
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi == lo {
        return Ok(vec![1.0; costs.len()]);
    }
    Ok(u.iter()
        .map(|v| {
            let w = WEIGHT_MIN + (WEIGHT_MAX - WEIGHT_MIN) * ((v - lo) / (hi - lo));
            w.clamp(WEIGHT_MIN, WEIGHT_MAX)
        })
        .collect())
}

fn frame_embeddings(seg: &Segment) -> Result<Vec<&[f32]>> {
    (seg.start..seg.end)
        .map(|f| boundary_embedding(seg, f))
        .collect()
}

/// Aligns `q` against `r`; `None` when `r` is too short to align at all.
/// The returned span is in absolute frames of `r`'s trajectory.
fn align(
    q: &Segment,
    q_frames: Option<&[&[f32]]>,
    r: &Segment,
    mode: DistanceMode,
) -> Result<Option<MatchResult>> {
    match mode {
        DistanceMode::Path => {
            if r.relpath.is_empty() {
                return Ok(None);
            }
            let m = sdtw_match_by(q.relpath.deltas(), r.relpath.deltas(), delta_distance)?;
            // delta k spans frames k..=k+1
            Ok(Some(MatchResult {
                cost: m.cost,
                start: r.start + m.start,
                end: r.start + m.end + 1,
            }))
        }
        DistanceMode::Embedding => {
            let q_frames = q_frames.expect("query frames precomputed in embedding mode");
            let r_frames = frame_embeddings(r)?;
            if q_frames[0].len() != r_frames[0].len() {
                return Err(Error::IncompatibleEmbeddings {
                    left: q_frames[0].len(),
                    right: r_frames[0].len(),
                });
            }
            let m = sdtw_match_by(q_frames, &r_frames, |a, b| embedding_distance(a, b))?;
            Ok(Some(MatchResult {
                cost: m.cost,
                start: r.start + m.start,
                end: r.start + m.end,
            }))
        }
    }
}

/// Top-K matches of one query segment, before weighting.
pub fn retrieve_one<'a>(
    query: &Segment,
    play: &'a [Segment],
    params: &RetrievalParams,
) -> Result<Vec<ScoredMatch<'a>>> {
    params.validate()?;
    let q_frames = match params.distance_mode {
        DistanceMode::Path => {
            if query.relpath.is_empty() {
                return Err(Error::DegeneratePath(format!(
                    "query segment {}[{}..{}) has no motion steps",
                    query.traj_id, query.start, query.end
                )));
            }
            None
        }
        DistanceMode::Embedding => Some(frame_embeddings(query)?),
    };
    let candidates: Vec<(&Segment, Option<VisualCost>)> = if params.use_visual_filter {
        filter_top_m(query, play, params.m)?
            .into_iter()
            .map(|v| (v.segment, Some(v.cost)))
            .collect()
    } else {
        play.iter().map(|s| (s, None)).collect()
    };
    let scored = candidates
        .into_par_iter()
        .map(|(segment, visual)| {
            Ok(
                align(query, q_frames.as_deref(), segment, params.distance_mode)?.map(|result| {
                    ScoredMatch {
                        segment,
                        result,
                        visual,
                    }
                }),
            )
        })
        .collect::<Result<Vec<Option<_>>>>()?;
    Ok(rank_matches(
        scored.into_iter().flatten().collect(),
        params.k,
    ))
}

/// Runs retrieval for every query segment and assembles the manifest.
///
/// Matches are grouped by query segment in input order; within a group they
/// are sorted by `(cost_path, traj_id, seg_start)`.
pub fn retrieve(
    hand_segments: &[Segment],
    play_segments: &[Segment],
    params: &RetrievalParams,
) -> Result<RetrievalManifest> {
    params.validate()?;
    let mut query_ids: Vec<&str> = Vec::new();
    for s in hand_segments {
        if !query_ids.contains(&&*s.traj_id) {
            query_ids.push(&s.traj_id);
        }
    }
    let mut warnings = Vec::new();
    if play_segments.is_empty() {
        warnings.push(WARN_EMPTY_PLAY.to_owned());
    }
    if hand_segments.is_empty() {
        warnings.push(WARN_EMPTY_QUERY.to_owned());
    }

    let mut matches = Vec::new();
    for q in hand_segments {
        let top = retrieve_one(q, play_segments, params)?;
        let costs: Vec<f64> = top.iter().map(|m| m.result.cost).collect();
        let weights = match params.weight_scope {
            WeightScope::PerQuery => normalize_weights(&costs)?,
            WeightScope::Union => vec![1.0; costs.len()],
        };
        matches.extend(top.iter().zip(weights).map(|(m, weight)| ManifestMatch {
            query_traj_id: q.traj_id.to_string(),
            query_start: q.start,
            query_end: q.end,
            traj_id: m.segment.traj_id.to_string(),
            seg_start: m.segment.start,
            seg_end: m.segment.end,
            match_start: m.result.start,
            match_end: m.result.end,
            cost_path: m.result.cost,
            cost_visual: m.visual.map(VisualCost::value),
            weight,
        }));
    }
    if params.weight_scope == WeightScope::Union {
        let costs: Vec<f64> = matches.iter().map(|m| m.cost_path).collect();
        for (m, w) in matches.iter_mut().zip(normalize_weights(&costs)?) {
            m.weight = w;
        }
    }

    Ok(RetrievalManifest {
        query_id: query_ids.join("+"),
        params: params.manifest_params(),
        warnings,
        matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdtw::sdtw_match;
    use crate::trajdata::{EmbeddingTable, Source, Trajectory};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn traj(id: &str, track: Vec<[f64; 2]>) -> Trajectory {
        Trajectory::new(id, Source::Play, 10.0, track)
    }

    fn walk(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 2]> {
        let mut p: [f64; 2] = [rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)];
        (0..n)
            .map(|_| {
                p = [
                    p[0] + rng.random_range(-3.0..3.0),
                    p[1] + rng.random_range(-3.0..3.0),
                ];
                // on a 1/256 px grid so translated copies have identical deltas
                [
                    (p[0] * 256.0).round() / 256.0,
                    (p[1] * 256.0).round() / 256.0,
                ]
            })
            .collect()
    }

    /// Whole-trajectory segment with constant embedding `level` in every frame.
    fn segment(id: &str, track: Vec<[f64; 2]>, level: f32) -> Segment {
        let n = track.len();
        let t = traj(id, track);
        let table = EmbeddingTable::new(n, 1, 3, vec![level; n * 3]).unwrap();
        Segment::from_trajectory(&t, 0, n)
            .unwrap()
            .with_embeddings(Arc::new(table))
    }

    fn play_set(seed: u64, count: usize) -> Vec<Segment> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|i| {
                let n = rng.random_range(8..30);
                let level = rng.random_range(0.0..1.0);
                segment(&format!("p{i:03}"), walk(&mut rng, n), level)
            })
            .collect()
    }

    #[test]
    fn equal_costs_give_unit_weights() {
        assert_eq!(normalize_weights(&[2.5, 2.5, 2.5]).unwrap(), vec![1.0; 3]);
        assert_eq!(normalize_weights(&[7.0]).unwrap(), vec![1.0]);
        assert_eq!(normalize_weights(&[0.0, 0.0]).unwrap(), vec![1.0; 2]);
        assert!(normalize_weights(&[]).unwrap().is_empty());
    }

    #[test]
    fn two_costs_hit_both_bounds() {
        assert_eq!(normalize_weights(&[1.0, 3.0]).unwrap(), vec![100.0, 0.01]);
    }

    #[test]
    fn three_cost_closed_form() {
        let w = normalize_weights(&[1.0, 2.0, 3.0]).unwrap();
        let (a, b, c) = (
            (-1.0f64 / 6.0).exp(),
            (-1.0f64 / 3.0).exp(),
            (-0.5f64).exp(),
        );
        let expected = 0.01 + 99.99 * (b - c) / (a - c);
        assert!((w[1] - expected).abs() < 1e-9);
        assert!((w[1] - 45.84).abs() < 1e-2, "{}", w[1]);
        assert_eq!((w[0], w[2]), (100.0, 0.01));
    }

    #[test]
    fn bad_costs_rejected() {
        assert!(matches!(
            normalize_weights(&[1.0, -0.5]),
            Err(Error::InvalidCost(_))
        ));
        assert!(matches!(
            normalize_weights(&[f64::NAN]),
            Err(Error::InvalidCost(_))
        ));
        assert!(matches!(
            normalize_weights(&[f64::INFINITY, 1.0]),
            Err(Error::InvalidCost(_))
        ));
    }

    fn scored<'a>(seg: &'a Segment, cost: f64) -> ScoredMatch<'a> {
        ScoredMatch {
            segment: seg,
            result: MatchResult {
                cost,
                start: seg.start,
                end: seg.end,
            },
            visual: None,
        }
    }

    #[test]
    fn rank_short_list_and_ties() {
        let segs = [
            segment("b", vec![[0.0, 0.0], [1.0, 1.0]], 0.0),
            segment("a", vec![[0.0, 0.0], [1.0, 1.0]], 0.0),
        ];
        let out = rank_matches(vec![scored(&segs[0], 1.0), scored(&segs[1], 1.0)], 5);
        let ids: Vec<&str> = out.iter().map(|m| &*m.segment.traj_id).collect();
        assert_eq!(ids, ["a", "b"]);
        assert!(rank_matches(vec![scored(&segs[0], 1.0)], 0).is_empty());
    }

    #[test]
    fn rank_ignores_input_order() {
        let segs = play_set(1, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let items: Vec<ScoredMatch> = segs
            .iter()
            .map(|s| scored(s, f64::from(rng.random_range(0..6u8))))
            .collect();
        let expected: Vec<&str> = rank_matches(items.clone(), 10)
            .iter()
            .map(|m| &*m.segment.traj_id)
            .collect();
        for round in 0..20 {
            let mut shuffled = items.clone();
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            let got: Vec<&str> = rank_matches(shuffled, 10)
                .iter()
                .map(|m| &*m.segment.traj_id)
                .collect();
            assert_eq!(got, expected, "round {round}");
        }
    }

    #[test]
    fn exact_copy_ranks_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut play = play_set(3, 30);
        let track = walk(&mut rng, 20);
        let shifted: Vec<[f64; 2]> = track.iter().map(|p| [p[0] + 0.5, p[1] - 0.25]).collect();
        play.push(segment("copy", shifted, 0.5));
        let q = segment("hand", track, 0.5);
        let m = retrieve(&[q], &play, &RetrievalParams::default()).unwrap();
        assert_eq!(m.matches[0].traj_id, "copy");
        assert_eq!(m.matches[0].cost_path, 0.0);
        assert_eq!((m.matches[0].match_start, m.matches[0].match_end), (0, 20));
        assert_eq!(m.matches[0].weight, 100.0);
        m.validate().unwrap();
    }

    #[test]
    fn k_equal_to_candidates_keeps_all() {
        let play = play_set(5, 12);
        let q = play_set(6, 1).pop().unwrap();
        let params = RetrievalParams {
            m: 12,
            k: 12,
            ..RetrievalParams::default()
        };
        let m = retrieve(std::slice::from_ref(&q), &play, &params).unwrap();
        assert_eq!(m.matches.len(), 12);
        assert!(m
            .matches
            .windows(2)
            .all(|w| w[0].cost_path <= w[1].cost_path));
        for mm in &m.matches {
            let seg = play.iter().find(|s| *s.traj_id == mm.traj_id).unwrap();
            let direct = sdtw_match(&q.relpath, &seg.relpath).unwrap();
            assert_eq!(mm.cost_path, direct.cost);
            assert_eq!(mm.match_start, direct.start);
            assert_eq!(mm.match_end, direct.end + 1);
        }
    }

    #[test]
    fn empty_play_set_warns() {
        let q = play_set(7, 1).pop().unwrap();
        let m = retrieve(&[q], &[], &RetrievalParams::default()).unwrap();
        assert!(m.matches.is_empty());
        assert_eq!(m.warnings, vec![WARN_EMPTY_PLAY.to_owned()]);
    }

    #[test]
    fn filtering_needs_embeddings() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let bare = Segment::from_trajectory(&traj("x", walk(&mut rng, 10)), 0, 10).unwrap();
        let play = play_set(9, 5);
        assert!(matches!(
            retrieve(
                std::slice::from_ref(&bare),
                &play,
                &RetrievalParams::default()
            ),
            Err(Error::MissingEmbeddings(_))
        ));
        let unfiltered = RetrievalParams {
            use_visual_filter: false,
            ..RetrievalParams::default()
        };
        let m = retrieve(&[bare], &play, &unfiltered).unwrap();
        assert_eq!(m.matches.len(), 5);
        assert!(m.matches.iter().all(|x| x.cost_visual.is_none()));
    }

    #[test]
    fn k_above_m_rejected() {
        let params = RetrievalParams {
            m: 25,
            k: 50,
            ..RetrievalParams::default()
        };
        assert!(matches!(
            retrieve(&[], &[], &params),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn embedding_mode_spans_frames() {
        let play = play_set(10, 8);
        let q = play[3].clone();
        let params = RetrievalParams {
            distance_mode: DistanceMode::Embedding,
            use_visual_filter: false,
            k: 3,
            ..RetrievalParams::default()
        };
        let m = retrieve(&[q], &play, &params).unwrap();
        assert_eq!(m.matches[0].cost_path, 0.0);
        for mm in &m.matches {
            assert!(mm.seg_start <= mm.match_start && mm.match_end <= mm.seg_end);
        }
    }

    #[test]
    fn union_scope_spans_queries() {
        let play = play_set(11, 20);
        let queries = play_set(12, 2);
        let params = RetrievalParams {
            k: 5,
            weight_scope: WeightScope::Union,
            ..RetrievalParams::default()
        };
        let m = retrieve(&queries, &play, &params).unwrap();
        assert_eq!(m.matches.len(), 10);
        let max = m.matches.iter().map(|x| x.weight).fold(0.0, f64::max);
        let min = m.matches.iter().map(|x| x.weight).fold(f64::MAX, f64::min);
        assert_eq!((max, min), (100.0, 0.01));
        assert_eq!(m.query_id, "p000+p001");
        m.validate().unwrap();
    }

    #[test]
    fn one_frame_candidates_are_skipped_in_path_mode() {
        let mut play = play_set(13, 4);
        let t = traj("tiny", vec![[0.0, 0.0], [1.0, 1.0]]);
        let table = Arc::new(EmbeddingTable::new(2, 1, 3, vec![0.0; 6]).unwrap());
        play.push(
            Segment::from_trajectory(&t, 0, 1)
                .unwrap()
                .with_embeddings(table),
        );
        let q = play_set(14, 1).pop().unwrap();
        let m = retrieve(&[q], &play, &RetrievalParams::default()).unwrap();
        assert_eq!(m.matches.len(), 4);
    }

    proptest! {
        #[test]
        fn weights_bounded_and_monotone(costs in prop::collection::vec(0.0f64..1e4, 1..40)) {
            let w = normalize_weights(&costs).unwrap();
            for i in 0..costs.len() {
                prop_assert!((WEIGHT_MIN..=WEIGHT_MAX).contains(&w[i]));
                for j in 0..costs.len() {
                    if costs[i] <= costs[j] {
                        prop_assert!(w[i] >= w[j]);
                    }
                }
            }
        }

        #[test]
        fn filtered_matches_come_from_visual_shortlist(seed in 0u64..200, m in 3usize..15) {
            let play = play_set(seed, 25);
            let q = play_set(seed + 1000, 1).pop().unwrap();
            let params = RetrievalParams { m, k: 3, ..RetrievalParams::default() };
            let manifest = retrieve(std::slice::from_ref(&q), &play, &params).unwrap();
            let shortlist = filter_top_m(&q, &play, m).unwrap();
            for mm in &manifest.matches {
                prop_assert!(shortlist
                    .iter()
                    .any(|v| *v.segment.traj_id == mm.traj_id && v.segment.start == mm.seg_start));
            }
        }
    }
}
