//! Visual pre-filter: squared embedding distance of first and last frames.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pathops::Segment;
use crate::trajdata::EmbeddingTable;

/// Sum of squared first-frame and last-frame embedding distances.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct VisualCost(pub f64);

impl VisualCost {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Row of a strided table closest to `frame`, earlier row on ties.
pub fn nearest_row(table: &EmbeddingTable, frame: usize) -> usize {
    let frame = frame.min(table.frames().saturating_sub(1));
    let stride = table.stride();
    let lo = frame / stride;
    let hi = lo + 1;
    if hi < table.rows() && hi * stride - frame < frame - lo * stride {
        hi
    } else {
        lo
    }
}

/// Stored embedding for `frame` of the segment's parent trajectory.
pub fn boundary_embedding(seg: &Segment, frame: usize) -> Result<&[f32]> {
    let table = seg
        .embeddings
        .as_deref()
        .ok_or_else(|| Error::MissingEmbeddings(seg.traj_id.to_string()))?;
    Ok(table.row(nearest_row(table, frame)))
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

pub fn visual_cost(q: &Segment, r: &Segment) -> Result<VisualCost> {
    let (qf, ql) = (
        boundary_embedding(q, q.start)?,
        boundary_embedding(q, q.end - 1)?,
    );
    let (rf, rl) = (
        boundary_embedding(r, r.start)?,
        boundary_embedding(r, r.end - 1)?,
    );
    if qf.len() != rf.len() {
        return Err(Error::IncompatibleEmbeddings {
            left: qf.len(),
            right: rf.len(),
        });
    }
    Ok(VisualCost(
        squared_distance(qf, rf) + squared_distance(ql, rl),
    ))
}

/// A candidate that survived the visual filter.
#[derive(Clone, Copy, Debug)]
pub struct VisualCandidate<'a> {
    pub index: usize,
    pub segment: &'a Segment,
    pub cost: VisualCost,
}

pub(crate) fn segment_order(a: &Segment, b: &Segment) -> Ordering {
    a.traj_id
        .cmp(&b.traj_id)
        .then(a.start.cmp(&b.start))
        .then(a.end.cmp(&b.end))
}

/// The `m` candidates with lowest visual cost, ascending, ties by
/// `(traj_id, start)`. `index` refers back into `candidates`.
pub fn filter_top_m<'a>(
    q: &Segment,
    candidates: &'a [Segment],
    m: usize,
) -> Result<Vec<VisualCandidate<'a>>> {
    if m == 0 {
        return Err(Error::InvalidParams("M must be ≥ 1".into()));
    }
    let mut scored = candidates
        .par_iter()
        .enumerate()
        .map(|(index, segment)| {
            visual_cost(q, segment).map(|cost| VisualCandidate {
                index,
                segment,
                cost,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let order = |a: &VisualCandidate, b: &VisualCandidate| {
        a.cost
            .0
            .total_cmp(&b.cost.0)
            .then_with(|| segment_order(a.segment, b.segment))
    };
    if m < scored.len() {
        scored.select_nth_unstable_by(m - 1, order);
        scored.truncate(m);
    }
    scored.sort_unstable_by(order);
    Ok(scored)
}
