//! Subsequence dynamic time warping.
//!
//! The query is aligned in full against the cheapest contiguous window of the
//! reference. Local distance is Euclidean, steps are the unweighted
//! diagonal/vertical/horizontal set, and the cost is the raw cumulative sum
//! along the alignment.
//!
//! Ties are resolved deterministically: the smallest end index wins, and the
//! start comes from the traceback that prefers the diagonal predecessor, then
//! the vertical, then the horizontal one. The start is carried forward in the
//! DP instead of walking back through a full matrix; following the same
//! preference order, both recover the same index.
//!
//! [`sdtw_oracle`] recomputes the answer by running pinned-endpoint DTW on
//! every window of the reference.

use crate::error::{Error, Result};
use crate::pathops::RelativePath;

/// Optimal alignment of a query onto a reference window `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchResult {
    pub cost: f64,
    pub start: usize,
    pub end: usize,
}

/// Euclidean distance between two 2D deltas.
#[inline]
pub fn delta_distance(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    (dx * dx + dy * dy).sqrt()
}

/// Euclidean distance between two embedding rows.
#[inline]
pub fn embedding_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

fn check_nonempty(q: usize, r: usize) -> Result<()> {
    if q == 0 || r == 0 {
        return Err(Error::DegeneratePath(format!(
            "DTW needs non-empty sequences (query {q}, reference {r})"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct Cell {
    cost: f64,
    start: usize,
}

const UNREACHABLE: Cell = Cell {
    cost: f64::INFINITY,
    start: usize::MAX,
};

fn run_subsequence<T, D>(q: &[T], r: &[T], dist: D, band: Option<usize>) -> Result<MatchResult>
where
    D: Fn(&T, &T) -> f64,
{
    check_nonempty(q.len(), r.len())?;
    let m = r.len();
    let mut prev = vec![UNREACHABLE; m + 1];
    let mut cur = vec![UNREACHABLE; m + 1];

    // First query element: the free row above costs zero everywhere, so the
    // diagonal predecessor always wins and each column opens an alignment.
    for j in 1..=m {
        prev[j] = Cell {
            cost: dist(&q[0], &r[j - 1]),
            start: j - 1,
        };
    }

    for (i, qi) in q.iter().enumerate().skip(1) {
        let row = i + 1;
        cur[0] = UNREACHABLE;
        for j in 1..=m {
            let inside = |c: &Cell| {
                c.cost.is_finite() && band.is_none_or(|b| (j - c.start).abs_diff(row) <= b)
            };
            let mut best = UNREACHABLE;
            for cand in [prev[j - 1], prev[j], cur[j - 1]] {
                if cand.cost < best.cost && inside(&cand) {
                    best = cand;
                }
            }
            cur[j] = if best.cost.is_finite() {
                Cell {
                    cost: dist(qi, &r[j - 1]) + best.cost,
                    start: best.start,
                }
            } else {
                UNREACHABLE
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    let mut end = 0;
    for j in 1..=m {
        if prev[j].cost < prev[end].cost {
            end = j;
        }
    }
    if end == 0 {
        return Err(Error::InvalidParams(format!(
            "no alignment of {} onto {} fits within band {:?}",
            q.len(),
            m,
            band
        )));
    }
    Ok(MatchResult {
        cost: prev[end].cost,
        start: prev[end].start,
        end,
    })
}

/// Subsequence DTW with a caller-supplied local distance.
pub fn sdtw_match_by<T, D>(q: &[T], r: &[T], dist: D) -> Result<MatchResult>
where
    D: Fn(&T, &T) -> f64,
{
    run_subsequence(q, r, dist, None)
}

pub fn sdtw_match(q: &RelativePath, r: &RelativePath) -> Result<MatchResult> {
    sdtw_match_by(q.deltas(), r.deltas(), delta_distance)
}

/// Subsequence DTW restricted to cells within `band` of the diagonal that
/// starts at the alignment's own first reference column. Never cheaper than
/// [`sdtw_match`]; identical once `band >= max(|q|, |r|)`.
pub fn sdtw_banded_by<T, D>(q: &[T], r: &[T], band: usize, dist: D) -> Result<MatchResult>
where
    D: Fn(&T, &T) -> f64,
{
    if band == 0 {
        return Err(Error::InvalidParams("band must be ≥ 1".into()));
    }
    run_subsequence(q, r, dist, Some(band))
}

pub fn sdtw_banded(q: &RelativePath, r: &RelativePath, band: usize) -> Result<MatchResult> {
    sdtw_banded_by(q.deltas(), r.deltas(), band, delta_distance)
}

/// Classical DTW with both endpoints pinned.
pub fn dtw_full_by<T, D>(q: &[T], r: &[T], dist: D) -> Result<f64>
where
    D: Fn(&T, &T) -> f64,
{
    check_nonempty(q.len(), r.len())?;
    let m = r.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    let mut cur = vec![f64::INFINITY; m + 1];
    for qi in q {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            cur[j] = dist(qi, &r[j - 1]) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

pub fn dtw_full(q: &RelativePath, r: &RelativePath) -> Result<f64> {
    dtw_full_by(q.deltas(), r.deltas(), delta_distance)
}

/// Exhaustive subsequence search: pinned DTW over every window `[s, e)`,
/// keeping the minimum with ties to the smallest `e`, then smallest `s`.
pub fn sdtw_oracle_by<T, D>(q: &[T], r: &[T], dist: D) -> Result<MatchResult>
where
    D: Fn(&T, &T) -> f64,
{
    check_nonempty(q.len(), r.len())?;
    let mut best = MatchResult {
        cost: f64::INFINITY,
        start: 0,
        end: 0,
    };
    for end in 1..=r.len() {
        for start in 0..end {
            let cost = dtw_full_by(q, &r[start..end], &dist)?;
            if cost < best.cost {
                best = MatchResult { cost, start, end };
            }
        }
    }
    Ok(best)
}

pub fn sdtw_oracle(q: &RelativePath, r: &RelativePath) -> Result<MatchResult> {
    sdtw_oracle_by(q.deltas(), r.deltas(), delta_distance)
}
