//! Scoring of predicted warnings against the ground-truth warning set:
//! one-to-one event matching and precision/recall.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trajectory::CollisionEvent;

#[derive(Debug, Clone, Default)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// (expected, predicted) pairs, in match order.
    pub matched_pairs: Vec<(CollisionEvent, CollisionEvent)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
}

fn event_times(e: &CollisionEvent) -> (f64, f64) {
    let lo = e.point_time_a.min(e.point_time_b);
    let hi = e.point_time_a.max(e.point_time_b);
    (lo, hi)
}

/// Time gap between two events' occupancy intervals; zero when they overlap.
fn interval_gap(a: &CollisionEvent, b: &CollisionEvent) -> f64 {
    let (alo, ahi) = event_times(a);
    let (blo, bhi) = event_times(b);
    (blo - ahi).max(alo - bhi).max(0.0)
}

/// Match predicted events to expected events one-to-one: a pair is eligible
/// when it names the same unordered vehicle pair and the event time intervals
/// are within `time_tolerance` of overlapping; eligible pairs are consumed
/// greedily by smallest time gap.
pub fn match_warnings(
    expected: &[CollisionEvent],
    predicted: &[CollisionEvent],
    time_tolerance: f64,
) -> Result<MatchResult> {
    if time_tolerance < 0.0 {
        return Err(Error::Config("time_tolerance must be non-negative".into()));
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, e) in expected.iter().enumerate() {
        for (j, p) in predicted.iter().enumerate() {
            if e.pair != p.pair {
                continue;
            }
            let gap = interval_gap(e, p);
            if gap <= time_tolerance {
                candidates.push((gap, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = vec![false; expected.len()];
    let mut used_p = vec![false; predicted.len()];
    let mut matched_pairs = Vec::new();
    for (_, i, j) in candidates {
        if used_e[i] || used_p[j] {
            continue;
        }
        used_e[i] = true;
        used_p[j] = true;
        matched_pairs.push((expected[i].clone(), predicted[j].clone()));
    }
    let tp = matched_pairs.len();
    Ok(MatchResult {
        true_positives: tp,
        false_positives: predicted.len() - tp,
        false_negatives: expected.len() - tp,
        matched_pairs,
    })
}

/// Precision and recall. Empty denominators score 1.0 by convention (no
/// predictions means nothing wrongly predicted; no expected events means
/// nothing missed).
pub fn score(m: &MatchResult) -> Score {
    let tp = m.true_positives as f64;
    let precision = if m.true_positives + m.false_positives == 0 {
        1.0
    } else {
        tp / (tp + m.false_positives as f64)
    };
    let recall = if m.true_positives + m.false_negatives == 0 {
        1.0
    } else {
        tp / (tp + m.false_negatives as f64)
    };
    Score { precision, recall }
}
