//! Randomized batch deletion for one detected subset.

use rand::Rng;
use serde::Serialize;

use crate::model::{BatchCollection, EstimatorParams, SubsetMask};
use crate::stats::corruption_score_batch;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeletionOutcome {
    /// Batch indices in deletion order.
    pub deleted: Vec<usize>,
    pub initial_score: f64,
    pub final_score: f64,
    pub draws: usize,
}

/// Deletes alive batches of `coll`, one at a time, each drawn with
/// probability proportional to its corruption score for `s`, until the
/// collection's score for `s` drops below `params.deletion_threshold()`.
///
/// Zero-score batches are never drawn, and every draw removes positive
/// score, so the loop terminates.
pub fn batch_deletion<R: Rng + ?Sized>(
    coll: &mut BatchCollection,
    s: &SubsetMask,
    med: f64,
    params: &EstimatorParams,
    rng: &mut R,
) -> DeletionOutcome {
    let scores: Vec<(usize, f64)> =
        coll.alive_indices().map(|i| (i, corruption_score_batch(coll.batch(i), s, med, params))).collect();
    let outcome = delete_by_scores(&scores, params.deletion_threshold(), rng);
    for &i in &outcome.deleted {
        coll.delete(i);
    }
    outcome
}

/// The sampling loop on precomputed `(batch index, score)` pairs.
pub fn delete_by_scores<R: Rng + ?Sized>(scores: &[(usize, f64)], threshold: f64, rng: &mut R) -> DeletionOutcome {
    let mut alive: Vec<(usize, f64)> = scores.iter().copied().filter(|(_, s)| *s > 0.0).collect();
    let total = |v: &[(usize, f64)]| v.iter().map(|(_, s)| s).sum::<f64>();
    let initial_score = total(&alive);
    let mut deleted = Vec::new();
    loop {
        let current = total(&alive);
        if current < threshold || alive.is_empty() {
            return DeletionOutcome { final_score: current, initial_score, draws: deleted.len(), deleted };
        }
        let u = rng.random::<f64>() * current;
        let mut acc = 0.0;
        let mut pick = alive.len() - 1;
        for (pos, (_, s)) in alive.iter().enumerate() {
            acc += s;
            if u < acc {
                pick = pos;
                break;
            }
        }
        // `remove` keeps the remaining order, so draws replay exactly
        let (idx, _) = alive.remove(pick);
        deleted.push(idx);
    }
}
