//! The robust estimator loop and the two reference estimators.

use rand::Rng;
use serde::Serialize;

use crate::detect::{brute_force_detect, build_matrices, relaxation_detect, RelaxationConfig};
use crate::error::{Error, Result};
use crate::model::{BatchCollection, Distribution, EstimatorParams, Provenance, SubsetMask, SIMPLEX_TOL};
use crate::prune::batch_deletion;
use crate::stats::{collection_empirical_vector, subset_median, subset_median_alive};

/// Which batches the per-subset median is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MedianScope {
    /// Every batch of the input, deleted or not.
    #[default]
    Full,
    /// Only the batches still alive in the current iteration.
    Alive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    #[default]
    Relaxation,
    /// Exhaustive search; only valid for small `k`.
    BruteForce,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EstimatorConfig {
    pub detector: Detector,
    pub relaxation: RelaxationConfig,
    pub median_scope: MedianScope,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub subset: SubsetMask,
    pub abs_delta: f64,
    pub alive: usize,
    pub deletions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateDiagnostics {
    /// Number of detection calls, including the final one that stopped the loop.
    pub iterations: usize,
    pub total_deleted: usize,
    /// Provenance breakdown of the deletions, when provenance is known.
    pub good_deleted: Option<usize>,
    pub adversarial_deleted: Option<usize>,
    pub final_abs_delta: f64,
    pub per_iteration: Vec<IterationRecord>,
}

/// Repeats detection and deletion until the detected variance gap, scaled
/// by the number of alive batches, is at most `params.stop_threshold()`;
/// returns the mean empirical distribution of the surviving batches.
///
/// The input collection is not modified; deletions act on a copy whose
/// alive flags start from the input's.
pub fn robust_estimate<R: Rng + ?Sized>(
    input: &BatchCollection,
    params: &EstimatorParams,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<(Distribution, EstimateDiagnostics)> {
    if input.len() < 2 {
        return Err(Error::TooFewBatches { needed: 2, have: input.len() });
    }
    if input.k() != params.k() {
        return Err(Error::DimensionMismatch { expected: params.k(), got: input.k() });
    }
    let mut coll = input.clone();
    let mut per_iteration = Vec::new();
    let mut total_deleted = 0usize;
    let mut deleted_flags = vec![false; coll.len()];
    // Each non-final iteration deletes at least one batch, so this bound is
    // never binding; it guards against a degenerate threshold.
    let max_iterations = coll.len() + 1;

    let final_abs_delta = loop {
        let alive = coll.alive_count();
        if alive == 0 {
            return Err(Error::AllDeleted);
        }
        if alive < 2 {
            break 0.0;
        }
        let triple = build_matrices(&coll)?;
        let found = match cfg.detector {
            Detector::Relaxation => relaxation_detect(&triple, rng, &cfg.relaxation)?,
            Detector::BruteForce => brute_force_detect(&triple)?,
        };
        let scaled = alive as f64 * found.abs_delta;
        if scaled <= params.stop_threshold() || per_iteration.len() + 1 >= max_iterations {
            per_iteration.push(IterationRecord {
                subset: found.subset,
                abs_delta: found.abs_delta,
                alive,
                deletions: 0,
            });
            break found.abs_delta;
        }
        let med = match cfg.median_scope {
            MedianScope::Full => subset_median(&coll, &found.subset)?,
            MedianScope::Alive => subset_median_alive(&coll, &found.subset)?,
        };
        let outcome = batch_deletion(&mut coll, &found.subset, med, params, rng);
        for &i in &outcome.deleted {
            deleted_flags[i] = true;
        }
        total_deleted += outcome.deleted.len();
        per_iteration.push(IterationRecord {
            subset: found.subset,
            abs_delta: found.abs_delta,
            alive,
            deletions: outcome.deleted.len(),
        });
        if outcome.deleted.is_empty() {
            // The detected gap is large but no batch scores outside the band
            // for it; deleting cannot make progress.
            break found.abs_delta;
        }
    };

    let estimate = collection_empirical_vector(&coll)?;
    let sum: f64 = estimate.iter().sum();
    debug_assert!((sum - 1.0).abs() <= SIMPLEX_TOL, "estimate sums to {sum}");
    let estimate = Distribution::new(estimate)?;

    let (good_deleted, adversarial_deleted) = match coll.provenance() {
        Some(prov) => {
            let good = (0..coll.len()).filter(|&i| deleted_flags[i] && prov[i] == Provenance::Good).count();
            (Some(good), Some(total_deleted - good))
        }
        None => (None, None),
    };
    Ok((
        estimate,
        EstimateDiagnostics {
            iterations: per_iteration.len(),
            total_deleted,
            good_deleted,
            adversarial_deleted,
            final_abs_delta,
            per_iteration,
        },
    ))
}

/// Empirical distribution of all samples of all batches, ignoring the
/// alive flags.
pub fn naive_estimate(coll: &BatchCollection) -> Result<Distribution> {
    pooled(coll, |_| true)
}

/// Empirical distribution of the good batches only.
pub fn oracle_estimate(coll: &BatchCollection) -> Result<Distribution> {
    let prov = coll.provenance().ok_or(Error::MissingProvenance)?;
    pooled(coll, |i| prov[i] == Provenance::Good)
}

fn pooled(coll: &BatchCollection, keep: impl Fn(usize) -> bool) -> Result<Distribution> {
    let mut totals = vec![0u64; coll.k()];
    let mut samples = 0u64;
    for (_, b) in coll.batches().iter().enumerate().filter(|(i, _)| keep(*i)) {
        for (t, &c) in totals.iter_mut().zip(b.counts()) {
            *t += u64::from(c);
        }
        samples += b.n() as u64;
    }
    if samples == 0 {
        return Err(Error::EmptyCollection);
    }
    Distribution::new(totals.into_iter().map(|t| t as f64 / samples as f64).collect())
}
