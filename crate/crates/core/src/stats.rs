//! Scalar statistics of batch collections: empirical subset measures, the
//! median proxy, the Bernoulli variance function, corruption scores, and an
//! empirical check of the regularity conditions the good batches should meet.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{log_term, Batch, BatchCollection, Distribution, EstimatorParams, SubsetMask};
use crate::rng::substream;
use rand::Rng;

/// Slack allowed on `r` before `variance_fn` rejects it.
const UNIT_TOL: f64 = 1e-12;

/// `V(r) = r (1 - r) / n`, the variance of the mean of `n` Bernoulli(r) draws.
pub fn variance_fn(r: f64, n: usize) -> Result<f64> {
    if !(-UNIT_TOL..=1.0 + UNIT_TOL).contains(&r) || n == 0 {
        return Err(Error::InvalidParameter(format!("variance_fn needs r in [0,1] and n >= 1, got r = {r}, n = {n}")));
    }
    let r = r.clamp(0.0, 1.0);
    Ok(r * (1.0 - r) / n as f64)
}

/// Fraction of the batch's samples that land in `s`.
pub fn batch_empirical(b: &Batch, s: &SubsetMask) -> f64 {
    assert_eq!(s.width(), b.k(), "mask width must equal k");
    let hits: u64 = s.iter().map(|i| u64::from(b.counts()[i])).sum();
    hits as f64 / b.n() as f64
}

/// `mu_b(s)` for every batch (alive or not), in batch order.
pub fn batch_empiricals(coll: &BatchCollection, s: &SubsetMask) -> Vec<f64> {
    coll.batches().iter().map(|b| batch_empirical(b, s)).collect()
}

fn alive_empiricals(coll: &BatchCollection, s: &SubsetMask) -> Vec<f64> {
    coll.alive_batches().map(|b| batch_empirical(b, s)).collect()
}

/// Mean of `mu_b(s)` over the alive batches.
pub fn collection_empirical(coll: &BatchCollection, s: &SubsetMask) -> Result<f64> {
    mean(&alive_empiricals(coll, s))
}

/// The vector `p_bar` over all symbols: mean of the alive batches' empirical
/// distributions.
pub fn collection_empirical_vector(coll: &BatchCollection) -> Result<Vec<f64>> {
    let alive = coll.alive_count();
    if alive == 0 {
        return Err(Error::EmptyCollection);
    }
    let mut totals = vec![0u64; coll.k()];
    for b in coll.alive_batches() {
        for (t, &c) in totals.iter_mut().zip(b.counts()) {
            *t += u64::from(c);
        }
    }
    let denom = (alive * coll.n()) as f64;
    Ok(totals.into_iter().map(|t| t as f64 / denom).collect())
}

/// Median of `mu_b(s)` over every batch in the collection, ignoring the
/// alive flags.
pub fn subset_median(coll: &BatchCollection, s: &SubsetMask) -> Result<f64> {
    median(&mut batch_empiricals(coll, s))
}

/// Median of `mu_b(s)` over the alive batches only.
pub fn subset_median_alive(coll: &BatchCollection, s: &SubsetMask) -> Result<f64> {
    median(&mut alive_empiricals(coll, s))
}

/// Median; even lengths take the mean of the two middle order statistics.
pub fn median(values: &mut [f64]) -> Result<f64> {
    let len = values.len();
    if len == 0 {
        return Err(Error::EmptyCollection);
    }
    let mid = len / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if len % 2 == 1 {
        Ok(upper)
    } else {
        let below = lower.iter().copied().max_by(f64::total_cmp).expect("len >= 2");
        Ok(0.5 * (below + upper))
    }
}

/// Score of a single measure value: zero inside the band, squared deviation
/// outside.
pub fn corruption_score_value(mu: f64, med: f64, threshold: f64) -> f64 {
    let dev = mu - med;
    if dev.abs() <= threshold {
        0.0
    } else {
        dev * dev
    }
}

pub fn corruption_score_batch(b: &Batch, s: &SubsetMask, med: f64, params: &EstimatorParams) -> f64 {
    corruption_score_value(batch_empirical(b, s), med, params.score_threshold())
}

/// Sum of batch scores over the alive batches.
pub fn corruption_score_collection(coll: &BatchCollection, s: &SubsetMask, med: f64, params: &EstimatorParams) -> f64 {
    coll.alive_batches().map(|b| corruption_score_batch(b, s, med, params)).sum()
}

/// Population variance of `mu_b(s)` over the alive batches.
pub fn empirical_variance(coll: &BatchCollection, s: &SubsetMask) -> Result<f64> {
    let values = alive_empiricals(coll, s);
    let mean = mean(&values)?;
    Ok(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64)
}

fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyCollection);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Which subsets `check_conditions` evaluates. Singletons are always included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetSampling {
    /// `trials` subsets with each symbol included independently w.p. 1/2.
    Random { trials: usize },
    /// Every non-empty subset; only for `k <= EXHAUSTIVE_MAX_K`.
    Exhaustive,
}

pub const EXHAUSTIVE_MAX_K: usize = 15;

/// Worst observed margins for the three good-batch conditions. A positive
/// margin means the condition held on every tested subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    /// `sqrt(ln 6 / n) - |med(S) - p(S)|`, minimized over subsets.
    pub cond1_margin: f64,
    /// `beta/2 * sqrt(ln(6e/beta)/n) - |p_bar'(S) - p(S)|` over subsets and
    /// every large enough sub-collection.
    pub cond2_mean_margin: f64,
    /// `6 beta ln(6e/beta)/n - |mean sq. deviation - V(p(S))|`, same range.
    pub cond2_var_margin: f64,
    /// `kappa_g - max_S psi(B_G, S)`.
    pub cond3_margin: f64,
    pub subsets_tested: usize,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.cond1_margin > 0.0
            && self.cond2_mean_margin > 0.0
            && self.cond2_var_margin > 0.0
            && self.cond3_margin > 0.0
    }
}

/// Evaluates the three conditions on a collection of good batches against
/// the true distribution `p`.
///
/// For the sub-collection condition the extremal sub-collections are found
/// exactly per subset: keeping at least `(1 - beta/6)` of the batches, the
/// mean deviation and the mean squared deviation are pushed to their extremes
/// by dropping batches from one end of the sorted order.
pub fn check_conditions(
    good: &BatchCollection,
    p: &Distribution,
    params: &EstimatorParams,
    sampling: SubsetSampling,
    seed: u64,
) -> Result<ConditionReport> {
    let k = good.k();
    if p.k() != k {
        return Err(Error::DimensionMismatch { expected: k, got: p.k() });
    }
    if good.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let subsets: Vec<SubsetMask> = match sampling {
        SubsetSampling::Exhaustive => {
            if k > EXHAUSTIVE_MAX_K {
                return Err(Error::AlphabetTooLarge { k, cap: EXHAUSTIVE_MAX_K });
            }
            (1u64..1 << k).map(|bits| SubsetMask::from_bits(k, bits)).collect()
        }
        SubsetSampling::Random { trials } => {
            let mut v: Vec<SubsetMask> = (0..k).map(|i| SubsetMask::singleton(k, i)).collect();
            v.extend((0..trials).map(|t| {
                let mut rng = substream(seed, t as u64);
                SubsetMask::from_flags(&(0..k).map(|_| rng.random::<bool>()).collect::<Vec<_>>())
            }));
            v
        }
    };

    let n = good.n();
    let beta = params.beta();
    let lt = log_term(beta);
    let cond1_bound = (6f64.ln() / n as f64).sqrt();
    let mean_bound = 0.5 * beta * (lt / n as f64).sqrt();
    let var_bound = 6.0 * beta * lt / n as f64;
    let size = good.len();
    let keep = ((1.0 - beta / 6.0) * size as f64 - 1e-9).ceil() as usize;
    let droppable = size - keep.clamp(1, size);

    let per_subset: Vec<[f64; 4]> = subsets
        .par_iter()
        .map(|s| {
            let ps = p.subset_prob(s).expect("width checked");
            let mut mus = batch_empiricals(good, s);
            let med = median(&mut mus.clone()).expect("non-empty");
            let psi: f64 = mus.iter().map(|&mu| corruption_score_value(mu, med, params.score_threshold())).sum();

            mus.sort_by(f64::total_cmp);
            let mut devs: Vec<f64> = mus.iter().map(|mu| (mu - ps) * (mu - ps)).collect();
            devs.sort_by(f64::total_cmp);
            let v_true = variance_fn(ps, n).expect("p(S) in [0,1]");
            let mut worst_mean = 0.0f64;
            let mut worst_var = 0.0f64;
            for drop in 0..=droppable {
                let len = (size - drop) as f64;
                // drop from the low end, then from the high end
                let hi_mean = mus[drop..].iter().sum::<f64>() / len;
                let lo_mean = mus[..size - drop].iter().sum::<f64>() / len;
                worst_mean = worst_mean.max((hi_mean - ps).abs()).max((lo_mean - ps).abs());
                let hi_var = devs[drop..].iter().sum::<f64>() / len;
                let lo_var = devs[..size - drop].iter().sum::<f64>() / len;
                worst_var = worst_var.max((hi_var - v_true).abs()).max((lo_var - v_true).abs());
            }
            [cond1_bound - (med - ps).abs(), mean_bound - worst_mean, var_bound - worst_var, params.kappa_g() - psi]
        })
        .collect();

    let worst = |j: usize| per_subset.iter().map(|m| m[j]).fold(f64::INFINITY, f64::min);
    Ok(ConditionReport {
        cond1_margin: worst(0),
        cond2_mean_margin: worst(1),
        cond2_var_margin: worst(2),
        cond3_margin: worst(3),
        subsets_tested: subsets.len(),
    })
}
