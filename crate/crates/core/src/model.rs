//! Core domain types: distributions, batches, collections, subset masks and
//! the estimator parameters derived from `(beta, n, m)`.

use std::cmp::Ordering;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// Absolute tolerance for simplex membership.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A probability vector over `k >= 2` symbols.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(format!("need at least 2 symbols, got {}", probs.len())));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("entry {i} is {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidDistribution(format!("entries sum to {total}")));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights onto the simplex.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidDistribution("weights must be non-negative with positive finite sum".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Result<Self> {
        Self::from_weights(&vec![1.0; k])
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `p(S)`, the mass of a subset.
    pub fn subset_prob(&self, s: &SubsetMask) -> Result<f64> {
        s.check_width(self.k())?;
        Ok(s.iter().map(|i| self.probs[i]).sum())
    }

    /// `sum_i |p(i) - q(i)|`.
    pub fn l1_distance(&self, other: &Distribution) -> Result<f64> {
        l1_distance(self, other)
    }
}

pub fn l1_distance(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.k() != q.k() {
        return Err(Error::DimensionMismatch { expected: p.k(), got: q.k() });
    }
    Ok(p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum())
}

pub fn subset_prob(p: &Distribution, s: &SubsetMask) -> Result<f64> {
    p.subset_prob(s)
}

/// A subset of `[k]` stored as a bitset. Bit `i` is symbol `i` (0-based).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SubsetMask {
    k: usize,
    words: Vec<u64>,
}

impl SubsetMask {
    pub fn empty(k: usize) -> Self {
        Self { k, words: vec![0; k.div_ceil(64)] }
    }

    pub fn full(k: usize) -> Self {
        let mut s = Self::empty(k);
        for i in 0..k {
            s.insert(i);
        }
        s
    }

    pub fn singleton(k: usize, i: usize) -> Self {
        let mut s = Self::empty(k);
        s.insert(i);
        s
    }

    pub fn from_indices(k: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(k);
        for i in indices {
            s.insert(i);
        }
        s
    }

    /// Mask from the low `k` bits of an integer; requires `k <= 64`.
    pub fn from_bits(k: usize, bits: u64) -> Self {
        assert!(k <= 64, "from_bits supports k <= 64");
        let bits = if k == 64 { bits } else { bits & ((1u64 << k) - 1) };
        Self { k, words: vec![bits; usize::from(k > 0)] }
    }

    /// Indicator of `{i : flags[i]}`.
    pub fn from_flags(flags: &[bool]) -> Self {
        Self::from_indices(flags.len(), flags.iter().enumerate().filter(|(_, f)| **f).map(|(i, _)| i))
    }

    pub fn width(&self) -> usize {
        self.k
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.k, "symbol {i} out of range for k = {}", self.k);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        assert!(i < self.k, "symbol {i} out of range for k = {}", self.k);
        self.words[i / 64] &= !(1 << (i % 64));
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.k && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn complement(&self) -> Self {
        let mut c = Self::empty(self.k);
        for i in 0..self.k {
            if !self.contains(i) {
                c.insert(i);
            }
        }
        c
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.k).filter(move |&i| self.contains(i))
    }

    /// 0/1 indicator vector.
    pub fn indicator(&self) -> Vec<f64> {
        (0..self.k).map(|i| if self.contains(i) { 1.0 } else { 0.0 }).collect()
    }

    pub(crate) fn check_width(&self, k: usize) -> Result<()> {
        if self.k != k {
            return Err(Error::DimensionMismatch { expected: k, got: self.k });
        }
        Ok(())
    }
}

/// Orders masks by their value as unsigned integers.
impl Ord for SubsetMask {
    fn cmp(&self, other: &Self) -> Ordering {
        self.k.cmp(&other.k).then_with(|| self.words.iter().rev().cmp(other.words.iter().rev()))
    }
}

impl PartialOrd for SubsetMask {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for SubsetMask {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

/// `n` samples over `[k]`, kept as per-symbol counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    counts: Vec<u32>,
    n: u32,
}

impl Batch {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidBatch(format!("need k >= 2, got {}", counts.len())));
        }
        let n: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        if n == 0 {
            return Err(Error::InvalidBatch("batch has no samples".into()));
        }
        let n = u32::try_from(n).map_err(|_| Error::InvalidBatch(format!("n = {n} too large")))?;
        Ok(Self { counts, n })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    /// Empirical distribution of the batch as a plain vector.
    pub fn empirical(&self) -> Vec<f64> {
        let n = f64::from(self.n);
        self.counts.iter().map(|&c| f64::from(c) / n).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Provenance {
    Good,
    Adversarial,
}

/// Batches sharing `n` and `k`, with a deletion flag per batch.
#[derive(Debug, Clone)]
pub struct BatchCollection {
    batches: Vec<Batch>,
    alive: Vec<bool>,
    provenance: Option<Vec<Provenance>>,
    n: usize,
    k: usize,
}

impl BatchCollection {
    pub fn new(batches: Vec<Batch>) -> Result<Self> {
        let first = batches.first().ok_or(Error::EmptyCollection)?;
        let (n, k) = (first.n(), first.k());
        for (i, b) in batches.iter().enumerate() {
            if b.k() != k {
                return Err(Error::InvalidBatch(format!("batch {i} has k = {}, expected {k}", b.k())));
            }
            if b.n() != n {
                return Err(Error::InvalidBatch(format!("batch {i} has n = {}, expected {n}", b.n())));
            }
        }
        let alive = vec![true; batches.len()];
        Ok(Self { batches, alive, provenance: None, n, k })
    }

    pub fn with_provenance(mut self, provenance: Vec<Provenance>) -> Result<Self> {
        if provenance.len() != self.batches.len() {
            return Err(Error::DimensionMismatch { expected: self.batches.len(), got: provenance.len() });
        }
        self.provenance = Some(provenance);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Total number of batches, alive or not.
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn batch(&self, i: usize) -> &Batch {
        &self.batches[i]
    }

    pub fn provenance(&self) -> Option<&[Provenance]> {
        self.provenance.as_deref()
    }

    pub fn is_alive(&self, i: usize) -> bool {
        self.alive[i]
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    pub fn alive_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.alive.iter().enumerate().filter(|(_, a)| **a).map(|(i, _)| i)
    }

    pub fn alive_batches(&self) -> impl Iterator<Item = &Batch> + '_ {
        self.batches.iter().zip(&self.alive).filter(|(_, a)| **a).map(|(b, _)| b)
    }

    pub fn delete(&mut self, i: usize) {
        self.alive[i] = false;
    }

    pub fn restore_all(&mut self) {
        self.alive.iter_mut().for_each(|a| *a = true);
    }

    /// Sub-collection of the batches at `indices` (all alive), provenance kept.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let batches = indices.iter().map(|&i| self.batches[i].clone()).collect();
        let mut out = Self::new(batches)?;
        if let Some(p) = &self.provenance {
            out.provenance = Some(indices.iter().map(|&i| p[i]).collect());
        }
        Ok(out)
    }

    /// Sub-collection of batches with the given provenance.
    pub fn filter_provenance(&self, which: Provenance) -> Result<Self> {
        let prov = self.provenance.as_ref().ok_or(Error::MissingProvenance)?;
        let idx: Vec<usize> = (0..self.len()).filter(|&i| prov[i] == which).collect();
        self.select(&idx)
    }
}

/// Multipliers applied to the threshold formulas. The defaults are the
/// constants under which the worst-case guarantee is proved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tuning {
    /// Band half-width in units of `sqrt(ln(6e/beta)/n)`.
    pub score_band: f64,
    /// Stopping threshold in units of `kappa_g`.
    pub stop_factor: f64,
    /// Deletion target in units of `kappa_g`.
    pub deletion_factor: f64,
}

impl Tuning {
    pub const fn theory() -> Self {
        Self { score_band: 3.0, stop_factor: 75.0, deletion_factor: 20.0 }
    }

    /// Constants chosen by small-scale simulation (see `examples/calibrate.rs`
    /// in the bench crate). Much less conservative than [`Tuning::theory`].
    pub const fn calibrated() -> Self {
        Self { score_band: 0.7, stop_factor: 0.1, deletion_factor: 0.05 }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "theory" => Some(Self::theory()),
            "calibrated" => Some(Self::calibrated()),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("score_band", self.score_band),
            ("stop_factor", self.stop_factor),
            ("deletion_factor", self.deletion_factor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for Tuning {
    fn default() -> Self {
        Self::theory()
    }
}

/// `(beta, n, m, k)` plus every threshold derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorParams {
    beta: f64,
    n: usize,
    m: usize,
    k: usize,
    tuning: Tuning,
    kappa_g: f64,
    score_threshold: f64,
    stop_threshold: f64,
    deletion_threshold: f64,
}

impl EstimatorParams {
    pub fn new(beta: f64, n: usize, m: usize, k: usize) -> Result<Self> {
        Self::with_tuning(beta, n, m, k, Tuning::default())
    }

    pub fn with_tuning(beta: f64, n: usize, m: usize, k: usize, tuning: Tuning) -> Result<Self> {
        if !(beta > 0.0 && beta < 0.5) {
            return Err(Error::InvalidParameter(format!("beta must lie in (0, 0.5), got {beta}")));
        }
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameter("n and m must be positive".into()));
        }
        if k < 2 {
            return Err(Error::InvalidParameter(format!("k must be at least 2, got {k}")));
        }
        tuning.validate()?;
        let log_term = log_term(beta);
        let kappa_g = beta * m as f64 * log_term / n as f64;
        Ok(Self {
            beta,
            n,
            m,
            k,
            tuning,
            kappa_g,
            score_threshold: tuning.score_band * (log_term / n as f64).sqrt(),
            stop_threshold: tuning.stop_factor * kappa_g,
            deletion_threshold: tuning.deletion_factor * kappa_g,
        })
    }

    /// Parameters matching a collection's `n`, `m` and `k`.
    pub fn for_collection(beta: f64, coll: &BatchCollection, tuning: Tuning) -> Result<Self> {
        Self::with_tuning(beta, coll.n(), coll.len(), coll.k(), tuning)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn tuning(&self) -> Tuning {
        self.tuning
    }
    /// Corruption budget of the good batches, `beta * m * ln(6e/beta) / n`.
    pub fn kappa_g(&self) -> f64 {
        self.kappa_g
    }
    /// Half-width of the zero-score band around the median.
    pub fn score_threshold(&self) -> f64 {
        self.score_threshold
    }
    /// The estimator stops once `|B'| * |delta|` is at most this.
    pub fn stop_threshold(&self) -> f64 {
        self.stop_threshold
    }
    /// Batch deletion runs until the subset corruption drops below this.
    pub fn deletion_threshold(&self) -> f64 {
        self.deletion_threshold
    }

    /// `100 * beta * sqrt(ln(6e/beta) / n)`, the worst-case L1 guarantee.
    pub fn error_bound(&self) -> f64 {
        100.0 * self.beta * (log_term(self.beta) / self.n as f64).sqrt()
    }
}

/// `ln(6e / beta)`.
pub fn log_term(beta: f64) -> f64 {
    (6.0 * std::f64::consts::E / beta).ln()
}
