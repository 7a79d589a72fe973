//! Detection of the subset on which the batch measures' empirical variance
//! departs most from the variance implied by their mean.
//!
//! For the 0/1 indicator `x` of a subset `S`,
//! `x' C_ev x` is the empirical variance of `mu_b(S)` and `x' C_em x` is
//! `V(p_bar(S))`, so `x' D x` with `D = C_ev - C_em` is exactly the gap we
//! want to maximize in absolute value. Because every row of `D` sums to zero,
//! substituting `x = (y + 1) / 2` gives `x' D x = y' D y / 4` for
//! `y in {-1, 1}^k`, and the problem becomes `max |y' D y|`: a quadratic form
//! over the hypercube. That is solved here by a rank-limited vector
//! relaxation, hyperplane rounding and greedy flip polishing, with an
//! exhaustive search kept as an exact oracle for small `k`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BatchCollection, SubsetMask};
use crate::rng::substream;
use crate::stats::collection_empirical_vector;

/// Largest alphabet accepted by [`brute_force_detect`].
pub const BRUTE_FORCE_MAX_K: usize = 25;

/// Dense symmetric `k x k` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    k: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(k: usize) -> Self {
        Self { k, data: vec![0.0; k * k] }
    }

    /// Builds from row-major data, averaging with the transpose.
    pub fn from_rows(k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * k {
            return Err(Error::DimensionMismatch { expected: k * k, got: data.len() });
        }
        let mut m = Self { k, data };
        m.symmetrize();
        Ok(m)
    }

    fn symmetrize(&mut self) {
        let k = self.k;
        for i in 0..k {
            for j in i + 1..k {
                let avg = 0.5 * (self.data[i * k + j] + self.data[j * k + i]);
                self.data[i * k + j] = avg;
                self.data[j * k + i] = avg;
            }
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `x' A x`.
    pub fn quad(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.k);
        (0..self.k).map(|i| x[i] * self.row(i).iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).sum()
    }

    /// `1_S' A 1_S`, summing only the entries inside the subset.
    pub fn subset_quad(&self, s: &SubsetMask) -> f64 {
        let idx: Vec<usize> = s.iter().collect();
        idx.iter().map(|&i| idx.iter().map(|&j| self.get(i, j)).sum::<f64>()).sum()
    }

    fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Empirical covariance, expected covariance, and their difference.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTriple {
    pub c_ev: SymMatrix,
    pub c_em: SymMatrix,
    pub d: SymMatrix,
}

impl MatrixTriple {
    pub fn k(&self) -> usize {
        self.d.k()
    }

    /// Wraps an arbitrary difference matrix; the covariance parts are zero.
    /// Used to run the detectors on synthetic instances.
    pub fn from_difference(d: SymMatrix) -> Self {
        let k = d.k();
        Self { c_ev: SymMatrix::zeros(k), c_em: SymMatrix::zeros(k), d }
    }
}

/// Builds `C_ev`, `C_em` and `D` over the alive batches.
pub fn build_matrices(coll: &BatchCollection) -> Result<MatrixTriple> {
    let rows = coll.alive_count();
    if rows < 2 {
        return Err(Error::TooFewBatches { needed: 2, have: rows });
    }
    let k = coll.k();
    let n = coll.n() as f64;
    let mean = collection_empirical_vector(coll)?;

    let mut centered = Vec::with_capacity(rows * k);
    for b in coll.alive_batches() {
        centered.extend(b.counts().iter().zip(&mean).map(|(&c, m)| f64::from(c) / n - m));
    }
    let mut c_ev = vec![0.0; k * k];
    // C_ev = X' X / rows with X the centered (rows x k) matrix
    unsafe {
        matrixmultiply::dgemm(
            k,
            rows,
            k,
            1.0 / rows as f64,
            centered.as_ptr(),
            1,
            k as isize,
            centered.as_ptr(),
            k as isize,
            1,
            0.0,
            c_ev.as_mut_ptr(),
            k as isize,
            1,
        );
    }
    let c_ev = SymMatrix::from_rows(k, c_ev)?;

    let mut c_em = vec![0.0; k * k];
    for j in 0..k {
        for l in 0..k {
            c_em[j * k + l] = if j == l { mean[j] * (1.0 - mean[j]) / n } else { -mean[j] * mean[l] / n };
        }
    }
    let c_em = SymMatrix::from_rows(k, c_em)?;
    let d = SymMatrix::from_rows(k, c_ev.data.iter().zip(&c_em.data).map(|(a, b)| a - b).collect())?;
    Ok(MatrixTriple { c_ev, c_em, d })
}

/// `x' D x` for the indicator `x` of `s`, i.e. `V_bar(S) - V(p_bar(S))`.
pub fn quad_form(t: &MatrixTriple, s: &SubsetMask) -> f64 {
    assert_eq!(s.width(), t.k(), "mask width must equal k");
    t.d.subset_quad(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMethod {
    BruteForce,
    Relaxation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionResult {
    pub subset: SubsetMask,
    /// Signed `V_bar(S) - V(p_bar(S))` at `subset`.
    pub delta: f64,
    pub abs_delta: f64,
    pub method: DetectionMethod,
}

/// Running arg-max of `|value|` with ties going to the smaller mask.
struct Best {
    tol: f64,
    item: Option<(f64, SubsetMask)>,
}

impl Best {
    fn new(scale: f64) -> Self {
        Self { tol: 1e-12 * scale.max(f64::MIN_POSITIVE), item: None }
    }

    fn offer(&mut self, value: f64, mask: SubsetMask) {
        let replace = match &self.item {
            None => true,
            Some((best, best_mask)) => {
                let (a, b) = (value.abs(), best.abs());
                a > b + self.tol || ((a - b).abs() <= self.tol && mask < *best_mask)
            }
        };
        if replace {
            self.item = Some((value, mask));
        }
    }
}

/// Exact maximizer of `|x' D x|` over all non-empty subsets, `k <= 25`.
/// Ties go to the smallest mask value.
pub fn brute_force_detect(t: &MatrixTriple) -> Result<DetectionResult> {
    let k = t.k();
    if k > BRUTE_FORCE_MAX_K {
        return Err(Error::AlphabetTooLarge { k, cap: BRUTE_FORCE_MAX_K });
    }
    let d = &t.d;
    if !d.is_finite() {
        return Err(Error::NonFinite);
    }
    let tol = 1e-12 * (d.max_abs() * (k * k) as f64).max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, u64)> = None;
    // Gray-code walk: one symbol toggles per step, so `D x` and `x' D x`
    // update in O(k).
    let mut dx = vec![0.0; k];
    let mut value = 0.0;
    let mut gray = 0u64;
    for step in 1u64..1 << k {
        let j = step.trailing_zeros() as usize;
        let adding = gray >> j & 1 == 0;
        gray ^= 1 << j;
        let sign = if adding { 1.0 } else { -1.0 };
        value += sign * 2.0 * dx[j] + d.get(j, j);
        for (acc, dij) in dx.iter_mut().zip(d.row(j)) {
            *acc += sign * dij;
        }
        let a = value.abs();
        best = match best {
            Some((b, bits)) if a < b - tol || (a <= b + tol && bits < gray) => Some((b, bits)),
            _ => Some((a, gray)),
        };
    }
    let (_, bits) = best.expect("k >= 1 gives at least one subset");
    let subset = SubsetMask::from_bits(k, bits);
    Ok(finish(t, subset, DetectionMethod::BruteForce))
}

fn finish(t: &MatrixTriple, subset: SubsetMask, method: DetectionMethod) -> DetectionResult {
    let delta = quad_form(t, &subset);
    DetectionResult { subset, delta, abs_delta: delta.abs(), method }
}

/// Knobs for [`relaxation_detect`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelaxationConfig {
    /// Columns of the factor; `None` means `min(k, 16)`.
    pub rank: Option<usize>,
    /// Random initializations per sign of the objective.
    pub restarts: usize,
    /// Hyperplane roundings per relaxed solution.
    pub rounding_trials: usize,
    pub max_sweeps: usize,
    /// Relative objective improvement below which the ascent stops.
    pub tol: f64,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        Self { rank: None, restarts: 4, rounding_trials: 64, max_sweeps: 200, tol: 1e-7 }
    }
}

/// Approximate maximizer of `|x' D x|`.
///
/// For each sign `s` of the objective the relaxation
/// `max <s D, V V'>` over `k x r` factors with unit rows is solved by
/// block-coordinate ascent (each row is set to its normalized neighbour
/// sum, which never decreases the objective). Each relaxed solution is
/// rounded by random hyperplanes, every rounding is polished by greedy
/// single-coordinate flips, and the best subset, or its complement, is
/// returned. All randomness comes from one draw of `rng`; restarts run in
/// parallel on derived substreams.
pub fn relaxation_detect<R: Rng + ?Sized>(
    t: &MatrixTriple,
    rng: &mut R,
    cfg: &RelaxationConfig,
) -> Result<DetectionResult> {
    if cfg.rounding_trials == 0 || cfg.restarts == 0 {
        return Err(Error::InvalidParameter("rounding_trials and restarts must be at least 1".into()));
    }
    let d = &t.d;
    if !d.is_finite() {
        return Err(Error::NonFinite);
    }
    let k = d.k();
    let rank = cfg.rank.unwrap_or(16).clamp(1, k.max(1));
    let seed: u64 = rng.random();

    let jobs: Vec<(f64, usize)> = [1.0, -1.0].iter().flat_map(|&s| (0..cfg.restarts).map(move |r| (s, r))).collect();
    let roundings: Vec<Vec<Vec<f64>>> = jobs
        .par_iter()
        .enumerate()
        .map(|(job, &(sign, _))| {
            let mut rng = substream(seed, job as u64);
            let factor = ascend(d, sign, rank, cfg, &mut rng);
            (0..cfg.rounding_trials)
                .map(|_| {
                    let mut y = round_hyperplane(&factor, k, rank, &mut rng);
                    polish(d, &mut y);
                    y
                })
                .collect()
        })
        .collect();

    let mut best = Best::new(d.max_abs() * (k * k) as f64);
    for y in roundings.into_iter().flatten() {
        let s = SubsetMask::from_flags(&y.iter().map(|v| *v > 0.0).collect::<Vec<_>>());
        for cand in [s.complement(), s] {
            if !cand.is_empty() {
                best.offer(quad_form(t, &cand), cand);
            }
        }
    }
    let subset = match best.item {
        Some((_, s)) => s,
        None => SubsetMask::full(k),
    };
    Ok(finish(t, subset, DetectionMethod::Relaxation))
}

/// Block-coordinate ascent on `<sign * D, V V'>` with unit-norm rows.
/// Returns `V` row-major (`k x rank`).
fn ascend<R: Rng>(d: &SymMatrix, sign: f64, rank: usize, cfg: &RelaxationConfig, rng: &mut R) -> Vec<f64> {
    let k = d.k();
    let mut v: Vec<f64> = (0..k * rank).map(|_| rng.sample(StandardNormal)).collect();
    for i in 0..k {
        normalize(&mut v[i * rank..(i + 1) * rank]);
    }
    let mut g = vec![0.0; rank];
    let mut obj = objective(d, sign, &v, rank);
    for _ in 0..cfg.max_sweeps {
        let mut gain = 0.0;
        for i in 0..k {
            g.iter_mut().for_each(|x| *x = 0.0);
            for (dij, vj) in d.row(i).iter().zip(v.chunks_exact(rank)) {
                for (gk, vk) in g.iter_mut().zip(vj) {
                    *gk += dij * vk;
                }
            }
            let dii = d.get(i, i);
            let vi = &mut v[i * rank..(i + 1) * rank];
            for (gk, vk) in g.iter_mut().zip(vi.iter()) {
                *gk = sign * (*gk - dii * vk);
            }
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                // moving row i to g/|g| raises the objective by 2(|g| - v_i.g)
                let along: f64 = vi.iter().zip(&g).map(|(a, b)| a * b).sum();
                gain += 2.0 * (norm - along);
                for (vk, gk) in vi.iter_mut().zip(&g) {
                    *vk = gk / norm;
                }
            }
        }
        obj += gain;
        if gain <= cfg.tol * obj.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    v
}

fn objective(d: &SymMatrix, sign: f64, v: &[f64], rank: usize) -> f64 {
    let k = d.k();
    let mut total = 0.0;
    for i in 0..k {
        let vi = &v[i * rank..(i + 1) * rank];
        for (j, dij) in d.row(i).iter().enumerate() {
            let vj = &v[j * rank..(j + 1) * rank];
            total += dij * vi.iter().zip(vj).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    sign * total
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    } else if let Some(first) = x.first_mut() {
        *first = 1.0;
    }
}

fn round_hyperplane<R: Rng>(v: &[f64], k: usize, rank: usize, rng: &mut R) -> Vec<f64> {
    let g: Vec<f64> = (0..rank).map(|_| rng.sample(StandardNormal)).collect();
    (0..k)
        .map(|i| {
            let dot: f64 = v[i * rank..(i + 1) * rank].iter().zip(&g).map(|(a, b)| a * b).sum();
            if dot >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// Greedy single-coordinate flips on `|y' D y|` until no flip improves it.
fn polish(d: &SymMatrix, y: &mut [f64]) {
    let k = d.k();
    let mut dy: Vec<f64> = (0..k).map(|i| d.row(i).iter().zip(y.iter()).map(|(a, b)| a * b).sum()).collect();
    let mut q: f64 = y.iter().zip(&dy).map(|(a, b)| a * b).sum();
    let tol = 1e-12 * d.max_abs() * (k * k) as f64;
    for _ in 0..8 * k {
        // flipping y_j turns q into q - 4 y_j (D y)_j + 4 D_jj
        let (j, cand) = (0..k)
            .map(|j| (j, q - 4.0 * y[j] * dy[j] + 4.0 * d.get(j, j)))
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .expect("k >= 1");
        if cand.abs() <= q.abs() + tol {
            break;
        }
        let old = y[j];
        y[j] = -old;
        for (acc, dij) in dy.iter_mut().zip(d.row(j)) {
            *acc -= 2.0 * old * dij;
        }
        q = cand;
    }
}
