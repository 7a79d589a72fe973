//! Seeded synthetic instances: target distributions, good batches with an
//! optional per-batch perturbation, and oblivious adversarial batches.

use rand::Rng;
use rand_distr::{Binomial, Distribution as _, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Batch, BatchCollection, Distribution, EstimatorParams, Provenance};
use crate::rng::{derive_seed, substream};

#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind {
    Uniform,
    /// `p(i) ∝ i^-s` for 1-based `i`.
    Zipf {
        s: f64,
    },
    /// `p(i) ∝ ratio^i`.
    Geometric {
        ratio: f64,
    },
    /// The first `ceil(heavy_fraction * k)` symbols share `heavy_mass`
    /// evenly; the rest share the remainder.
    TwoLevel {
        heavy_fraction: f64,
        heavy_mass: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub k: usize,
}

pub fn make_target(spec: &TargetSpec) -> Result<Distribution> {
    let k = spec.k;
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be at least 2, got {k}")));
    }
    let weights: Vec<f64> = match spec.kind {
        TargetKind::Uniform => vec![1.0; k],
        TargetKind::Zipf { s } => {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidParameter(format!("zipf exponent must be >= 0, got {s}")));
            }
            (1..=k).map(|i| (i as f64).powf(-s)).collect()
        }
        TargetKind::Geometric { ratio } => {
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(Error::InvalidParameter(format!("geometric ratio must lie in (0, 1], got {ratio}")));
            }
            (0..k).map(|i| ratio.powi(i as i32)).collect()
        }
        TargetKind::TwoLevel { heavy_fraction, heavy_mass } => {
            if !(heavy_fraction > 0.0 && heavy_fraction < 1.0 && heavy_mass > 0.0 && heavy_mass < 1.0) {
                return Err(Error::InvalidParameter("two_level parameters must lie in (0, 1)".into()));
            }
            let heavy = ((heavy_fraction * k as f64).ceil() as usize).clamp(1, k - 1);
            (0..k)
                .map(|i| if i < heavy { heavy_mass / heavy as f64 } else { (1.0 - heavy_mass) / (k - heavy) as f64 })
                .collect()
        }
    };
    Distribution::from_weights(&weights)
}

/// Largest L1 distance reachable by [`construct_q_at_distance`]:
/// everything except the heaviest symbol can be moved onto it.
pub fn max_distance(p: &Distribution) -> f64 {
    let (_, top) = heaviest(p);
    2.0 * (1.0 - top)
}

fn heaviest(p: &Distribution) -> (usize, f64) {
    // ties go to the lowest index
    p.probs()
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
}

/// A distribution at L1 distance `d` from `p`.
///
/// Mass `d/2` is moved onto the heaviest symbol, taken proportionally from
/// the `ceil(k/2)` lightest symbols. If those do not hold enough mass they
/// are emptied and the rest is taken proportionally from the remaining
/// symbols other than the heaviest.
pub fn construct_q_at_distance(p: &Distribution, d: f64) -> Result<Distribution> {
    let dmax = max_distance(p);
    if !(d >= 0.0 && d <= dmax + 1e-12) {
        return Err(Error::InvalidParameter(format!("distance {d} outside [0, {dmax}]")));
    }
    let k = p.k();
    let (top, _) = heaviest(p);
    // lightest first; among equals, higher indices count as lighter
    let mut order: Vec<usize> = (0..k).filter(|&i| i != top).collect();
    order.sort_by(|&a, &b| p.probs()[a].total_cmp(&p.probs()[b]).then(b.cmp(&a)));
    let light = k.div_ceil(2).min(order.len());
    let (first, rest) = order.split_at(light);

    let mut q = p.probs().to_vec();
    let mut remaining = (d / 2.0).min(1.0 - p.probs()[top]);
    for group in [first, rest] {
        if remaining <= 0.0 {
            break;
        }
        let mass: f64 = group.iter().map(|&i| q[i]).sum();
        if mass <= 0.0 {
            continue;
        }
        let take = remaining.min(mass);
        let scale = 1.0 - take / mass;
        for &i in group {
            q[i] = (q[i] * scale).max(0.0);
        }
        remaining -= take;
    }
    let moved: f64 = (0..k).filter(|&i| i != top).map(|i| p.probs()[i] - q[i]).sum();
    q[top] = p.probs()[top] + moved;
    Distribution::new(q)
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdversaryKind {
    FixedQ(Distribution),
    /// `q = construct_q_at_distance(p, d)`.
    Distance(f64),
    /// Each adversarial sample repeats `symbol` with probability `fraction`
    /// and is otherwise drawn from `p`: `q = (1 - f) p + f e_symbol`.
    RepeatSample {
        symbol: usize,
        fraction: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// Independent multinomial draws from `q` per batch.
    #[default]
    IidFromQ,
    /// Every adversarial batch holds `round(n q)`, corrected to sum to `n`.
    DeterministicCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarySpec {
    pub kind: AdversaryKind,
    pub mode: SamplingMode,
    /// Actual adversarial fraction; `None` uses the estimator's `beta`.
    pub fraction: Option<f64>,
}

impl AdversarySpec {
    pub fn at_distance(d: f64) -> Self {
        Self { kind: AdversaryKind::Distance(d), mode: SamplingMode::IidFromQ, fraction: None }
    }

    /// Resolves the adversarial distribution for target `p`.
    pub fn distribution(&self, p: &Distribution) -> Result<Distribution> {
        match &self.kind {
            AdversaryKind::FixedQ(q) => {
                if q.k() != p.k() {
                    return Err(Error::DimensionMismatch { expected: p.k(), got: q.k() });
                }
                Ok(q.clone())
            }
            AdversaryKind::Distance(d) => {
                if !(0.0..2.0).contains(d) {
                    return Err(Error::InvalidParameter(format!("adversary distance must lie in [0, 2), got {d}")));
                }
                construct_q_at_distance(p, *d)
            }
            AdversaryKind::RepeatSample { symbol, fraction } => {
                if *symbol >= p.k() || !(0.0..=1.0).contains(fraction) {
                    return Err(Error::InvalidParameter(
                        "repeat_sample needs symbol < k and fraction in [0, 1]".into(),
                    ));
                }
                let mut q: Vec<f64> = p.probs().iter().map(|v| v * (1.0 - fraction)).collect();
                q[*symbol] += fraction;
                Distribution::from_weights(&q)
            }
        }
    }
}

/// Number of good batches out of `m` when a `fraction` is adversarial.
pub fn good_count(m: usize, fraction: f64) -> usize {
    (((1.0 - fraction) * m as f64) - 1e-9).ceil().clamp(0.0, m as f64) as usize
}

/// Draws `params.m()` batches of `params.n()` samples: good batches first,
/// then adversarial ones. Every batch uses its own random stream keyed by
/// `(seed, batch index)`, so the output does not depend on thread count.
pub fn sample_instance(
    p: &Distribution,
    params: &EstimatorParams,
    eta: f64,
    adv: &AdversarySpec,
    seed: u64,
) -> Result<BatchCollection> {
    if !(eta.is_finite() && (0.0..2.0).contains(&eta)) {
        return Err(Error::InvalidParameter(format!("eta must lie in [0, 2), got {eta}")));
    }
    if p.k() != params.k() {
        return Err(Error::DimensionMismatch { expected: params.k(), got: p.k() });
    }
    let fraction = adv.fraction.unwrap_or(params.beta());
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("adversarial fraction must lie in [0, 1), got {fraction}")));
    }
    let (m, n) = (params.m(), params.n());
    let good = good_count(m, fraction);
    let q = adv.distribution(p)?;
    let fixed_adv = match adv.mode {
        SamplingMode::DeterministicCounts => Some(Batch::new(rounded_counts(&q, n))?),
        SamplingMode::IidFromQ => None,
    };
    let stream_seed = derive_seed(seed, &[0x005a_4d50_4c45]);

    let batches: Vec<Batch> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(stream_seed, i as u64);
            if i < good {
                if eta > 0.0 {
                    let pb = perturb(p, eta, &mut rng);
                    debug_assert!(crate::model::l1_distance(&pb, p).unwrap() <= eta + 1e-9);
                    Batch::new(multinomial(&pb, n, &mut rng))
                } else {
                    Batch::new(multinomial(p, n, &mut rng))
                }
            } else if let Some(b) = &fixed_adv {
                Ok(b.clone())
            } else {
                Batch::new(multinomial(&q, n, &mut rng))
            }
        })
        .collect::<Result<_>>()?;
    let provenance = (0..m).map(|i| if i < good { Provenance::Good } else { Provenance::Adversarial }).collect();
    BatchCollection::new(batches)?.with_provenance(provenance)
}

/// Multinomial counts via sequential conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(p: &Distribution, n: usize, rng: &mut R) -> Vec<u32> {
    let k = p.k();
    let mut counts = vec![0u32; k];
    let mut left = n as u64;
    let mut mass_left = 1.0f64;
    for (i, &pi) in p.probs().iter().enumerate() {
        if left == 0 {
            break;
        }
        if i == k - 1 {
            counts[i] = left as u32;
            break;
        }
        let prob = if mass_left > 0.0 { (pi / mass_left).clamp(0.0, 1.0) } else { 0.0 };
        let c = if prob >= 1.0 {
            left
        } else if prob <= 0.0 {
            0
        } else {
            Binomial::new(left, prob).expect("prob in (0,1)").sample(rng)
        };
        counts[i] = c as u32;
        left -= c;
        mass_left -= pi;
    }
    counts
}

/// `round(n q)` with the rounding residue given to the largest fractional
/// parts (or taken from the smallest), so the counts sum to `n`.
pub fn rounded_counts(q: &Distribution, n: usize) -> Vec<u32> {
    let scaled: Vec<f64> = q.probs().iter().map(|v| v * n as f64).collect();
    let mut counts: Vec<i64> = scaled.iter().map(|v| v.round() as i64).collect();
    let mut diff = n as i64 - counts.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    // most under-rounded first
    order.sort_by(|&a, &b| (scaled[b] - counts[b] as f64).total_cmp(&(scaled[a] - counts[a] as f64)).then(a.cmp(&b)));
    let mut idx = 0;
    while diff > 0 {
        counts[order[idx % order.len()]] += 1;
        diff -= 1;
        idx += 1;
    }
    let mut idx = order.len();
    while diff < 0 {
        idx = if idx == 0 { order.len() - 1 } else { idx - 1 };
        if counts[order[idx]] > 0 {
            counts[order[idx]] -= 1;
            diff += 1;
        }
    }
    counts.into_iter().map(|c| c as u32).collect()
}

/// Symmetric random perturbation with `||p_b - p||_1 <= eta` that stays on
/// the simplex: a zero-sum Gaussian direction scaled to L1 norm `eta`,
/// shrunk if needed so no entry goes negative.
fn perturb<R: Rng + ?Sized>(p: &Distribution, eta: f64, rng: &mut R) -> Distribution {
    let k = p.k();
    let mut z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    let mean = z.iter().sum::<f64>() / k as f64;
    z.iter_mut().for_each(|v| *v -= mean);
    let l1: f64 = z.iter().map(|v| v.abs()).sum();
    if l1 == 0.0 {
        return p.clone();
    }
    let mut t = eta / l1;
    for (pi, zi) in p.probs().iter().zip(&z) {
        if *zi < 0.0 {
            t = t.min(pi / -zi);
        }
    }
    let pb: Vec<f64> = p.probs().iter().zip(&z).map(|(pi, zi)| (pi + t * zi).max(0.0)).collect();
    Distribution::from_weights(&pb).unwrap_or_else(|_| p.clone())
}
