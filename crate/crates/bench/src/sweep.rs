//! Runs a sweep: for every grid value, trial and adversarial distance, one
//! instance and the three estimators on it.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use batchrobust::estimate::{naive_estimate, oracle_estimate, robust_estimate, EstimatorConfig};
use batchrobust::model::l1_distance;
use batchrobust::rng::derive_seed;
use batchrobust::simulate::{make_target, sample_instance, AdversarySpec};
use batchrobust::EstimatorParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{SweepConfig, SweepKind};

pub const CSV_HEADER: [&str; 10] = [
    "sweep",
    "param",
    "trial",
    "adv_distance",
    "estimator",
    "l1_error",
    "runtime_ms",
    "batches_deleted",
    "good_deleted",
    "iterations",
];

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Estimator(#[from] batchrobust::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad csv: {0}")]
    Format(String),
    #[error("no rows")]
    Empty,
}

/// Listed in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Estimator {
    Naive,
    Oracle,
    Robust,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Naive, Estimator::Oracle, Estimator::Robust];

    pub fn name(self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::Oracle => "oracle",
            Self::Robust => "robust",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| format!("unknown estimator {s:?}"))
    }
}

/// One CSV line. The deletion columns are only filled for the robust
/// estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub sweep: String,
    pub param: f64,
    pub trial: usize,
    pub adv_distance: f64,
    pub estimator: Estimator,
    pub l1_error: f64,
    pub runtime_ms: Option<f64>,
    pub batches_deleted: Option<usize>,
    pub good_deleted: Option<usize>,
    pub iterations: Option<usize>,
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<Row>, SweepError> {
    let points = cfg.points();
    let jobs: Vec<(usize, usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.trials).flat_map(move |t| (0..cfg.adv_distances.len()).map(move |d| (p, t, d))))
        .collect();
    let est_cfg = EstimatorConfig { median_scope: cfg.median_scope, ..Default::default() };

    let chunks: Vec<Vec<Row>> = jobs
        .par_iter()
        .map(|&(pi, trial, di)| {
            let point = &points[pi];
            let params = EstimatorParams::with_tuning(point.beta, point.n, point.m, point.k, cfg.tuning)?;
            let p = make_target(&point.target)?;
            let adv = AdversarySpec { fraction: cfg.adv_fraction, ..AdversarySpec::at_distance(cfg.adv_distances[di]) };
            // The instance seed ignores the distance, so the good batches are
            // shared across the distance grid.
            let instance_seed = derive_seed(cfg.seed, &[pi as u64, trial as u64]);
            let coll = sample_instance(&p, &params, cfg.eta, &adv, instance_seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[pi as u64, trial as u64, di as u64, 1]));

            let row = |estimator, l1_error, runtime_ms| Row {
                sweep: cfg.sweep.name().to_string(),
                param: point.param,
                trial,
                adv_distance: cfg.adv_distances[di],
                estimator,
                l1_error,
                runtime_ms: if cfg.record_timing { Some(runtime_ms) } else { None },
                batches_deleted: None,
                good_deleted: None,
                iterations: None,
            };
            let ((robust, diag), robust_ms) = timed(|| robust_estimate(&coll, &params, &est_cfg, &mut rng))?;
            let (oracle, oracle_ms) = timed(|| oracle_estimate(&coll))?;
            let (naive, naive_ms) = timed(|| naive_estimate(&coll))?;
            Ok(vec![
                row(Estimator::Naive, l1_distance(&naive, &p)?, naive_ms),
                row(Estimator::Oracle, l1_distance(&oracle, &p)?, oracle_ms),
                Row {
                    batches_deleted: Some(diag.total_deleted),
                    good_deleted: diag.good_deleted,
                    iterations: Some(diag.iterations),
                    ..row(Estimator::Robust, l1_distance(&robust, &p)?, robust_ms)
                },
            ])
        })
        .collect::<Result<_, SweepError>>()?;

    let mut rows: Vec<Row> = chunks.into_iter().flatten().collect();
    sort_rows(&mut rows);
    Ok(rows)
}

fn timed<T>(f: impl FnOnce() -> batchrobust::Result<T>) -> batchrobust::Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64() * 1e3))
}

/// Orders by `(param, trial, adv_distance, estimator)`.
pub fn sort_rows(rows: &mut [Row]) {
    rows.sort_by(|a, b| {
        a.param
            .total_cmp(&b.param)
            .then(a.trial.cmp(&b.trial))
            .then(a.adv_distance.total_cmp(&b.adv_distance))
            .then(a.estimator.cmp(&b.estimator))
    });
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.sweep.clone(),
            r.param.to_string(),
            r.trial.to_string(),
            r.adv_distance.to_string(),
            r.estimator.to_string(),
            r.l1_error.to_string(),
            opt(r.runtime_ms),
            opt(r.batches_deleted),
            opt(r.good_deleted),
            opt(r.iterations),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<Row>, SweepError> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(SweepError::Format(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| {
            field(i).parse::<f64>().map_err(|_| SweepError::Format(format!("{}: {:?}", CSV_HEADER[i], field(i))))
        };
        let count = |i: usize| match field(i) {
            "" => Ok(None),
            s => s.parse().map(Some).map_err(|_| SweepError::Format(format!("{}: {s:?}", CSV_HEADER[i]))),
        };
        rows.push(Row {
            sweep: field(0).to_string(),
            param: num(1)?,
            trial: count(2)?.ok_or_else(|| SweepError::Format("trial is empty".into()))?,
            adv_distance: num(3)?,
            estimator: field(4).parse().map_err(SweepError::Format)?,
            l1_error: num(5)?,
            runtime_ms: if field(6).is_empty() { None } else { Some(num(6)?) },
            batches_deleted: count(7)?,
            good_deleted: count(8)?,
            iterations: count(9)?,
        });
    }
    Ok(rows)
}

/// Trial-mean errors at one grid value, read at the distance where the
/// robust estimator does worst.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryPoint {
    pub param: f64,
    pub worst_distance: f64,
    pub robust: f64,
    pub oracle: f64,
    pub naive: f64,
    /// Mean robust deletions at `worst_distance`.
    pub batches_deleted: f64,
    pub good_deleted: f64,
}

impl SummaryPoint {
    pub fn error(&self, e: Estimator) -> f64 {
        match e {
            Estimator::Naive => self.naive,
            Estimator::Oracle => self.oracle,
            Estimator::Robust => self.robust,
        }
    }
}

/// Worst-of-grid summary, one point per parameter value in increasing
/// order. Ties between distances go to the smaller distance.
pub fn summarize(rows: &[Row]) -> Result<Vec<SummaryPoint>, SweepError> {
    if rows.is_empty() {
        return Err(SweepError::Empty);
    }
    #[derive(Default)]
    struct Acc {
        sum: [f64; 3],
        count: [usize; 3],
        deleted: f64,
        good: f64,
    }
    // keyed by the bit patterns of (param, distance), which sort like the
    // values for the non-negative numbers used here
    let mut groups: BTreeMap<(u64, u64), Acc> = BTreeMap::new();
    for r in rows {
        let acc = groups.entry((key(r.param), key(r.adv_distance))).or_default();
        let e = r.estimator as usize;
        acc.sum[e] += r.l1_error;
        acc.count[e] += 1;
        if r.estimator == Estimator::Robust {
            acc.deleted += r.batches_deleted.unwrap_or(0) as f64;
            acc.good += r.good_deleted.unwrap_or(0) as f64;
        }
    }
    let mean = |a: &Acc, e: Estimator| {
        let i = e as usize;
        if a.count[i] == 0 {
            f64::NAN
        } else {
            a.sum[i] / a.count[i] as f64
        }
    };
    let mut out: Vec<SummaryPoint> = Vec::new();
    for ((p, d), acc) in &groups {
        let robust = mean(acc, Estimator::Robust);
        let runs = acc.count[Estimator::Robust as usize].max(1) as f64;
        let cand = SummaryPoint {
            param: f64::from_bits(*p),
            worst_distance: f64::from_bits(*d),
            robust,
            oracle: mean(acc, Estimator::Oracle),
            naive: mean(acc, Estimator::Naive),
            batches_deleted: acc.deleted / runs,
            good_deleted: acc.good / runs,
        };
        match out.last_mut() {
            Some(last) if key(last.param) == *p => {
                if cand.robust > last.robust {
                    *last = cand;
                }
            }
            _ => out.push(cand),
        }
    }
    Ok(out)
}

fn key(x: f64) -> u64 {
    // -0.0 and 0.0 share a key
    (x + 0.0).to_bits()
}

/// Plain-text table of a summary.
pub fn format_summary(kind: SweepKind, points: &[SummaryPoint]) -> String {
    let mut s = format!(
        "{:>12} {:>8} {:>10} {:>10} {:>10} {:>9} {:>9}\n",
        kind.name(),
        "worst_d",
        "robust",
        "oracle",
        "naive",
        "deleted",
        "good_del"
    );
    for p in points {
        s.push_str(&format!(
            "{:>12} {:>8} {:>10.5} {:>10.5} {:>10.5} {:>9.1} {:>9.1}\n",
            p.param, p.worst_distance, p.robust, p.oracle, p.naive, p.batches_deleted, p.good_deleted
        ));
    }
    s
}
