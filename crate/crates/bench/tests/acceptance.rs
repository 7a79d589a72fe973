//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints exactly one PASS/FAIL line, in order.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use batchrobust::detect::{brute_force_detect, build_matrices, quad_form, relaxation_detect, RelaxationConfig};
use batchrobust::prune::delete_by_scores;
use batchrobust::rng::derive_seed;
use batchrobust::simulate::{make_target, sample_instance, AdversarySpec, TargetKind, TargetSpec};
use batchrobust::stats::{check_conditions, collection_empirical, empirical_variance, variance_fn, SubsetSampling};
use batchrobust::{Distribution, EstimatorParams, SubsetMask, Tuning};
use batchrobust_bench::sweep::{run_sweep, summarize, Row};
use batchrobust_bench::{Estimator, SweepConfig, SweepKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn a1_detection_ratio() -> Outcome {
    let start = Instant::now();
    let mut worst = f64::INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(0xa1);
    let instances = 200;
    for i in 0..instances {
        let k = rng.random_range(4..=12);
        let m = rng.random_range(50..=500);
        let n = rng.random_range(10..=300);
        let beta = rng.random_range(0.05..0.45);
        let kind =
            if rng.random_bool(0.5) { TargetKind::Uniform } else { TargetKind::Zipf { s: rng.random_range(0.5..2.0) } };
        let p = make_target(&TargetSpec { kind, k }).unwrap();
        let d = rng.random_range(0.05..batchrobust::simulate::max_distance(&p).min(1.9));
        let params = EstimatorParams::new(beta, n, m, k).unwrap();
        let coll = sample_instance(&p, &params, 0.0, &AdversarySpec::at_distance(d), i).unwrap();
        let t = build_matrices(&coll).unwrap();
        let exact = brute_force_detect(&t).unwrap().abs_delta;
        let mut detect_rng = ChaCha8Rng::seed_from_u64(i);
        let relaxed = relaxation_detect(&t, &mut detect_rng, &RelaxationConfig::default()).unwrap().abs_delta;
        if exact > 0.0 {
            worst = worst.min(relaxed / exact);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst >= 0.56 && within(elapsed, 60),
        format!(
            "{instances} instances, min relaxation/exact ratio {worst:.4} (need >= 0.56), {elapsed:.1?} (limit 60s)"
        ),
    )
}

fn a2_matrix_identities() -> Outcome {
    let start = Instant::now();
    let (mut row_err, mut form_err) = (0.0f64, 0.0f64);
    let mut rng = ChaCha8Rng::seed_from_u64(0xa2);
    for i in 0..50 {
        let k = rng.random_range(2..=10);
        let m = rng.random_range(2..=200);
        let n = rng.random_range(1..=100);
        let beta = rng.random_range(0.05..0.45);
        let p = make_target(&TargetSpec { kind: TargetKind::Zipf { s: rng.random_range(0.0..1.5) }, k }).unwrap();
        let params = EstimatorParams::new(beta, n, m, k).unwrap();
        let d = rng.random_range(0.0..batchrobust::simulate::max_distance(&p).min(1.9));
        let coll = sample_instance(&p, &params, 0.1, &AdversarySpec::at_distance(d), i).unwrap();
        let t = build_matrices(&coll).unwrap();
        for mat in [&t.c_ev, &t.c_em, &t.d] {
            for r in 0..k {
                row_err = row_err.max(mat.row(r).iter().sum::<f64>().abs());
            }
        }
        for bits in 1u64..(1 << k) {
            let s = SubsetMask::from_bits(k, bits);
            let want = empirical_variance(&coll, &s).unwrap()
                - variance_fn(collection_empirical(&coll, &s).unwrap(), n).unwrap();
            form_err = form_err.max((quad_form(&t, &s) - want).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        row_err <= 1e-9 && form_err <= 1e-9 && within(elapsed, 10),
        format!("50 collections, max row sum {row_err:.2e}, max form error {form_err:.2e} (need <= 1e-9), {elapsed:.1?} (limit 10s)"),
    )
}

fn a3_deletion_contract() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0xa3);
    for profile in 0..100 {
        let m = rng.random_range(100..=2000);
        let n = rng.random_range(100..=5000);
        let beta = rng.random_range(0.05..0.45);
        let params = EstimatorParams::new(beta, n, m, 10).unwrap();
        let threshold = params.deletion_threshold();
        let zero_share = rng.random_range(0.0..0.9);
        let scores: Vec<(usize, f64)> = (0..m)
            .map(|i| (i, if rng.random_bool(zero_share) { 0.0 } else { rng.random_range(0.0..1.0f64).powi(2) }))
            .collect();
        let initial: f64 = scores.iter().map(|s| s.1).sum();
        let mut draw_rng = ChaCha8Rng::seed_from_u64(profile);
        let out = delete_by_scores(&scores, threshold, &mut draw_rng);
        if out.final_score >= threshold {
            failures.push(format!("profile {profile}: final {} >= {threshold}", out.final_score));
        }
        if (out.deleted.len() as f64) < initial - threshold {
            failures.push(format!("profile {profile}: {} deletions < {}", out.deleted.len(), initial - threshold));
        }
        if out.deleted.iter().any(|&i| scores[i].1 == 0.0) {
            failures.push(format!("profile {profile}: zero-score batch deleted"));
        }
    }

    // fixed profile with total score 10 times the target
    let params = EstimatorParams::new(0.1, 10_000, 20, 10).unwrap();
    let threshold = params.deletion_threshold();
    let shape = [0.0, 3.0, 1.0, 0.0, 2.0, 5.0, 1.0, 4.0, 2.0, 0.5, 3.0, 1.5, 0.0, 2.5, 1.0, 3.5, 2.0, 1.0, 0.5, 4.0];
    let scale = 10.0 * threshold / shape.iter().sum::<f64>();
    let scores: Vec<(usize, f64)> = shape.iter().map(|s| s * scale).enumerate().collect();
    let total: f64 = scores.iter().map(|s| s.1).sum();
    let reps = 1000u64;
    let mut hits = [0u64; 20];
    for r in 0..reps {
        let mut draw_rng = ChaCha8Rng::seed_from_u64(derive_seed(0xa3, &[r]));
        let out = delete_by_scores(&scores, threshold, &mut draw_rng);
        hits[out.deleted[0]] += 1;
    }
    let mut worst_z = 0.0f64;
    for (i, &(_, s)) in scores.iter().enumerate() {
        let want = s / total;
        let got = hits[i] as f64 / reps as f64;
        if s == 0.0 {
            if hits[i] > 0 {
                failures.push(format!("zero-score batch {i} drawn"));
            }
            continue;
        }
        let z = (got - want).abs() / (want * (1.0 - want) / reps as f64).sqrt();
        worst_z = worst_z.max(z);
    }
    if worst_z > 3.0 {
        failures.push(format!("draw frequency off by {worst_z:.2} standard errors"));
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && within(elapsed, 30);
    outcome(
        pass,
        format!(
            "100 profiles, worst draw-frequency deviation {worst_z:.2} SE (need <= 3), {elapsed:.1?} (limit 30s){}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

/// Trial-mean errors at the distance where the robust estimator is worst.
fn worst_point(rows: &[Row]) -> batchrobust_bench::SummaryPoint {
    summarize(rows).unwrap().remove(0)
}

fn single(k: usize, n: usize, m: usize, beta: f64, trials: usize, seed: u64) -> SweepConfig {
    SweepConfig { k, n, m, beta, trials, seed, ..SweepConfig::new(SweepKind::Single) }
}

fn a4_versus_baselines() -> Outcome {
    let start = Instant::now();
    let cfg = single(100, 2000, 2500, 0.4, 10, 0xa4);
    let rows = run_sweep(&cfg).unwrap();
    let w = worst_point(&rows);
    let elapsed = start.elapsed();
    outcome(
        w.robust <= 3.0 * w.oracle && w.robust <= 0.5 * w.naive && within(elapsed, 300),
        format!(
            "worst d={}: robust {:.5}, oracle {:.5} (ratio {:.2}, need <= 3), naive {:.5} (ratio {:.3}, need <= 0.5), {elapsed:.1?} (limit 300s)",
            w.worst_distance,
            w.robust,
            w.oracle,
            w.robust / w.oracle,
            w.naive,
            w.robust / w.naive
        ),
    )
}

fn per_trial(rows: &[Row], e: Estimator) -> Vec<&Row> {
    rows.iter().filter(|r| r.estimator == e).collect()
}

fn a5_clean_data() -> Outcome {
    let start = Instant::now();
    let mut cfg = single(100, 1000, 2000, 0.1, 20, 0xa5);
    cfg.adv_fraction = Some(0.0);
    cfg.adv_distances = vec![0.4];
    let mut details = Vec::new();
    let mut pass = true;
    for (name, tuning) in [("calibrated", Tuning::calibrated()), ("theory", Tuning::theory())] {
        cfg.tuning = tuning;
        let rows = run_sweep(&cfg).unwrap();
        let robust = per_trial(&rows, Estimator::Robust);
        let oracle = per_trial(&rows, Estimator::Oracle);
        let good = robust
            .iter()
            .zip(&oracle)
            .filter(|(r, o)| r.batches_deleted.unwrap() as f64 <= 0.02 * 2000.0 && r.l1_error <= 1.5 * o.l1_error)
            .count();
        let max_del = robust.iter().map(|r| r.batches_deleted.unwrap()).max().unwrap();
        pass &= good * 100 >= 95 * robust.len();
        details.push(format!("{name}: {good}/{} trials ok, max deleted {max_del}", robust.len()));
    }
    let elapsed = start.elapsed();
    pass &= within(elapsed, 180);
    outcome(pass, format!("{} (need >= 95%), {elapsed:.1?} (limit 180s)", details.join("; ")))
}

fn a6_error_bound() -> Outcome {
    let start = Instant::now();
    let mut cfg = single(100, 10_000, 2500, 0.4, 10, 0xa6);
    let bound = EstimatorParams::new(0.4, 10_000, 2500, 100).unwrap().error_bound();
    let mut details = Vec::new();
    let mut pass = true;
    for (name, tuning) in [("theory", Tuning::theory()), ("calibrated", Tuning::calibrated())] {
        cfg.tuning = tuning;
        let rows = run_sweep(&cfg).unwrap();
        let worst = per_trial(&rows, Estimator::Robust).iter().map(|r| r.l1_error).fold(0.0, f64::max);
        pass &= worst <= 0.770;
        details.push(format!("{name}: max robust error over all trials and distances {worst:.4}"));
    }
    let elapsed = start.elapsed();
    pass &= within(elapsed, 600);
    outcome(pass, format!("bound {bound:.4}; {} (need <= 0.770), {elapsed:.1?} (limit 600s)", details.join("; ")))
}

fn a7_conditions() -> Outcome {
    let start = Instant::now();
    let p = Distribution::uniform(50).unwrap();
    let params = EstimatorParams::new(0.4, 1000, 2000, 50).unwrap();
    let adv = AdversarySpec { fraction: Some(0.0), ..AdversarySpec::at_distance(0.4) };
    let mut held = 0;
    let mut worst = [f64::INFINITY; 4];
    for seed in 0..20 {
        let good = sample_instance(&p, &params, 0.0, &adv, derive_seed(0xa7, &[seed])).unwrap();
        let r = check_conditions(&good, &p, &params, SubsetSampling::Random { trials: 500 }, seed).unwrap();
        held += usize::from(r.all_hold());
        for (w, v) in worst.iter_mut().zip([r.cond1_margin, r.cond2_mean_margin, r.cond2_var_margin, r.cond3_margin]) {
            *w = w.min(v);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        held >= 19 && within(elapsed, 120),
        format!(
            "{held}/20 seeds with all margins positive (need >= 19); worst margins {:.3e} {:.3e} {:.3e} {:.3e}, {elapsed:.1?} (limit 120s)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

/// Number of adjacent pairs that break the order; `rising` asks for a
/// non-decreasing sequence.
fn inversions(values: &[f64], rising: bool) -> usize {
    values.windows(2).filter(|w| if rising { w[1] < w[0] } else { w[1] > w[0] }).count()
}

fn a8_trends() -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    for (kind, rising) in [(SweepKind::BatchSize, false), (SweepKind::Beta, true)] {
        let cfg = SweepConfig { seed: 0xa8, ..SweepConfig::new(kind) };
        let points = summarize(&run_sweep(&cfg).unwrap()).unwrap();
        let robust: Vec<f64> = points.iter().map(|p| p.robust).collect();
        let inv = inversions(&robust, rising);
        pass &= inv <= 1;
        let shown: Vec<String> = points.iter().map(|p| format!("{}:{:.4}", p.param, p.robust)).collect();
        details.push(format!("{kind} [{}] {inv} inversion(s)", shown.join(" ")));
    }
    let elapsed = start.elapsed();
    outcome(pass, format!("{} (need <= 1 each), {elapsed:.1?}", details.join("; ")))
}

fn run_cli(args: &[&str], dir: &Path) -> (bool, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_batchrobust")).args(args).current_dir(dir).output().unwrap();
    (out.status.success(), out.stdout)
}

fn a9_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("sweep.cfg"),
        "sweep = batch_size\nk = 20\ngrid = 200, 400\nscale = 0.002\ntrials = 2\nadv_distances = 0.2, 0.8\nseed = 5\n",
    )
    .unwrap();
    let mut failures = Vec::new();
    let runs: Vec<(&str, Vec<&str>, Vec<&str>)> = vec![
        (
            "simulate",
            vec![
                "simulate",
                "--target",
                "zipf:1",
                "--k",
                "12",
                "--n",
                "200",
                "--m",
                "300",
                "--beta",
                "0.3",
                "--adv",
                "distance:0.5",
                "--seed",
                "9",
                "--out",
                "{}.txt",
                "--provenance-out",
                "{}.prov",
            ],
            vec!["{}.txt", "{}.prov"],
        ),
        (
            "estimate",
            vec!["estimate", "--input", "a.txt", "--beta", "0.3", "--seed", "4", "--json", "--constants", "calibrated"],
            vec![],
        ),
        (
            "sweep",
            vec!["sweep", "--config", "sweep.cfg", "--out-csv", "{}.csv", "--out-svg", "{}.svg"],
            vec!["{}.csv", "{}.svg"],
        ),
    ];
    for (name, args, files) in &runs {
        let mut outputs = Vec::new();
        for tag in ["a", "b"] {
            let args: Vec<String> = args.iter().map(|a| a.replace("{}", tag)).collect();
            let refs: Vec<&str> = args.iter().map(String::as_str).collect();
            let (ok, stdout) = run_cli(&refs, d);
            if !ok {
                failures.push(format!("{name} failed"));
            }
            let mut blob = stdout;
            for f in files {
                blob.extend(std::fs::read(d.join(f.replace("{}", tag))).unwrap_or_default());
            }
            outputs.push(blob);
        }
        if outputs[0] != outputs[1] || outputs[0].is_empty() {
            failures.push(format!("{name} output differs between runs"));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "simulate, estimate --json, sweep CSV+SVG byte-identical on rerun".into()
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    // libtest flags such as --list or a name filter are accepted and ignored,
    // except that --list reports nothing to run.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [Criterion; 9] = [
        ("A1", a1_detection_ratio),
        ("A2", a2_matrix_identities),
        ("A3", a3_deletion_contract),
        ("A4", a4_versus_baselines),
        ("A5", a5_clean_data),
        ("A6", a6_error_bound),
        ("A7", a7_conditions),
        ("A8", a8_trends),
        ("A9", a9_determinism),
    ];
    let mut failed = 0;
    for (id, run) in criteria {
        let o = run();
        failed += usize::from(!o.pass);
        println!("{id} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
