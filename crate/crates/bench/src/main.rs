use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use batchrobust::estimate::{robust_estimate, EstimatorConfig, MedianScope};
use batchrobust::format::{read_batches, read_provenance, write_batches, write_provenance};
use batchrobust::simulate::{make_target, sample_instance, AdversarySpec, SamplingMode};
use batchrobust::{EstimatorParams, Tuning};
use batchrobust_bench::config::SweepConfig;
use batchrobust_bench::notation::{parse_adversary, parse_target};
use batchrobust_bench::sweep::{format_summary, run_sweep, summarize, write_csv};
use batchrobust_bench::{emit_plot, Axes};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "batchrobust", version, about = "Robust distribution estimation from contaminated batches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the distribution behind a batch file.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the estimate and diagnostics as JSON.
        #[arg(long)]
        json: bool,
        #[arg(long, value_enum, default_value_t = Constants::Theory)]
        constants: Constants,
        #[arg(long, value_enum, default_value_t = Scope::Full)]
        median_scope: Scope,
        /// Provenance sidecar; enables the good/adversarial deletion counts.
        #[arg(long)]
        provenance: Option<PathBuf>,
    },
    /// Write a synthetic batch file.
    Simulate {
        /// uniform | zipf:<s> | geometric:<ratio> | two_level:<fraction>:<mass>
        #[arg(long)]
        target: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        /// distance:<d> | repeat:<symbol>:<fraction> | fixed:<q1>,<q2>,...
        #[arg(long)]
        adv: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Actual adversarial fraction, if different from beta.
        #[arg(long)]
        adv_fraction: Option<f64>,
        /// Give every adversarial batch the rounded expected counts.
        #[arg(long)]
        deterministic_adv: bool,
        #[arg(long)]
        provenance_out: Option<PathBuf>,
    },
    /// Run a sweep from a config file and write CSV rows and an SVG chart.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_csv: Option<PathBuf>,
        #[arg(long)]
        out_svg: Option<PathBuf>,
        #[arg(long)]
        scale: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Constants {
    Theory,
    Calibrated,
}

impl From<Constants> for Tuning {
    fn from(c: Constants) -> Self {
        match c {
            Constants::Theory => Tuning::theory(),
            Constants::Calibrated => Tuning::calibrated(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Scope {
    Full,
    Alive,
}

/// Exit status 2: bad arguments or config; 3: failure while running.
enum Failure {
    Config(String),
    Runtime(String),
}

fn config<E: ToString>(e: E) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime<E: ToString>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    k: usize,
    n: usize,
    m: usize,
    beta: f64,
    tuning: Tuning,
    estimate: &'a [f64],
    diagnostics: &'a batchrobust::estimate::EstimateDiagnostics,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate { input, beta, seed, json, constants, median_scope, provenance } => {
            estimate(&input, beta, seed, json, constants.into(), median_scope, provenance.as_deref())
        }
        Command::Simulate {
            target,
            k,
            n,
            m,
            beta,
            eta,
            adv,
            seed,
            out,
            adv_fraction,
            deterministic_adv,
            provenance_out,
        } => {
            let mode = if deterministic_adv { SamplingMode::DeterministicCounts } else { SamplingMode::IidFromQ };
            let target = parse_target(&target, k).map_err(config);
            let adv = parse_adversary(&adv).map_err(config);
            match (target, adv) {
                (Ok(target), Ok(kind)) => {
                    let adv = AdversarySpec { kind, mode, fraction: adv_fraction };
                    simulate(&target, (k, n, m, beta, eta), &adv, seed, &out, provenance_out.as_deref())
                }
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        }
        Command::Sweep { config: path, out_csv, out_svg, scale } => sweep(&path, out_csv, out_svg, scale),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn estimate(
    input: &Path,
    beta: f64,
    seed: u64,
    json: bool,
    tuning: Tuning,
    scope: Scope,
    provenance: Option<&Path>,
) -> Result<(), Failure> {
    let mut coll = read_batches(open(input)?).map_err(runtime)?;
    if let Some(path) = provenance {
        let prov = read_provenance(open(path)?).map_err(runtime)?;
        coll = coll.with_provenance(prov).map_err(runtime)?;
    }
    let params = EstimatorParams::for_collection(beta, &coll, tuning).map_err(config)?;
    let cfg = EstimatorConfig {
        median_scope: match scope {
            Scope::Full => MedianScope::Full,
            Scope::Alive => MedianScope::Alive,
        },
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, diag) = robust_estimate(&coll, &params, &cfg, &mut rng).map_err(runtime)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if json {
        let report = EstimateReport {
            k: coll.k(),
            n: coll.n(),
            m: coll.len(),
            beta,
            tuning,
            estimate: p.probs(),
            diagnostics: &diag,
        };
        serde_json::to_writer_pretty(&mut out, &report).map_err(runtime)?;
        writeln!(out).map_err(runtime)?;
    } else {
        let probs: Vec<String> = p.probs().iter().map(|v| v.to_string()).collect();
        writeln!(out, "estimate {}", probs.join(" ")).map_err(runtime)?;
        writeln!(
            out,
            "iterations {} deleted {} final_abs_delta {}",
            diag.iterations, diag.total_deleted, diag.final_abs_delta
        )
        .map_err(runtime)?;
        if let (Some(g), Some(a)) = (diag.good_deleted, diag.adversarial_deleted) {
            writeln!(out, "good_deleted {g} adversarial_deleted {a}").map_err(runtime)?;
        }
    }
    Ok(())
}

fn simulate(
    target: &batchrobust::simulate::TargetSpec,
    (k, n, m, beta, eta): (usize, usize, usize, f64, f64),
    adv: &AdversarySpec,
    seed: u64,
    out: &Path,
    provenance_out: Option<&Path>,
) -> Result<(), Failure> {
    let params = EstimatorParams::new(beta, n, m, k).map_err(config)?;
    let p = make_target(target).map_err(config)?;
    adv.distribution(&p).map_err(config)?;
    if !(0.0..2.0).contains(&eta) {
        return Err(config(format!("eta must lie in [0, 2), got {eta}")));
    }
    let coll = sample_instance(&p, &params, eta, adv, seed).map_err(runtime)?;
    let mut w = create(out)?;
    write_batches(&mut w, &coll).map_err(runtime)?;
    w.flush().map_err(runtime)?;
    if let Some(path) = provenance_out {
        let mut w = create(path)?;
        write_provenance(&mut w, coll.provenance().unwrap_or_default()).map_err(runtime)?;
        w.flush().map_err(runtime)?;
    }
    Ok(())
}

fn sweep(path: &Path, out_csv: Option<PathBuf>, out_svg: Option<PathBuf>, scale: Option<f64>) -> Result<(), Failure> {
    let mut cfg = SweepConfig::load(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    if let Some(s) = scale {
        cfg.scale = s;
        cfg.validate().map_err(config)?;
    }
    let out_csv = out_csv.or(cfg.out_csv.clone());
    let out_svg = out_svg.or(cfg.out_svg.clone());
    if out_csv.is_none() && out_svg.is_none() {
        return Err(config("no output: pass --out-csv and/or --out-svg"));
    }
    let rows = run_sweep(&cfg).map_err(runtime)?;
    if let Some(path) = out_csv {
        let mut w = create(&path)?;
        write_csv(&rows, &mut w).map_err(runtime)?;
        w.flush().map_err(runtime)?;
    }
    if let Some(path) = out_svg {
        let axes = Axes::new(format!("{} sweep", cfg.sweep), cfg.sweep.param_label());
        let svg = emit_plot(&rows, &axes).map_err(runtime)?;
        std::fs::write(&path, svg).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    print!("{}", format_summary(cfg.sweep, &summarize(&rows).map_err(runtime)?));
    Ok(())
}
