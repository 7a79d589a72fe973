//! Runs a sweep config under custom threshold multipliers and prints the
//! worst-of-grid summary.
//!
//! ```text
//! cargo run --release -p batchrobust-bench --example calibrate -- <config> <band> <stop> <delete>
//! ```

use batchrobust::Tuning;
use batchrobust_bench::sweep::{format_summary, run_sweep, summarize};
use batchrobust_bench::SweepConfig;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() != 4 {
        eprintln!("usage: calibrate <config> <band> <stop> <delete>");
        std::process::exit(2);
    }
    let mut cfg = SweepConfig::load(args[0].as_ref()).unwrap_or_else(|e| {
        eprintln!("{}: {e}", args[0]);
        std::process::exit(2);
    });
    let num = |i: usize| args[i].parse::<f64>().expect("multipliers must be numbers");
    cfg.tuning = Tuning { score_band: num(1), stop_factor: num(2), deletion_factor: num(3) };
    let rows = run_sweep(&cfg).expect("sweep failed");
    print!("{}", format_summary(cfg.sweep, &summarize(&rows).expect("no rows")));
}
