//! Sweep configuration: a flat `key = value` file, one pair per line,
//! `#` starts a comment.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use batchrobust::estimate::MedianScope;
use batchrobust::simulate::{TargetKind, TargetSpec};
use batchrobust::Tuning;

use crate::notation::parse_target;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The four experiments, plus a single-point run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepKind {
    /// Vary `k`; `m = ceil(k / beta^2)`.
    Alphabet,
    /// Vary `n` at a fixed total sample count.
    BatchSize,
    /// Vary `beta` with the good batch count held fixed.
    Beta,
    /// Vary `m`.
    NumBatches,
    Single,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Alphabet => "alphabet",
            Self::BatchSize => "batch_size",
            Self::Beta => "beta",
            Self::NumBatches => "num_batches",
            Self::Single => "single",
        }
    }

    /// Axis label for the swept parameter.
    pub fn param_label(self) -> &'static str {
        match self {
            Self::Alphabet => "alphabet size k",
            Self::BatchSize => "batch size n",
            Self::Beta => "adversarial fraction beta",
            Self::NumBatches => "number of batches m",
            Self::Single => "run",
        }
    }

    fn default_grid(self) -> Vec<f64> {
        match self {
            Self::Alphabet => vec![50.0, 100.0, 200.0],
            Self::BatchSize => vec![250.0, 500.0, 1000.0, 2000.0],
            Self::Beta => vec![0.1, 0.2, 0.3, 0.4],
            Self::NumBatches => vec![625.0, 1250.0, 2500.0, 5000.0],
            Self::Single => vec![0.0],
        }
    }

    fn default_k(self) -> usize {
        match self {
            Self::BatchSize | Self::Beta => 200,
            _ => 100,
        }
    }
}

impl FromStr for SweepKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "alphabet" | "a" => Self::Alphabet,
            "batch_size" | "b" => Self::BatchSize,
            "beta" | "c" => Self::Beta,
            "num_batches" | "d" => Self::NumBatches,
            "single" => Self::Single,
            _ => return Err(format!("unknown sweep {s:?}")),
        })
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_ADV_DISTANCES: [f64; 6] = [0.1, 0.2, 0.4, 0.8, 1.2, 1.6];
pub const DEFAULT_SCALE: f64 = 1.0 / 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub sweep: SweepKind,
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub beta: f64,
    pub eta: f64,
    pub grid: Vec<f64>,
    pub adv_distances: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Shrinks the batch counts of the batch-size and beta sweeps.
    pub scale: f64,
    pub target: TargetSpec,
    /// Actual adversarial fraction when it differs from `beta`.
    pub adv_fraction: Option<f64>,
    pub tuning: Tuning,
    pub median_scope: MedianScope,
    /// Wall-clock columns are left empty unless set, so that reruns are
    /// byte-identical.
    pub record_timing: bool,
    pub out_csv: Option<PathBuf>,
    pub out_svg: Option<PathBuf>,
}

impl SweepConfig {
    pub fn new(sweep: SweepKind) -> Self {
        let k = sweep.default_k();
        Self {
            sweep,
            k,
            n: 1000,
            m: 2500,
            beta: 0.4,
            eta: 0.0,
            grid: sweep.default_grid(),
            adv_distances: DEFAULT_ADV_DISTANCES.to_vec(),
            trials: 10,
            seed: 0,
            scale: DEFAULT_SCALE,
            target: TargetSpec { kind: TargetKind::Uniform, k },
            adv_fraction: None,
            tuning: Tuning::calibrated(),
            median_scope: MedianScope::Full,
            record_timing: false,
            out_csv: None,
            out_svg: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.grid.is_empty() {
            return bad("grid must not be empty".into());
        }
        if self.adv_distances.is_empty() {
            return bad("adv_distances must not be empty".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return bad(format!("scale must be positive, got {}", self.scale));
        }
        if !(self.eta.is_finite() && (0.0..2.0).contains(&self.eta)) {
            return bad(format!("eta must lie in [0, 2), got {}", self.eta));
        }
        if let Some(f) = self.adv_fraction {
            if !(0.0..1.0).contains(&f) {
                return bad(format!("adv_fraction must lie in [0, 1), got {f}"));
            }
        }
        for &d in &self.adv_distances {
            if !(d.is_finite() && (0.0..2.0).contains(&d)) {
                return bad(format!("adversarial distance must lie in [0, 2), got {d}"));
            }
        }
        for &g in &self.grid {
            let ok = match self.sweep {
                SweepKind::Alphabet | SweepKind::BatchSize | SweepKind::NumBatches => g >= 2.0 && g.fract() == 0.0,
                SweepKind::Beta => g > 0.0 && g < 0.5,
                SweepKind::Single => true,
            };
            if !ok {
                return bad(format!("grid value {g} is not valid for the {} sweep", self.sweep));
            }
        }
        for point in self.points() {
            point.params().map_err(|e| ConfigError::Invalid(format!("grid value {}: {e}", point.param)))?;
        }
        Ok(())
    }

    /// The instance parameters at every grid value.
    pub fn points(&self) -> Vec<GridPoint> {
        self.grid
            .iter()
            .map(|&g| {
                let (mut k, mut n, mut m, mut beta) = (self.k, self.n, self.m, self.beta);
                match self.sweep {
                    SweepKind::Alphabet => {
                        k = g as usize;
                        m = ceil(k as f64 / (beta * beta));
                    }
                    SweepKind::BatchSize => {
                        n = g as usize;
                        let full = 40.0 * (k as f64 / (beta * beta)) * (1000.0 / n as f64);
                        m = ceil(full * self.scale);
                    }
                    SweepKind::Beta => {
                        beta = g;
                        let good = ceil(400.0 * k as f64 * self.scale) as f64;
                        m = ceil(good / (1.0 - beta));
                    }
                    SweepKind::NumBatches => m = g as usize,
                    SweepKind::Single => {}
                }
                let mut target = self.target.clone();
                target.k = k;
                GridPoint { param: g, k, n, m, beta, target }
            })
            .collect()
    }

    /// Reads a config file; keys not present keep their defaults for the
    /// chosen sweep.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: no + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            pairs.push((no + 1, key.trim().to_string(), value.trim().to_string()));
        }
        let sweep = match pairs.iter().find(|(_, k, _)| k == "sweep") {
            Some((line, _, v)) => v.parse().map_err(|msg| ConfigError::Syntax { line: *line, msg })?,
            None => SweepKind::Single,
        };
        let mut cfg = Self::new(sweep);
        let mut target_text = None;
        for (line, key, value) in pairs {
            let err = |msg: String| ConfigError::Syntax { line, msg: format!("{key}: {msg}") };
            match key.as_str() {
                "sweep" => {}
                "k" => cfg.k = num(&value).map_err(err)?,
                "n" => cfg.n = num(&value).map_err(err)?,
                "m" => cfg.m = num(&value).map_err(err)?,
                "beta" => cfg.beta = num(&value).map_err(err)?,
                "eta" => cfg.eta = num(&value).map_err(err)?,
                "grid" => cfg.grid = list(&value).map_err(err)?,
                "adv_distances" => cfg.adv_distances = list(&value).map_err(err)?,
                "trials" => cfg.trials = num(&value).map_err(err)?,
                "seed" => cfg.seed = num(&value).map_err(err)?,
                "scale" => cfg.scale = num(&value).map_err(err)?,
                "adv_fraction" => cfg.adv_fraction = Some(num(&value).map_err(err)?),
                "record_timing" => cfg.record_timing = num(&value).map_err(err)?,
                "target" => target_text = Some((line, value)),
                "constants" => {
                    cfg.tuning = Tuning::by_name(&value).ok_or_else(|| err("expected theory or calibrated".into()))?
                }
                "median_scope" => {
                    cfg.median_scope = match value.as_str() {
                        "full" => MedianScope::Full,
                        "alive" => MedianScope::Alive,
                        _ => return Err(err("expected full or alive".into())),
                    }
                }
                "out_csv" => cfg.out_csv = Some(PathBuf::from(value)),
                "out_svg" => cfg.out_svg = Some(PathBuf::from(value)),
                _ => return Err(ConfigError::Syntax { line, msg: format!("unknown key {key:?}") }),
            }
        }
        cfg.target = match target_text {
            Some((line, text)) => parse_target(&text, cfg.k).map_err(|msg| ConfigError::Syntax { line, msg })?,
            None => TargetSpec { kind: TargetKind::Uniform, k: cfg.k },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Instance parameters for one grid value.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub param: f64,
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub beta: f64,
    pub target: TargetSpec,
}

impl GridPoint {
    pub fn params(&self) -> batchrobust::Result<batchrobust::EstimatorParams> {
        batchrobust::EstimatorParams::new(self.beta, self.n, self.m, self.k)
    }
}

/// Ceiling that ignores rounding noise in the last few bits.
fn ceil(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

fn num<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse().map_err(|e: T::Err| format!("{s:?}: {e}"))
}

fn list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|x| num(x.trim())).collect()
}
