//! Text forms of target and adversary specifications.
//!
//! Targets: `uniform`, `zipf:<s>`, `geometric:<ratio>`,
//! `two_level:<heavy_fraction>:<heavy_mass>`.
//!
//! Adversaries: `distance:<d>`, `repeat:<symbol>:<fraction>`,
//! `fixed:<q1>,<q2>,...`.

use batchrobust::simulate::{AdversaryKind, TargetKind, TargetSpec};
use batchrobust::Distribution;

fn real(s: &str) -> Result<f64, String> {
    s.trim().parse().map_err(|_| format!("not a number: {s:?}"))
}

pub fn parse_target(text: &str, k: usize) -> Result<TargetSpec, String> {
    let parts: Vec<&str> = text.trim().split(':').collect();
    let kind = match parts.as_slice() {
        ["uniform"] => TargetKind::Uniform,
        ["zipf", s] => TargetKind::Zipf { s: real(s)? },
        ["geometric", r] => TargetKind::Geometric { ratio: real(r)? },
        ["two_level", f, h] => TargetKind::TwoLevel { heavy_fraction: real(f)?, heavy_mass: real(h)? },
        _ => return Err(format!("unknown target {text:?}")),
    };
    Ok(TargetSpec { kind, k })
}

pub fn parse_adversary(text: &str) -> Result<AdversaryKind, String> {
    let text = text.trim();
    let (head, rest) = text.split_once(':').ok_or_else(|| format!("unknown adversary {text:?}"))?;
    match head {
        "distance" => Ok(AdversaryKind::Distance(real(rest)?)),
        "repeat" => {
            let (sym, frac) = rest.split_once(':').ok_or("repeat needs <symbol>:<fraction>")?;
            let symbol = sym.trim().parse().map_err(|_| format!("not a symbol index: {sym:?}"))?;
            Ok(AdversaryKind::RepeatSample { symbol, fraction: real(frac)? })
        }
        "fixed" => {
            let q = rest.split(',').map(real).collect::<Result<Vec<_>, _>>()?;
            Distribution::new(q).map(AdversaryKind::FixedQ).map_err(|e| e.to_string())
        }
        _ => Err(format!("unknown adversary {text:?}")),
    }
}
