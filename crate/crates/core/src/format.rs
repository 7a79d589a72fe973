//! Plain-text batch files.
//!
//! ```text
//! k n m
//! c_1 c_2 ... c_k      (m lines, each summing to n)
//! ```
//!
//! Provenance, when kept, goes to a sidecar file with one `g` or `a` per line.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::{Batch, BatchCollection, Provenance};

pub fn write_batches<W: Write>(mut w: W, coll: &BatchCollection) -> Result<()> {
    writeln!(w, "{} {} {}", coll.k(), coll.n(), coll.len())?;
    let mut line = String::new();
    for b in coll.batches() {
        line.clear();
        for (i, c) in b.counts().iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&c.to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn read_batches<R: BufRead>(r: R) -> Result<BatchCollection> {
    let mut lines = r.lines().enumerate();
    let (k, n, m) = loop {
        let (no, line) = lines.next().ok_or(Error::Parse { line: 1, msg: "missing header".into() })?;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields = parse_fields::<usize>(&line, no + 1)?;
        if fields.len() != 3 {
            return Err(Error::Parse { line: no + 1, msg: "header must be `k n m`".into() });
        }
        break (fields[0], fields[1], fields[2]);
    };
    let mut batches = Vec::with_capacity(m);
    for (no, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let counts = parse_fields::<u32>(&line, no + 1)?;
        if counts.len() != k {
            return Err(Error::Parse { line: no + 1, msg: format!("expected {k} counts, found {}", counts.len()) });
        }
        let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        if total != n as u64 {
            return Err(Error::Parse { line: no + 1, msg: format!("counts sum to {total}, expected {n}") });
        }
        batches.push(Batch::new(counts).map_err(|e| Error::Parse { line: no + 1, msg: e.to_string() })?);
    }
    if batches.len() != m {
        return Err(Error::Parse { line: 1, msg: format!("header declares {m} batches, found {}", batches.len()) });
    }
    BatchCollection::new(batches)
}

pub fn write_provenance<W: Write>(mut w: W, provenance: &[Provenance]) -> Result<()> {
    for p in provenance {
        let tag = match p {
            Provenance::Good => "g",
            Provenance::Adversarial => "a",
        };
        writeln!(w, "{tag}")?;
    }
    Ok(())
}

pub fn read_provenance<R: BufRead>(r: R) -> Result<Vec<Provenance>> {
    let mut out = Vec::new();
    for (no, line) in r.lines().enumerate() {
        let line = line?;
        match line.trim() {
            "" => continue,
            "g" => out.push(Provenance::Good),
            "a" => out.push(Provenance::Adversarial),
            other => return Err(Error::Parse { line: no + 1, msg: format!("unknown provenance tag `{other}`") }),
        }
    }
    Ok(out)
}

fn parse_fields<T: std::str::FromStr>(line: &str, no: usize) -> Result<Vec<T>> {
    line.split_ascii_whitespace()
        .map(|f| f.parse::<T>().map_err(|_| Error::Parse { line: no, msg: format!("bad integer `{f}`") }))
        .collect()
}
