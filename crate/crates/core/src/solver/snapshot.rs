//! Plain-text solution snapshots.
//!
//! ```text
//! ORLICZFB 1
//! interval -1 1 4001
//! eps=0.00625 n=160
//! 0.0000000000000000e0
//! ...
//! ```

use std::io::{self, BufRead, Write};

use super::mesh::Domain;
use super::{DiscreteField, SolverError};

const MAGIC: &str = "ORLICZFB 1";

pub fn write_snapshot<W: Write>(field: &DiscreteField, out: &mut W) -> io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "{}", field.domain)?;
    writeln!(out, "eps={} n={}", field.eps, field.reg_n)?;
    for v in &field.values {
        writeln!(out, "{v:.16e}")?;
    }
    Ok(())
}

fn bad(line: usize, message: impl Into<String>) -> SolverError {
    SolverError::Snapshot {
        line,
        message: message.into(),
    }
}

fn parse_domain(text: &str) -> Result<Domain, SolverError> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    let f = |i: usize| -> Result<f64, SolverError> {
        parts
            .get(i)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(2, format!("bad number in field {}", i + 1)))
    };
    let n = |i: usize| -> Result<usize, SolverError> {
        parts
            .get(i)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(2, format!("bad count in field {}", i + 1)))
    };
    let (domain, expected) = match parts.first().copied() {
        Some("interval") => (Domain::interval(f(1)?, f(2)?, n(3)?), 4),
        Some("radial") => (Domain::radial(f(1)?, f(2)?, n(3)? as u32, n(4)?), 5),
        Some("rectangle") => (
            Domain::rectangle(f(1)?, f(2)?, f(3)?, f(4)?, n(5)?, n(6)?),
            7,
        ),
        _ => return Err(bad(2, format!("unknown domain descriptor '{text}'"))),
    };
    if parts.len() != expected {
        return Err(bad(
            2,
            format!("expected {expected} fields in domain descriptor"),
        ));
    }
    domain.map_err(|e| bad(2, e.to_string()))
}

pub fn read_snapshot<R: BufRead>(input: R) -> Result<DiscreteField, SolverError> {
    let mut lines = input.lines().enumerate();
    let mut next = || -> Result<(usize, String), SolverError> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((i, Err(e))) => Err(bad(i + 1, e.to_string())),
            None => Err(bad(0, "unexpected end of snapshot")),
        }
    };
    let (_, magic) = next()?;
    if magic.trim() != MAGIC {
        return Err(bad(1, format!("expected '{MAGIC}'")));
    }
    let domain = parse_domain(&next()?.1)?;
    let (_, params) = next()?;
    let mut eps = None;
    let mut reg_n = None;
    for kv in params.split_whitespace() {
        match kv.split_once('=') {
            Some(("eps", v)) => eps = v.parse::<f64>().ok(),
            Some(("n", v)) => reg_n = v.parse::<f64>().ok(),
            _ => return Err(bad(3, format!("unexpected entry '{kv}'"))),
        }
    }
    let (eps, reg_n) = eps
        .zip(reg_n)
        .ok_or_else(|| bad(3, "expected 'eps=<v> n=<v>'"))?;
    let mut values = Vec::with_capacity(domain.node_count());
    loop {
        match next() {
            Ok((i, l)) => {
                if l.trim().is_empty() {
                    continue;
                }
                values.push(
                    l.trim()
                        .parse::<f64>()
                        .map_err(|_| bad(i, format!("bad value '{l}'")))?,
                );
            }
            Err(SolverError::Snapshot { line: 0, .. }) => break,
            Err(e) => return Err(e),
        }
    }
    DiscreteField::new(domain, values, eps, reg_n).map_err(|e| bad(0, e.to_string()))
}
