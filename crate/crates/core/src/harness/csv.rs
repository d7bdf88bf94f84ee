//! CSV emission of aggregated and per-seed traces.
//!
//! Numbers use Rust's shortest round-trip formatting, which does not depend
//! on locale. Missing values are empty fields.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::{AggregateRow, SeedOutcome};
use crate::error::{Error, Result};

pub const HEADER: &str = "t,t_prime,epoch,loss_mean,loss_std,dist_mean,dist_std,bound";
pub const SEED_HEADER: &str = "seed,status,t,t_prime,loss,dist_sq,wall";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv_string(rows: &[AggregateRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.t_prime,
            r.epoch,
            r.loss_mean,
            r.loss_std,
            opt(r.dist_mean),
            opt(r.dist_std),
            opt(r.bound)
        )
        .expect("write to string");
    }
    s
}

/// Writes the aggregate CSV, creating parent directories as needed.
pub fn emit_csv(rows: &[AggregateRow], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(to_csv_string(rows).as_bytes())?;
    Ok(())
}

fn field<T: std::str::FromStr>(line: usize, name: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("bad {name} `{s}`"),
    })
}

fn opt_field(line: usize, name: &str, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        field(line, name, s).map(Some)
    }
}

/// Reads what [`to_csv_string`] writes.
pub fn parse_csv(text: &str) -> Result<Vec<AggregateRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "missing header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let line = i + 1;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 8 fields, got {}", f.len()),
                });
            }
            Ok(AggregateRow {
                t: field(line, "t", f[0])?,
                t_prime: field(line, "t_prime", f[1])?,
                epoch: field(line, "epoch", f[2])?,
                loss_mean: field(line, "loss_mean", f[3])?,
                loss_std: field(line, "loss_std", f[4])?,
                dist_mean: opt_field(line, "dist_mean", f[5])?,
                dist_std: opt_field(line, "dist_std", f[6])?,
                bound: opt_field(line, "bound", f[7])?,
            })
        })
        .collect()
}

/// Per-seed rows; `wall` is left empty unless `with_wall`.
pub fn seeds_to_csv_string(seeds: &[SeedOutcome], with_wall: bool) -> String {
    let mut s = String::new();
    s.push_str(SEED_HEADER);
    s.push('\n');
    for o in seeds {
        match &o.trace {
            Some(tr) => {
                for r in &tr.rows {
                    let wall = if with_wall { r.wall.to_string() } else { String::new() };
                    writeln!(
                        s,
                        "{},ok,{},{},{},{},{}",
                        o.seed,
                        r.t,
                        r.t_prime,
                        r.loss,
                        opt(r.dist_sq),
                        wall
                    )
                    .expect("write to string");
                }
            }
            None => {
                let status = o.diverged.as_deref().unwrap_or("failed").replace(',', ";");
                writeln!(s, "{},diverged: {status},,,,,", o.seed).expect("write to string");
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: u64) -> AggregateRow {
        AggregateRow {
            t,
            t_prime: t as f64 * 1.5,
            epoch: t as f64 / 7.0,
            loss_mean: 0.1 + 1.0 / (t as f64 + 3.0),
            loss_std: 1e-17,
            dist_mean: Some(std::f64::consts::PI / (t + 1) as f64),
            dist_std: None,
            bound: if t > 0 { Some(1e300) } else { None },
        }
    }

    #[test]
    fn empty_is_header_only() {
        assert_eq!(to_csv_string(&[]), format!("{HEADER}\n"));
        assert!(parse_csv(&to_csv_string(&[])).unwrap().is_empty());
    }

    #[test]
    fn round_trip_is_exact() {
        let rows: Vec<_> = (0..20).map(|t| row(t * 13)).collect();
        assert_eq!(parse_csv(&to_csv_string(&rows)).unwrap(), rows);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_csv("t,x\n").is_err());
        assert!(parse_csv(&format!("{HEADER}\n1,2,3\n")).is_err());
        assert!(parse_csv(&format!("{HEADER}\n1,a,3,4,5,6,7,8\n")).is_err());
    }
}
