//! Result files: per-trial traces, the summary table, timings and the manifest.
//!
//! ```text
//! <dir>/traces/<method>_seed<seed>.csv   iter,theta_1..theta_d,y,best_y
//! <dir>/summary.csv                      kind,method,seed,jumpstart_mean,jumpstart_stderr,best_y
//! <dir>/timings.csv                      method,seed,wall_time_s
//! <dir>/manifest.toml                    rerunnable config echo
//! ```
//!
//! Traces and the manifest are byte-identical across reruns of the same
//! config, and so is the summary. Wall times vary and live in `timings.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::config::{ExperimentConfig, Method};
use super::runner::{ExperimentResults, ResultRow, ResultTable, TrialTrace};
use crate::error::{Error, Result};
use crate::search::SearchTrace;

pub const SUMMARY_HEADER: &str = "kind,method,seed,jumpstart_mean,jumpstart_stderr,best_y";

/// Format with 6 significant digits, plain notation for moderate magnitudes.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let exp = x.abs().log10().floor() as i32;
    // rounding can carry into the next decade
    let sci = format!("{x:.5e}");
    let exp = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse::<i32>().ok())
        .unwrap_or(exp);
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let (mantissa, e) = sci.split_once('e').expect("scientific format has an exponent");
        let mantissa = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{mantissa}e{e}")
    }
}

pub fn trace_file_name(method: Method, seed: u64) -> String {
    format!("{}_seed{seed}.csv", method.name())
}

/// Trace CSV with full-precision (shortest round-trip) numbers.
pub fn trace_csv(trace: &SearchTrace) -> String {
    let d = trace.data.dim();
    let mut out = String::from("iter");
    for i in 1..=d {
        write!(out, ",theta_{i}").unwrap();
    }
    out.push_str(",y,best_y\n");
    for r in &trace.records {
        write!(out, "{}", r.iteration).unwrap();
        for v in r.theta.iter() {
            write!(out, ",{v:?}").unwrap();
        }
        writeln!(out, ",{:?},{:?}", r.y, r.best_y).unwrap();
    }
    out
}

/// One trace line: iteration, θ, observed reward, running best.
pub type TraceRecord = (usize, Vec<f64>, f64, f64);

/// Parsed trace CSV: `(iter, theta, y, best_y)` per line.
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRecord>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::invalid("empty trace file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "iter" || cols[cols.len() - 2..] != ["y", "best_y"] {
        return Err(Error::invalid(format!("unexpected trace header {header:?}")));
    }
    let d = cols.len() - 3;
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::invalid(format!("trace line {}: {line:?}", i + 2));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d + 3 {
                return Err(bad());
            }
            let iter = fields[0].parse().map_err(|_| bad())?;
            let nums = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<f64>>>()?;
            Ok((iter, nums[..d].to_vec(), nums[d], nums[d + 1]))
        })
        .collect()
}

fn opt_sig6(x: Option<f64>) -> String {
    x.map(format_sig6).unwrap_or_default()
}

fn round_sig6(x: f64) -> f64 {
    format_sig6(x).parse().expect("formatted number parses")
}

/// Summary CSV. Aggregates are computed from the rows as written, so the file's
/// aggregate lines are exactly recomputable from its own row lines.
pub fn summary_csv(table: &ResultTable) -> String {
    let table = ResultTable {
        rows: table
            .rows
            .iter()
            .map(|r| ResultRow {
                jumpstart_mean: round_sig6(r.jumpstart_mean),
                jumpstart_stderr: round_sig6(r.jumpstart_stderr),
                best_y: r.best_y.map(round_sig6),
                ..r.clone()
            })
            .collect(),
    };
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in &table.rows {
        writeln!(
            out,
            "row,{},{},{},{},{}",
            r.method,
            r.seed,
            format_sig6(r.jumpstart_mean),
            format_sig6(r.jumpstart_stderr),
            opt_sig6(r.best_y)
        )
        .unwrap();
    }
    for a in table.aggregates() {
        writeln!(
            out,
            "aggregate,{},,{},{},{}",
            a.method,
            format_sig6(a.mean),
            format_sig6(a.pooled_stderr),
            opt_sig6(a.best_y)
        )
        .unwrap();
    }
    out
}

/// Rebuild the table from summary text. Values carry the file's 6-digit
/// precision and wall times are zero; aggregate lines are checked for shape.
pub fn parse_summary_csv(text: &str) -> Result<ResultTable> {
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(Error::invalid("summary header mismatch"));
    }
    let mut table = ResultTable::default();
    for (i, line) in lines.enumerate() {
        let bad = || Error::invalid(format!("summary line {}: {line:?}", i + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let method: Method = f[1].parse().map_err(|_| bad())?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let best_y = if f[5].is_empty() { None } else { Some(num(f[5])?) };
        match f[0] {
            "row" => table.rows.push(ResultRow {
                method,
                seed: f[2].parse().map_err(|_| bad())?,
                jumpstart_mean: num(f[3])?,
                jumpstart_stderr: num(f[4])?,
                best_y,
                wall_time: Duration::ZERO,
            }),
            "aggregate" if f[2].is_empty() => {
                num(f[3])?;
                num(f[4])?;
            }
            _ => return Err(bad()),
        }
    }
    Ok(table)
}

pub fn timings_csv(table: &ResultTable) -> String {
    let mut out = String::from("method,seed,wall_time_s\n");
    for r in &table.rows {
        writeln!(out, "{},{},{:?}", r.method, r.seed, r.wall_time.as_secs_f64()).unwrap();
    }
    out
}

/// Write every result file under `dir`; returns the paths written.
pub fn export_results(results: &ExperimentResults, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let traces_dir = dir.join("traces");
    fs::create_dir_all(&traces_dir)?;
    let mut written = Vec::new();
    let mut write = |path: PathBuf, text: String| -> Result<()> {
        fs::write(&path, text)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        written.push(path);
        Ok(())
    };
    for TrialTrace { method, seed, trace } in &results.traces {
        write(traces_dir.join(trace_file_name(*method, *seed)), trace_csv(trace))?;
    }
    write(dir.join("summary.csv"), summary_csv(&results.table))?;
    write(dir.join("timings.csv"), timings_csv(&results.table))?;
    write(dir.join("manifest.toml"), cfg.manifest_toml()?)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::Variant;

    #[test]
    fn sig6_formatting() {
        let cases = [
            (0.0, "0"),
            (-17.7348371643, "-17.7348"),
            (123456.7, "123457"),
            (999999.6, "1e6"),
            (0.000123456789, "0.000123457"),
            (0.00001234567, "1.23457e-5"),
            (2.5, "2.5"),
            (-0.1, "-0.1"),
            (9.999996, "10"),
        ];
        for (x, want) in cases {
            assert_eq!(format_sig6(x), want, "{x}");
        }
    }

    #[test]
    fn sig6_is_stable_under_reparse() {
        for x in [-17.7348371643, 0.0123456789, 3.0e-7, 12.5, -1.0e9] {
            let s = format_sig6(x);
            assert_eq!(format_sig6(s.parse().unwrap()), s);
        }
    }

    #[test]
    fn summary_round_trip() {
        let uncaps = Method::Search(Variant::Uncaps);
        let table = ResultTable {
            rows: vec![
                ResultRow {
                    method: uncaps,
                    seed: 50,
                    jumpstart_mean: -17.123456789,
                    jumpstart_stderr: 0.0456789123,
                    best_y: Some(-15.987654321),
                    wall_time: Duration::from_millis(1500),
                },
                ResultRow {
                    method: Method::DomainRandomisation,
                    seed: 50,
                    jumpstart_mean: -18.5,
                    jumpstart_stderr: 0.05,
                    best_y: None,
                    wall_time: Duration::from_millis(10),
                },
            ],
        };
        let text = summary_csv(&table);
        let back = parse_summary_csv(&text).unwrap();
        assert_eq!(back.rows.len(), 2);
        assert_eq!(summary_csv(&back), text);
    }

    #[test]
    fn empty_table_has_header_only() {
        let text = summary_csv(&ResultTable::default());
        assert_eq!(text, format!("{SUMMARY_HEADER}\n"));
        assert!(parse_summary_csv(&text).unwrap().rows.is_empty());
    }

    #[test]
    fn malformed_summary_rejected() {
        assert!(parse_summary_csv("nope\n").is_err());
        assert!(parse_summary_csv(&format!("{SUMMARY_HEADER}\nrow,UncAPS,x,1,2,3\n")).is_err());
        assert!(parse_summary_csv(&format!("{SUMMARY_HEADER}\nrow,Other,1,1,2,3\n")).is_err());
    }
}
