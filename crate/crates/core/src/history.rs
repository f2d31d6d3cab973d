//! `history.csv` and `summary.csv`.
//!
//! Comma-separated, LF line endings, fixed header. Numbers use Rust's
//! shortest round-trip formatting; a missing best score is written as `nan`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trainer::{HistoryRow, MultiRunSummary};

pub const HISTORY_HEADER: &str = "generation,mean_fitness,best_fitness,sigma_mean,best_avg_score";
pub const SUMMARY_HEADER: &str = "run,final_score";

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

pub fn history_to_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(HISTORY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.generation,
            num(r.mean_fitness),
            num(r.best_fitness),
            num(r.sigma_mean),
            num(r.best_avg_score)
        );
    }
    out
}

pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    std::fs::write(path, history_to_csv(rows))?;
    Ok(())
}

/// Parses history CSV. At least one data row is required.
pub fn parse_history(path: &Path, text: &str) -> Result<Vec<HistoryRow>> {
    let err = |line: usize, msg: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == HISTORY_HEADER => {}
        Some((_, h)) => return Err(err(1, format!("expected header `{HISTORY_HEADER}`, found `{h}`"))),
        None => return Err(err(1, "empty file".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(err(lineno, format!("expected 5 fields, found {}", fields.len())));
        }
        let generation = fields[0]
            .trim()
            .parse::<usize>()
            .map_err(|e| err(lineno, format!("generation `{}`: {e}", fields[0])))?;
        let mut vals = [0.0; 4];
        for (slot, (name, field)) in vals.iter_mut().zip(
            ["mean_fitness", "best_fitness", "sigma_mean", "best_avg_score"]
                .iter()
                .zip(&fields[1..]),
        ) {
            *slot = field
                .trim()
                .parse::<f64>()
                .map_err(|e| err(lineno, format!("{name} `{field}`: {e}")))?;
        }
        rows.push(HistoryRow {
            generation,
            mean_fitness: vals[0],
            best_fitness: vals[1],
            sigma_mean: vals[2],
            best_avg_score: vals[3],
        });
    }
    if rows.is_empty() {
        return Err(err(1, "no data rows".into()));
    }
    Ok(rows)
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    parse_history(path, &text)
}

pub fn summary_to_csv(summary: &MultiRunSummary) -> String {
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for r in &summary.runs {
        let score = r.result.as_ref().map_or(f64::NAN, |s| *s);
        let _ = writeln!(out, "{},{}", r.run, num(score));
    }
    out
}
