//! CSV persistence of round reports and per-seed summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fedsim::RoundReport;
use crate::metrics::PerformanceSummary;

pub const ROUNDS_HEADER: &str =
    "round,sampled_ids,mean_feedback,decision_loss,decision,eval_avg,eval_worst10,eval_best10,gini_x100,gap";
pub const SUMMARY_HEADER: &str = "seed,eval_avg,eval_worst10,eval_best10,gini_x100,gap";

pub fn rounds_file_name(seed: u64) -> String {
    format!("rounds_seed{seed}.csv")
}

pub const SUMMARY_FILE: &str = "summary.csv";

/// Twelve significant digits, scientific notation.
pub fn format_weight(x: f64) -> String {
    format!("{x:.11e}")
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn summary_cells(s: &PerformanceSummary) -> String {
    format!(
        "{},{},{},{},{}",
        s.average, s.worst10, s.best10, s.gini_x100, s.acc_parity_gap
    )
}

pub fn rounds_csv(reports: &[RoundReport]) -> String {
    let mut out = String::from(ROUNDS_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.round,
            join(&r.sampled_ids),
            r.mean_feedback,
            r.decision_loss,
            join(r.decision.iter().map(|x| format_weight(*x))),
            summary_cells(&r.eval),
        );
    }
    out
}

/// Per-seed rows, then a `mean` row and a `std` row (sample standard
/// deviation; zero for a single seed).
pub fn summary_csv(summaries: &[(u64, PerformanceSummary)]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (seed, s) in summaries {
        let _ = writeln!(out, "{seed},{}", summary_cells(s));
    }
    if summaries.is_empty() {
        return out;
    }
    let columns = |s: &PerformanceSummary| [s.average, s.worst10, s.best10, s.gini_x100, s.acc_parity_gap];
    let n = summaries.len() as f64;
    let mut mean = [0.0; 5];
    for (_, s) in summaries {
        for (m, v) in mean.iter_mut().zip(columns(s)) {
            *m += v / n;
        }
    }
    let mut std = [0.0; 5];
    if summaries.len() > 1 {
        for (_, s) in summaries {
            for ((sd, v), m) in std.iter_mut().zip(columns(s)).zip(mean) {
                *sd += (v - m).powi(2) / (n - 1.0);
            }
        }
        std.iter_mut().for_each(|v| *v = v.sqrt());
    }
    let cells = |v: [f64; 5]| v.map(|x| x.to_string()).join(",");
    let _ = writeln!(out, "mean,{}", cells(mean));
    let _ = writeln!(out, "std,{}", cells(std));
    out
}

fn write_file(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

pub fn write_rounds(dir: &Path, seed: u64, reports: &[RoundReport]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(rounds_file_name(seed));
    write_file(path.clone(), &rounds_csv(reports))?;
    Ok(path)
}

pub fn write_summary(dir: &Path, summaries: &[(u64, PerformanceSummary)]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(SUMMARY_FILE);
    write_file(path.clone(), &summary_csv(summaries))?;
    Ok(path)
}

/// Writes every seed's rounds file and the shared summary.
pub fn write_results(
    dir: &Path,
    reports: &[(u64, Vec<RoundReport>)],
    summaries: &[(u64, PerformanceSummary)],
) -> Result<()> {
    for (seed, r) in reports {
        write_rounds(dir, *seed, r)?;
    }
    write_summary(dir, summaries)?;
    Ok(())
}
