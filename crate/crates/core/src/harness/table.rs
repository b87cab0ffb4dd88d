//! Per-method summary of transfer runs, in steps ÷ 1000.

use std::fmt::Write as _;
use std::path::Path;

use crate::curriculum::{Method, TransferReport};
use crate::error::{Error, Result};
use crate::homotopy::fmt_f64;

/// More than half of the runs failed.
pub fn over_budget(converged: &[bool]) -> bool {
    let failed = converged.iter().filter(|c| !**c).count();
    2 * failed > converged.len()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: Method,
    pub env: String,
    pub seeds: Vec<u64>,
    pub converged: usize,
    pub failed: usize,
    /// Mean and sample standard deviation of `total_steps` over every run,
    /// failed ones included, in thousands.
    pub mean_steps_k: f64,
    pub std_steps_k: f64,
    pub over_budget: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsTable {
    pub rows: Vec<TableRow>,
}

impl ResultsTable {
    pub const CSV_HEADER: &'static str =
        "method,env,runs,converged,failed,mean_steps_k,std_steps_k,over_budget";

    /// Groups reports by `(method, env)` in method order, then env name.
    pub fn from_reports(reports: &[TransferReport]) -> Self {
        let mut keys: Vec<(Method, String)> = reports.iter().map(|r| (r.method, r.env.clone())).collect();
        keys.sort();
        keys.dedup();
        let rows = keys
            .into_iter()
            .map(|(method, env)| {
                let mut group: Vec<&TransferReport> =
                    reports.iter().filter(|r| r.method == method && r.env == env).collect();
                group.sort_by_key(|r| r.seed);
                let steps: Vec<f64> = group.iter().map(|r| r.total_steps as f64 / 1000.0).collect();
                let n = steps.len() as f64;
                let mean = steps.iter().sum::<f64>() / n;
                let var = if steps.len() > 1 {
                    steps.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                let outcomes: Vec<bool> = group.iter().map(|r| r.converged).collect();
                let converged = outcomes.iter().filter(|c| **c).count();
                TableRow {
                    method,
                    env,
                    seeds: group.iter().map(|r| r.seed).collect(),
                    converged,
                    failed: outcomes.len() - converged,
                    mean_steps_k: mean,
                    std_steps_k: var.sqrt(),
                    over_budget: over_budget(&outcomes),
                }
            })
            .collect();
        ResultsTable { rows }
    }

    pub fn row(&self, method: Method) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.method.name(),
                r.env,
                r.seeds.len(),
                r.converged,
                r.failed,
                fmt_f64(r.mean_steps_k),
                fmt_f64(r.std_steps_k),
                r.over_budget
            );
        }
        out
    }

    /// Aligned text; the step column reads `>budget` under the majority rule.
    pub fn to_text(&self) -> String {
        let header = ["method", "env", "runs", "failed", "steps (k)", "std (k)"];
        let body: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                let (mean, std) = if r.over_budget {
                    (">budget".to_string(), "-".to_string())
                } else {
                    (format!("{:.1}", r.mean_steps_k), format!("{:.1}", r.std_steps_k))
                };
                [
                    r.method.name().to_string(),
                    r.env.clone(),
                    r.seeds.len().to_string(),
                    r.failed.to_string(),
                    mean,
                    std,
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[&str]| -> String {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&header);
        for row in &body {
            out += &line(&row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }
}

/// Parses one row written by [`TransferReport::csv_row`].
pub fn parse_run_row(line: &str) -> Option<TransferReport> {
    let f: Vec<&str> = line.trim_end().split(',').collect();
    let [method, env, seed, total, converged, stages, ret, class] = f.as_slice() else {
        return None;
    };
    let method = [
        Method::EaseReward,
        Method::EaseBarrier,
        Method::Naive,
        Method::L2sp,
        Method::Random,
    ]
    .into_iter()
    .find(|m| m.name() == *method)?;
    let stage_steps = if stages.is_empty() {
        Vec::new()
    } else {
        stages.split(';').map(str::parse).collect::<std::result::Result<_, _>>().ok()?
    };
    let converged: bool = converged.parse().ok()?;
    Some(TransferReport {
        method,
        env: env.to_string(),
        seed: seed.parse().ok()?,
        total_steps: total.parse().ok()?,
        converged,
        stage_steps,
        final_mean_return: ret.parse().ok()?,
        final_class: (*class != "none").then(|| class.to_string()),
        failed_stage: None,
    })
}

/// Reads `run.csv` from every run directory below `runs_dir`, in path order.
pub fn read_run_reports(runs_dir: &Path) -> Result<Vec<TransferReport>> {
    let mut files = Vec::new();
    collect_named(runs_dir, "run.csv", &mut files)?;
    files.sort();
    if files.is_empty() {
        return Err(Error::MissingData(format!("no run.csv below {}", runs_dir.display())));
    }
    files
        .iter()
        .map(|path| {
            let text = std::fs::read_to_string(path)?;
            text.lines()
                .nth(1)
                .and_then(parse_run_row)
                .ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    message: "expected a header and one run row".into(),
                })
        })
        .collect()
}

pub(crate) fn collect_named(dir: &Path, name: &str, out: &mut Vec<std::path::PathBuf>) -> Result<()> {
    if !dir.is_dir() {
        return Ok(());
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_named(&path, name, out)?;
        } else if path.file_name().is_some_and(|n| n == name) {
            out.push(path);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(method: Method, seed: u64, steps: u64, converged: bool) -> TransferReport {
        TransferReport {
            method,
            env: "nav1-7".into(),
            seed,
            total_steps: steps,
            converged,
            stage_steps: vec![steps],
            final_mean_return: -1.5,
            final_class: converged.then(|| "R".to_string()),
            failed_stage: None,
        }
    }

    #[test]
    fn majority_rule() {
        assert!(!over_budget(&[true, true, false, false, true]));
        assert!(over_budget(&[false, true, false, false, true]));
        assert!(!over_budget(&[true, false]));
        assert!(over_budget(&[false]));
    }

    #[test]
    fn three_of_five_failures_mark_the_row() {
        let reports: Vec<_> = (0..5)
            .map(|s| report(Method::Naive, s, 200_000, s >= 3))
            .chain((0..5).map(|s| report(Method::EaseBarrier, s, 100_000 + s * 1000, true)))
            .collect();
        let t = ResultsTable::from_reports(&reports);
        assert_eq!(t.rows.len(), 2);
        let naive = t.row(Method::Naive).unwrap();
        assert_eq!((naive.failed, naive.over_budget), (3, true));
        let ease = t.row(Method::EaseBarrier).unwrap();
        assert!((ease.mean_steps_k - 102.0).abs() < 1e-12);
        assert!(!ease.over_budget);
        let text = t.to_text();
        assert!(text.contains(">budget"));
        assert!(text.contains("102.0"));
    }

    #[test]
    fn run_rows_round_trip() {
        let r = TransferReport {
            final_class: None,
            ..report(Method::L2sp, 4, 1234, false)
        };
        assert_eq!(parse_run_row(&r.csv_row()), Some(r));
    }
}
