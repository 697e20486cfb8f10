//! Aggregates `report.json` files from run directories.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::run::RunReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Unreadable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub dir: PathBuf,
    pub scenario: Option<String>,
    pub status: Status,
    pub checks_passed: usize,
    pub checks_total: usize,
    /// Failed check names, or the reason the report could not be read.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<Row>,
    pub pass: bool,
}

fn read_one(dir: &Path) -> Row {
    let unreadable = |why: String| Row {
        dir: dir.to_path_buf(),
        scenario: None,
        status: Status::Unreadable,
        checks_passed: 0,
        checks_total: 0,
        failures: vec![why],
    };
    let text = match fs::read_to_string(dir.join("report.json")) {
        Ok(t) => t,
        Err(e) => return unreadable(format!("report.json: {e}")),
    };
    let r: RunReport = match serde_json::from_str(&text) {
        Ok(r) => r,
        Err(e) => return unreadable(format!("report.json: {e}")),
    };
    let failures: Vec<String> = r.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    let pass = r.pass && failures.is_empty() && !r.checks.is_empty();
    Row {
        dir: dir.to_path_buf(),
        scenario: Some(r.scenario),
        status: if pass { Status::Pass } else { Status::Fail },
        checks_passed: r.checks.len() - failures.len(),
        checks_total: r.checks.len(),
        failures,
    }
}

/// A directory holding `report.json` is one run; otherwise its immediate
/// subdirectories with a `report.json` are. A directory with neither is
/// reported as unreadable.
pub fn summarize(dirs: &[PathBuf]) -> Summary {
    let mut rows = Vec::new();
    for d in dirs {
        if d.join("report.json").exists() {
            rows.push(read_one(d));
            continue;
        }
        let mut subs: Vec<PathBuf> = fs::read_dir(d)
            .map(|it| it.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.join("report.json").exists()).collect())
            .unwrap_or_default();
        subs.sort();
        if subs.is_empty() {
            rows.push(read_one(d));
        }
        rows.extend(subs.iter().map(|s| read_one(s)));
    }
    let pass = !rows.is_empty() && rows.iter().all(|r| r.status == Status::Pass);
    Summary { rows, pass }
}

pub fn render_table(s: &Summary) -> String {
    let name = |r: &Row| r.scenario.clone().unwrap_or_else(|| r.dir.display().to_string());
    let width = s.rows.iter().map(|r| name(r).len()).max().unwrap_or(8).max(8);
    let mut out = format!("{:<width$}  {:<10}  {:>7}  notes\n", "scenario", "status", "checks");
    for r in &s.rows {
        let status = match r.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Unreadable => "UNREADABLE",
        };
        let checks = format!("{}/{}", r.checks_passed, r.checks_total);
        out.push_str(&format!("{:<width$}  {:<10}  {:>7}  {}\n", name(r), status, checks, r.failures.join(", ")));
    }
    let passed = s.rows.iter().filter(|r| r.status == Status::Pass).count();
    out.push_str(&format!("{passed}/{} runs passed\n", s.rows.len()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::run::{CheckOutcome, Mode};

    fn run(pass: &[bool]) -> RunReport {
        RunReport {
            scenario: "s".into(),
            mode: Mode::Verify,
            seed: 0,
            eps: vec![1e-6],
            pass: pass.iter().all(|&p| p),
            checks: pass
                .iter()
                .enumerate()
                .map(|(i, &p)| CheckOutcome {
                    name: format!("c{i}"),
                    pass: p,
                    error: None,
                    detail: String::new(),
                    values: Default::default(),
                    artifacts: vec![],
                })
                .collect(),
        }
    }

    fn put(dir: &Path, r: &RunReport) {
        fs::create_dir_all(dir).unwrap();
        fs::write(dir.join("report.json"), serde_json::to_string(r).unwrap()).unwrap();
    }

    #[test]
    fn collects_subdirectories() {
        let tmp = tempfile::tempdir().unwrap();
        put(&tmp.path().join("b"), &run(&[true, false]));
        put(&tmp.path().join("a"), &run(&[true]));
        let s = summarize(&[tmp.path().to_path_buf()]);
        assert!(!s.pass);
        assert_eq!(s.rows.len(), 2);
        assert_eq!(s.rows[0].status, Status::Pass);
        assert_eq!(s.rows[1].status, Status::Fail);
        assert_eq!(s.rows[1].failures, ["c1"]);
        assert!(render_table(&s).ends_with("1/2 runs passed\n"));
    }

    #[test]
    fn empty_runs_do_not_pass() {
        let tmp = tempfile::tempdir().unwrap();
        put(tmp.path(), &run(&[]));
        assert_eq!(summarize(&[tmp.path().to_path_buf()]).rows[0].status, Status::Fail);
        assert!(!summarize(&[]).pass);
    }

    #[test]
    fn missing_dir_is_unreadable() {
        let s = summarize(&[PathBuf::from("/nonexistent/run")]);
        assert_eq!(s.rows[0].status, Status::Unreadable);
        assert!(!s.pass);
    }
}
