//! Result records and the files written for each run.
//!
//! `results.csv` and `manifest.txt` depend only on the config and seeds, so
//! reruns are byte-identical. Wall-clock times go to `timing.csv`.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::Path;

use fluctfield_core::stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
    /// Exploratory output; never counts towards the exit code.
    Info,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::Inconclusive => "inconclusive",
            Outcome::Info => "info",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "pass" => Outcome::Pass,
            "fail" => Outcome::Fail,
            "inconclusive" => Outcome::Inconclusive,
            "info" => Outcome::Info,
            _ => return None,
        })
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub experiment: String,
    /// Parameter point, `key=value` pairs joined by `;`.
    pub point: String,
    pub quantity: String,
    pub estimate: f64,
    pub stderr: f64,
    pub target: Option<f64>,
    pub outcome: Outcome,
    /// Acceptance rule that produced the outcome.
    pub rule: String,
    pub wall_clock: f64,
}

impl ResultRecord {
    pub fn new(experiment: &str, point: impl Into<String>, quantity: impl Into<String>, est: Estimate) -> Self {
        ResultRecord {
            experiment: experiment.into(),
            point: point.into(),
            quantity: quantity.into(),
            estimate: est.value,
            stderr: est.stderr,
            target: None,
            outcome: Outcome::Info,
            rule: String::new(),
            wall_clock: 0.0,
        }
    }

    pub fn target(mut self, t: f64) -> Self {
        self.target = Some(t);
        self
    }

    pub fn judged(mut self, outcome: Outcome, rule: impl Into<String>) -> Self {
        self.outcome = outcome;
        self.rule = rule.into();
        self
    }

    pub fn timed(mut self, secs: f64) -> Self {
        self.wall_clock = secs;
        self
    }

    /// Pass when |estimate − target| ≤ k·stderr.
    pub fn within_sigmas(self, target: f64, k: f64) -> Self {
        let est = Estimate::new(self.estimate, self.stderr);
        let outcome = if est.within_sigmas(target, k) {
            Outcome::Pass
        } else {
            Outcome::Fail
        };
        self.target(target).judged(outcome, format!("|est-target|<={k}se"))
    }
}

/// Joins `key=value` pairs into a point label.
pub fn point(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

/// 0 when everything gating passed, 1 on any failure, 3 when nothing failed
/// but something was inconclusive.
pub fn exit_code(records: &[ResultRecord]) -> i32 {
    if records.iter().any(|r| r.outcome == Outcome::Fail) {
        1
    } else if records.iter().any(|r| r.outcome == Outcome::Inconclusive) {
        3
    } else {
        0
    }
}

fn num(x: f64) -> String {
    // Display gives the shortest string that round-trips
    x.to_string()
}

pub const RESULT_HEADER: [&str; 8] = [
    "experiment",
    "point",
    "quantity",
    "estimate",
    "stderr",
    "target",
    "outcome",
    "rule",
];

pub fn write_results(path: &Path, records: &[ResultRecord]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULT_HEADER)?;
    for r in records {
        w.write_record([
            r.experiment.as_str(),
            &r.point,
            &r.quantity,
            &num(r.estimate),
            &num(r.stderr),
            &r.target.map(num).unwrap_or_default(),
            r.outcome.as_str(),
            &r.rule,
        ])?;
    }
    w.flush()
}

pub fn write_timing(path: &Path, records: &[ResultRecord]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["experiment", "point", "quantity", "wall_clock_s"])?;
    for r in records {
        w.write_record([r.experiment.as_str(), &r.point, &r.quantity, &format!("{:.3}", r.wall_clock)])?;
    }
    w.flush()
}

pub fn read_results(path: &Path) -> io::Result<Vec<ResultRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    let bad = |what: &str| io::Error::new(io::ErrorKind::InvalidData, format!("{}: bad {what}", path.display()));
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        if row.len() != RESULT_HEADER.len() {
            return Err(bad("row length"));
        }
        let f = |i: usize| row[i].parse::<f64>().map_err(|_| bad(RESULT_HEADER[i]));
        out.push(ResultRecord {
            experiment: row[0].to_string(),
            point: row[1].to_string(),
            quantity: row[2].to_string(),
            estimate: f(3)?,
            stderr: f(4)?,
            target: if row[5].is_empty() { None } else { Some(f(5)?) },
            outcome: Outcome::parse(&row[6]).ok_or_else(|| bad("outcome"))?,
            rule: row[7].to_string(),
            wall_clock: 0.0,
        });
    }
    Ok(out)
}

/// `key = value` lines, sorted by key.
pub fn write_manifest(path: &Path, entries: &BTreeMap<String, String>) -> io::Result<()> {
    let mut s = String::new();
    for (k, v) in entries {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(v);
        s.push('\n');
    }
    std::fs::write(path, s)
}
