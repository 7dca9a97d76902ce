//! Aggregated run results and their text and JSON renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{AddressPolicy, Direction, Role, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    CleanClose,
    ExpectedError,
    UnexpectedError,
    Timeout,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub requirement: String,
    pub direction: Direction,
    pub event_index: u64,
    pub detail: String,
}

impl Finding {
    fn of(v: &Verdict) -> Self {
        Finding {
            requirement: v.requirement.to_string(),
            direction: v.direction,
            event_index: v.event_index,
            detail: v.detail.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub index: u32,
    pub seed: u64,
    pub outcome: Outcome,
    pub end_reason: EndReason,
    /// Simulated or wall-clock milliseconds at the end of the iteration.
    pub end_ms: u64,
    #[serde(skip)]
    pub verdicts: Vec<Verdict>,
    /// Violations counted against the peer.
    pub violations: Vec<Finding>,
    pub advisories: Vec<Finding>,
    /// The tester's own violations, the stimulus included.
    pub tester_findings: Vec<Finding>,
}

impl IterationResult {
    /// Classifies the verdicts of one finished iteration.
    pub fn judge(index: u32, seed: u64, end_ms: u64, verdicts: Vec<Verdict>, include_advisory: bool, end: EndReason) -> Self {
        let violations: Vec<Finding> = verdicts.iter().filter(|v| v.counts_against_peer(include_advisory)).map(Finding::of).collect();
        let advisories = verdicts
            .iter()
            .filter(|v| v.is_violation() && v.direction == Direction::FromPeer && !v.counts_against_peer(include_advisory))
            .map(Finding::of)
            .collect();
        let tester_findings = verdicts
            .iter()
            .filter(|v| v.is_violation() && v.direction == Direction::FromTester)
            .map(Finding::of)
            .collect();
        let goal = verdicts.iter().any(|v| v.requirement == crate::engine::ids::GOAL_REACHED && !v.is_violation());
        let outcome = if violations.is_empty() && goal { Outcome::Pass } else { Outcome::Fail };
        let end_reason = if violations.is_empty() || end == EndReason::Timeout { end } else { EndReason::Violation };
        IterationResult { index, seed, outcome, end_reason, end_ms, verdicts, violations, advisories, tester_findings }
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub test: String,
    pub role: Role,
    pub target: String,
    pub policy: AddressPolicy,
    pub base_seed: u64,
    pub iterations: u32,
    pub passes: u32,
    /// 100 * passes / iterations.
    pub success_ratio: f64,
    pub histogram: BTreeMap<String, u64>,
    pub advisory_histogram: BTreeMap<String, u64>,
    pub degenerate: bool,
    pub results: Vec<IterationResult>,
}

impl Report {
    pub fn aggregate(test: &str, role: Role, target: String, policy: AddressPolicy, base_seed: u64, results: Vec<IterationResult>) -> Self {
        let iterations = results.len() as u32;
        let passes = results.iter().filter(|r| r.passed()).count() as u32;
        let mut histogram = BTreeMap::new();
        let mut advisory_histogram = BTreeMap::new();
        for r in &results {
            for f in &r.violations {
                *histogram.entry(f.requirement.clone()).or_insert(0) += 1;
            }
            for f in &r.advisories {
                *advisory_histogram.entry(f.requirement.clone()).or_insert(0) += 1;
            }
        }
        Report {
            test: test.to_string(),
            role,
            target,
            policy,
            base_seed,
            iterations,
            passes,
            success_ratio: success_ratio(passes, iterations),
            histogram,
            advisory_histogram,
            degenerate: iterations == 0,
            results,
        }
    }

    /// Most frequent requirement in the violation histogram.
    pub fn top_violation(&self) -> Option<(&str, u64)> {
        self.histogram.iter().max_by_key(|(k, n)| (**n, std::cmp::Reverse(k.as_str()))).map(|(k, n)| (k.as_str(), *n))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Report> {
        serde_json::from_str(text)
    }

    /// One `test  ratio%` row followed by the histogram.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<24}{:>7}", self.test, format_ratio(self.success_ratio));
        let _ = writeln!(s, "  role {}  target {}  iterations {}  passed {}", self.role, self.target, self.iterations, self.passes);
        if self.degenerate {
            let _ = writeln!(s, "  degenerate: no iterations");
        }
        for (k, n) in &self.histogram {
            let _ = writeln!(s, "  {k:<28}{n:>6}");
        }
        for (k, n) in &self.advisory_histogram {
            let _ = writeln!(s, "  {k:<28}{n:>6}  (advisory)");
        }
        s
    }
}

pub fn success_ratio(passes: u32, iterations: u32) -> f64 {
    if iterations == 0 {
        0.0
    } else {
        100.0 * passes as f64 / iterations as f64
    }
}

/// `97%`, or one decimal when the ratio is not whole.
pub fn format_ratio(r: f64) -> String {
    if r.fract() == 0.0 {
        format!("{r:.0}%")
    } else {
        format!("{r:.1}%")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Text,
    Structured,
}

pub fn render(report: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => report.to_text(),
        ReportFormat::Structured => report.to_json() + "\n",
    }
}

pub fn emit_report(report: &Report, format: ReportFormat, path: &Path) -> io::Result<()> {
    std::fs::write(path, render(report, format))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(index: u32, pass: bool) -> IterationResult {
        IterationResult {
            index,
            seed: index as u64,
            outcome: if pass { Outcome::Pass } else { Outcome::Fail },
            end_reason: if pass { EndReason::CleanClose } else { EndReason::Violation },
            end_ms: 10,
            verdicts: Vec::new(),
            violations: if pass {
                Vec::new()
            } else {
                vec![Finding { requirement: "PKT_PN_MONOTONIC".into(), direction: Direction::FromPeer, event_index: 3, detail: String::new() }]
            },
            advisories: Vec::new(),
            tester_findings: Vec::new(),
        }
    }

    #[test]
    fn ratio_row() {
        let results = (0..100).map(|i| result(i, i >= 3)).collect();
        let r = Report::aggregate("stream", Role::Server, "sim:conformant".into(), AddressPolicy::AppLevelOnly, 0, results);
        assert_eq!(r.success_ratio, 97.0);
        assert!(r.to_text().starts_with("stream"));
        assert!(r.to_text().lines().next().unwrap().ends_with("97%"));
        assert_eq!(r.histogram["PKT_PN_MONOTONIC"], 3);
        assert_eq!(r.top_violation(), Some(("PKT_PN_MONOTONIC", 3)));
        assert_eq!(format_ratio(200.0 / 3.0), "66.7%");
    }

    #[test]
    fn structured_round_trip() {
        let results = (0..7).map(|i| result(i, i % 2 == 0)).collect();
        let r = Report::aggregate("max", Role::Client, "sim:conformant".into(), AddressPolicy::AllLevels, 9, results);
        let back = Report::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        emit_report(&r, ReportFormat::Structured, &p).unwrap();
        assert_eq!(Report::from_json(&std::fs::read_to_string(&p).unwrap()).unwrap(), r);
        assert!(emit_report(&r, ReportFormat::Text, &dir.path().join("no/such/dir/r.txt")).is_err());
    }

    #[test]
    fn empty_is_degenerate() {
        let r = Report::aggregate("x", Role::Server, "trace".into(), AddressPolicy::AppLevelOnly, 0, Vec::new());
        assert!(r.degenerate);
        assert_eq!(r.success_ratio, 0.0);
    }
}
