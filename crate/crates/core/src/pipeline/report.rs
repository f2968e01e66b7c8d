//! Run reports, duplicate-bug folding and efficiency metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Serialize, Serializer};

use crate::generator::{SkipRecord, SynthesizedCase};
use crate::matcher::{covered_apis, CandidatePair, FilterVerdict};
use crate::oracle::{Verdict, VerdictKind};

/// One API bug after folding: every case that hit the same oracle on the
/// same target API.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct ApiBug {
    pub target_api: String,
    pub oracle: String,
    pub bug_kind: String,
    pub cases: Vec<String>,
}

/// Folds Bug verdicts on (target API, oracle fingerprint).
pub fn fold_bugs(verdicts: &[Verdict]) -> Vec<ApiBug> {
    let mut folded: BTreeMap<(String, String), (String, BTreeSet<String>)> = BTreeMap::new();
    for v in verdicts {
        if let VerdictKind::Bug(kind) = &v.kind {
            folded
                .entry((v.target_api.clone(), v.evidence.oracle.clone()))
                .or_insert_with(|| (kind.to_string(), BTreeSet::new()))
                .1
                .insert(v.case_id.clone());
        }
    }
    folded
        .into_iter()
        .map(|((target_api, oracle), (bug_kind, cases))| ApiBug {
            target_api,
            oracle,
            bug_kind,
            cases: cases.into_iter().collect(),
        })
        .collect()
}

/// Known bugs to hide from reports: a target API alone, or a target API
/// followed by whitespace and an oracle fingerprint.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Suppressions {
    apis: BTreeSet<String>,
    exact: BTreeSet<(String, String)>,
}

impl Suppressions {
    pub fn parse(text: &str) -> Self {
        let mut out = Self::default();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once(char::is_whitespace) {
                Some((api, oracle)) => {
                    out.exact.insert((api.to_string(), oracle.trim().to_string()));
                }
                None => {
                    out.apis.insert(line.to_string());
                }
            }
        }
        out
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn hides(&self, bug: &ApiBug) -> bool {
        self.apis.contains(&bug.target_api) || self.exact.contains(&(bug.target_api.clone(), bug.oracle.clone()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub function_groups: usize,
    /// `provenance/verdict` -> count.
    pub pairs: BTreeMap<String, usize>,
    pub apis_covered: usize,
    pub bug_cases: usize,
    pub cases_generated: usize,
    pub cases_triggering: usize,
    pub no_bug: usize,
    pub inconclusive: usize,
    pub not_run: usize,
    pub bugs_by_kind: BTreeMap<String, usize>,
    pub inconclusive_by_reason: BTreeMap<String, usize>,
    pub skips_by_reason: BTreeMap<String, usize>,
    pub api_bugs: usize,
    pub suppressed: usize,
    /// Generate plus evaluate. Kept out of the serialized report so that
    /// reports of repeated runs compare equal.
    #[serde(skip)]
    pub detection_wall_time_s: Option<f64>,
}

/// Everything a report is reduced from.
pub struct ReportInputs<'a> {
    pub function_groups: usize,
    pub bug_cases: usize,
    pub pairs: &'a [CandidatePair],
    pub cases: &'a [SynthesizedCase],
    pub skips: &'a [SkipRecord],
    pub verdicts: &'a [Verdict],
    pub suppressions: &'a Suppressions,
    pub detection_wall_time_s: Option<f64>,
}

/// One line of `report.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportLine {
    Summary {
        #[serde(flatten)]
        report: RunReport,
        #[serde(serialize_with = "metric_or_undefined")]
        trigger_ratio: Option<f64>,
    },
    ApiBug(ApiBug),
    Case {
        case_id: String,
        target_api: String,
        source_case_id: String,
        outcome: String,
    },
}

/// A number, or the string `"undefined"` where a ratio had no denominator.
pub fn metric_or_undefined<S: Serializer>(value: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match value {
        Some(v) => s.serialize_f64(*v),
        None => s.serialize_str("undefined"),
    }
}

pub fn format_metric(value: Option<f64>) -> String {
    value.map_or_else(|| "undefined".to_string(), |v| format!("{v:.2}"))
}

pub struct BuiltReport {
    pub report: RunReport,
    pub api_bugs: Vec<ApiBug>,
    pub lines: Vec<ReportLine>,
}

pub fn build_report(inputs: &ReportInputs<'_>) -> BuiltReport {
    let mut report = RunReport {
        function_groups: inputs.function_groups,
        bug_cases: inputs.bug_cases,
        apis_covered: covered_apis(inputs.pairs).len(),
        cases_generated: inputs.cases.len(),
        detection_wall_time_s: inputs.detection_wall_time_s,
        ..RunReport::default()
    };
    for p in inputs.pairs {
        let verdict = match &p.filter_verdict {
            FilterVerdict::Accept => "accept",
            FilterVerdict::Reject { .. } => "reject",
        };
        *report.pairs.entry(format!("{}/{verdict}", p.provenance)).or_default() += 1;
    }
    for s in inputs.skips {
        *report.skips_by_reason.entry(s.reason.label().to_string()).or_default() += 1;
    }

    let by_case: BTreeMap<&str, &Verdict> = inputs.verdicts.iter().map(|v| (v.case_id.as_str(), v)).collect();
    let mut case_lines = Vec::new();
    let mut cases: Vec<&SynthesizedCase> = inputs.cases.iter().collect();
    cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    for case in cases {
        let outcome = match by_case.get(case.case_id.as_str()) {
            None => {
                report.not_run += 1;
                "not-run".to_string()
            }
            Some(v) => {
                match &v.kind {
                    VerdictKind::Bug(kind) => {
                        report.cases_triggering += 1;
                        *report.bugs_by_kind.entry(kind.to_string()).or_default() += 1;
                    }
                    VerdictKind::NoBug => report.no_bug += 1,
                    VerdictKind::Inconclusive(reason) => {
                        report.inconclusive += 1;
                        let label = reason.to_string();
                        let label = label.split(' ').next().unwrap_or_default().to_string();
                        *report.inconclusive_by_reason.entry(label).or_default() += 1;
                    }
                }
                v.kind.to_string()
            }
        };
        case_lines.push(ReportLine::Case {
            case_id: case.case_id.clone(),
            target_api: case.target_api.clone(),
            source_case_id: case.source_case_id.clone(),
            outcome,
        });
    }

    let known: BTreeSet<&str> = inputs.cases.iter().map(|c| c.case_id.as_str()).collect();
    let verdicts: Vec<Verdict> = inputs
        .verdicts
        .iter()
        .filter(|v| known.contains(v.case_id.as_str()))
        .cloned()
        .collect();
    let (hidden, api_bugs): (Vec<ApiBug>, Vec<ApiBug>) = fold_bugs(&verdicts)
        .into_iter()
        .partition(|b| inputs.suppressions.hides(b));
    report.api_bugs = api_bugs.len();
    report.suppressed = hidden.len();

    let metrics = compute_metrics(&report);
    let mut lines = vec![ReportLine::Summary {
        report: report.clone(),
        trigger_ratio: metrics.trigger_ratio,
    }];
    lines.extend(api_bugs.iter().cloned().map(ReportLine::ApiBug));
    lines.extend(case_lines);
    BuiltReport {
        report,
        api_bugs,
        lines,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    /// Percentage of generated cases that triggered a bug.
    #[serde(serialize_with = "metric_or_undefined")]
    pub trigger_ratio: Option<f64>,
    /// Detection wall time per Bug verdict, in minutes.
    #[serde(serialize_with = "metric_or_undefined")]
    pub avg_time_to_bug_min: Option<f64>,
}

pub fn trigger_ratio(valid: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| 100.0 * valid as f64 / total as f64)
}

pub fn avg_time_to_bug_min(detection_wall_time_s: f64, bugs: usize) -> Option<f64> {
    (bugs > 0).then(|| detection_wall_time_s / 60.0 / bugs as f64)
}

pub fn compute_metrics(report: &RunReport) -> Metrics {
    Metrics {
        trigger_ratio: trigger_ratio(report.cases_triggering, report.cases_generated),
        avg_time_to_bug_min: report
            .detection_wall_time_s
            .and_then(|t| avg_time_to_bug_min(t, report.cases_triggering)),
    }
}

fn table(out: &mut String, title: &str, rows: &BTreeMap<String, usize>) {
    if rows.is_empty() {
        return;
    }
    let _ = writeln!(out, "\n{title}");
    for (k, v) in rows {
        let _ = writeln!(out, "  {k:<32} {v:>6}");
    }
}

/// Plain-text summary. Contains no timing so repeated runs compare equal.
pub fn render_text(built: &BuiltReport) -> String {
    let r = &built.report;
    let m = compute_metrics(r);
    let mut out = String::new();
    let rows = [
        ("function groups", r.function_groups.to_string()),
        ("apis covered", r.apis_covered.to_string()),
        ("bug cases", r.bug_cases.to_string()),
        ("cases generated", r.cases_generated.to_string()),
        ("cases triggering bugs", r.cases_triggering.to_string()),
        ("no bug", r.no_bug.to_string()),
        ("inconclusive", r.inconclusive.to_string()),
        ("not run", r.not_run.to_string()),
        ("api bugs (folded)", r.api_bugs.to_string()),
        ("suppressed", r.suppressed.to_string()),
        ("trigger ratio %", format_metric(m.trigger_ratio)),
    ];
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<34} {v:>6}");
    }
    table(&mut out, "pairs (provenance/filter)", &r.pairs);
    table(&mut out, "bugs by kind", &r.bugs_by_kind);
    table(&mut out, "inconclusive by reason", &r.inconclusive_by_reason);
    table(&mut out, "skips by reason", &r.skips_by_reason);
    if !built.api_bugs.is_empty() {
        let _ = writeln!(out, "\napi bugs");
        for b in &built.api_bugs {
            let _ = writeln!(
                out,
                "  {} [{}] {} ({} cases)",
                b.target_api,
                b.bug_kind,
                b.oracle,
                b.cases.len()
            );
        }
    }
    out
}
