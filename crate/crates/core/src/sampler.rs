//! Screening of exported issue dumps and extraction of bug cases.

use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    validate_call, Anomaly, ApiSignature, BugCase, BugKind, Comparator, ExceptionSignature, MeasurementRecipe, Metric,
    OracleSpec, StructuredCall, Value, Violation, DEFAULT_MARGIN,
};
use crate::oracle::normalize_exception;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IssueState {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub issue_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub labels: BTreeSet<String>,
    #[serde(default)]
    pub comment_count: u32,
    pub state: IssueState,
    #[serde(default)]
    pub linked_changes: u32,
    #[serde(default)]
    pub code_blocks: Vec<String>,
    #[serde(default)]
    pub hardware_markers: BTreeSet<String>,
    /// Manually assigned bug kind; issues without one are screened but not
    /// extracted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind_hint: Option<BugKind>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplerPolicy {
    pub bug_labels: BTreeSet<String>,
    pub hardware_exclusions: BTreeSet<String>,
    pub min_comments: u32,
}

impl Default for SamplerPolicy {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            bug_labels: owned(&[
                "bug",
                "crash",
                "performance",
                "type:bug",
                "type:performance",
                "module: crash",
            ]),
            hardware_exclusions: owned(&["m1", "mps", "apple-silicon", "rocm", "tpu"]),
            min_comments: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiscardReason {
    NoCode,
    NotBugLabeled,
    HardwareSpecific,
    LowEngagement,
    ClosedWithoutChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScreenVerdict {
    Keep,
    Discard(DiscardReason),
}

fn intersects_ci(a: &BTreeSet<String>, b: &BTreeSet<String>) -> bool {
    let b: BTreeSet<String> = b.iter().map(|s| s.to_lowercase()).collect();
    a.iter().any(|s| b.contains(&s.to_lowercase()))
}

/// Applies the screening gates in order; the first failing gate decides.
/// Label and hardware comparisons ignore case.
pub fn screen_issue(issue: &IssueRecord, policy: &SamplerPolicy) -> ScreenVerdict {
    use DiscardReason::*;
    let verdict = if issue.code_blocks.iter().all(|b| b.trim().is_empty()) {
        Some(NoCode)
    } else if !intersects_ci(&issue.labels, &policy.bug_labels) {
        Some(NotBugLabeled)
    } else if intersects_ci(&issue.hardware_markers, &policy.hardware_exclusions) {
        Some(HardwareSpecific)
    } else if issue.comment_count < policy.min_comments {
        Some(LowEngagement)
    } else if issue.state == IssueState::Closed && issue.linked_changes == 0 {
        Some(ClosedWithoutChange)
    } else {
        None
    };
    verdict.map_or(ScreenVerdict::Keep, ScreenVerdict::Discard)
}

fn token_regex() -> Regex {
    Regex::new(r"[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*").unwrap()
}

/// Whole-token match: the full name, its terminal segment, or any dotted
/// suffix of it (`nn.Conv2d` for `torch.nn.Conv2d`). Case-sensitive.
pub fn token_names_api(token: &str, api: &str) -> bool {
    token == api
        || (api.len() > token.len() && api.ends_with(token) && api.as_bytes()[api.len() - token.len() - 1] == b'.')
}

/// Picks the most-mentioned known API that also appears in the issue's code.
pub fn identify_problematic_api(issue: &IssueRecord, api_index: &BTreeSet<String>) -> Option<String> {
    let tokens = token_regex();
    let text = format!("{}\n{}", issue.title, issue.body);
    // api -> (mentions, first mention offset)
    let mut mentions: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for m in tokens.find_iter(&text) {
        for api in api_index {
            if token_names_api(m.as_str(), api) {
                let entry = mentions.entry(api.as_str()).or_insert((0, m.start()));
                entry.0 += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, (usize, usize))> = mentions.into_iter().collect();
    ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)).then(a.0.cmp(b.0)));

    ranked
        .into_iter()
        .map(|(api, _)| api)
        .find(|api| {
            issue
                .code_blocks
                .iter()
                .any(|block| tokens.find_iter(block).any(|m| token_names_api(m.as_str(), api)))
        })
        .map(str::to_string)
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum ExtractionFailure {
    #[error("no parsable call to the API in any code block: {0}")]
    UnparsableCall(String),
    #[error("performance case has no code computing the expected overhead")]
    NoOverheadRecipe,
    #[error("call passes {given} positional values but the signature has {available} parameters")]
    PositionalArityMismatch { given: usize, available: usize },
    #[error("extracted call does not fit the signature: {0:?}")]
    CallViolations(Vec<Violation>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub bug_case: BugCase,
    /// The issue carried more than one code block; the first block
    /// containing the API was used.
    pub multi_block: bool,
}

const TIME_MARKERS: &[&str] = &[
    "time.time(",
    "time.perf_counter(",
    "time.monotonic(",
    "timeit",
    "torch.cuda.Event(",
    "torch.cuda.synchronize(",
];
const MEMORY_MARKERS: &[&str] = &[
    "max_memory_allocated(",
    "memory_allocated(",
    "memory_reserved(",
    "tracemalloc",
    "getrusage(",
    "memory_usage(",
    "get_memory_info(",
];

/// Parses the first block calling `api` into a named-argument call and
/// attaches an oracle skeleton of the hinted kind.
pub fn extract_bug_case(
    issue: &IssueRecord,
    api: &ApiSignature,
    kind_hint: BugKind,
    api_tokens: &BTreeSet<String>,
) -> Result<Extraction, ExtractionFailure> {
    let tokens = token_regex();
    let mut found = None;
    for block in &issue.code_blocks {
        for m in tokens.find_iter(block) {
            if token_names_api(m.as_str(), &api.name) && block[m.end()..].trim_start().starts_with('(') {
                found = Some((block.as_str(), m.start(), m.end()));
                break;
            }
        }
        if found.is_some() {
            break;
        }
    }
    let Some((block, call_start, name_end)) = found else {
        return Err(ExtractionFailure::UnparsableCall(format!(
            "no code block calls {}",
            api.name
        )));
    };
    let open = name_end + block[name_end..].find('(').expect("checked above");
    let (args, close) = callparse::parse_arguments(block, open).map_err(ExtractionFailure::UnparsableCall)?;

    let params: Vec<&str> = api.params().map(|p| p.name.as_str()).collect();
    let positional = args.iter().filter(|a| a.0.is_none()).count();
    if positional > params.len() {
        return Err(ExtractionFailure::PositionalArityMismatch {
            given: positional,
            available: params.len(),
        });
    }
    let mut call = StructuredCall::new(api.name.clone());
    let mut next_positional = 0;
    for (name, value) in args {
        let name = match name {
            Some(n) => n,
            None => {
                next_positional += 1;
                params[next_positional - 1].to_string()
            }
        };
        if call.bound_args.insert(name.clone(), value).is_some() {
            return Err(ExtractionFailure::UnparsableCall(format!(
                "argument {name:?} bound twice"
            )));
        }
    }

    // Lines other than the one(s) spanned by the call become setup.
    let line_start = block[..call_start].rfind('\n').map_or(0, |i| i + 1);
    let line_end = block[close..].find('\n').map_or(block.len(), |i| close + i);
    call.setup_steps = block[..line_start]
        .lines()
        .chain(block[line_end..].lines())
        .map(str::trim_end)
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();

    validate_call(&call, api).map_err(ExtractionFailure::CallViolations)?;

    let oracle = oracle_skeleton(issue, &call, kind_hint, api_tokens)?;
    let bug_case = BugCase {
        case_id: format!("issue-{}", issue.issue_id),
        source_api: api.name.clone(),
        repro_call: call,
        bug_kind: kind_hint,
        oracle,
        origin_issue: Some(issue.issue_id.clone()),
    };
    Ok(Extraction {
        bug_case,
        multi_block: issue.code_blocks.len() > 1,
    })
}

fn oracle_skeleton(
    issue: &IssueRecord,
    call: &StructuredCall,
    kind: BugKind,
    api_tokens: &BTreeSet<String>,
) -> Result<OracleSpec, ExtractionFailure> {
    let texts = || std::iter::once(issue.body.as_str()).chain(issue.code_blocks.iter().map(String::as_str));
    match kind {
        BugKind::Status => {
            let exc = Regex::new(r"(?m)^\s*([A-Za-z_][\w.]*(?:Error|Exception|Exit|Interrupt)):[ \t]*(.*)$").unwrap();
            let signature = texts()
                .find_map(|t| exc.captures(t))
                .map(|c| normalize_exception(&c[1], &c[2], api_tokens))
                .unwrap_or_else(ExceptionSignature::hard_crash);
            Ok(OracleSpec::Status {
                exception_signature: signature,
            })
        }
        BugKind::Value => {
            let words = Regex::new(r"(?i)\b(nan|inf|infinity)\b").unwrap();
            let hit = words.captures(&issue.body).map(|c| c[1].to_lowercase());
            let anomaly_pattern = match hit.as_deref() {
                Some("nan") => Anomaly::Nan,
                Some(_) => Anomaly::Inf,
                None => Anomaly::MismatchToken,
            };
            Ok(OracleSpec::Value {
                anomaly_pattern,
                pattern_detail: None,
            })
        }
        BugKind::Performance => {
            let code = issue.code_blocks.join("\n");
            let has = |markers: &[&str]| markers.iter().any(|m| code.contains(m));
            let metric = if has(MEMORY_MARKERS) {
                Metric::PeakMemoryMegabytes
            } else if has(TIME_MARKERS) {
                Metric::WallTimeSeconds
            } else {
                return Err(ExtractionFailure::NoOverheadRecipe);
            };
            let mut body_call = call.clone();
            body_call.setup_steps.clear();
            let recipe = MeasurementRecipe {
                metric,
                repetitions: 5,
                warmup_runs: 1,
                body: vec![body_call],
            };
            Ok(OracleSpec::Performance {
                baseline_recipe: recipe.clone(),
                subject_recipe: recipe,
                comparator: Comparator::SubjectExceedsBaseline,
                margin: DEFAULT_MARGIN,
            })
        }
    }
}

/// Minimal literal-argument grammar: positional literals and `name=value`
/// keywords, where a literal is a number, boolean, quoted string, tuple or
/// list.
mod callparse {
    use super::Value;
    use crate::corpus::ShapeTuple;

    type Arg = (Option<String>, Value);

    struct Cursor<'a> {
        src: &'a [u8],
        pos: usize,
    }

    impl Cursor<'_> {
        fn skip_ws(&mut self) {
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
        }

        fn peek(&mut self) -> Option<u8> {
            self.skip_ws();
            self.src.get(self.pos).copied()
        }

        fn expect(&mut self, c: u8) -> Result<(), String> {
            if self.peek() == Some(c) {
                self.pos += 1;
                Ok(())
            } else {
                Err(format!("expected {:?} at offset {}", c as char, self.pos))
            }
        }

        fn ident(&mut self) -> Option<String> {
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
            {
                self.pos += 1;
            }
            if self.pos > start && !self.src[start].is_ascii_digit() {
                Some(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
            } else {
                self.pos = start;
                None
            }
        }
    }

    /// Parses the argument list whose `(` sits at `open`. Returns the
    /// arguments and the offset just past the closing `)`.
    pub(super) fn parse_arguments(text: &str, open: usize) -> Result<(Vec<Arg>, usize), String> {
        let mut cur = Cursor {
            src: text.as_bytes(),
            pos: open,
        };
        cur.expect(b'(')?;
        let mut args = Vec::new();
        let mut seen_keyword = false;
        loop {
            if cur.peek() == Some(b')') {
                cur.pos += 1;
                break;
            }
            let save = cur.pos;
            let keyword = match cur.ident() {
                Some(name) if cur.peek() == Some(b'=') && cur.src.get(cur.pos + 1) != Some(&b'=') => {
                    cur.pos += 1;
                    Some(name)
                }
                _ => {
                    cur.pos = save;
                    None
                }
            };
            if keyword.is_some() {
                seen_keyword = true;
            } else if seen_keyword {
                return Err("positional argument after keyword argument".into());
            }
            let value = literal(&mut cur)?;
            args.push((keyword, value));
            match cur.peek() {
                Some(b',') => cur.pos += 1,
                Some(b')') => {}
                other => return Err(format!("unexpected {:?} in argument list", other.map(|c| c as char))),
            }
        }
        Ok((args, cur.pos))
    }

    fn sequence(cur: &mut Cursor<'_>, close: u8) -> Result<Vec<Value>, String> {
        let mut items = Vec::new();
        loop {
            if cur.peek() == Some(close) {
                cur.pos += 1;
                return Ok(items);
            }
            items.push(literal(cur)?);
            match cur.peek() {
                Some(b',') => cur.pos += 1,
                Some(c) if c == close => {}
                other => return Err(format!("unexpected {:?} in sequence", other.map(|c| c as char))),
            }
        }
    }

    fn literal(cur: &mut Cursor<'_>) -> Result<Value, String> {
        match cur.peek() {
            Some(b'(') => {
                cur.pos += 1;
                let items = sequence(cur, b')')?;
                let dims: Option<Vec<u64>> = items
                    .iter()
                    .map(|v| match v {
                        Value::Int(i) if *i >= 1 => Some(*i as u64),
                        _ => None,
                    })
                    .collect();
                Ok(match dims.filter(|d| !d.is_empty()).and_then(ShapeTuple::new) {
                    Some(shape) => Value::Shape(shape),
                    None => Value::List(items),
                })
            }
            Some(b'[') => {
                cur.pos += 1;
                Ok(Value::List(sequence(cur, b']')?))
            }
            Some(q @ (b'\'' | b'"')) => {
                cur.pos += 1;
                let mut out = Vec::new();
                while let Some(&c) = cur.src.get(cur.pos) {
                    cur.pos += 1;
                    if c == b'\\' {
                        if let Some(&n) = cur.src.get(cur.pos) {
                            out.push(n);
                            cur.pos += 1;
                        }
                    } else if c == q {
                        return Ok(Value::Str(String::from_utf8_lossy(&out).into_owned()));
                    } else {
                        out.push(c);
                    }
                }
                Err("unterminated string literal".into())
            }
            Some(c) if c.is_ascii_digit() || c == b'-' || c == b'+' || c == b'.' => {
                let start = cur.pos;
                cur.pos += 1;
                while let Some(&c) = cur.src.get(cur.pos) {
                    let exp_sign = (c == b'-' || c == b'+') && matches!(cur.src.get(cur.pos - 1), Some(b'e' | b'E'));
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || c == b'_' || exp_sign {
                        cur.pos += 1;
                    } else {
                        break;
                    }
                }
                let raw: String = String::from_utf8_lossy(&cur.src[start..cur.pos]).replace('_', "");
                if let Ok(i) = raw.parse::<i64>() {
                    Ok(Value::Int(i))
                } else {
                    raw.parse::<f64>()
                        .map(Value::Float)
                        .map_err(|_| format!("bad number literal {raw:?}"))
                }
            }
            _ => match cur.ident().as_deref() {
                Some("True" | "true") => Ok(Value::Bool(true)),
                Some("False" | "false") => Ok(Value::Bool(false)),
                Some(other) => Err(format!("non-literal argument {other:?}")),
                None => Err(format!("unsupported argument at offset {}", cur.pos)),
            },
        }
    }
}

/// Every API name the sampler counts mentions for.
pub fn api_index<'a, I: IntoIterator<Item = &'a ApiSignature>>(sigs: I) -> BTreeSet<String> {
    sigs.into_iter().map(|s| s.name.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ParamSpec;

    fn issue() -> IssueRecord {
        IssueRecord {
            issue_id: "1".into(),
            title: String::new(),
            body: String::new(),
            labels: ["bug".to_string()].into(),
            comment_count: 5,
            state: IssueState::Closed,
            linked_changes: 1,
            code_blocks: vec!["x = 1".into()],
            hardware_markers: BTreeSet::new(),
            kind_hint: None,
        }
    }

    fn conv2d() -> ApiSignature {
        ApiSignature {
            name: "torch.nn.Conv2d".into(),
            required_params: ["in_channels", "out_channels", "kernel_size"]
                .into_iter()
                .map(ParamSpec::named)
                .collect(),
            optional_params: Vec::new(),
            framework_tag: "pytorch-like".into(),
        }
    }

    #[test]
    fn screening_gates_in_order() {
        let policy = SamplerPolicy::default();
        let mut i = issue();
        assert_eq!(screen_issue(&i, &policy), ScreenVerdict::Keep);

        i.comment_count = 2;
        assert_eq!(
            screen_issue(&i, &policy),
            ScreenVerdict::Discard(DiscardReason::LowEngagement)
        );

        // NoCode is checked before the label gate.
        i.code_blocks.clear();
        i.labels.clear();
        assert_eq!(screen_issue(&i, &policy), ScreenVerdict::Discard(DiscardReason::NoCode));

        let mut i = issue();
        i.labels = ["documentation".to_string()].into();
        assert_eq!(
            screen_issue(&i, &policy),
            ScreenVerdict::Discard(DiscardReason::NotBugLabeled)
        );

        let mut i = issue();
        i.hardware_markers = ["M1".to_string()].into();
        assert_eq!(
            screen_issue(&i, &policy),
            ScreenVerdict::Discard(DiscardReason::HardwareSpecific)
        );

        let mut i = issue();
        i.linked_changes = 0;
        assert_eq!(
            screen_issue(&i, &policy),
            ScreenVerdict::Discard(DiscardReason::ClosedWithoutChange)
        );
        i.state = IssueState::Open;
        assert_eq!(screen_issue(&i, &policy), ScreenVerdict::Keep);
    }

    #[test]
    fn most_mentioned_api_present_in_code_wins() {
        let index: BTreeSet<String> = ["pkg.A", "pkg.B"].iter().map(|s| s.to_string()).collect();
        let mut i = issue();
        i.title = "A fails".into();
        i.body = "A and A again, also B".into();
        i.code_blocks = vec!["pkg.A(1)\npkg.B(2)".into()];
        assert_eq!(identify_problematic_api(&i, &index).as_deref(), Some("pkg.A"));

        i.code_blocks = vec!["pkg.B(2)".into()];
        assert_eq!(identify_problematic_api(&i, &index).as_deref(), Some("pkg.B"));

        i.code_blocks = vec!["print(1)".into()];
        assert_eq!(identify_problematic_api(&i, &index), None);
    }

    #[test]
    fn tf_broadcast_is_identified() {
        let index: BTreeSet<String> = ["tf.broadcast", "tf.reshape"].iter().map(|s| s.to_string()).collect();
        let mut i = issue();
        i.title = "tf.broadcast crashes with large shape".into();
        i.body = "Calling tf.broadcast aborts the process.".into();
        i.code_blocks = vec!["import tensorflow as tf\nx = tf.broadcast(1, 2)".into()];
        assert_eq!(identify_problematic_api(&i, &index).as_deref(), Some("tf.broadcast"));
    }

    #[test]
    fn mention_ties_break_on_first_mention() {
        let index: BTreeSet<String> = ["m.Zeta", "m.Alpha"].iter().map(|s| s.to_string()).collect();
        let mut i = issue();
        i.body = "Zeta then Alpha".into();
        i.code_blocks = vec!["m.Alpha(1)\nm.Zeta(1)".into()];
        assert_eq!(identify_problematic_api(&i, &index).as_deref(), Some("m.Zeta"));
    }

    #[test]
    fn positional_call_is_bound_by_signature_order() {
        let mut i = issue();
        i.code_blocks = vec!["import torch\nm = torch.nn.Conv2d(512, 2048, 1)\ny = m(x)".into()];
        let ext = extract_bug_case(&i, &conv2d(), BugKind::Status, &BTreeSet::new()).unwrap();
        let args = &ext.bug_case.repro_call.bound_args;
        assert_eq!(args["in_channels"], Value::Int(512));
        assert_eq!(args["out_channels"], Value::Int(2048));
        assert_eq!(args["kernel_size"], Value::Int(1));
        assert_eq!(ext.bug_case.repro_call.setup_steps, vec!["import torch", "y = m(x)"]);
        assert!(!ext.multi_block);
    }

    #[test]
    fn keywords_tuples_and_strings_parse() {
        let mut sig = conv2d();
        sig.optional_params.push(ParamSpec::named("padding_mode"));
        sig.optional_params.push(ParamSpec::named("input"));
        let mut i = issue();
        i.code_blocks =
            vec!["Conv2d(3, out_channels=8, kernel_size=(3, 3), padding_mode='zeros', input=(2, 3, 8, 8))".into()];
        let ext = extract_bug_case(&i, &sig, BugKind::Value, &BTreeSet::new()).unwrap();
        let args = &ext.bug_case.repro_call.bound_args;
        assert_eq!(args["kernel_size"], Value::shape(&[3, 3]));
        assert_eq!(args["padding_mode"], Value::Str("zeros".into()));
        assert_eq!(args["input"], Value::shape(&[2, 3, 8, 8]));
    }

    #[test]
    fn too_many_positionals_is_an_arity_mismatch() {
        let mut i = issue();
        i.code_blocks = vec!["torch.nn.Conv2d(1, 2, 3, 4)".into()];
        assert_eq!(
            extract_bug_case(&i, &conv2d(), BugKind::Status, &BTreeSet::new()).unwrap_err(),
            ExtractionFailure::PositionalArityMismatch { given: 4, available: 3 }
        );
    }

    #[test]
    fn non_literal_arguments_are_unparsable() {
        let mut i = issue();
        i.code_blocks = vec!["torch.nn.Conv2d(c, 2, 3)".into()];
        assert!(matches!(
            extract_bug_case(&i, &conv2d(), BugKind::Status, &BTreeSet::new()),
            Err(ExtractionFailure::UnparsableCall(_))
        ));
    }

    #[test]
    fn performance_case_needs_overhead_code() {
        let mut i = issue();
        i.code_blocks = vec!["m = torch.nn.Conv2d(1, 2, 3)\nm(x)".into()];
        assert_eq!(
            extract_bug_case(&i, &conv2d(), BugKind::Performance, &BTreeSet::new()).unwrap_err(),
            ExtractionFailure::NoOverheadRecipe
        );

        i.code_blocks = vec![
            "import time\nm = torch.nn.Conv2d(1, 2, 3)\nt0 = time.perf_counter()\nm(x)\nprint(time.perf_counter() - t0)".into(),
        ];
        let ext = extract_bug_case(&i, &conv2d(), BugKind::Performance, &BTreeSet::new()).unwrap();
        match ext.bug_case.oracle {
            OracleSpec::Performance { baseline_recipe, .. } => {
                assert_eq!(baseline_recipe.metric, Metric::WallTimeSeconds)
            }
            other => panic!("unexpected oracle {other:?}"),
        }
    }

    #[test]
    fn status_skeleton_uses_reported_exception() {
        let mut i = issue();
        i.body = "Traceback ...\nRuntimeError: expected 4 channels, got 7\n".into();
        i.code_blocks = vec!["torch.nn.Conv2d(1, 2, 3)".into(), "other".into()];
        let ext = extract_bug_case(&i, &conv2d(), BugKind::Status, &BTreeSet::new()).unwrap();
        assert!(ext.multi_block);
        assert_eq!(
            ext.bug_case.oracle,
            OracleSpec::Status {
                exception_signature: ExceptionSignature {
                    exception_type: "RuntimeError".into(),
                    template: "expected <N> channels, got <N>".into()
                }
            }
        );
    }
}
