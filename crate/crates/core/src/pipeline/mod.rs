//! Stage orchestration.
//!
//! Every stage reads the previous stage's files from the output directory
//! and writes its own records plus a `<stage>.txt` summary, always through
//! write-then-rename. Stages can be re-run individually.

mod config;
mod evaluate;
mod report;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{ConfigError, PipelineConfig, DEFAULT_NOISE_PATTERNS, ENV_KEYS};
pub use evaluate::{evaluate_cases, recipe_descriptors, render_requests, EvalError, EvalOptions};
pub use report::{
    avg_time_to_bug_min, build_report, compute_metrics, fold_bugs, format_metric, render_text, trigger_ratio, ApiBug,
    BuiltReport, Metrics, ReportInputs, ReportLine, RunReport, Suppressions,
};

use crate::analyzer::{cluster_functions, BetaPolicy, FunctionGroup, SimilarityThresholds};
use crate::corpus::{BugCase, Corpus, CorpusError, OracleSpec};
use crate::generator::{partition_attempts, synthesize_all, SkipRecord, SynthesizedCase};
use crate::matcher::{covered_apis, match_pairs, CandidatePair, NoiseFilter};
use crate::oracle::Verdict;
use crate::records::{read_kind, write_atomic, write_records, Record};
use crate::render::{render, TemplateSet};
use crate::runner::{MockScript, RunnerSpec};
use crate::sampler::{api_index, extract_bug_case, identify_problematic_api, screen_issue, ScreenVerdict};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const BUG_CASES_FILE: &str = "bug_cases.jsonl";
pub const GROUPS_FILE: &str = "groups.jsonl";
pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const CASES_FILE: &str = "cases.jsonl";
pub const SKIPS_FILE: &str = "skips.jsonl";
pub const RENDERED_DIR: &str = "rendered";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const REPORT_FILE: &str = "report.jsonl";
pub const REPORT_TEXT: &str = "report.txt";
pub const TIMING_FILE: &str = "timing.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const SWEEP_FILE: &str = "sweep.jsonl";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { .. } => 1,
        }
    }
}

fn stage_err(stage: &'static str) -> impl Fn(CorpusError) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// Wall time of the detection stages, in seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    #[serde(default)]
    pub generate_s: Option<f64>,
    #[serde(default)]
    pub evaluate_s: Option<f64>,
}

impl Timing {
    pub fn detection_s(&self) -> Option<f64> {
        Some(self.generate_s? + self.evaluate_s?)
    }
}

/// One row of a β sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub pairs: usize,
    pub accepted_pairs: usize,
    pub covered_apis: usize,
    pub cases: usize,
    pub bug_verdicts: usize,
    pub api_bugs: usize,
    /// Share of covered APIs with at least one folded bug.
    #[serde(serialize_with = "report::metric_or_undefined")]
    pub effective_ratio: Option<f64>,
}

pub struct Pipeline {
    pub config: PipelineConfig,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self { config })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    fn summary(&self, stage: &'static str, text: &str) -> Result<(), PipelineError> {
        write_atomic(&self.out(&format!("{stage}.txt")), text.as_bytes()).map_err(stage_err(stage))
    }

    fn need(&self, stage: &'static str, file: &str, producer: &str) -> Result<PathBuf, PipelineError> {
        let path = self.out(file);
        if path.exists() {
            Ok(path)
        } else {
            Err(PipelineError::Stage {
                stage,
                message: format!("{} is missing; run `{producer}` first", path.display()),
            })
        }
    }

    fn noise(&self) -> Result<NoiseFilter, PipelineError> {
        NoiseFilter::new(&self.config.noise_patterns).map_err(|e| ConfigError(e.to_string()).into())
    }

    fn templates(&self) -> Result<TemplateSet, PipelineError> {
        match &self.config.template_dir {
            Some(dir) => TemplateSet::with_dir(dir).map_err(|e| ConfigError(e).into()),
            None => Ok(TemplateSet::builtin()),
        }
    }

    pub fn runner_spec(&self) -> Result<RunnerSpec, PipelineError> {
        if let Some(cmd) = &self.config.runner_cmd {
            return Ok(RunnerSpec::Command(cmd.clone()));
        }
        let script = match &self.config.mock_script {
            Some(path) => MockScript::load(path).map_err(|e| ConfigError(e.to_string()))?,
            None => MockScript::default(),
        };
        Ok(RunnerSpec::Mock(Arc::new(script)))
    }

    /// Ingested corpus with the sampled bug cases, when present, in place
    /// of the ingested ones.
    pub fn working_corpus(&self, stage: &'static str) -> Result<Corpus, PipelineError> {
        let path = self.need(stage, CORPUS_FILE, "ingest")?;
        let mut corpus = Corpus::load(&[path]).map_err(stage_err(stage))?;
        let sampled = self.out(BUG_CASES_FILE);
        if sampled.exists() {
            let cases = read_kind(&sampled, |r| match r {
                Record::BugCase(c) => Some(c),
                _ => None,
            })
            .map_err(stage_err(stage))?;
            corpus.bug_cases.clear();
            corpus = corpus.with_bug_cases(cases).map_err(stage_err(stage))?;
        }
        Ok(corpus)
    }

    pub fn ingest(&self) -> Result<String, PipelineError> {
        const STAGE: &str = "ingest";
        if self.config.corpus.is_empty() {
            return Err(ConfigError("no corpus files given".into()).into());
        }
        let corpus = Corpus::load(&self.config.corpus).map_err(stage_err(STAGE))?;
        corpus.save(&self.out(CORPUS_FILE)).map_err(stage_err(STAGE))?;
        let text = format!(
            "signatures {}\nsource functions {}\ntraces {}\nbug cases {}\nsignature pairs {}\nissues {}\n",
            corpus.signatures.len(),
            corpus.source_functions.len(),
            corpus.traces.len(),
            corpus.bug_cases.len(),
            corpus.signature_pairs.len(),
            corpus.issues.len()
        );
        self.summary(STAGE, &text)?;
        Ok(text)
    }

    /// Screens issues and extracts bug cases from those carrying a kind
    /// hint. Ingested bug cases are kept; extracted ones are added unless
    /// their id is taken.
    pub fn sample(&self) -> Result<String, PipelineError> {
        const STAGE: &str = "sample";
        let path = self.need(STAGE, CORPUS_FILE, "ingest")?;
        let corpus = Corpus::load(&[path]).map_err(stage_err(STAGE))?;
        let index = api_index(corpus.signatures.values());
        let tokens = corpus.api_name_tokens();
        let mut cases: BTreeMap<String, BugCase> = corpus.bug_cases.clone();
        let mut text = String::new();
        let mut issues: Vec<_> = corpus.issues.iter().collect();
        issues.sort_by(|a, b| a.issue_id.cmp(&b.issue_id));
        for issue in issues {
            let line = match screen_issue(issue, &self.config.sampler) {
                ScreenVerdict::Discard(reason) => format!("discarded ({reason:?})"),
                ScreenVerdict::Keep => match identify_problematic_api(issue, &index) {
                    None => "kept, no known api mentioned".to_string(),
                    Some(api) => match issue.kind_hint {
                        None => format!("kept, api {api}, no kind hint"),
                        Some(kind) => match extract_bug_case(issue, &corpus.signatures[&api], kind, &tokens) {
                            Err(e) => format!("kept, api {api}, extraction failed: {e}"),
                            Ok(ex) => {
                                let mut case = ex.bug_case;
                                if let (Some(m), OracleSpec::Performance { margin, .. }) =
                                    (self.config.margin, &mut case.oracle)
                                {
                                    *margin = m;
                                }
                                let id = case.case_id.clone();
                                let note = if ex.multi_block {
                                    ", first of several blocks"
                                } else {
                                    ""
                                };
                                if cases.contains_key(&id) {
                                    format!("kept, api {api}, case {id} already present")
                                } else {
                                    cases.insert(id.clone(), case);
                                    format!("extracted {id} for {api}{note}")
                                }
                            }
                        },
                    },
                },
            };
            let _ = writeln!(text, "{}: {line}", issue.issue_id);
        }
        let cases: Vec<BugCase> = cases.into_values().collect();
        // Revalidate before anything is written.
        let mut check = corpus.clone();
        check.bug_cases.clear();
        check.with_bug_cases(cases.clone()).map_err(stage_err(STAGE))?;
        let records: Vec<Record> = cases.into_iter().map(Record::BugCase).collect();
        let _ = writeln!(text, "bug cases {}", records.len());
        write_records(&self.out(BUG_CASES_FILE), &records).map_err(stage_err(STAGE))?;
        self.summary(STAGE, &text)?;
        Ok(text)
    }

    pub fn analyze(&self) -> Result<String, PipelineError> {
        const STAGE: &str = "analyze";
        let corpus = self.working_corpus(STAGE)?;
        let groups = cluster_functions(corpus.source_functions.values(), &self.config.thresholds);
        let records: Vec<Record> = groups.iter().cloned().map(Record::FunctionGroup).collect();
        write_records(&self.out(GROUPS_FILE), &records).map_err(stage_err(STAGE))?;
        let mut text = format!("functions {}\ngroups {}\n", corpus.source_functions.len(), groups.len());
        for g in &groups {
            let _ = writeln!(text, "  {} ({} members)", g.group_id, g.members.len());
        }
        self.summary(STAGE, &text)?;
        Ok(text)
    }

    fn groups(&self, stage: &'static str) -> Result<Vec<FunctionGroup>, PipelineError> {
        let path = self.need(stage, GROUPS_FILE, "analyze")?;
        read_kind(&path, |r| match r {
            Record::FunctionGroup(g) => Some(g),
            _ => None,
        })
        .map_err(stage_err(stage))
    }

    fn pairs(&self, stage: &'static str) -> Result<Vec<CandidatePair>, PipelineError> {
        let path = self.need(stage, PAIRS_FILE, "match")?;
        read_kind(&path, |r| match r {
            Record::CandidatePair(p) => Some(p),
            _ => None,
        })
        .map_err(stage_err(stage))
    }

    fn cases(&self, stage: &'static str) -> Result<Vec<SynthesizedCase>, PipelineError> {
        let path = self.need(stage, CASES_FILE, "generate")?;
        read_kind(&path, |r| match r {
            Record::SynthesizedCase(c) => Some(c),
            _ => None,
        })
        .map_err(stage_err(stage))
    }

    pub fn match_stage(&self) -> Result<String, PipelineError> {
        const STAGE: &str = "match";
        let corpus = self.working_corpus(STAGE)?;
        let groups = self.groups(STAGE)?;
        let pairs = match_pairs(&corpus, &groups, &self.config.thresholds, &self.noise()?);
        let records: Vec<Record> = pairs.iter().cloned().map(Record::CandidatePair).collect();
        write_records(&self.out(PAIRS_FILE), &records).map_err(stage_err(STAGE))?;
        let accepted = pairs.iter().filter(|p| p.filter_verdict.is_accept()).count();
        let text = format!(
            "pairs {}\naccepted {}\nrejected {}\ncovered apis {}\n",
            pairs.len(),
            accepted,
            pairs.len() - accepted,
            covered_apis(&pairs).len()
        );
        self.summary(STAGE, &text)?;
        Ok(text)
    }

    fn update_timing(&self, stage: &'static str, f: impl FnOnce(&mut Timing)) -> Result<(), PipelineError> {
        let path = self.out(TIMING_FILE);
        let mut timing: Timing = std::fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default();
        f(&mut timing);
        let text = serde_json::to_string_pretty(&timing).expect("serializes") + "\n";
        write_atomic(&path, text.as_bytes()).map_err(stage_err(stage))
    }

    pub fn generate(&self) -> Result<String, PipelineError> {
        const STAGE: &str = "generate";
        let started = Instant::now();
        let corpus = self.working_corpus(STAGE)?;
        let pairs = self.pairs(STAGE)?;
        let templates = self.templates()?;
        let (cases, skips) = partition_attempts(synthesize_all(&corpus, &pairs));

        // Rendered sources go to a scratch directory that replaces the old
        // one only once complete.
        let rendered = self.out(RENDERED_DIR);
        let scratch = self.out(&format!("{RENDERED_DIR}.partial"));
        let io = |e: std::io::Error| PipelineError::Stage {
            stage: STAGE,
            message: e.to_string(),
        };
        if scratch.exists() {
            std::fs::remove_dir_all(&scratch).map_err(io)?;
        }
        std::fs::create_dir_all(&scratch).map_err(io)?;
        for case in &cases {
            let sig = corpus.signature(&case.target_api);
            let dialect = sig.map_or("generic", |s| s.framework_tag.as_str());
            let source = templates
                .for_dialect(dialect)
                .and_then(|t| render(case, t, sig))
                .map_err(|e| PipelineError::Stage {
                    stage: STAGE,
                    message: format!("{}: {e}", case.case_id),
                })?;
            std::fs::write(scratch.join(rendered_file_name(&case.case_id)), source).map_err(io)?;
        }
        if rendered.exists() {
            std::fs::remove_dir_all(&rendered).map_err(io)?;
        }
        std::fs::rename(&scratch, &rendered).map_err(io)?;

        let case_records: Vec<Record> = cases.iter().cloned().map(Record::SynthesizedCase).collect();
        let skip_records: Vec<Record> = skips.iter().cloned().map(Record::Skip).collect();
        write_records(&self.out(CASES_FILE), &case_records).map_err(stage_err(STAGE))?;
        write_records(&self.out(SKIPS_FILE), &skip_records).map_err(stage_err(STAGE))?;

        let mut text = format!("cases {}\nskipped {}\n", cases.len(), skips.len());
        for s in &skips {
            let _ = writeln!(text, "  {} -> {}: {}", s.source_case_id, s.target_api, s.reason);
        }
        self.summary(STAGE, &text)?;
        let elapsed = started.elapsed().as_secs_f64();
        self.update_timing(STAGE, |t| t.generate_s = Some(elapsed))?;
        Ok(text)
    }

    fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            jobs: self.config.jobs,
            timeout_s: self.config.timeout_s,
            margin: self.config.margin,
        }
    }

    pub fn evaluate(&self) -> Result<String, PipelineError> {
        const STAGE: &str = "evaluate";
        let started = Instant::now();
        let corpus = self.working_corpus(STAGE)?;
        let cases = self.cases(STAGE)?;
        let spec = self.runner_spec()?;
        let verdicts =
            evaluate_cases(&cases, &corpus, &self.templates()?, &spec, &self.eval_options()).map_err(|e| {
                PipelineError::Stage {
                    stage: STAGE,
                    message: e.to_string(),
                }
            })?;
        let records: Vec<Record> = verdicts.iter().cloned().map(Record::Verdict).collect();
        write_records(&self.out(VERDICTS_FILE), &records).map_err(stage_err(STAGE))?;
        let mut text = String::new();
        for v in &verdicts {
            let _ = writeln!(text, "{} {}", v.case_id, v.kind);
        }
        self.summary(STAGE, &text)?;
        let elapsed = started.elapsed().as_secs_f64();
        self.update_timing(STAGE, |t| t.evaluate_s = Some(elapsed))?;
        Ok(text)
    }

    fn suppressions(&self) -> Result<Suppressions, PipelineError> {
        match &self.config.suppress_list {
            None => Ok(Suppressions::default()),
            Some(path) => Suppressions::load(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())).into()),
        }
    }

    pub fn report(&self) -> Result<BuiltReport, PipelineError> {
        const STAGE: &str = "report";
        let corpus = self.working_corpus(STAGE)?;
        let groups = self.groups(STAGE)?;
        let pairs = self.pairs(STAGE)?;
        let cases = self.cases(STAGE)?;
        let skips: Vec<SkipRecord> = read_kind(&self.need(STAGE, SKIPS_FILE, "generate")?, |r| match r {
            Record::Skip(s) => Some(s),
            _ => None,
        })
        .map_err(stage_err(STAGE))?;
        let verdicts_path = self.out(VERDICTS_FILE);
        let verdicts: Vec<Verdict> = if verdicts_path.exists() {
            read_kind(&verdicts_path, |r| match r {
                Record::Verdict(v) => Some(v),
                _ => None,
            })
            .map_err(stage_err(STAGE))?
        } else {
            Vec::new()
        };
        let timing: Timing = std::fs::read_to_string(self.out(TIMING_FILE))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default();
        let suppressions = self.suppressions()?;
        let built = build_report(&ReportInputs {
            function_groups: groups.len(),
            bug_cases: corpus.bug_cases.len(),
            pairs: &pairs,
            cases: &cases,
            skips: &skips,
            verdicts: &verdicts,
            suppressions: &suppressions,
            detection_wall_time_s: timing.detection_s(),
        });
        write_records(&self.out(REPORT_FILE), &built.lines).map_err(stage_err(STAGE))?;
        write_atomic(&self.out(REPORT_TEXT), render_text(&built).as_bytes()).map_err(stage_err(STAGE))?;
        #[derive(Serialize)]
        struct MetricsFile {
            #[serde(flatten)]
            metrics: Metrics,
            detection_wall_time_s: Option<f64>,
        }
        let metrics = MetricsFile {
            metrics: compute_metrics(&built.report),
            detection_wall_time_s: built.report.detection_wall_time_s,
        };
        let text = serde_json::to_string_pretty(&metrics).expect("serializes") + "\n";
        write_atomic(&self.out(METRICS_FILE), text.as_bytes()).map_err(stage_err(STAGE))?;
        Ok(built)
    }

    /// Re-runs match, generate and evaluate in memory for each β of the
    /// grid, with that β applied to every framework.
    pub fn sweep_beta(&self) -> Result<Vec<SweepRow>, PipelineError> {
        const STAGE: &str = "sweep-beta";
        let corpus = self.working_corpus(STAGE)?;
        let groups = cluster_functions(corpus.source_functions.values(), &self.config.thresholds);
        let noise = self.noise()?;
        let templates = self.templates()?;
        let spec = self.runner_spec()?;
        let mut rows = Vec::new();
        for &beta in &self.config.beta_grid {
            let thresholds = SimilarityThresholds {
                beta: BetaPolicy::fixed(beta),
                ..self.config.thresholds.clone()
            };
            let pairs = match_pairs(&corpus, &groups, &thresholds, &noise);
            let (cases, _) = partition_attempts(synthesize_all(&corpus, &pairs));
            let verdicts = evaluate_cases(&cases, &corpus, &templates, &spec, &self.eval_options()).map_err(|e| {
                PipelineError::Stage {
                    stage: STAGE,
                    message: e.to_string(),
                }
            })?;
            let bugs = fold_bugs(&verdicts);
            let covered = covered_apis(&pairs).len();
            let buggy: std::collections::BTreeSet<&str> = bugs.iter().map(|b| b.target_api.as_str()).collect();
            rows.push(SweepRow {
                beta,
                pairs: pairs.len(),
                accepted_pairs: pairs.iter().filter(|p| p.filter_verdict.is_accept()).count(),
                covered_apis: covered,
                cases: cases.len(),
                bug_verdicts: verdicts.iter().filter(|v| v.kind.is_bug()).count(),
                api_bugs: bugs.len(),
                effective_ratio: (covered > 0).then(|| buggy.len() as f64 / covered as f64),
            });
        }
        write_records(&self.out(SWEEP_FILE), &rows).map_err(stage_err(STAGE))?;
        let mut text = format!(
            "{:>5} {:>6} {:>8} {:>8} {:>6} {:>5} {:>8} {:>9}\n",
            "beta", "pairs", "accepted", "covered", "cases", "bugs", "api-bugs", "effective"
        );
        for r in &rows {
            let _ = writeln!(
                text,
                "{:>5.2} {:>6} {:>8} {:>8} {:>6} {:>5} {:>8} {:>9}",
                r.beta,
                r.pairs,
                r.accepted_pairs,
                r.covered_apis,
                r.cases,
                r.bug_verdicts,
                r.api_bugs,
                format_metric(r.effective_ratio)
            );
        }
        self.summary("sweep", &text)?;
        Ok(rows)
    }

    /// ingest, sample, analyze, match, generate, evaluate, report.
    pub fn run_all(&self) -> Result<BuiltReport, PipelineError> {
        self.ingest()?;
        self.sample()?;
        self.analyze()?;
        self.match_stage()?;
        self.generate()?;
        self.evaluate()?;
        self.report()
    }
}

/// File name for a case's rendered source.
pub fn rendered_file_name(case_id: &str) -> String {
    let safe: String = case_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._@-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.py")
}

/// Reads back an output directory's report lines as raw text, for
/// comparisons between runs.
pub fn read_report(out_dir: &Path) -> std::io::Result<String> {
    std::fs::read_to_string(out_dir.join(REPORT_FILE))
}
