//! Drives runner sessions over synthesized cases.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use crate::corpus::{Corpus, OracleSpec};
use crate::generator::SynthesizedCase;
use crate::oracle::{evaluate, Verdict};
use crate::render::{render, TemplateError, TemplateSet};
use crate::runner::{Capabilities, RecipeDescriptor, Runner, RunnerError, RunnerRequest, RunnerSpec};

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub jobs: usize,
    pub timeout_s: f64,
    pub margin: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("rendering {case}: {source}")]
    Render { case: String, source: TemplateError },
    #[error("runner session {session}: {source}")]
    Session { session: usize, source: RunnerError },
}

pub fn recipe_descriptors(oracle: &OracleSpec) -> Vec<RecipeDescriptor> {
    oracle
        .recipe_slots()
        .into_iter()
        .map(|(slot, r)| RecipeDescriptor {
            slot: slot.to_string(),
            metric: r.metric,
            repetitions: r.repetitions,
            warmup_runs: r.warmup_runs,
        })
        .collect()
}

/// Case with the configured margin applied to its performance oracle.
fn with_margin(case: &SynthesizedCase, margin: Option<f64>) -> SynthesizedCase {
    let mut case = case.clone();
    if let (Some(m), OracleSpec::Performance { margin, .. }) = (margin, &mut case.oracle) {
        *margin = m;
    }
    case
}

/// Renders every case up front so template problems fail the stage before
/// any runner starts.
pub fn render_requests(
    cases: &[SynthesizedCase],
    corpus: &Corpus,
    templates: &TemplateSet,
    timeout_s: f64,
) -> Result<Vec<RunnerRequest>, EvalError> {
    cases
        .iter()
        .map(|case| {
            let sig = corpus.signature(&case.target_api);
            let dialect = sig.map_or("generic", |s| s.framework_tag.as_str());
            let source = templates
                .for_dialect(dialect)
                .and_then(|t| render(case, t, sig))
                .map_err(|source| EvalError::Render {
                    case: case.case_id.clone(),
                    source,
                })?;
            Ok(RunnerRequest::new(
                case.case_id.clone(),
                source,
                recipe_descriptors(&case.oracle),
                timeout_s,
            ))
        })
        .collect()
}

fn run_one(runner: &mut dyn Runner, caps: &Capabilities, case: &SynthesizedCase, request: &RunnerRequest) -> Verdict {
    if let Some(missing) = request.recipes.iter().find(|r| !caps.supports(r.metric)) {
        return Verdict::runner_failure(case, format!("runner cannot measure {}", missing.metric));
    }
    match runner.run_case(request) {
        Ok(result) => evaluate(case, &result),
        Err(e) => {
            log::warn!("{}: {}: {e}", runner.id(), case.case_id);
            Verdict::runner_failure(case, e.to_string())
        }
    }
}

fn start(
    spec: &RunnerSpec,
    session: usize,
    tokens: &Arc<BTreeSet<String>>,
) -> Result<(Box<dyn Runner>, Capabilities), EvalError> {
    let wrap = |source| EvalError::Session { session, source };
    let mut runner = spec.start(session, Arc::clone(tokens)).map_err(wrap)?;
    let caps = runner.handshake().map_err(wrap)?;
    Ok((runner, caps))
}

/// Evaluates every case. Status and value cases share a pool of `jobs`
/// sessions; performance cases then run one at a time on a session of
/// their own. Verdicts come back sorted by case id.
pub fn evaluate_cases(
    cases: &[SynthesizedCase],
    corpus: &Corpus,
    templates: &TemplateSet,
    spec: &RunnerSpec,
    options: &EvalOptions,
) -> Result<Vec<Verdict>, EvalError> {
    let cases: Vec<SynthesizedCase> = cases.iter().map(|c| with_margin(c, options.margin)).collect();
    let requests = render_requests(&cases, corpus, templates, options.timeout_s)?;
    let tokens = Arc::new(corpus.api_name_tokens());
    let (perf, shared): (Vec<usize>, Vec<usize>) =
        (0..cases.len()).partition(|&i| matches!(cases[i].oracle, OracleSpec::Performance { .. }));

    let verdicts = Mutex::new(BTreeMap::new());
    let next = AtomicUsize::new(0);
    let workers = options.jobs.max(1).min(shared.len());
    thread::scope(|scope| -> Result<(), EvalError> {
        let handles: Vec<_> = (0..workers)
            .map(|session| {
                let (cases, requests, shared, verdicts, next, tokens) =
                    (&cases, &requests, &shared, &verdicts, &next, &tokens);
                scope.spawn(move || -> Result<(), EvalError> {
                    let (mut runner, caps) = start(spec, session, tokens)?;
                    loop {
                        let k = next.fetch_add(1, Ordering::SeqCst);
                        let Some(&i) = shared.get(k) else { break };
                        let v = run_one(runner.as_mut(), &caps, &cases[i], &requests[i]);
                        verdicts.lock().expect("no poisoned lock").insert(i, v);
                    }
                    Ok(())
                })
            })
            .collect();
        for h in handles {
            h.join().expect("worker panicked")?;
        }
        Ok(())
    })?;

    if !perf.is_empty() {
        let (mut runner, caps) = start(spec, workers, &tokens)?;
        for &i in &perf {
            let v = run_one(runner.as_mut(), &caps, &cases[i], &requests[i]);
            verdicts.lock().expect("no poisoned lock").insert(i, v);
        }
    }

    let mut out: Vec<Verdict> = verdicts.into_inner().expect("no poisoned lock").into_values().collect();
    out.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok(out)
}
