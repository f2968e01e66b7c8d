//! Test-case synthesis for analogous target APIs.

use std::collections::BTreeSet;
use std::fmt;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    terminal_segment, validate_call, ApiSignature, BugCase, Corpus, MeasurementRecipe, OracleSpec, Rank, ShapeTuple,
    StructuredCall, Value, Violation,
};
use crate::matcher::CandidatePair;
use crate::sampler::token_names_api;

/// One adaptation applied while porting a case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "transform", rename_all = "kebab-case")]
pub enum Transform {
    DropArg { param: String },
    RankExpand { param: String, from: usize, to: usize },
    RankShrink { param: String, from: usize, to: usize },
    RecipeRetarget { slot: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "skip", rename_all = "kebab-case")]
pub enum SkipReason {
    /// The source call does not bind every parameter the target requires.
    InfeasibleDirection {
        missing: Vec<String>,
    },
    RankUnresolvable {
        param: String,
    },
    RecipeRetargetFailure {
        slot: String,
        detail: String,
    },
    /// The pair was filtered out or does not involve the case's API.
    NotApplicable {
        detail: String,
    },
    ValidationFailed {
        violations: Vec<Violation>,
    },
}

impl SkipReason {
    pub fn label(&self) -> &'static str {
        match self {
            SkipReason::InfeasibleDirection { .. } => "infeasible-direction",
            SkipReason::RankUnresolvable { .. } => "rank-unresolvable",
            SkipReason::RecipeRetargetFailure { .. } => "recipe-retarget-failure",
            SkipReason::NotApplicable { .. } => "not-applicable",
            SkipReason::ValidationFailed { .. } => "validation-failed",
        }
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::InfeasibleDirection { missing } => {
                write!(f, "infeasible direction, target requires {}", missing.join(", "))
            }
            SkipReason::RankUnresolvable { param } => write!(f, "rank of {param} cannot be adjusted"),
            SkipReason::RecipeRetargetFailure { slot, detail } => {
                write!(f, "{slot} recipe cannot be retargeted: {detail}")
            }
            SkipReason::NotApplicable { detail } => f.write_str(detail),
            SkipReason::ValidationFailed { violations } => {
                let v: Vec<_> = violations.iter().map(ToString::to_string).collect();
                write!(f, "synthesized call is invalid: {}", v.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedCase {
    pub case_id: String,
    pub source_case_id: String,
    pub source_api: String,
    pub target_api: String,
    pub call: StructuredCall,
    pub oracle: OracleSpec,
    #[serde(default)]
    pub transform_log: Vec<Transform>,
    /// Setup fragments that still mention source-only tokens after the API
    /// rename; worth a human look.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub review_flags: Vec<String>,
}

/// True when the source call binds every required parameter of the target.
pub fn feasible_direction(case: &BugCase, sig_t: &ApiSignature) -> bool {
    missing_required(&case.repro_call, sig_t).is_empty()
}

fn missing_required(call: &StructuredCall, sig_t: &ApiSignature) -> Vec<String> {
    sig_t
        .required_params
        .iter()
        .filter(|p| !call.bound_args.contains_key(&p.name))
        .map(|p| p.name.clone())
        .collect()
}

/// Drops arguments the target does not know and rebinds the call to it.
/// Kept values are never changed.
pub fn resolve_argument_difference(
    call: &StructuredCall,
    sig_t: &ApiSignature,
) -> Result<(StructuredCall, Vec<Transform>), SkipReason> {
    let missing = missing_required(call, sig_t);
    if !missing.is_empty() {
        return Err(SkipReason::InfeasibleDirection { missing });
    }
    let mut out = call.clone();
    out.api_name = sig_t.name.clone();
    let mut log = Vec::new();
    out.bound_args.retain(|name, _| {
        let keep = sig_t.has_param(name);
        if !keep {
            log.push(Transform::DropArg { param: name.clone() });
        }
        keep
    });
    Ok((out, log))
}

/// Appends copies of the last extent until the shape has `rank` entries,
/// or truncates trailing extents.
pub fn adjust_rank(shape: &ShapeTuple, rank: usize) -> Option<ShapeTuple> {
    let mut dims = shape.shape.clone();
    if rank > dims.len() {
        let last = *dims.last()?;
        dims.resize(rank, last);
    } else {
        dims.truncate(rank);
    }
    ShapeTuple::new(dims)
}

/// Brings shape-tuple arguments to the target's declared rank. Scalars
/// and rank-free parameters are left alone.
pub fn resolve_dimension_difference(
    call: &StructuredCall,
    sig_s: &ApiSignature,
    sig_t: &ApiSignature,
) -> Result<(StructuredCall, Vec<Transform>), SkipReason> {
    let mut out = call.clone();
    let mut log = Vec::new();
    for (name, value) in out.bound_args.iter_mut() {
        let Some(Rank::Fixed(target_rank)) = sig_t.param(name).and_then(|p| p.rank_annotation) else {
            continue;
        };
        let target_rank = target_rank as usize;
        let source_rank = sig_s.param(name).and_then(|p| p.rank_annotation);
        match value {
            Value::Shape(shape) if shape.rank() != target_rank => {
                let from = shape.rank();
                let adjusted = adjust_rank(shape, target_rank)
                    .ok_or_else(|| SkipReason::RankUnresolvable { param: name.clone() })?;
                *shape = adjusted;
                log.push(if target_rank > from {
                    Transform::RankExpand {
                        param: name.clone(),
                        from,
                        to: target_rank,
                    }
                } else {
                    Transform::RankShrink {
                        param: name.clone(),
                        from,
                        to: target_rank,
                    }
                });
            }
            Value::List(_) if matches!(source_rank, Some(Rank::Fixed(s)) if s as usize != target_rank) => {
                return Err(SkipReason::RankUnresolvable { param: name.clone() });
            }
            _ => {}
        }
    }
    Ok((out, log))
}

/// Argument then dimension resolution of a single call.
fn retarget_call(
    call: &StructuredCall,
    sig_s: &ApiSignature,
    sig_t: &ApiSignature,
) -> Result<(StructuredCall, Vec<Transform>), SkipReason> {
    let (resolved, mut log) = resolve_argument_difference(call, sig_t)?;
    let (resolved, dims) = resolve_dimension_difference(&resolved, sig_s, sig_t)?;
    log.extend(dims);
    Ok((resolved, log))
}

fn retarget_recipe(
    recipe: &MeasurementRecipe,
    slot: &str,
    sig_s: &ApiSignature,
    sig_t: &ApiSignature,
) -> Result<(MeasurementRecipe, bool), SkipReason> {
    let mut out = recipe.clone();
    let mut touched = false;
    for call in out.body.iter_mut() {
        if call.api_name != sig_s.name {
            continue;
        }
        let (mut retargeted, _) = retarget_call(call, sig_s, sig_t).map_err(|e| SkipReason::RecipeRetargetFailure {
            slot: slot.to_string(),
            detail: e.to_string(),
        })?;
        retargeted.setup_steps = rename_in_fragments(&retargeted.setup_steps, &sig_s.name, &sig_t.name);
        *call = retargeted;
        touched = true;
    }
    Ok((out, touched))
}

fn ident_regex() -> Regex {
    Regex::new(r"[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*").unwrap()
}

/// Rewrites whole-token mentions of `source` (full, terminal or partially
/// qualified) to the matching form of `target`.
pub fn rename_api(text: &str, source: &str, target: &str) -> String {
    let source_terminal = terminal_segment(source);
    let target_terminal = terminal_segment(target);
    ident_regex()
        .replace_all(text, |c: &Captures<'_>| {
            let tok = &c[0];
            if tok == source {
                target.to_string()
            } else if token_names_api(tok, source) {
                format!("{}{}", &tok[..tok.len() - source_terminal.len()], target_terminal)
            } else {
                tok.to_string()
            }
        })
        .into_owned()
}

fn rename_in_fragments(fragments: &[String], source: &str, target: &str) -> Vec<String> {
    fragments.iter().map(|f| rename_api(f, source, target)).collect()
}

fn wildcard_api(text: &str, source: &str) -> String {
    ident_regex()
        .replace_all(text, |c: &Captures<'_>| {
            if token_names_api(&c[0], source) {
                "<API>".to_string()
            } else {
                c[0].to_string()
            }
        })
        .into_owned()
}

/// Carries the source bug's oracle over to the target API.
pub fn port_oracle(
    oracle: &OracleSpec,
    sig_s: &ApiSignature,
    sig_t: &ApiSignature,
) -> Result<(OracleSpec, Vec<Transform>), SkipReason> {
    match oracle {
        OracleSpec::Status { exception_signature } => {
            let mut sig = exception_signature.clone();
            sig.template = wildcard_api(&sig.template, &sig_s.name);
            Ok((
                OracleSpec::Status {
                    exception_signature: sig,
                },
                Vec::new(),
            ))
        }
        OracleSpec::Value {
            anomaly_pattern,
            pattern_detail,
        } => Ok((
            OracleSpec::Value {
                anomaly_pattern: *anomaly_pattern,
                pattern_detail: pattern_detail.as_deref().map(|d| wildcard_api(d, &sig_s.name)),
            },
            Vec::new(),
        )),
        OracleSpec::Performance {
            baseline_recipe,
            subject_recipe,
            comparator,
            margin,
        } => {
            let mut log = Vec::new();
            let (baseline, touched) = retarget_recipe(baseline_recipe, "baseline", sig_s, sig_t)?;
            if touched {
                log.push(Transform::RecipeRetarget {
                    slot: "baseline".into(),
                });
            }
            let (subject, touched) = retarget_recipe(subject_recipe, "subject", sig_s, sig_t)?;
            if touched {
                log.push(Transform::RecipeRetarget { slot: "subject".into() });
            }
            Ok((
                OracleSpec::Performance {
                    baseline_recipe: baseline,
                    subject_recipe: subject,
                    comparator: *comparator,
                    margin: *margin,
                },
                log,
            ))
        }
    }
}

pub fn synthesized_case_id(source_case_id: &str, target_api: &str) -> String {
    format!("{source_case_id}@{target_api}")
}

/// Runs the whole port: direction check, argument and dimension
/// resolution, setup renaming and oracle porting.
pub fn synthesize(case: &BugCase, pair: &CandidatePair, corpus: &Corpus) -> Result<SynthesizedCase, SkipReason> {
    let not_applicable = |detail: String| SkipReason::NotApplicable { detail };
    if !pair.filter_verdict.is_accept() {
        return Err(not_applicable(format!(
            "pair {} / {} was rejected by the argument filter",
            pair.source_api, pair.target_api
        )));
    }
    let pair = pair.oriented_from(&case.source_api).ok_or_else(|| {
        not_applicable(format!(
            "pair {} / {} does not involve {}",
            pair.source_api, pair.target_api, case.source_api
        ))
    })?;
    let sig_s = corpus
        .signature(&case.source_api)
        .ok_or_else(|| not_applicable(format!("unknown source API {}", case.source_api)))?;
    let sig_t = corpus
        .signature(&pair.target_api)
        .ok_or_else(|| not_applicable(format!("unknown target API {}", pair.target_api)))?;

    let (mut call, mut log) = retarget_call(&case.repro_call, sig_s, sig_t)?;

    let dropped: BTreeSet<&str> = log
        .iter()
        .filter_map(|t| match t {
            Transform::DropArg { param } => Some(param.as_str()),
            _ => None,
        })
        .collect();
    call.setup_steps = rename_in_fragments(&call.setup_steps, &sig_s.name, &sig_t.name);
    let idents = ident_regex();
    let review_flags = call
        .setup_steps
        .iter()
        .enumerate()
        .filter_map(|(i, frag)| {
            let hits: BTreeSet<&str> = idents
                .find_iter(frag)
                .map(|m| m.as_str())
                .filter(|t| dropped.contains(t))
                .collect();
            (!hits.is_empty()).then(|| {
                let hits: Vec<_> = hits.into_iter().collect();
                format!("setup fragment {i} mentions dropped argument(s) {}", hits.join(", "))
            })
        })
        .collect();

    if let Some(recipe) = &call.measurement_recipe {
        let (recipe, touched) = retarget_recipe(recipe, "call", sig_s, sig_t)?;
        if touched {
            log.push(Transform::RecipeRetarget { slot: "call".into() });
        }
        call.measurement_recipe = Some(recipe);
    }

    let (oracle, oracle_log) = port_oracle(&case.oracle, sig_s, sig_t)?;
    log.extend(oracle_log);

    validate_call(&call, sig_t).map_err(|violations| SkipReason::ValidationFailed { violations })?;

    Ok(SynthesizedCase {
        case_id: synthesized_case_id(&case.case_id, &sig_t.name),
        source_case_id: case.case_id.clone(),
        source_api: sig_s.name.clone(),
        target_api: sig_t.name.clone(),
        call,
        oracle,
        transform_log: log,
        review_flags,
    })
}

/// Outcome of trying one (bug case, pair) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub source_case_id: String,
    pub target_api: String,
    pub outcome: Result<SynthesizedCase, SkipReason>,
}

/// On-disk form of a failed attempt (`"kind": "skip"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub source_case_id: String,
    pub target_api: String,
    pub reason: SkipReason,
}

/// Splits attempts into synthesized cases (sorted by id) and skips.
pub fn partition_attempts(attempts: Vec<Attempt>) -> (Vec<SynthesizedCase>, Vec<SkipRecord>) {
    let mut cases = Vec::new();
    let mut skips = Vec::new();
    for a in attempts {
        match a.outcome {
            Ok(case) => cases.push(case),
            Err(reason) => skips.push(SkipRecord {
                source_case_id: a.source_case_id,
                target_api: a.target_api,
                reason,
            }),
        }
    }
    cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    (cases, skips)
}

/// Tries every bug case against every accepted pair involving its API.
/// Attempts come back sorted by (source case, target API).
pub fn synthesize_all(corpus: &Corpus, pairs: &[CandidatePair]) -> Vec<Attempt> {
    let mut attempts = Vec::new();
    for case in corpus.bug_cases.values() {
        for pair in pairs.iter().filter(|p| p.filter_verdict.is_accept()) {
            let Some(oriented) = pair.oriented_from(&case.source_api) else {
                continue;
            };
            attempts.push(Attempt {
                source_case_id: case.case_id.clone(),
                target_api: oriented.target_api.clone(),
                outcome: synthesize(case, &oriented, corpus),
            });
        }
    }
    attempts.sort_by(|a, b| {
        (a.source_case_id.as_str(), a.target_api.as_str()).cmp(&(b.source_case_id.as_str(), b.target_api.as_str()))
    });
    attempts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ExceptionSignature, ParamSpec};

    fn sig(name: &str, required: &[&str], input_rank: u32) -> ApiSignature {
        ApiSignature {
            name: name.into(),
            required_params: required.iter().map(|n| ParamSpec::named(*n)).collect(),
            optional_params: vec![
                ParamSpec::named("stride").with_default(Value::Int(1)),
                ParamSpec::named("input").with_rank(Rank::Fixed(input_rank)),
            ],
            framework_tag: "pytorch-like".into(),
        }
    }

    fn conv_call() -> StructuredCall {
        StructuredCall::new("torch.nn.Conv2d")
            .arg("in_channels", 512)
            .arg("out_channels", 2048)
            .arg("kernel_size", 1)
    }

    #[test]
    fn drop_in_channels_for_lazy_conv() {
        let lazy = sig("torch.nn.LazyConv2d", &["out_channels", "kernel_size"], 4);
        let (call, log) = resolve_argument_difference(&conv_call(), &lazy).unwrap();
        assert_eq!(call.api_name, "torch.nn.LazyConv2d");
        assert_eq!(call.bound_args.len(), 2);
        assert_eq!(call.bound_args["out_channels"], Value::Int(2048));
        assert_eq!(call.bound_args["kernel_size"], Value::Int(1));
        assert_eq!(
            log,
            vec![Transform::DropArg {
                param: "in_channels".into()
            }]
        );
    }

    #[test]
    fn shared_names_only_rebind_the_api() {
        let conv3d = sig("torch.nn.Conv3d", &["in_channels", "out_channels", "kernel_size"], 5);
        let (call, log) = resolve_argument_difference(&conv_call(), &conv3d).unwrap();
        assert_eq!(call.bound_args, conv_call().bound_args);
        assert_eq!(call.api_name, "torch.nn.Conv3d");
        assert!(log.is_empty());
    }

    #[test]
    fn unbound_target_requirement_is_infeasible() {
        let lppool = sig("torch.nn.LPPool2d", &["norm_type", "kernel_size"], 4);
        assert_eq!(
            resolve_argument_difference(&conv_call(), &lppool).unwrap_err(),
            SkipReason::InfeasibleDirection {
                missing: vec!["norm_type".into()]
            }
        );
    }

    #[test]
    fn rank_expand_repeats_last_extent() {
        let s = sig("torch.nn.Conv2d", &["in_channels", "out_channels", "kernel_size"], 4);
        let t = sig("torch.nn.Conv3d", &["in_channels", "out_channels", "kernel_size"], 5);
        let call = conv_call().arg("input", Value::shape(&[2, 3, 8, 8]));
        let (out, log) = resolve_dimension_difference(&call, &s, &t).unwrap();
        assert_eq!(out.bound_args["input"], Value::shape(&[2, 3, 8, 8, 8]));
        assert_eq!(
            log,
            vec![Transform::RankExpand {
                param: "input".into(),
                from: 4,
                to: 5
            }]
        );
        let (back, _) = resolve_dimension_difference(&out, &t, &s).unwrap();
        assert_eq!(back.bound_args["input"], Value::shape(&[2, 3, 8, 8]));
    }

    #[test]
    fn equal_ranks_and_scalars_are_untouched() {
        let s = sig("a", &["x"], 4);
        let t = sig("b", &["x"], 4);
        let call = StructuredCall::new("a")
            .arg("x", 1)
            .arg("input", Value::shape(&[1, 2, 3, 4]));
        let (out, log) = resolve_dimension_difference(&call, &s, &t).unwrap();
        assert_eq!(out, call);
        assert!(log.is_empty());

        let t5 = sig("b", &["x"], 5);
        let scalar = StructuredCall::new("a").arg("x", 1).arg("input", 3);
        let (out, log) = resolve_dimension_difference(&scalar, &s, &t5).unwrap();
        assert_eq!(out, scalar);
        assert!(log.is_empty());
    }

    #[test]
    fn nested_list_with_rank_change_is_unresolvable() {
        let s = sig("a", &["x"], 4);
        let t = sig("b", &["x"], 5);
        let call = StructuredCall::new("a")
            .arg("x", 1)
            .arg("input", Value::List(vec![Value::Int(1), Value::Int(2)]));
        assert_eq!(
            resolve_dimension_difference(&call, &s, &t).unwrap_err(),
            SkipReason::RankUnresolvable { param: "input".into() }
        );
    }

    #[test]
    fn status_template_wildcards_source_name() {
        let s = sig("torch.nn.Conv2d", &["x"], 4);
        let t = sig("torch.nn.Conv3d", &["x"], 5);
        let oracle = OracleSpec::Status {
            exception_signature: ExceptionSignature {
                exception_type: "RuntimeError".into(),
                template: "Conv2d got <N> channels".into(),
            },
        };
        let (ported, log) = port_oracle(&oracle, &s, &t).unwrap();
        assert!(log.is_empty());
        match ported {
            OracleSpec::Status { exception_signature } => {
                assert_eq!(exception_signature.template, "<API> got <N> channels")
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn rename_handles_all_name_forms() {
        assert_eq!(
            rename_api(
                "m = nn.Conv2d(1); torch.nn.Conv2d; Conv2d; Conv2dX",
                "torch.nn.Conv2d",
                "torch.nn.Conv3d"
            ),
            "m = nn.Conv3d(1); torch.nn.Conv3d; Conv3d; Conv2dX"
        );
    }
}
