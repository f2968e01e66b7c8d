//! Deterministic rendering of synthesized cases into runnable source text.
//!
//! A template file starts with `key = value` header lines, then a line
//! holding only `---`, then the body. The body may use the placeholders
//! `{setup}`, `{call}`, `{measure_baseline}`, `{measure_subject}` and
//! `{oracle_assert}`; other brace text is copied through untouched.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use regex::{Captures, Regex};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{ApiSignature, MeasurementRecipe, OracleSpec, StructuredCall, Value};
use crate::generator::SynthesizedCase;

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("template is missing the {0} placeholder")]
    MissingPlaceholder(&'static str),
    #[error("malformed template: {0}")]
    Malformed(String),
    #[error("no template for dialect {0:?}")]
    UnknownDialect(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderTemplate {
    pub dialect: String,
    pub comment: String,
    pub body: String,
}

impl RenderTemplate {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let (header, body) = text
            .split_once("\n---\n")
            .ok_or_else(|| TemplateError::Malformed("no `---` separator line".into()))?;
        let mut fields = BTreeMap::new();
        for line in header.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TemplateError::Malformed(format!("header line {line:?}")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let dialect = fields
            .remove("dialect")
            .ok_or_else(|| TemplateError::Malformed("header lacks `dialect`".into()))?;
        let comment = fields.remove("comment").unwrap_or_else(|| "#".into());
        Ok(Self {
            dialect,
            comment,
            body: body.to_string(),
        })
    }
}

/// Templates keyed by dialect (framework tag), with a `generic` fallback.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, RenderTemplate>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let mut templates = BTreeMap::new();
        for text in [
            include_str!("../templates/pytorch-like.tmpl"),
            include_str!("../templates/tensorflow-like.tmpl"),
            include_str!("../templates/generic.tmpl"),
        ] {
            let t = RenderTemplate::parse(text).expect("shipped templates parse");
            templates.insert(t.dialect.clone(), t);
        }
        Self { templates }
    }

    /// Built-ins overridden by every `*.tmpl` file in `dir`.
    pub fn with_dir(dir: &Path) -> Result<Self, String> {
        let mut set = Self::builtin();
        let entries = std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        paths.sort();
        for path in paths.into_iter().filter(|p| p.extension().is_some_and(|e| e == "tmpl")) {
            let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let t = RenderTemplate::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            set.templates.insert(t.dialect.clone(), t);
        }
        Ok(set)
    }

    pub fn for_dialect(&self, dialect: &str) -> Result<&RenderTemplate, TemplateError> {
        self.templates
            .get(dialect)
            .or_else(|| self.templates.get("generic"))
            .ok_or_else(|| TemplateError::UnknownDialect(dialect.to_string()))
    }
}

/// Short digest of the target API and its bound arguments. Mock runners
/// key their scripted responses on it.
pub fn case_fingerprint(call: &StructuredCall) -> String {
    let args = serde_json::to_string(&call.bound_args).expect("values serialize");
    let digest = Sha256::digest(format!("{}\n{}", call.api_name, args).as_bytes());
    digest[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Extracts the fingerprint from a rendered case's header line.
pub fn fingerprint_of_source(source: &str) -> Option<&str> {
    source
        .lines()
        .take(8)
        .find_map(|l| l.split_once("fingerprint: ").map(|(_, fp)| fp.trim()))
}

pub fn python_literal(value: &Value) -> String {
    match value {
        Value::Bool(true) => "True".into(),
        Value::Bool(false) => "False".into(),
        Value::Int(i) => i.to_string(),
        Value::Float(f) if f.is_nan() => "float('nan')".into(),
        Value::Float(f) if f.is_infinite() => {
            if *f > 0.0 {
                "float('inf')".into()
            } else {
                "float('-inf')".into()
            }
        }
        Value::Float(f) => format!("{f:?}"),
        Value::Str(s) => format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
        Value::Shape(shape) => {
            let dims: Vec<String> = shape.shape.iter().map(u64::to_string).collect();
            if dims.len() == 1 {
                format!("({},)", dims[0])
            } else {
                format!("({})", dims.join(", "))
            }
        }
        Value::List(items) => {
            let items: Vec<String> = items.iter().map(python_literal).collect();
            format!("[{}]", items.join(", "))
        }
    }
}

/// `api(name=value, ...)` with arguments in signature order; names the
/// signature does not know follow alphabetically.
pub fn render_call(call: &StructuredCall, sig: Option<&ApiSignature>) -> String {
    let mut ordered: Vec<&str> = Vec::new();
    if let Some(sig) = sig {
        ordered.extend(
            sig.params()
                .map(|p| p.name.as_str())
                .filter(|n| call.bound_args.contains_key(*n)),
        );
    }
    for name in call.bound_args.keys() {
        if !ordered.contains(&name.as_str()) {
            ordered.push(name);
        }
    }
    let args: Vec<String> = ordered
        .iter()
        .map(|n| format!("{n}={}", python_literal(&call.bound_args[*n])))
        .collect();
    format!("{}({})", call.api_name, args.join(", "))
}

fn render_recipe(slot: &str, recipe: &MeasurementRecipe, sig: Option<&ApiSignature>) -> String {
    let mut out = format!("def _bugport_{slot}():\n");
    if recipe.body.is_empty() {
        out.push_str("    pass\n");
    }
    for call in &recipe.body {
        for step in &call.setup_steps {
            let _ = writeln!(out, "    {step}");
        }
        let this_sig = sig.filter(|s| s.name == call.api_name);
        let _ = writeln!(out, "    {}", render_call(call, this_sig));
    }
    let _ = write!(
        out,
        "_bugport_measure('{slot}', _bugport_{slot}, metric='{}', repetitions={}, warmup_runs={})",
        recipe.metric, recipe.repetitions, recipe.warmup_runs
    );
    out
}

fn render_oracle(oracle: &OracleSpec) -> String {
    match oracle {
        OracleSpec::Status { exception_signature } => format!(
            "_bugport_expect_status({}, {})",
            python_literal(&Value::Str(exception_signature.exception_type.clone())),
            python_literal(&Value::Str(exception_signature.template.clone()))
        ),
        OracleSpec::Value { anomaly_pattern, .. } => format!("_bugport_expect_value('{anomaly_pattern}', result)"),
        OracleSpec::Performance { comparator, margin, .. } => {
            let comparator = serde_json::to_string(comparator).expect("serializes");
            format!(
                "_bugport_expect_performance('{}', {margin:?})",
                comparator.trim_matches('"')
            )
        }
    }
}

/// Renders a case. Output is a pure function of its inputs.
pub fn render(
    case: &SynthesizedCase,
    template: &RenderTemplate,
    target_sig: Option<&ApiSignature>,
) -> Result<String, TemplateError> {
    let body = &template.body;
    for required in ["{call}", "{setup}"] {
        if !body.contains(required) {
            return Err(TemplateError::MissingPlaceholder(required));
        }
    }
    let slots = case.oracle.recipe_slots();
    if !slots.is_empty() {
        for required in ["{measure_baseline}", "{measure_subject}"] {
            if !body.contains(required) {
                return Err(TemplateError::MissingPlaceholder(required));
            }
        }
    }
    let recipe_for = |slot: &str| {
        slots
            .iter()
            .find(|(s, _)| *s == slot)
            .map(|(s, r)| render_recipe(s, r, target_sig))
            .unwrap_or_default()
    };

    let c = &template.comment;
    let mut out = String::new();
    let _ = writeln!(out, "{c} case: {}", case.case_id);
    let _ = writeln!(out, "{c} fingerprint: {}", case_fingerprint(&case.call));
    let _ = writeln!(
        out,
        "{c} target: {} (ported from {})",
        case.target_api, case.source_case_id
    );

    let mut setup = case.call.setup_steps.join("\n");
    if let Some(recipe) = &case.call.measurement_recipe {
        if !setup.is_empty() {
            setup.push('\n');
        }
        setup.push_str(&render_recipe("call", recipe, target_sig));
    }
    let placeholders = Regex::new(r"\{(setup|call|measure_baseline|measure_subject|oracle_assert)\}").unwrap();
    let rendered = placeholders.replace_all(body, |caps: &Captures<'_>| match &caps[1] {
        "setup" => setup.clone(),
        "call" => render_call(&case.call, target_sig),
        "measure_baseline" => recipe_for("baseline"),
        "measure_subject" => recipe_for("subject"),
        _ => render_oracle(&case.oracle),
    });
    out.push_str(&rendered);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_render_as_python() {
        assert_eq!(python_literal(&Value::Bool(true)), "True");
        assert_eq!(python_literal(&Value::Float(0.5)), "0.5");
        assert_eq!(python_literal(&Value::Float(1.0)), "1.0");
        assert_eq!(python_literal(&Value::Str("it's".into())), "'it\\'s'");
        assert_eq!(python_literal(&Value::shape(&[3])), "(3,)");
        assert_eq!(python_literal(&Value::shape(&[2, 3, 8, 8])), "(2, 3, 8, 8)");
        assert_eq!(
            python_literal(&Value::List(vec![Value::Int(1), Value::List(vec![])])),
            "[1, []]"
        );
    }

    #[test]
    fn builtin_templates_parse() {
        let set = TemplateSet::builtin();
        assert_eq!(set.for_dialect("pytorch-like").unwrap().dialect, "pytorch-like");
        assert_eq!(set.for_dialect("unknown").unwrap().dialect, "generic");
    }

    #[test]
    fn template_without_header_is_malformed() {
        assert!(matches!(
            RenderTemplate::parse("{call}"),
            Err(TemplateError::Malformed(_))
        ));
    }

    #[test]
    fn fingerprint_is_stable_and_argument_sensitive() {
        let a = StructuredCall::new("m.A").arg("x", 1);
        let b = StructuredCall::new("m.A").arg("x", 2);
        assert_eq!(case_fingerprint(&a), case_fingerprint(&a.clone()));
        assert_ne!(case_fingerprint(&a), case_fingerprint(&b));
        assert_eq!(case_fingerprint(&a).len(), 16);
    }
}
