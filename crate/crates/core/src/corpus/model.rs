use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

/// Expected rank of a dimension-related parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rank {
    Fixed(u32),
    /// Accepts any rank; never triggers dimension resolution.
    Free,
}

impl Rank {
    pub fn fixed(self) -> Option<u32> {
        match self {
            Rank::Fixed(r) => Some(r),
            Rank::Free => None,
        }
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rank::Fixed(r) => write!(f, "{r}"),
            Rank::Free => f.write_str("rank-free"),
        }
    }
}

impl Serialize for Rank {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Rank::Fixed(r) => serializer.serialize_u32(*r),
            Rank::Free => serializer.serialize_str("rank-free"),
        }
    }
}

impl<'de> Deserialize<'de> for Rank {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(u32),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(r) => Ok(Rank::Fixed(r)),
            Repr::Text(s) if s == "rank-free" => Ok(Rank::Free),
            Repr::Text(s) => Err(de::Error::custom(format!(
                "rank annotation must be a non-negative integer or \"rank-free\", got {s:?}"
            ))),
        }
    }
}

/// Ordered list of positive extents, e.g. a tensor shape `(2, 3, 8, 8)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ShapeTuple {
    pub shape: Vec<u64>,
}

impl ShapeTuple {
    pub fn new(shape: Vec<u64>) -> Option<Self> {
        if shape.iter().all(|&d| d >= 1) {
            Some(Self { shape })
        } else {
            None
        }
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }
}

impl<'de> Deserialize<'de> for ShapeTuple {
    /// Only the `{"shape": [..]}` map form; a derived impl would also take
    /// `[[..]]`, which is a nested list.
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ShapeVisitor;

        impl<'de> de::Visitor<'de> for ShapeVisitor {
            type Value = ShapeTuple;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(r#"a map {"shape": [..]}"#)
            }

            fn visit_map<A: de::MapAccess<'de>>(self, mut map: A) -> Result<ShapeTuple, A::Error> {
                let mut shape: Option<Vec<u64>> = None;
                while let Some(key) = map.next_key::<String>()? {
                    if key != "shape" || shape.is_some() {
                        return Err(de::Error::custom(format!("unexpected shape-tuple field {key:?}")));
                    }
                    shape = Some(map.next_value()?);
                }
                let shape = shape.ok_or_else(|| de::Error::missing_field("shape"))?;
                ShapeTuple::new(shape).ok_or_else(|| de::Error::custom("shape-tuple entries must be >= 1"))
            }
        }

        deserializer.deserialize_map(ShapeVisitor)
    }
}

/// A literal argument value.
///
/// On the wire: JSON booleans, integers, floats and strings are scalars,
/// `{"shape": [..]}` is a shape-tuple and a JSON array is a nested list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Shape(ShapeTuple),
    List(Vec<Value>),
}

impl Value {
    pub fn shape(dims: &[u64]) -> Self {
        Value::Shape(ShapeTuple::new(dims.to_vec()).expect("shape entries must be >= 1"))
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, Value::Bool(_) | Value::Int(_) | Value::Float(_) | Value::Str(_))
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_annotation: Option<Rank>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_literal: Option<Value>,
}

impl ParamSpec {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            rank_annotation: None,
            default_literal: None,
        }
    }

    pub fn with_rank(mut self, rank: Rank) -> Self {
        self.rank_annotation = Some(rank);
        self
    }

    pub fn with_default(mut self, value: Value) -> Self {
        self.default_literal = Some(value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSignature {
    pub name: String,
    #[serde(default)]
    pub required_params: Vec<ParamSpec>,
    #[serde(default)]
    pub optional_params: Vec<ParamSpec>,
    pub framework_tag: String,
}

impl ApiSignature {
    /// Required parameters first, then optional ones; this is also the
    /// positional binding order.
    pub fn params(&self) -> impl Iterator<Item = &ParamSpec> {
        self.required_params.iter().chain(self.optional_params.iter())
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params().find(|p| p.name == name)
    }

    pub fn has_param(&self, name: &str) -> bool {
        self.param(name).is_some()
    }

    pub fn is_required(&self, name: &str) -> bool {
        self.required_params.iter().any(|p| p.name == name)
    }

    pub fn param_names(&self) -> BTreeSet<&str> {
        self.params().map(|p| p.name.as_str()).collect()
    }

    /// Last dotted segment, `Conv2d` for `torch.nn.Conv2d`.
    pub fn terminal_name(&self) -> &str {
        terminal_segment(&self.name)
    }

    pub(crate) fn check_invariants(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("signature name is empty".into());
        }
        let mut seen = BTreeSet::new();
        for p in self.params() {
            if p.name.is_empty() {
                return Err(format!("{}: empty parameter name", self.name));
            }
            if !seen.insert(p.name.as_str()) {
                return Err(format!("{}: parameter {:?} declared twice", self.name, p.name));
            }
        }
        Ok(())
    }
}

pub fn terminal_segment(name: &str) -> &str {
    name.rsplit('.').next().unwrap_or(name)
}

/// Collapses whitespace runs so `const  Tensor& weight` and
/// `const Tensor& weight` are the same token.
pub fn normalize_token(token: &str) -> String {
    token.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFunction {
    pub name: String,
    #[serde(default)]
    pub io_args: BTreeSet<String>,
    #[serde(default)]
    pub callees: BTreeSet<String>,
}

impl SourceFunction {
    pub fn new<I, J, S, T>(name: impl Into<String>, io_args: I, callees: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        Self {
            name: name.into(),
            io_args: io_args.into_iter().map(|s| normalize_token(s.as_ref())).collect(),
            callees: callees.into_iter().map(|s| normalize_token(s.as_ref())).collect(),
        }
    }

    pub(crate) fn normalized(self) -> Self {
        Self::new(self.name, self.io_args, self.callees)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallStackTrace {
    pub api_name: String,
    #[serde(default)]
    pub frames: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredCall {
    pub api_name: String,
    #[serde(default)]
    pub bound_args: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub setup_steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement_recipe: Option<MeasurementRecipe>,
}

impl StructuredCall {
    pub fn new(api_name: impl Into<String>) -> Self {
        Self {
            api_name: api_name.into(),
            bound_args: BTreeMap::new(),
            setup_steps: Vec::new(),
            measurement_recipe: None,
        }
    }

    pub fn arg(mut self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        self.bound_args.insert(name.into(), value.into());
        self
    }

    /// Every call nested in this call's measurement recipe, depth first.
    pub fn nested_calls(&self) -> Vec<&StructuredCall> {
        let mut out = Vec::new();
        if let Some(recipe) = &self.measurement_recipe {
            for call in &recipe.body {
                out.push(call);
                out.extend(call.nested_calls());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BugKind {
    Status,
    Value,
    Performance,
}

impl fmt::Display for BugKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BugKind::Status => "status",
            BugKind::Value => "value",
            BugKind::Performance => "performance",
        })
    }
}

/// Exception type token plus a message template with literal slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExceptionSignature {
    #[serde(rename = "type")]
    pub exception_type: String,
    pub template: String,
}

impl ExceptionSignature {
    pub const HARD_CRASH: &'static str = "<hard-crash>";

    /// A silent abort: the process died without raising anything.
    pub fn hard_crash() -> Self {
        Self {
            exception_type: Self::HARD_CRASH.to_string(),
            template: String::new(),
        }
    }

    pub fn is_hard_crash(&self) -> bool {
        self.exception_type == Self::HARD_CRASH
    }
}

impl fmt::Display for ExceptionSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.template.is_empty() {
            f.write_str(&self.exception_type)
        } else {
            write!(f, "{}: {}", self.exception_type, self.template)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anomaly {
    Nan,
    Inf,
    ConstantOutput,
    MismatchToken,
}

impl fmt::Display for Anomaly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Anomaly::Nan => "nan",
            Anomaly::Inf => "inf",
            Anomaly::ConstantOutput => "constant-output",
            Anomaly::MismatchToken => "mismatch-token",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    WallTimeSeconds,
    PeakMemoryMegabytes,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::WallTimeSeconds => "wall-time-seconds",
            Metric::PeakMemoryMegabytes => "peak-memory-megabytes",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    /// The subject costs more than `margin` times the expected bound.
    SubjectExceedsBaseline,
    /// The subject stays within `margin` of the baseline although it was
    /// expected to improve on it.
    NoImprovement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecipe {
    pub metric: Metric,
    pub repetitions: u32,
    #[serde(default)]
    pub warmup_runs: u32,
    #[serde(default)]
    pub body: Vec<StructuredCall>,
}

pub const DEFAULT_MARGIN: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "oracle", rename_all = "snake_case")]
pub enum OracleSpec {
    Status {
        exception_signature: ExceptionSignature,
    },
    Value {
        anomaly_pattern: Anomaly,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pattern_detail: Option<String>,
    },
    Performance {
        baseline_recipe: MeasurementRecipe,
        subject_recipe: MeasurementRecipe,
        comparator: Comparator,
        margin: f64,
    },
}

impl OracleSpec {
    pub fn kind(&self) -> BugKind {
        match self {
            OracleSpec::Status { .. } => BugKind::Status,
            OracleSpec::Value { .. } => BugKind::Value,
            OracleSpec::Performance { .. } => BugKind::Performance,
        }
    }

    /// Named measurement slots this oracle needs from a runner.
    pub fn recipe_slots(&self) -> Vec<(&'static str, &MeasurementRecipe)> {
        match self {
            OracleSpec::Performance {
                baseline_recipe,
                subject_recipe,
                ..
            } => vec![("baseline", baseline_recipe), ("subject", subject_recipe)],
            _ => Vec::new(),
        }
    }

    /// Stable short description, used to fold duplicate bugs in reports.
    pub fn fingerprint(&self) -> String {
        match self {
            OracleSpec::Status { exception_signature } => format!("status:{exception_signature}"),
            OracleSpec::Value { anomaly_pattern, .. } => format!("value:{anomaly_pattern}"),
            OracleSpec::Performance {
                baseline_recipe,
                comparator,
                ..
            } => format!("performance:{}:{comparator:?}", baseline_recipe.metric),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugCase {
    pub case_id: String,
    pub source_api: String,
    pub repro_call: StructuredCall,
    pub bug_kind: BugKind,
    pub oracle: OracleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_issue: Option<String>,
}

/// A precomputed signature-similarity pair, trusted as given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignaturePair {
    pub source_api: String,
    pub target_api: String,
    pub score: f64,
}
