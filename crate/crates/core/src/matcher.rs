//! Context canonicalization, API pair matching and argument filtering.

use std::collections::{BTreeMap, BTreeSet};

use globset::{Glob, GlobSet, GlobSetBuilder};
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{membership, FunctionGroup, SimilarityThresholds};
use crate::corpus::{jaccard, ApiSignature, CallStackTrace, Corpus};

/// How many signature-similarity partners each source API keeps.
pub const SIGNATURE_TOP_K: usize = 20;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("context of {0:?} is empty")]
    EmptyContext(String),
    #[error("bad noise pattern {pattern:?}: {message}")]
    BadPattern { pattern: String, message: String },
}

/// Drops frames that only carry runtime noise (allocators, logging, ...).
#[derive(Debug, Clone)]
pub struct NoiseFilter {
    set: GlobSet,
}

impl NoiseFilter {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self, MatchError> {
        let mut builder = GlobSetBuilder::new();
        for p in patterns {
            let glob = Glob::new(p.as_ref()).map_err(|e| MatchError::BadPattern {
                pattern: p.as_ref().to_string(),
                message: e.to_string(),
            })?;
            builder.add(glob);
        }
        let set = builder.build().map_err(|e| MatchError::BadPattern {
            pattern: String::new(),
            message: e.to_string(),
        })?;
        Ok(Self { set })
    }

    pub fn empty() -> Self {
        Self { set: GlobSet::empty() }
    }

    pub fn is_noise(&self, frame: &str) -> bool {
        self.set.is_match(frame)
    }
}

pub fn normalize_trace(trace: &CallStackTrace, noise: &NoiseFilter) -> BTreeSet<String> {
    trace.frames.iter().filter(|f| !noise.is_noise(f)).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalContext {
    pub api_name: String,
    pub tokens: BTreeSet<String>,
}

/// Replaces each grouped frame by its group id.
pub fn canonicalize(api_name: &str, frames: &BTreeSet<String>, groups: &[FunctionGroup]) -> CanonicalContext {
    canonicalize_with(api_name, frames, &membership(groups))
}

fn canonicalize_with(api_name: &str, frames: &BTreeSet<String>, member_of: &BTreeMap<&str, &str>) -> CanonicalContext {
    let tokens = frames
        .iter()
        .map(|f| member_of.get(f.as_str()).map_or_else(|| f.clone(), |g| g.to_string()))
        .collect();
    CanonicalContext {
        api_name: api_name.to_string(),
        tokens,
    }
}

pub fn context_similarity(a: &CanonicalContext, b: &CanonicalContext) -> Result<f64, MatchError> {
    for ctx in [a, b] {
        if ctx.tokens.is_empty() {
            return Err(MatchError::EmptyContext(ctx.api_name.clone()));
        }
    }
    Ok(jaccard(&a.tokens, &b.tokens))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Context,
    Signature,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::Context => "context",
            Provenance::Signature => "signature",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum FilterVerdict {
    Accept,
    /// Each side requires a parameter the other does not have at all.
    Reject {
        reason: RejectReason,
        source_only: Vec<String>,
        target_only: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    MutualRequiredMismatch,
}

impl FilterVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, FilterVerdict::Accept)
    }
}

fn required_missing_from(sig: &ApiSignature, other: &ApiSignature) -> Vec<String> {
    sig.required_params
        .iter()
        .filter(|p| !other.has_param(&p.name))
        .map(|p| p.name.clone())
        .collect()
}

/// Rejects the pair only when neither API's call can supply the other's
/// required parameters.
pub fn filter_arguments(sig_s: &ApiSignature, sig_t: &ApiSignature) -> FilterVerdict {
    let source_only = required_missing_from(sig_s, sig_t);
    let target_only = required_missing_from(sig_t, sig_s);
    if !source_only.is_empty() && !target_only.is_empty() {
        FilterVerdict::Reject {
            reason: RejectReason::MutualRequiredMismatch,
            source_only,
            target_only,
        }
    } else {
        FilterVerdict::Accept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub source_api: String,
    pub target_api: String,
    pub score: f64,
    pub provenance: Provenance,
    /// Signature-similarity score when the pair was also supplied by the
    /// signature list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature_score: Option<f64>,
    pub filter_verdict: FilterVerdict,
}

impl CandidatePair {
    /// The pair seen from `api`'s side, flipping it if `api` is the target.
    /// The filter verdict is symmetric, so it carries over unchanged.
    pub fn oriented_from(&self, api: &str) -> Option<CandidatePair> {
        if self.source_api == api {
            Some(self.clone())
        } else if self.target_api == api {
            let mut flipped = self.clone();
            std::mem::swap(&mut flipped.source_api, &mut flipped.target_api);
            if let FilterVerdict::Reject {
                source_only,
                target_only,
                ..
            } = &mut flipped.filter_verdict
            {
                std::mem::swap(source_only, target_only);
            }
            Some(flipped)
        } else {
            None
        }
    }
}

/// Normalized, canonicalized contexts of every traced API. APIs whose
/// frames are all noise are left out.
pub fn build_contexts(
    corpus: &Corpus,
    groups: &[FunctionGroup],
    noise: &NoiseFilter,
) -> BTreeMap<String, CanonicalContext> {
    let member_of = membership(groups);
    let mut out = BTreeMap::new();
    for (api, trace) in &corpus.traces {
        let frames = normalize_trace(trace, noise);
        if frames.is_empty() {
            warn!("every frame of {api} was filtered as noise; excluded from context matching");
            continue;
        }
        out.insert(api.clone(), canonicalize_with(api, &frames, &member_of));
    }
    out
}

/// Context pairs (score >= beta of the shared framework tag) merged with
/// the top signature-similarity partners of each API, then filtered.
/// Pairs are unordered, stored with `source_api < target_api`, and sorted.
pub fn match_pairs(
    corpus: &Corpus,
    groups: &[FunctionGroup],
    thresholds: &SimilarityThresholds,
    noise: &NoiseFilter,
) -> Vec<CandidatePair> {
    let contexts = build_contexts(corpus, groups, noise);
    let apis: Vec<&CanonicalContext> = contexts.values().collect();

    let mut pairs: BTreeMap<(String, String), CandidatePair> = BTreeMap::new();
    for (i, a) in apis.iter().enumerate() {
        let tag_a = &corpus.signatures[&a.api_name].framework_tag;
        for b in &apis[i + 1..] {
            if &corpus.signatures[&b.api_name].framework_tag != tag_a {
                continue;
            }
            let score = context_similarity(a, b).expect("empty contexts were dropped");
            if score >= thresholds.beta.beta_for(tag_a) {
                pairs.insert(
                    (a.api_name.clone(), b.api_name.clone()),
                    CandidatePair {
                        source_api: a.api_name.clone(),
                        target_api: b.api_name.clone(),
                        score,
                        provenance: Provenance::Context,
                        signature_score: None,
                        filter_verdict: FilterVerdict::Accept,
                    },
                );
            }
        }
    }

    for (source, target, score) in top_signature_pairs(corpus) {
        let key = if source < target {
            (source, target)
        } else {
            (target, source)
        };
        match pairs.get_mut(&key) {
            Some(existing) => {
                let best = existing.signature_score.map_or(score, |s| s.max(score));
                existing.signature_score = Some(best);
                if existing.provenance == Provenance::Signature {
                    existing.score = best;
                }
            }
            None => {
                pairs.insert(
                    key.clone(),
                    CandidatePair {
                        source_api: key.0,
                        target_api: key.1,
                        score,
                        provenance: Provenance::Signature,
                        signature_score: Some(score),
                        filter_verdict: FilterVerdict::Accept,
                    },
                );
            }
        }
    }

    pairs
        .into_values()
        .map(|mut pair| {
            pair.filter_verdict = filter_arguments(
                &corpus.signatures[&pair.source_api],
                &corpus.signatures[&pair.target_api],
            );
            pair
        })
        .collect()
}

/// At most [`SIGNATURE_TOP_K`] partners per source API, best score first
/// (ties by target name). Self-pairs are dropped.
fn top_signature_pairs(corpus: &Corpus) -> Vec<(String, String, f64)> {
    let mut by_source: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
    for p in &corpus.signature_pairs {
        if p.source_api != p.target_api {
            by_source
                .entry(p.source_api.as_str())
                .or_default()
                .push((p.target_api.as_str(), p.score));
        }
    }
    let mut out = Vec::new();
    for (source, mut targets) in by_source {
        targets.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        targets.dedup_by(|a, b| a.0 == b.0);
        for (target, score) in targets.into_iter().take(SIGNATURE_TOP_K) {
            out.push((source.to_string(), target.to_string(), score));
        }
    }
    out
}

/// APIs taking part in at least one accepted pair.
pub fn covered_apis(pairs: &[CandidatePair]) -> BTreeSet<String> {
    pairs
        .iter()
        .filter(|p| p.filter_verdict.is_accept())
        .flat_map(|p| [p.source_api.clone(), p.target_api.clone()])
        .collect()
}
