//! Brute-force reference implementations and random corpus generators
//! shared by the integration tests. Nothing here calls into the crate's
//! own similarity or grouping code.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;

use bugport::analyzer::{FunctionGroup, SimilarityThresholds};
use bugport::corpus::{ApiSignature, CallStackTrace, Corpus, ParamSpec, SourceFunction};
use bugport::matcher::FilterVerdict;
use bugport::records::Record;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini")
}

/// Plain hash-set Jaccard; two empty sets score 0.
pub fn naive_jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let a: HashSet<&str> = a.iter().map(String::as_str).collect();
    let b: HashSet<&str> = b.iter().map(String::as_str).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Every pair scored, components found by BFS over an adjacency matrix.
pub fn brute_force_groups(functions: &[SourceFunction], alpha_io: f64, alpha_call: f64) -> Vec<FunctionGroup> {
    let n = functions.len();
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j
                && naive_jaccard(&functions[i].io_args, &functions[j].io_args) >= alpha_io
                && naive_jaccard(&functions[i].callees, &functions[j].callees) >= alpha_call
            {
                adj[i][j] = true;
            }
        }
    }
    let mut seen = vec![false; n];
    let mut groups = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut members = BTreeSet::new();
        while let Some(i) = queue.pop_front() {
            members.insert(functions[i].name.clone());
            for j in 0..n {
                if adj[i][j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if members.len() > 1 {
            groups.push(FunctionGroup {
                group_id: members.iter().min().unwrap().clone(),
                members,
            });
        }
    }
    groups.sort_by(|a, b| a.group_id.cmp(&b.group_id));
    groups
}

fn pick_set<R: Rng>(rng: &mut R, pool: &[String], lo: usize, hi: usize) -> BTreeSet<String> {
    let k = rng.random_range(lo..=hi);
    pool.choose_multiple(rng, k).cloned().collect()
}

fn pool(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Small vocabularies so that many pairs clear the thresholds.
pub fn random_functions<R: Rng>(rng: &mut R, max: usize) -> Vec<SourceFunction> {
    let n = rng.random_range(2..=max);
    let io = pool("T& a", 7);
    let calls = pool("callee_", 6);
    (0..n)
        .map(|i| SourceFunction {
            name: format!("ns::fn_{i:03}"),
            io_args: pick_set(rng, &io, 0, 4),
            callees: pick_set(rng, &calls, 0, 3),
        })
        .collect()
}

pub fn random_thresholds<R: Rng>(rng: &mut R) -> SimilarityThresholds {
    let grid = [0.0, 0.25, 0.5, 0.6, 0.75, 0.8, 1.0];
    SimilarityThresholds {
        alpha_io: *grid.choose(rng).unwrap(),
        alpha_call: *grid.choose(rng).unwrap(),
        ..SimilarityThresholds::default()
    }
}

/// A random matcher input: signatures over two framework tags, traces for
/// most APIs, and disjoint groups over part of the frame vocabulary.
pub struct MatcherCase {
    pub corpus: Corpus,
    pub groups: Vec<FunctionGroup>,
}

pub const NOISE_PREFIX: &str = "noise_";

pub fn random_matcher_case<R: Rng>(rng: &mut R, max_apis: usize) -> MatcherCase {
    let n = rng.random_range(2..=max_apis);
    let params = pool("p", 6);
    let frames = pool("frame_", 14);
    let grouped = pool("fn_", 8);
    let noise = pool(NOISE_PREFIX, 3);
    let vocab: Vec<String> = frames.iter().chain(&grouped).chain(&noise).cloned().collect();

    let mut records = Vec::new();
    for i in 0..n {
        let name = format!("lib.api_{i:02}");
        let tag = if rng.random_bool(0.5) {
            "pytorch-like"
        } else {
            "tensorflow-like"
        };
        let chosen = pick_set(rng, &params, 0, 4);
        let (mut required, mut optional) = (Vec::new(), Vec::new());
        for p in chosen {
            if rng.random_bool(0.5) {
                required.push(ParamSpec::named(p));
            } else {
                optional.push(ParamSpec::named(p));
            }
        }
        records.push(Record::Signature(ApiSignature {
            name: name.clone(),
            required_params: required,
            optional_params: optional,
            framework_tag: tag.to_string(),
        }));
        if rng.random_bool(0.85) {
            records.push(Record::Trace(CallStackTrace {
                api_name: name,
                frames: pick_set(rng, &vocab, 0, 6),
            }));
        }
    }
    let corpus = Corpus::from_records(records).expect("generated corpus is valid");

    // Disjoint groups: shuffle the grouped names and cut them into runs.
    let mut names = grouped.clone();
    rand::seq::SliceRandom::shuffle(names.as_mut_slice(), rng);
    let mut groups = Vec::new();
    let mut rest = names.as_slice();
    while rest.len() >= 2 {
        let take = rng.random_range(2..=rest.len().min(3));
        let members: BTreeSet<String> = rest[..take].iter().cloned().collect();
        rest = &rest[take..];
        if rng.random_bool(0.7) {
            groups.push(FunctionGroup {
                group_id: members.iter().min().unwrap().clone(),
                members,
            });
        }
    }
    groups.sort_by(|a, b| a.group_id.cmp(&b.group_id));
    MatcherCase { corpus, groups }
}

/// Reference verdict: reject only when both sides require a parameter the
/// other lacks entirely.
pub fn naive_filter(s: &ApiSignature, t: &ApiSignature) -> bool {
    let names = |sig: &ApiSignature| -> HashSet<String> {
        sig.required_params
            .iter()
            .chain(&sig.optional_params)
            .map(|p| p.name.clone())
            .collect()
    };
    let (ns, nt) = (names(s), names(t));
    let s_needs = s.required_params.iter().any(|p| !nt.contains(&p.name));
    let t_needs = t.required_params.iter().any(|p| !ns.contains(&p.name));
    !(s_needs && t_needs)
}

/// `(source, target) -> (score, accepted)` for every context pair, scored
/// over all API pairs with the frames prefixed by [`NOISE_PREFIX`] removed.
pub fn brute_force_context_pairs(
    corpus: &Corpus,
    groups: &[FunctionGroup],
    beta: f64,
) -> BTreeMap<(String, String), (f64, bool)> {
    let mut group_of = BTreeMap::new();
    for g in groups {
        for m in &g.members {
            group_of.insert(m.clone(), g.group_id.clone());
        }
    }
    let contexts: Vec<(String, BTreeSet<String>)> = corpus
        .traces
        .values()
        .map(|t| {
            let tokens: BTreeSet<String> = t
                .frames
                .iter()
                .filter(|f| !f.starts_with(NOISE_PREFIX))
                .map(|f| group_of.get(f).cloned().unwrap_or_else(|| f.clone()))
                .collect();
            (t.api_name.clone(), tokens)
        })
        .filter(|(_, tokens)| !tokens.is_empty())
        .collect();

    let mut out = BTreeMap::new();
    for (a, ca) in &contexts {
        for (b, cb) in &contexts {
            if a >= b {
                continue;
            }
            let (sa, sb) = (&corpus.signatures[a], &corpus.signatures[b]);
            if sa.framework_tag != sb.framework_tag {
                continue;
            }
            let score = naive_jaccard(ca, cb);
            if score >= beta {
                out.insert((a.clone(), b.clone()), (score, naive_filter(sa, sb)));
            }
        }
    }
    out
}

pub fn filter_accepts(v: &FilterVerdict) -> bool {
    matches!(v, FilterVerdict::Accept)
}
