//! Source-function similarity and grouping of analogous functions.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::corpus::{jaccard, SourceFunction};

/// A connected component of pairwise-analogous source functions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FunctionGroup {
    /// Lexicographically smallest member name.
    pub group_id: String,
    pub members: BTreeSet<String>,
}

/// Context-similarity threshold per framework tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaPolicy {
    pub per_tag: BTreeMap<String, f64>,
    /// Used for tags without an entry.
    pub fallback: f64,
    /// When set, applies to every tag.
    pub fixed: Option<f64>,
}

impl Default for BetaPolicy {
    fn default() -> Self {
        Self {
            per_tag: [("pytorch-like".to_string(), 0.6), ("tensorflow-like".to_string(), 0.8)].into(),
            fallback: 0.6,
            fixed: None,
        }
    }
}

impl BetaPolicy {
    pub fn fixed(beta: f64) -> Self {
        Self {
            fixed: Some(beta),
            ..Self::default()
        }
    }

    pub fn beta_for(&self, framework_tag: &str) -> f64 {
        self.fixed
            .or_else(|| self.per_tag.get(framework_tag).copied())
            .unwrap_or(self.fallback)
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.per_tag.values().copied().chain([self.fallback]).chain(self.fixed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityThresholds {
    pub alpha_io: f64,
    pub alpha_call: f64,
    pub beta: BetaPolicy,
}

impl Default for SimilarityThresholds {
    fn default() -> Self {
        Self {
            alpha_io: 0.8,
            alpha_call: 0.8,
            beta: BetaPolicy::default(),
        }
    }
}

impl SimilarityThresholds {
    pub fn validate(&self) -> Result<(), String> {
        let alphas = [("alpha_io", self.alpha_io), ("alpha_call", self.alpha_call)];
        let betas = self.beta.values().map(|b| ("beta", b));
        for (name, v) in alphas.into_iter().chain(betas) {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// `(sim_io, sim_call)`.
pub fn function_similarity(f1: &SourceFunction, f2: &SourceFunction) -> (f64, f64) {
    (jaccard(&f1.io_args, &f2.io_args), jaccard(&f1.callees, &f2.callees))
}

/// Both similarities must reach their thresholds (inclusive).
pub fn is_analogous(f1: &SourceFunction, f2: &SourceFunction, thresholds: &SimilarityThresholds) -> bool {
    passes_thresholds(function_similarity(f1, f2), thresholds)
}

pub fn passes_thresholds((sim_io, sim_call): (f64, f64), thresholds: &SimilarityThresholds) -> bool {
    sim_io >= thresholds.alpha_io && sim_call >= thresholds.alpha_call
}

/// Index pairs worth scoring. With `alpha_call > 0` an analogous pair must
/// share a callee, so only callee-sharing pairs are produced; otherwise
/// every pair is a candidate.
fn candidate_pairs(functions: &[&SourceFunction], alpha_call: f64) -> BTreeSet<(usize, usize)> {
    let n = functions.len();
    if alpha_call <= 0.0 {
        return (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    }
    let mut by_callee: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, f) in functions.iter().enumerate() {
        for callee in &f.callees {
            by_callee.entry(callee.as_str()).or_default().push(i);
        }
    }
    let mut pairs = BTreeSet::new();
    for members in by_callee.values() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                pairs.insert((i.min(j), i.max(j)));
            }
        }
    }
    pairs
}

/// Groups functions into connected components of the analogous-pair graph.
/// Singletons are dropped; groups come back sorted by `group_id`.
pub fn cluster_functions<'a, I>(functions: I, thresholds: &SimilarityThresholds) -> Vec<FunctionGroup>
where
    I: IntoIterator<Item = &'a SourceFunction>,
{
    let mut functions: Vec<&SourceFunction> = functions.into_iter().collect();
    functions.sort_by(|a, b| a.name.cmp(&b.name));
    functions.dedup_by(|a, b| a.name == b.name);

    let mut components = UnionFind::<usize>::new(functions.len());
    for (i, j) in candidate_pairs(&functions, thresholds.alpha_call) {
        if is_analogous(functions[i], functions[j], thresholds) {
            components.union(i, j);
        }
    }

    let mut by_root: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for (i, f) in functions.iter().enumerate() {
        by_root.entry(components.find(i)).or_default().insert(f.name.clone());
    }
    let mut groups: Vec<FunctionGroup> = by_root
        .into_values()
        .filter(|members| members.len() >= 2)
        .map(|members| FunctionGroup {
            group_id: members.iter().next().cloned().expect("non-empty"),
            members,
        })
        .collect();
    groups.sort();
    groups
}

/// Lookup from member name to its group's id.
pub fn membership(groups: &[FunctionGroup]) -> BTreeMap<&str, &str> {
    groups
        .iter()
        .flat_map(|g| g.members.iter().map(move |m| (m.as_str(), g.group_id.as_str())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(name: &str, io: &[&str], calls: &[&str]) -> SourceFunction {
        SourceFunction::new(name, io.iter().copied(), calls.iter().copied())
    }

    #[test]
    fn similarity_examples() {
        let a = f("a", &["x", "y"], &["c1"]);
        let b = f("b", &["x", "y"], &["c1"]);
        assert_eq!(function_similarity(&a, &b), (1.0, 1.0));

        let a = f("a", &["a", "b"], &["p"]);
        let b = f("b", &["b", "c"], &["q"]);
        let (io, call) = function_similarity(&a, &b);
        assert!((io - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(call, 0.0);
    }

    #[test]
    fn conv_functions_are_analogous() {
        let io = [
            "const Tensor& input",
            "const Tensor& weight",
            "const c10::optional<Tensor>& bias",
            "IntArrayRef stride",
            "IntArrayRef padding",
            "IntArrayRef dilation",
            "int64_t groups",
            "Tensor",
        ];
        let calls = ["at::convolution", "at::_convolution_mode"];
        let conv2d = f("aten::conv2d", &io, &calls);
        let conv_t = f("aten::conv_transpose2d", &io, &calls);
        let (sim_io, sim_call) = function_similarity(&conv2d, &conv_t);
        assert!(sim_io >= 0.8 && sim_call >= 0.8);
        assert!(is_analogous(&conv2d, &conv_t, &SimilarityThresholds::default()));
    }

    #[test]
    fn thresholds_are_inclusive_conjunctions() {
        let t = SimilarityThresholds::default();
        assert!(passes_thresholds((0.9, 0.9), &t));
        assert!(!passes_thresholds((0.9, 0.7), &t));
        assert!(passes_thresholds((0.8, 0.8), &t));
    }

    #[test]
    fn inclusive_at_exact_threshold() {
        // 4 shared out of 5 = 0.8 exactly.
        let a = f("a", &["1", "2", "3", "4", "5"], &["1", "2", "3", "4", "5"]);
        let b = f("b", &["1", "2", "3", "4"], &["1", "2", "3", "4"]);
        assert_eq!(function_similarity(&a, &b), (0.8, 0.8));
        assert!(is_analogous(&a, &b, &SimilarityThresholds::default()));
    }

    #[test]
    fn chain_forms_one_component() {
        let a = f("a", &["1", "2", "3", "4", "5"], &["1", "2", "3", "4", "5"]);
        let b = f("b", &["1", "2", "3", "4", "5", "6"], &["1", "2", "3", "4", "5", "6"]);
        let c = f(
            "c",
            &["1", "2", "3", "4", "5", "6", "7"],
            &["1", "2", "3", "4", "5", "6", "7"],
        );
        // a-c: 5/7 < 0.8, so the group only exists through b.
        assert!(!is_analogous(&a, &c, &SimilarityThresholds::default()));
        let groups = cluster_functions([&c, &a, &b], &SimilarityThresholds::default());
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].group_id, "a");
        assert_eq!(groups[0].members.len(), 3);
    }

    #[test]
    fn no_pairs_no_groups_and_disjoint_pairs() {
        let t = SimilarityThresholds::default();
        let a = f("a", &["x"], &["p"]);
        let b = f("b", &["y"], &["q"]);
        assert!(cluster_functions([&a, &b], &t).is_empty());

        let c = f("c", &["x"], &["p"]);
        let d = f("d", &["y"], &["q"]);
        let groups = cluster_functions([&a, &b, &c, &d], &t);
        let ids: Vec<_> = groups.iter().map(|g| g.group_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
    }

    #[test]
    fn zero_call_threshold_compares_every_pair() {
        let t = SimilarityThresholds {
            alpha_io: 1.0,
            alpha_call: 0.0,
            ..Default::default()
        };
        let a = f("a", &["x"], &[]);
        let b = f("b", &["x"], &[]);
        assert_eq!(cluster_functions([&a, &b], &t).len(), 1);
    }
}
