mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::collection::{btree_map, btree_set, vec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bugport::analyzer::{cluster_functions, BetaPolicy, SimilarityThresholds};
use bugport::corpus::{
    jaccard, ApiSignature, Comparator, ParamSpec, Rank, ShapeTuple, SourceFunction, StructuredCall, Value,
};
use bugport::generator::{adjust_rank, resolve_argument_difference};
use bugport::matcher::{canonicalize, filter_arguments, match_pairs, NoiseFilter};
use bugport::oracle::{compare_overhead, normalize_exception};
use bugport::records::Record;
use bugport::render::{case_fingerprint, render_call};

use common::*;

fn token_set(max: usize) -> impl Strategy<Value = BTreeSet<String>> {
    btree_set("[a-e]{1,2}", 0..max)
}

fn function() -> impl Strategy<Value = SourceFunction> {
    ("[a-z]{1,3}", token_set(5), token_set(4)).prop_map(|(name, io, calls)| SourceFunction {
        name: format!("f::{name}"),
        io_args: io,
        callees: calls,
    })
}

fn unique_functions() -> impl Strategy<Value = Vec<SourceFunction>> {
    vec(function(), 0..30).prop_map(|fs| {
        let mut by_name: BTreeMap<String, SourceFunction> = BTreeMap::new();
        for f in fs {
            by_name.entry(f.name.clone()).or_insert(f);
        }
        by_name.into_values().collect()
    })
}

fn scalar() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::Int),
        (-1e9f64..1e9).prop_map(Value::Float),
        "[a-z ]{0,8}".prop_map(Value::Str),
        vec(1u64..100, 0..6).prop_map(|d| Value::Shape(ShapeTuple::new(d).unwrap())),
    ]
}

fn value() -> impl Strategy<Value = Value> {
    scalar().prop_recursive(2, 8, 3, |inner| vec(inner, 0..3).prop_map(Value::List))
}

fn call() -> impl Strategy<Value = StructuredCall> {
    (
        "[a-z]{1,4}",
        btree_map("[a-z]{1,3}", value(), 0..5),
        vec("[a-z =()]{0,12}", 0..2),
    )
        .prop_map(|(api, args, setup)| StructuredCall {
            api_name: format!("m.{api}"),
            bound_args: args,
            setup_steps: setup,
            measurement_recipe: None,
        })
}

fn signature() -> impl Strategy<Value = ApiSignature> {
    (btree_set("p[0-5]", 0..5), any::<u8>()).prop_map(|(names, bits)| {
        let (mut required, mut optional) = (Vec::new(), Vec::new());
        for (i, n) in names.into_iter().enumerate() {
            if bits & (1 << i) != 0 {
                required.push(ParamSpec::named(n));
            } else {
                optional.push(ParamSpec::named(n));
            }
        }
        ApiSignature {
            name: "m.api".into(),
            required_params: required,
            optional_params: optional,
            framework_tag: "generic".into(),
        }
    })
}

proptest! {
    #[test]
    fn jaccard_is_symmetric_bounded_and_reflexive(a in token_set(8), b in token_set(8)) {
        let ab = jaccard(&a, &b);
        prop_assert_eq!(ab, jaccard(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, naive_jaccard(&a, &b));
        prop_assert_eq!(jaccard(&a, &a), if a.is_empty() { 0.0 } else { 1.0 });
    }

    #[test]
    fn groups_partition_and_refine_as_alpha_rises(
        fs in unique_functions(),
        lo in 0.0f64..=1.0,
        step in 0.0f64..=0.5,
    ) {
        let hi = (lo + step).min(1.0);
        let at = |a: f64| cluster_functions(&fs, &SimilarityThresholds {
            alpha_io: a,
            alpha_call: a,
            ..SimilarityThresholds::default()
        });
        let (loose, tight) = (at(lo), at(hi));
        let mut seen = BTreeSet::new();
        for g in &loose {
            prop_assert!(g.members.len() >= 2);
            prop_assert_eq!(Some(&g.group_id), g.members.iter().next());
            for m in &g.members {
                prop_assert!(seen.insert(m.clone()), "{} in two groups", m);
            }
        }
        for g in &tight {
            prop_assert!(loose.iter().any(|l| g.members.is_subset(&l.members)));
        }
    }

    #[test]
    fn canonicalization_is_idempotent(frames in btree_set("fn_[0-7]|frame_[0-3]", 0..8), seed in any::<u64>()) {
        let case = random_matcher_case(&mut ChaCha8Rng::seed_from_u64(seed), 4);
        let once = canonicalize("m.a", &frames, &case.groups);
        let twice = canonicalize("m.a", &once.tokens, &case.groups);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn filter_is_symmetric(a in signature(), b in signature()) {
        prop_assert_eq!(filter_arguments(&a, &b).is_accept(), filter_arguments(&b, &a).is_accept());
        prop_assert_eq!(filter_arguments(&a, &b).is_accept(), naive_filter(&a, &b));
    }

    #[test]
    fn argument_resolution_keeps_values_and_drops_unknowns(c in call(), sig in signature()) {
        match resolve_argument_difference(&c, &sig) {
            Ok((out, _)) => {
                for (k, v) in &out.bound_args {
                    prop_assert!(sig.has_param(k));
                    prop_assert_eq!(Some(v), c.bound_args.get(k));
                }
                for p in &sig.required_params {
                    prop_assert!(out.bound_args.contains_key(&p.name));
                }
                prop_assert_eq!(out.bound_args.len(), c.bound_args.keys().filter(|k| sig.has_param(k)).count());
            }
            Err(_) => prop_assert!(sig.required_params.iter().any(|p| !c.bound_args.contains_key(&p.name))),
        }
    }

    #[test]
    fn records_round_trip_through_json(c in call()) {
        let record = Record::Trace(bugport::corpus::CallStackTrace {
            api_name: c.api_name.clone(),
            frames: c.setup_steps.iter().cloned().collect(),
        });
        let line = serde_json::to_string(&record).unwrap();
        prop_assert_eq!(serde_json::from_str::<Record>(&line).unwrap(), record);
        let text = serde_json::to_string(&c).unwrap();
        prop_assert_eq!(serde_json::from_str::<StructuredCall>(&text).unwrap(), c);
    }

    #[test]
    fn rendering_and_fingerprints_are_deterministic(c in call()) {
        prop_assert_eq!(render_call(&c, None), render_call(&c.clone(), None));
        let fp = case_fingerprint(&c);
        prop_assert_eq!(fp.len(), 16);
        prop_assert_eq!(&fp, &case_fingerprint(&c.clone()));
    }

    #[test]
    fn exception_normalization_is_idempotent(msg in "[a-zA-Z0-9 ./:_]{0,40}") {
        let tokens: BTreeSet<String> = ["torch.nn.Conv2d".to_string(), "Conv2d".to_string()].into();
        let once = normalize_exception("RuntimeError", &msg, &tokens);
        let twice = normalize_exception("RuntimeError", &once.template, &tokens);
        prop_assert_eq!(once, twice);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pairs_shrink_as_beta_rises(seed in any::<u64>(), lo in 1u32..=9, step in 0u32..=8) {
        let hi = (lo + step).min(10);
        let case = random_matcher_case(&mut ChaCha8Rng::seed_from_u64(seed), 20);
        let noise = NoiseFilter::new(&[format!("{NOISE_PREFIX}*")]).unwrap();
        let at = |b: u32| {
            let t = SimilarityThresholds { beta: BetaPolicy::fixed(b as f64 / 10.0), ..SimilarityThresholds::default() };
            match_pairs(&case.corpus, &case.groups, &t, &noise)
                .into_iter()
                .map(|p| (p.source_api, p.target_api))
                .collect::<BTreeSet<_>>()
        };
        let (loose, tight) = (at(lo), at(hi));
        prop_assert!(tight.is_subset(&loose));
        for (s, t) in &loose {
            prop_assert!(s < t);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rank_expand_then_shrink_restores(dims in vec(1u64..1000, 1..7), extra in 0usize..5) {
        let shape = ShapeTuple::new(dims.clone()).unwrap();
        let grown = adjust_rank(&shape, dims.len() + extra).unwrap();
        prop_assert_eq!(grown.rank(), dims.len() + extra);
        prop_assert!(grown.shape[dims.len()..].iter().all(|d| Some(d) == dims.last()));
        prop_assert_eq!(adjust_rank(&grown, dims.len()).unwrap(), shape);
    }

    #[test]
    fn overhead_checks_are_scale_covariant(
        baseline in 0.001f64..1e4,
        subject in 0.001f64..1e4,
        margin in 1.0f64..3.0,
        exp in -8i32..8,
        no_improvement in any::<bool>(),
    ) {
        // Powers of two scale without rounding, so the verdict must not move.
        let k = 2f64.powi(exp);
        let cmp = if no_improvement { Comparator::NoImprovement } else { Comparator::SubjectExceedsBaseline };
        prop_assert_eq!(
            compare_overhead(cmp, margin, baseline, subject),
            compare_overhead(cmp, margin, baseline * k, subject * k)
        );
    }
}

#[test]
fn rank_free_and_scalar_arguments_are_left_alone() {
    let sig = |r: Rank| ApiSignature {
        name: "m.f".into(),
        required_params: vec![],
        optional_params: vec![ParamSpec::named("x").with_rank(r), ParamSpec::named("k")],
        framework_tag: "generic".into(),
    };
    let c = StructuredCall::new("m.f").arg("x", Value::shape(&[2, 3])).arg("k", 3);
    let (out, log) =
        bugport::generator::resolve_dimension_difference(&c, &sig(Rank::Fixed(2)), &sig(Rank::Free)).unwrap();
    assert_eq!(out, c);
    assert!(log.is_empty());
}
