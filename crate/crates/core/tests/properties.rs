use ddparse::classifier::LinearModel;
use ddparse::features::{extract_relation_features, extract_structure_features, FeatureVector};
use ddparse::parser::{random_parse, ParserModel};
use ddparse::pipeline::{
    adjust_punctuation, adjust_relative_pronouns, run_pipeline, IdentityAdapter, PipelineConfig,
    DEFAULT_RELATIVE_PRONOUNS,
};
use ddparse::transition::{initial_state, oracle_actions, replay};
use ddparse::treebank::{
    document_to_json, is_projective, parse_document, validate_tree, Arc, DiscourseTree, Edu, Granularity,
    RelationLabel, FINE_RELATIONS,
};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random tree with one root dependent: nodes join in random order, each
/// attaching to a node already in the tree.
fn random_tree(k: usize, seed: u64) -> DiscourseTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (1..=k).collect();
    for i in (1..k).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut heads = vec![0; k + 1];
    for (pos, &node) in order.iter().enumerate().skip(1) {
        heads[node] = order[rng.random_range(0..pos)];
    }
    let edus = (1..=k)
        .map(|i| Edu::new(i, format!("w{} t{}", i % 4, i % 3), 1 + i / 3))
        .collect();
    let arcs = (1..=k)
        .map(|d| {
            let rel = if heads[d] == 0 {
                "ROOT"
            } else {
                FINE_RELATIONS[1 + (d * 7 + seed as usize) % 25]
            };
            Arc::new(heads[d], d, RelationLabel::parse(rel).unwrap())
        })
        .collect();
    DiscourseTree::new(format!("r{seed}"), edus, arcs)
}

fn crossing_free(tree: &DiscourseTree) -> bool {
    let spans: Vec<(usize, usize)> = tree
        .arcs
        .iter()
        .map(|a| (a.head.min(a.dependent), a.head.max(a.dependent)))
        .collect();
    spans
        .iter()
        .all(|&(a, b)| spans.iter().all(|&(c, d)| !(a < c && c < b && b < d)))
}

const WORDS: &[&str] = &[
    "We", "show", "that", "which", "who", "when", "it", "works.", "e.g.", "results", "improve,", "Fig.", "2", "et",
    "al.", "the", "model.", "where", "3.5", "data",
];

fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..6).prop_map(|w| w.join(" "))
}

fn edus_strategy() -> impl Strategy<Value = Vec<Edu>> {
    prop::collection::vec((text_strategy(), 0usize..2), 1..8).prop_map(|items| {
        let mut sentence = 1;
        items
            .into_iter()
            .enumerate()
            .map(|(i, (text, step))| {
                sentence += step;
                Edu::new(i + 1, text, sentence)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projectivity_matches_pairwise_crossing(k in 1usize..=10, seed in any::<u64>()) {
        let tree = random_tree(k, seed);
        prop_assert!(validate_tree(&tree).is_empty());
        prop_assert_eq!(is_projective(&tree), crossing_free(&tree));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn oracle_round_trips_projective_trees(k in 1usize..=12, seed in any::<u64>()) {
        let tree = random_tree(k, seed);
        prop_assume!(is_projective(&tree));
        let actions = oracle_actions(&tree).unwrap();
        prop_assert_eq!(actions.len(), 2 * k);
        let mut got: Vec<(usize, usize)> = replay(k, &actions).unwrap().arcs().to_vec();
        got.sort_by_key(|&(_, d)| d);
        let want: Vec<(usize, usize)> = tree.arcs.iter().map(|a| (a.head, a.dependent)).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn random_walks_build_valid_projective_trees(k in 1usize..=15, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = initial_state(k).unwrap();
        let mut steps = 0;
        while !state.is_terminal() {
            let legal = state.legal_actions().unwrap();
            prop_assert!(!legal.is_empty());
            state = state.apply(legal[rng.random_range(0..legal.len())]).unwrap();
            steps += 1;
        }
        prop_assert_eq!(steps, 2 * k);
        let edus: Vec<Edu> = (1..=k).map(|i| Edu::new(i, "x", 1)).collect();
        let tree = random_parse(&edus, seed).unwrap();
        prop_assert!(validate_tree(&tree).is_empty());
        prop_assert!(is_projective(&tree));
    }

    #[test]
    fn prediction_is_argmax_and_scale_invariant(
        weights in prop::collection::vec(-5.0f64..5.0, 12),
        values in prop::collection::vec(0.1f64..3.0, 4),
        factor in 0.01f64..100.0,
    ) {
        let mut model = LinearModel::zeros(vec!["a".into(), "b".into(), "c".into()]);
        for (i, w) in weights.iter().enumerate() {
            model.set_weight(i % 3, &format!("f{}", i / 3), *w);
        }
        let fv: FeatureVector = values.iter().enumerate().map(|(i, v)| (format!("f{i}"), *v)).collect();
        let scores = model.scores(&fv);
        let best = model.labels().iter().enumerate().fold(0, |best, (i, l)| {
            if scores[l] > scores[&model.labels()[best]] { i } else { best }
        });
        prop_assert_eq!(model.predict(&fv), model.labels()[best].as_str());
        prop_assert_eq!(model.predict(&fv), model.predict(&fv.scaled(factor)));
    }

    #[test]
    fn features_are_deterministic(k in 1usize..=8, seed in any::<u64>()) {
        let tree = random_tree(k, seed);
        let copy = tree.clone();
        let mut state = initial_state(k).unwrap();
        for action in oracle_actions(&tree).unwrap_or_default() {
            prop_assert_eq!(
                extract_structure_features(&state, &tree.edus),
                extract_structure_features(&state, &copy.edus)
            );
            state = state.apply(action).unwrap();
        }
        for arc in &tree.arcs {
            prop_assert_eq!(extract_relation_features(arc, &tree.edus), extract_relation_features(arc, &copy.edus));
        }
    }

    #[test]
    fn documents_round_trip_through_json(k in 1usize..=10, seed in any::<u64>()) {
        let tree = random_tree(k, seed);
        let json = document_to_json(&tree);
        prop_assert_eq!(parse_document(&json, "prop").unwrap(), tree);
    }

    #[test]
    fn pipeline_edits_are_idempotent_and_aligned(english in edus_strategy(), periods in prop::collection::vec(any::<bool>(), 8)) {
        let chinese: Vec<Edu> = english
            .iter()
            .map(|e| Edu::new(e.id, if periods[e.id - 1] { "中文。" } else { "中文，" }, e.sentence_index))
            .collect();
        let once = adjust_punctuation(&english, &chinese).unwrap();
        prop_assert_eq!(&adjust_punctuation(&once, &chinese).unwrap(), &once);
        let moved = adjust_relative_pronouns(&once, &DEFAULT_RELATIVE_PRONOUNS);
        prop_assert_eq!(&adjust_relative_pronouns(&moved, &DEFAULT_RELATIVE_PRONOUNS), &moved);
        for (a, b) in english.iter().zip(&moved) {
            prop_assert_eq!((a.id, a.sentence_index), (b.id, b.sentence_index));
            prop_assert!(!b.text.trim().is_empty());
        }
        for (e, c) in once.iter().zip(&chinese) {
            if !c.ends_with_period {
                prop_assert!(!e.text.trim_end().ends_with('.'));
            }
        }
    }

    #[test]
    fn pipeline_output_is_a_valid_tree_over_the_source(english in edus_strategy(), two_part in any::<bool>()) {
        let doc = DiscourseTree::unannotated("p", english);
        let model = ParserModel::untrained(Granularity::Fine);
        let config = PipelineConfig::default().with_toggles(true, true, two_part);
        let tree = run_pipeline(&doc, &config, &model, &IdentityAdapter).unwrap();
        prop_assert!(validate_tree(&tree).is_empty());
        prop_assert_eq!(tree.edus, doc.edus);
    }
}
