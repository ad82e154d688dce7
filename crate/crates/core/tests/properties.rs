mod support;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cdss_core::affect::{aggregate_window, classify_frame, fuse, AffectConfig, AffectState, ClassifiedFrame, Emotion, EmotionObservation, TextSentiment};
use cdss_core::features::{FeatureMatrix, Label};
use cdss_core::models::{is_positive, LeafValue, Node, Predictor, TreeModel, TreeParams};
use cdss_core::prompt::{assemble, quantize_importance, PromptConfig};
use cdss_core::stats::{paired_ttest, PairedScores};
use cdss_core::xai::{
    causal_discover, counterfactual_search, extract_rules, graph_score, shap_explain, CfTarget, Explanation, ExplanationArtifact, ExplainKind, RuleParams, ShapAttribution,
};

use support::{brute_force_shapley, grid_min_distance, names, random_rows, random_tree, random_two_class_tree};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shap_is_exact_locally_accurate_and_ignores_dummies(seed in any::<u64>(), n in 2usize..=6, depth in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, n, depth);
        let background = random_rows(&mut rng, 8, n);
        let x = random_rows(&mut rng, 1, n).remove(0);
        let a = shap_explain(&tree, &names(n), &x, &background).unwrap();
        prop_assert!(a.local_accuracy_gap() <= 1e-9, "gap {}", a.local_accuracy_gap());
        let (base, phi) = brute_force_shapley(&tree, &x, &background);
        prop_assert!((a.base_value - base).abs() <= 1e-9);
        let used = tree.used_features();
        for j in 0..n {
            let got = a.phi[&format!("f{j}")];
            prop_assert!((got - phi[j]).abs() <= 1e-9, "f{}: {} vs {}", j, got, phi[j]);
            if !used.contains(&j) {
                prop_assert_eq!(got, 0.0);
            }
        }
    }

    #[test]
    fn shap_symmetric_features_share_credit(a in 0.1f64..0.9, v in -5.0f64..5.0, w in -5.0f64..5.0, xv in 0.0f64..1.0, seed in any::<u64>()) {
        // f = g(x0 > a) + g(x1 > a) with g(false) = 0, g(true) = v; w shifts every leaf.
        let leaf = |y: f64| Node::Leaf { value: LeafValue::Regression(y) };
        let tree = TreeModel {
            nodes: vec![
                Node::Split { feature: 0, threshold: a, left: 1, right: 2 },
                Node::Split { feature: 1, threshold: a, left: 3, right: 4 },
                Node::Split { feature: 1, threshold: a, left: 5, right: 6 },
                leaf(w), leaf(w + v), leaf(w + v), leaf(w + 2.0 * v),
            ],
            n_features: 3,
            max_depth: 2,
            params: TreeParams::default(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut background = random_rows(&mut rng, 5, 3);
        let swapped: Vec<Vec<f64>> = background.iter().map(|r| vec![r[1], r[0], r[2]]).collect();
        background.extend(swapped);
        let s = shap_explain(&tree, &names(3), &[xv, xv, 0.5], &background).unwrap();
        prop_assert!((s.phi["f0"] - s.phi["f1"]).abs() <= 1e-12);
        prop_assert_eq!(s.phi["f2"], 0.0);
    }

    #[test]
    fn counterfactuals_are_valid_and_grid_minimal(seed in any::<u64>(), n in 1usize..=2, depth in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_two_class_tree(&mut rng, n, depth);
        let x = random_rows(&mut rng, 1, n).remove(0);
        let target = CfTarget::Class(!is_positive(tree.predict(&x)));
        let cf = counterfactual_search(&tree, &names(n), &x, target, &BTreeSet::new()).unwrap();
        prop_assert!(target.satisfied_by(tree.predict(&cf.modified)));
        prop_assert_eq!(cf.achieved_output, tree.predict(&cf.modified));
        let sum: f64 = cf.changed_features.iter().map(|d| d.delta.abs()).sum();
        prop_assert!((cf.distance - sum).abs() <= 1e-12);
        let step = 1e-3;
        let grid = grid_min_distance(&tree, &x, step, |o| target.satisfied_by(o)).unwrap();
        // The search is optimal over [0,1]^n up to the interior offsets, and
        // the grid is within one step per feature of the optimum.
        prop_assert!(cf.distance <= grid + 1e-5, "search {} grid {}", cf.distance, grid);
        prop_assert!(grid <= cf.distance + n as f64 * step + 1e-9, "search {} grid {}", cf.distance, grid);
    }

    #[test]
    fn immutable_features_never_change(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_two_class_tree(&mut rng, 3, 3);
        let x = random_rows(&mut rng, 1, 3).remove(0);
        let target = CfTarget::Class(!is_positive(tree.predict(&x)));
        let frozen: BTreeSet<String> = ["f1".to_string()].into();
        if let Ok(cf) = counterfactual_search(&tree, &names(3), &x, target, &frozen) {
            prop_assert_eq!(cf.modified[1], x[1]);
            prop_assert!(target.satisfied_by(cf.achieved_output));
        }
    }

    #[test]
    fn rule_scores_recompute_exactly(seed in any::<u64>(), rows in 30usize..120, bootstrap in any::<bool>(), min_precision in 0.0f64..0.9, min_recall in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_rows(&mut rng, rows, 3);
        let mut labels: Vec<Option<Label>> = x
            .iter()
            .map(|r| Some(Label::from_positive((r[0] > 0.6) ^ rand::Rng::random_bool(&mut rng, 0.1))))
            .collect();
        labels[0] = Some(Label::from_positive(true));
        labels[1] = Some(Label::from_positive(false));
        let m = FeatureMatrix::new("P", names(3), x, labels);
        let params = RuleParams { bootstrap, min_precision, min_recall, seed, ..RuleParams::default() };
        let rs = extract_rules(&m, &params).unwrap();
        for r in &rs.rules {
            let (p, rc, support) = rs.recompute(r, &m).unwrap();
            prop_assert_eq!(p.to_bits(), r.precision.to_bits());
            prop_assert_eq!(rc.to_bits(), r.recall.to_bits());
            prop_assert_eq!(support, r.support);
            prop_assert!(r.precision >= min_precision && r.recall >= min_recall);
        }
        for w in rs.rules.windows(2) {
            prop_assert!((w[0].precision, w[0].recall) >= (w[1].precision, w[1].recall));
        }
    }

    #[test]
    fn causal_graphs_are_acyclic_with_monotone_trace(seed in any::<u64>(), p in 2usize..=5, n in 20usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = random_rows(&mut rng, n, p);
        for r in &mut data {
            for j in 1..p {
                r[j] += 0.7 * r[j - 1];
            }
        }
        let g = causal_discover(&names(p), &data, 12).unwrap();
        prop_assert!(g.topological_order().is_some());
        prop_assert!(g.score_trace.windows(2).all(|w| w[1] >= w[0]));
        prop_assert_eq!(*g.score_trace.last().unwrap(), g.total_score);
        let all: Vec<(String, String)> = g.edges.iter().map(|e| (e.from.clone(), e.to.clone())).collect();
        for e in &g.edges {
            let rest: Vec<(String, String)> = all.iter().filter(|(a, b)| !(a == &e.from && b == &e.to)).cloned().collect();
            let drop = graph_score(&names(p), &data, &all) - graph_score(&names(p), &data, &rest);
            prop_assert!((drop - e.score_gain).abs() <= 1e-6 * (1.0 + drop.abs()));
        }
    }

    #[test]
    fn ttest_identities(pairs in prop::collection::vec((1.0f64..=10.0, 1.0f64..=10.0), 2..40), shift in -50.0f64..50.0) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let ab = PairedScores { question_id: "q".into(), scores_a: a.clone(), scores_b: b.clone() };
        let Ok(r) = paired_ttest(&ab) else { return Ok(()) };
        let n = a.len() as f64;
        prop_assert!((r.cohens_d - r.t / n.sqrt()).abs() <= 1e-12 * (1.0 + r.t.abs()));
        prop_assert_eq!(r.df, a.len() - 1);

        let ba = paired_ttest(&PairedScores { question_id: "q".into(), scores_a: b.clone(), scores_b: a.clone() }).unwrap();
        prop_assert_eq!(ba.t, -r.t);
        prop_assert_eq!(ba.p, r.p);

        let shifted = PairedScores {
            question_id: "q".into(),
            scores_a: a.iter().map(|v| v + shift).collect(),
            scores_b: b.iter().map(|v| v + shift).collect(),
        };
        if let Ok(s) = paired_ttest(&shifted) {
            let tol = 1e-9 * (1.0 + r.t.abs());
            prop_assert!((s.t - r.t).abs() <= tol, "{} vs {}", s.t, r.t);
            prop_assert!((s.cohens_d - r.cohens_d).abs() <= tol);
            prop_assert!((s.p - r.p).abs() <= 1e-9);
        }
    }

    #[test]
    fn hysteresis_keeps_tone(e in 0usize..7, i in 0.0f64..=1.0, delta in -0.0999f64..0.0999) {
        let emotion = Emotion::ALL[e];
        let cfg = AffectConfig::default();
        let prev = fuse(Some((emotion, i)), &TextSentiment::neutral(), None, &cfg);
        let j = (i + delta).clamp(0.0, 1.0);
        let next = fuse(Some((emotion, j)), &TextSentiment::neutral(), Some(&prev), &cfg);
        prop_assert_eq!(next.tone, prev.tone);
        prop_assert_eq!(next.dominant_emotion, prev.dominant_emotion);
        prop_assert_eq!(fuse(Some((emotion, j)), &TextSentiment::neutral(), Some(&prev), &cfg), next);
    }

    #[test]
    fn frames_classify_to_max_and_windows_skip_neutral(weights in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 7), 1..20)) {
        let mut frames = Vec::new();
        for (k, w) in weights.iter().enumerate() {
            let total: f64 = w.iter().sum::<f64>() + 1e-9;
            let distribution: BTreeMap<Emotion, f64> = Emotion::ALL.iter().zip(w).map(|(e, v)| (*e, v / total)).collect();
            let sum: f64 = distribution.values().sum();
            let distribution = distribution.into_iter().map(|(e, v)| (e, v / sum)).collect();
            let obs = EmotionObservation { session_id: "s".into(), timestamp: k as f64 * 2.0, distribution };
            let f = classify_frame(&obs).unwrap();
            let max = obs.distribution.values().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(f.intensity, max);
            frames.push(f);
        }
        let agg = aggregate_window(&frames).unwrap();
        prop_assert!(agg.is_none_or(|(e, _)| e != Emotion::Neutral));
        let neutral_only: Vec<ClassifiedFrame> = frames.iter().map(|f| ClassifiedFrame { emotion: Emotion::Neutral, ..*f }).collect();
        prop_assert_eq!(aggregate_window(&neutral_only).unwrap(), None);
    }

    #[test]
    fn qualitative_facts_carry_no_numbers(phi in prop::collection::vec(-3.0f64..3.0, 1..12), p in 0.0f64..=1.0) {
        let attr = ShapAttribution {
            base_value: 0.1,
            phi: phi.iter().enumerate().map(|(i, v)| (format!("hr_mean_{i}"), *v)).collect(),
            output: p,
            instance: vec![0.5; phi.len()],
            background_size: 3,
        };
        for s in quantize_importance(&attr) {
            prop_assert!(!s.chars().any(|c| c.is_ascii_digit()), "{}", s);
        }
        let artifact = ExplanationArtifact::Shap(attr);
        let rendered = cdss_core::xai::render_artifact(&artifact);
        let e = Explanation {
            participant_id: "P".into(),
            kind: ExplainKind::Shap,
            instance: 0,
            model_kind: "tree".into(),
            prediction: p,
            artifact,
            chart: rendered.chart,
            img64: rendered.img64,
            surrogate_fidelity: None,
        };
        let cfg = PromptConfig::default();
        let state = AffectState::default_neutral();
        let bundle = assemble(&state, std::slice::from_ref(&e), &[], "why?", &cfg);
        for f in &bundle.qualitative_facts {
            prop_assert!(!f.chars().any(|c| c.is_ascii_digit()), "{}", f);
        }
        let again = assemble(&state, std::slice::from_ref(&e), &[], "why?", &cfg);
        prop_assert_eq!(serde_json::to_vec(&bundle).unwrap(), serde_json::to_vec(&again).unwrap());
        prop_assert!(bundle.attachments.iter().all(|a| a.caption.contains("shap") && a.caption.contains('P')));
    }
}
