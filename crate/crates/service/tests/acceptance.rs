//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cdss_core::affect::{aggregate_window, fuse, window_weights, AffectConfig, ClassifiedFrame, Emotion, EmotionObservation, TextSentiment, Tone};
use cdss_core::features::{generate_synthetic_cohort, CohortConfig, FeatureMatrix, Label};
use cdss_core::models::{is_positive, train_cohort, CohortParams, Predictor, Registry, SplitPolicy};
use cdss_core::prompt::Role;
use cdss_core::stats::{paired_ttest, stars, t_two_sided_p, PairedScores};
use cdss_core::xai::{causal_discover, counterfactual_search, extract_rules, shap_explain, CfTarget, ExplainKind, RuleParams};
use cdss_service::chat::{ChatLog, ChatService, PostMessage};
use cdss_service::config::default_queries;
use cdss_service::gateway::Gateway;
use cdss_service::jobs::RegistryHandle;

use support::{brute_force_shapley, chain_sem, grid_min_distance, names, random_rows, random_tree, random_two_class_tree, DFS, P_GRID, T_VALUES};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn shapley_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_oracle, mut worst_local, mut cases) = (0.0f64, 0.0f64, 0);
    for _ in 0..50 {
        let n = rng.random_range(1..=6);
        let depth = rng.random_range(1..=3);
        let tree = random_tree(&mut rng, n, depth);
        let background = random_rows(&mut rng, 10, n);
        for x in random_rows(&mut rng, 10, n) {
            let a = shap_explain(&tree, &names(n), &x, &background).expect("shap");
            let (base, phi) = brute_force_shapley(&tree, &x, &background);
            worst_oracle = worst_oracle.max((a.base_value - base).abs());
            for (j, p) in phi.iter().enumerate() {
                worst_oracle = worst_oracle.max((a.phi[&format!("f{j}")] - p).abs());
            }
            worst_local = worst_local.max(a.local_accuracy_gap());
            cases += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_oracle <= 1e-9 && worst_local <= 1e-9 && elapsed < Duration::from_secs(10);
    outcome(pass, format!("{cases} cases, max oracle gap {worst_oracle:.2e}, max local-accuracy gap {worst_local:.2e}, {:.2}s (limit 10s)", elapsed.as_secs_f64()))
}

fn counterfactual_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_excess, mut invalid, mut cases) = (f64::NEG_INFINITY, 0, 0);
    for t in 0..30 {
        let n = 1 + t % 3;
        let tree = random_two_class_tree(&mut rng, n, 3);
        let step = if n == 3 { 1e-2 } else { 1e-3 };
        for x in random_rows(&mut rng, 3, n) {
            let target = CfTarget::Class(!is_positive(tree.predict(&x)));
            let cf = match counterfactual_search(&tree, &names(n), &x, target, &BTreeSet::new()) {
                Ok(cf) => cf,
                Err(_) => {
                    invalid += 1;
                    continue;
                }
            };
            if !target.satisfied_by(tree.predict(&cf.modified)) {
                invalid += 1;
            }
            let grid = grid_min_distance(&tree, &x, step, |o| target.satisfied_by(o)).expect("grid point in target");
            worst_excess = worst_excess.max(cf.distance - grid);
            cases += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = invalid == 0 && worst_excess <= 2e-3 && elapsed < Duration::from_secs(30);
    outcome(
        pass,
        format!(
            "{cases} cases, max (search - grid) {worst_excess:.2e} (limit 2e-3), {invalid} invalid, {:.2}s (limit 30s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn rule_fidelity(registry: &Registry) -> Outcome {
    let mut matrices: Vec<(FeatureMatrix, RuleParams)> =
        registry.participants.values().map(|e| (e.data.select_rows(&(0..e.n_train).collect::<Vec<_>>()), e.rule_params.clone())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for s in 0..20 {
        let x = random_rows(&mut rng, 80, 4);
        let labels = x.iter().map(|r| Some(Label::from_positive((r[0] + r[1] > 1.0) ^ rng.random_bool(0.1)))).collect();
        let params = RuleParams { seed: s, bootstrap: s % 2 == 0, min_precision: 0.6, min_recall: 0.05, ..RuleParams::default() };
        matrices.push((FeatureMatrix::new("R", names(4), x, labels), params));
    }
    let (mut rules, mut mismatched, mut violating, mut failed) = (0, 0, 0, 0);
    for (m, params) in &matrices {
        let Ok(rs) = extract_rules(m, params) else {
            failed += 1;
            continue;
        };
        for r in &rs.rules {
            rules += 1;
            match rs.recompute(r, m) {
                Ok((p, rc, support)) if p.to_bits() == r.precision.to_bits() && rc.to_bits() == r.recall.to_bits() && support == r.support => {}
                _ => mismatched += 1,
            }
            if r.precision < params.min_precision || r.recall < params.min_recall {
                violating += 1;
            }
        }
    }
    let pass = failed == 0 && mismatched == 0 && violating == 0 && rules > 0;
    outcome(pass, format!("{rules} rules from {} matrices, {mismatched} mismatched, {violating} below thresholds, {failed} extraction errors", matrices.len()))
}

fn causal_recovery() -> Outcome {
    let nodes = names(3);
    let (mut recovered, mut acyclic, mut monotone) = (0, 0, 0);
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let data = chain_sem(&mut rng, 500);
        let g = causal_discover(&nodes, &data, 12).expect("causal");
        let skeleton: BTreeSet<(String, String)> =
            g.edges.iter().map(|e| if e.from < e.to { (e.from.clone(), e.to.clone()) } else { (e.to.clone(), e.from.clone()) }).collect();
        let expected: BTreeSet<(String, String)> = [("f0".to_string(), "f1".to_string()), ("f1".to_string(), "f2".to_string())].into();
        recovered += usize::from(skeleton == expected);
        acyclic += usize::from(g.topological_order().is_some());
        monotone += usize::from(g.score_trace.windows(2).all(|w| w[1] >= w[0]));
    }
    let rate = recovered as f64 / 20.0;
    let pass = rate >= 0.9 && acyclic == 20 && monotone == 20;
    outcome(pass, format!("skeleton recovery {rate:.2} (need 0.90), acyclic {acyclic}/20, monotone trace {monotone}/20"))
}

fn cohort_accuracy(registry: &Registry) -> Outcome {
    let acc = registry.mean_accuracy().unwrap_or(0.0);
    outcome(
        acc >= 0.85,
        format!("mean held-out accuracy {acc:.4} over {} participants, {} skipped (need 0.85)", registry.participants.len(), registry.skipped.len()),
    )
}

fn affect_policy() -> Outcome {
    let cfg = AffectConfig::default();
    let neutral_text = TextSentiment::neutral();
    let prev = fuse(Some((Emotion::Anger, 1.0)), &neutral_text, None, &cfg);
    let next = fuse(Some((Emotion::Anger, 0.95)), &neutral_text, Some(&prev), &cfg);
    let hysteresis = prev.tone == Tone::EmpatheticSupportive && next.tone == Tone::EmpatheticSupportive;

    let frame = |e: Emotion, i: f64| ClassifiedFrame { timestamp: 0.0, emotion: e, intensity: i };
    let neutral_frames = vec![frame(Emotion::Neutral, 0.9); 10];
    let mut state = None;
    let mut neutral_ok = true;
    for _ in 0..5 {
        let face = aggregate_window(&neutral_frames).expect("window");
        let s = fuse(face, &neutral_text, state.as_ref(), &cfg);
        neutral_ok &= face.is_none() && s.tone == Tone::NeutralProfessional;
        state = Some(s);
    }

    let ex1 = aggregate_window(&neutral_frames) == Ok(None);
    let mut f = vec![frame(Emotion::Anger, 0.6); 3];
    f.extend([frame(Emotion::Happiness, 0.6); 3]);
    let w = window_weights(&f);
    let ex2 = aggregate_window(&f).ok().flatten().map(|r| r.0) == Some(Emotion::Anger)
        && (w[&Emotion::Anger].0 - 0.5 * 0.6 * 1.6).abs() <= 1e-12
        && (w[&Emotion::Happiness].0 - 0.5 * 0.6).abs() <= 1e-12;
    let mut f = vec![frame(Emotion::Fear, 0.9)];
    f.extend([frame(Emotion::Happiness, 0.5); 5]);
    let w = window_weights(&f);
    let ex3 = aggregate_window(&f).ok().flatten() == Some((Emotion::Happiness, 0.5))
        && (w[&Emotion::Fear].0 - 0.225).abs() <= 1e-12
        && (w[&Emotion::Happiness].0 - 5.0 / 12.0).abs() <= 1e-12;
    let pass = hysteresis && neutral_ok && ex1 && ex2 && ex3;
    outcome(
        pass,
        format!("100%->95% keeps empathy: {hysteresis}; all-neutral stream neutral_professional: {neutral_ok}; weight examples: {ex1}/{ex2}/{ex3}"),
    )
}

fn statistics_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst_identity = 0.0f64;
    let mut tested = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..40);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..=10.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..=10.0)).collect();
        if let Ok(r) = paired_ttest(&PairedScores { question_id: "q".into(), scores_a: a, scores_b: b }) {
            worst_identity = worst_identity.max((r.cohens_d - r.t / (n as f64).sqrt()).abs());
            tested += 1;
        }
    }
    let d1 = 2.57 / 12f64.sqrt();
    let d2 = 3.35 / 12f64.sqrt();
    let published = (d1 - 0.74).abs() <= 0.005 && (d2 - 0.97).abs() <= 0.005;
    let mut worst_p = 0.0f64;
    for (i, &t) in T_VALUES.iter().enumerate() {
        for (j, &df) in DFS.iter().enumerate() {
            worst_p = worst_p.max((t_two_sided_p(t, df) - P_GRID[i][j]).abs());
        }
    }
    let star_cases = [(0.0009, "***"), (0.001, "**"), (0.0099, "**"), (0.01, "*"), (0.026, "*"), (0.006, "**"), (0.0499, "*"), (0.05, ""), (0.5, "")];
    let stars_ok = star_cases.iter().all(|(p, s)| stars(*p).ok() == Some(*s)) && stars(1.5).is_err() && stars(-0.1).is_err();
    let pass = worst_identity <= 1e-12 && tested > 900 && published && worst_p <= 1e-6 && stars_ok;
    outcome(
        pass,
        format!(
            "max |d - t/sqrt(n)| {worst_identity:.1e} over {tested} samples; published d {d1:.3}/{d2:.3} vs 0.74/0.97: {published}; max p-grid error {worst_p:.1e} over 50 points; stars: {stars_ok}"
        ),
    )
}

fn end_to_end(registry: &Registry) -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let log = dir.path().join("chat.jsonl");
    let rt = tokio::runtime::Runtime::new().expect("runtime");
    let start = Instant::now();
    let result: Result<(String, bool, bool), String> = rt.block_on(async {
        let chat = ChatService::open(&log, Gateway::mock(), RegistryHandle::new(registry.clone()), AffectConfig::default(), Default::default(), default_queries())
            .map_err(|e| e.to_string())?;
        let pid = registry.participants.keys().next().ok_or("empty registry")?.clone();
        let sid = chat.create_session("clinician@example.org", &pid).map_err(|e| e.to_string())?.id;
        for k in 0..5 {
            let distribution: BTreeMap<Emotion, f64> = [(Emotion::Anger, 0.9), (Emotion::Neutral, 0.1)].into();
            chat.post_frame(&sid, &EmotionObservation { session_id: sid.clone(), timestamp: 2.0 * k as f64, distribution }).map_err(|e| e.to_string())?;
        }
        let reply = chat
            .post_message(&sid, PostMessage { text: "Explain the latest prediction".into(), artifacts: vec![ExplainKind::Shap], instance: None })
            .await
            .map_err(|e| e.to_string())?;
        let history = chat.get_history(&sid).await.map_err(|e| e.to_string())?;

        let text = std::fs::read_to_string(&log).map_err(|e| e.to_string())?;
        let rows: Vec<serde_json::Value> = text.lines().map(serde_json::from_str).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        let schema = rows.len() == 2
            && rows.iter().all(|r| {
                let o = r.as_object().expect("object");
                o.len() == 5 && ["session_id", "email", "timestamp", "role", "content"].iter().all(|k| o.contains_key(*k))
            })
            && rows[0]["role"] == "user"
            && rows[1]["role"] == "assistant"
            && history.iter().map(|m| m.role).collect::<Vec<_>>() == [Role::User, Role::Assistant];

        let replayed = ChatLog::replay(&log).map_err(|e| e.to_string())?;
        let mut rebuilt = String::new();
        for (_, h) in &replayed {
            for m in h {
                rebuilt.push_str(&serde_json::to_string(m).map_err(|e| e.to_string())?);
                rebuilt.push('\n');
            }
        }
        let identical = rebuilt == text && replayed.len() == 1 && replayed[0].1 == history;
        Ok((reply.message.content, schema, identical))
    });
    let elapsed = start.elapsed();
    match result {
        Ok((content, schema, identical)) => {
            let tone = content.contains("[tone=empathetic_supportive]");
            let attachments = content.contains("[attachments=1]");
            let pass = tone && attachments && schema && identical && elapsed < Duration::from_secs(5);
            outcome(
                pass,
                format!(
                    "empathetic tone: {tone}; one attachment: {attachments}; rows carry the four log fields plus session_id: {schema}; byte-identical replay: {identical}; {:.2}s (limit 5s)",
                    elapsed.as_secs_f64()
                ),
            )
        }
        Err(e) => outcome(false, format!("pipeline error: {e}")),
    }
}

fn main() -> ExitCode {
    let matrices = generate_synthetic_cohort(&CohortConfig::default()).expect("synthetic cohort");
    let registry = train_cohort(&matrices, &SplitPolicy::default(), &CohortParams::default(), 7);

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("Shapley oracle equivalence", Box::new(shapley_oracle)),
        ("Counterfactual optimality", Box::new(counterfactual_optimality)),
        ("Rule fidelity", Box::new(|| rule_fidelity(&registry))),
        ("Causal recovery", Box::new(causal_recovery)),
        ("Cohort accuracy", Box::new(|| cohort_accuracy(&registry))),
        ("Affect policy conformance", Box::new(affect_policy)),
        ("Statistics consistency", Box::new(statistics_consistency)),
        ("End-to-end pipeline with mock gateway", Box::new(|| end_to_end(&registry))),
    ];
    let mut failures = 0;
    for (name, run) in &criteria {
        let o = run();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failures += usize::from(!o.pass);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
