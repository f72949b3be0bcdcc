//! Forge → embed → train → cascade → bench on the attribute world.

use std::collections::{BTreeMap, HashSet};

use uar_core::bench::{eval_ar_bench, eval_single_vs_tree, EvalOptions};
use uar_core::classifier::{train, TrainConfig};
use uar_core::forge::{
    build_ar_bench, forge_intent_aware, forge_knowledge_aware, forge_self_aware, forge_time_aware, BenchCounts,
    IntentForgeConfig, QaItem,
};
use uar_core::gate::{GateBundle, Policy, TreeConfig};
use uar_core::synthetic::AttributeWorld;
use uar_core::{FeatureDataset, Scenario};

fn trained_world() -> (AttributeWorld, GateBundle, BTreeMap<Scenario, FeatureDataset>) {
    let mut world = AttributeWorld::new(16, 3.0, 1.0, 99);
    let tr = world.standard_pools("train-", 600, 24);
    let bench_pools = world.standard_pools("bench-", 600, 12);

    // Few hundred steps per head: a larger step than the hidden-state default.
    let cfg = TrainConfig { learning_rate: 1e-2, ..TrainConfig::default() };
    let fit = |train_ex: &[_], valid_ex: &[_]| train(&world.features(train_ex), &world.features(valid_ex), &cfg).unwrap();

    let s = forge_self_aware(&tr.known, &tr.unknown, 1, 0.1, "synthetic").unwrap();
    let self_head = fit(&s.train, &s.valid);
    let t = forge_time_aware(&tr.time_sensitive, &tr.known, 2).unwrap();
    let time_head = fit(&t.train, &t.valid);
    let ki: Vec<QaItem> = tr.time_sensitive.iter().chain(&tr.unknown).chain(&tr.known).cloned().collect();
    let k = forge_knowledge_aware(&tr.non_ki, &ki, (60, 60), 3).unwrap();
    let know_head = fit(&k.train, &k.valid);
    let base: Vec<QaItem> = tr.known.iter().chain(&tr.non_ki).cloned().collect();
    let i = forge_intent_aware(&base, &tr.intents, 4, &IntentForgeConfig::default()).unwrap();
    let intent_head = fit(&i.train, &i.valid);

    let bundle = GateBundle::from_classifiers([intent_head, know_head, time_head, self_head]).unwrap();

    let exclude: HashSet<String> = [&tr.known, &tr.unknown, &tr.time_sensitive, &tr.non_ki]
        .into_iter()
        .flatten()
        .map(|q| q.id.clone())
        .collect();
    let suite = build_ar_bench(&bench_pools, BenchCounts::uniform(200), 5, &exclude, "synthetic").unwrap();
    let features = suite.subtasks.iter().map(|(s, ex)| (*s, world.features(ex))).collect();
    (world, bundle, features)
}

#[test]
fn composed_gate_clears_every_subtask() {
    let (_, bundle, features) = trained_world();
    for ds in features.values() {
        assert_eq!(ds.len(), 400);
    }
    let cfg = TreeConfig::default();
    let report = eval_ar_bench(&Policy::UarTree { bundle: &bundle, config: &cfg }, &features, &EvalOptions::default()).unwrap();
    for (s, r) in &report.per_subtask {
        assert!(r.accuracy >= 0.95, "{s}: {}", r.accuracy);
    }
    let table = eval_single_vs_tree(&bundle, &cfg, &features, &EvalOptions::default()).unwrap();
    for (s, row) in &table.rows {
        assert!(row.single >= row.composed, "{s}: single {} < composed {}", row.single, row.composed);
        assert_eq!(row.composed, report.per_subtask[s].accuracy);
    }
    assert_eq!(table, eval_single_vs_tree(&bundle, &cfg, &features, &EvalOptions::default()).unwrap());
}

#[test]
fn constant_policies_score_half() {
    let (_, _, features) = trained_world();
    for p in [Policy::Always, Policy::Never] {
        let r = eval_ar_bench(&p, &features, &EvalOptions::default()).unwrap();
        assert_eq!(r.overall, 0.5);
    }
}

