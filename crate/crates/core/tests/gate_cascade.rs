use proptest::prelude::*;
use uar_core::classifier::LinearClassifier;
use uar_core::gate::{decide_threshold, decide_tree, decide_tree_with, threshold_preset, GateBundle, TokenProbTrace, TreeConfig};
use uar_core::{Scenario, Verdict};

/// Head `i` says retrieve iff `x[i] > 0`.
fn axis_bundle() -> GateBundle {
    let heads = Scenario::CRITERIA.iter().enumerate().map(|(axis, &s)| {
        let mut w1 = vec![0.0; 4];
        w1[axis] = 1.0;
        LinearClassifier::from_parts(s, [vec![0.0; 4], w1], [0.0, 0.0]).unwrap()
    });
    GateBundle::from_classifiers(heads).unwrap()
}

fn vector(bits: [bool; 4]) -> Vec<f32> {
    bits.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect()
}

/// The cascade written as nested conditionals.
fn oracle(intent: bool, knowledge: bool, time: bool, selfk: bool) -> (bool, usize) {
    if intent {
        (true, 1)
    } else if !knowledge {
        (false, 2)
    } else if time {
        (true, 3)
    } else if selfk {
        (true, 4)
    } else {
        (false, 4)
    }
}

#[test]
fn truth_table_matches_nested_conditionals() {
    let bundle = axis_bundle();
    let mut leaves = std::collections::BTreeSet::new();
    for m in 0..16u8 {
        let bits = [m & 1 != 0, m & 2 != 0, m & 4 != 0, m & 8 != 0];
        let d = decide_tree(&bundle, &vector(bits)).unwrap();
        let (expect, depth) = oracle(bits[0], bits[1], bits[2], bits[3]);
        assert_eq!(d.final_verdict, Verdict::from_bool(expect), "{bits:?}");
        assert_eq!(d.evaluated, Scenario::CRITERIA[..depth].to_vec(), "{bits:?}");
        assert_eq!(d.criteria.len(), depth);
        leaves.insert((depth, expect));
    }
    assert_eq!(leaves.len(), 5);
}

#[test]
fn threshold_examples() {
    let t = TokenProbTrace::new(vec![0.9, 0.005]).unwrap();
    assert_eq!(decide_threshold(&t, 0.006).unwrap().final_verdict, Verdict::Retrieve);
    let t = TokenProbTrace::new(vec![0.02]).unwrap();
    assert_eq!(decide_threshold(&t, 0.02).unwrap().final_verdict, Verdict::NoRetrieve);
    assert_eq!(threshold_preset("7b").unwrap(), 0.006);
    assert_eq!(threshold_preset("13b").unwrap(), 0.02);
    assert!(threshold_preset("70b").is_err());
    assert!(TokenProbTrace::new(vec![]).is_err());
    assert!(TokenProbTrace::new(vec![0.0]).is_err());
    assert!(TokenProbTrace::new(vec![1.5]).is_err());
}

proptest! {
    #[test]
    fn eager_and_lazy_agree(x in prop::collection::vec(-5.0f32..5.0, 4)) {
        let b = axis_bundle();
        let lazy = decide_tree(&b, &x).unwrap();
        let eager = decide_tree_with(&b, &x, &TreeConfig::eager()).unwrap();
        prop_assert_eq!(lazy.final_verdict, eager.final_verdict);
        prop_assert_eq!(&lazy.evaluated, &eager.evaluated);
        prop_assert_eq!(eager.criteria.len(), 4);
        for (s, o) in &lazy.criteria {
            prop_assert_eq!(o, &eager.criteria[s]);
        }
    }

    #[test]
    fn decision_is_deterministic_and_roundtrips(x in prop::collection::vec(-5.0f32..5.0, 4)) {
        let b = axis_bundle();
        let d = decide_tree(&b, &x).unwrap();
        prop_assert_eq!(d.to_json(), decide_tree(&b, &x).unwrap().to_json());
        let back: uar_core::GateDecision = serde_json::from_str(&d.to_json()).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn threshold_is_strict_min(probs in prop::collection::vec(1e-6f64..=1.0, 1..20), theta in 1e-4f64..0.9999) {
        let t = TokenProbTrace::new(probs.clone()).unwrap();
        let min = probs.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(decide_threshold(&t, theta).unwrap().final_verdict, Verdict::from_bool(min < theta));
    }
}
