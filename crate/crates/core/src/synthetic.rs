//! Seeded synthetic feature fixtures.
//!
//! [`separable_clusters`] gives two Gaussian blobs per label. [`AttributeWorld`]
//! embeds text-level forged examples into vectors whose first four
//! coordinates encode the attributes the four criteria look at (intent,
//! knowledge-intensive, time-sensitive, unknown to the model), which lets the
//! whole forge → train → cascade → bench path run without a language model.

use std::collections::HashMap;

use rand_distr::{Distribution, Normal};

use crate::feature_store::{FeatureDataset, FeatureRecord};
use crate::forge::{BenchPools, ForgedExample, IntentPhrase, IntentPosition, QaItem, QaSource};
use crate::sampling::{derive_seed, rng};
use crate::scenario::{Label, Scenario};

/// `n` records alternating retrieve / no-retrieve, drawn from isotropic
/// Gaussians with means `+mean` and `-mean` on every axis.
pub fn clusters(n: usize, dim: usize, mean: f32, sigma: f32, seed: u64, scenario: Scenario) -> FeatureDataset {
    let mut r = rng(seed);
    let noise = Normal::new(0.0f32, sigma).expect("finite sigma");
    let records = (0..n)
        .map(|i| {
            let retrieve = i % 2 == 0;
            let m = if retrieve { mean } else { -mean };
            let vector = (0..dim).map(|_| m + noise.sample(&mut r)).collect();
            let label = if retrieve { Label::Retrieve } else { Label::NoRetrieve };
            FeatureRecord::new(format!("c{i:05}"), scenario, label, vector)
        })
        .collect();
    FeatureDataset::new(dim, records, format!("synthetic:clusters:d={dim}:seed={seed}")).expect("valid fixture")
}

/// Means ±3 and σ 0.5.
pub fn separable_clusters(n: usize, dim: usize, seed: u64, scenario: Scenario) -> FeatureDataset {
    clusters(n, dim, 3.0, 0.5, seed, scenario)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Attributes {
    pub knowledge_intensive: bool,
    pub time_sensitive: bool,
    pub unknown: bool,
}

/// Axis carrying each criterion's attribute.
pub fn axis(s: Scenario) -> usize {
    match s {
        Scenario::Intent => 0,
        Scenario::Knowledge => 1,
        Scenario::Time => 2,
        Scenario::SelfKnowledge => 3,
        Scenario::Unspecified => panic!("no axis for Scenario::Unspecified"),
    }
}

#[derive(Debug, Clone)]
pub struct AttributeWorld {
    pub dim: usize,
    /// Attribute axes sit at `±separation`.
    pub separation: f32,
    /// σ of the Gaussian noise added to every coordinate.
    pub noise: f32,
    pub seed: u64,
    attrs: HashMap<String, Attributes>,
}

impl AttributeWorld {
    pub fn new(dim: usize, separation: f32, noise: f32, seed: u64) -> Self {
        assert!(dim >= 4, "attribute world needs at least 4 dimensions");
        AttributeWorld {
            dim,
            separation,
            noise,
            seed,
            attrs: HashMap::new(),
        }
    }

    /// Registers `n` items `{prefix}{i}` with attributes chosen by `f(i)`.
    pub fn pool(&mut self, prefix: &str, n: usize, source: QaSource, f: impl Fn(usize) -> Attributes) -> Vec<QaItem> {
        (0..n)
            .map(|i| {
                let id = format!("{prefix}{i}");
                self.attrs.insert(id.clone(), f(i));
                QaItem::new(id.clone(), format!("synthetic question {id}"), &["gold"], source.clone())
            })
            .collect()
    }

    /// Known, unknown, time-sensitive and non-knowledge-intensive pools of
    /// `n` items each, plus `n_intents` intent phrases.
    pub fn standard_pools(&mut self, prefix: &str, n: usize, n_intents: usize) -> BenchPools {
        let ki = |unknown| Attributes {
            knowledge_intensive: true,
            time_sensitive: false,
            unknown,
        };
        BenchPools {
            known: self.pool(&format!("{prefix}kn"), n, QaSource::TriviaQa, |_| ki(false)),
            unknown: self.pool(&format!("{prefix}un"), n, QaSource::TriviaQa, |_| ki(true)),
            time_sensitive: self.pool(&format!("{prefix}ts"), n, QaSource::Taqa, |i| Attributes {
                knowledge_intensive: true,
                time_sensitive: true,
                unknown: i % 2 == 1,
            }),
            non_ki: self.pool(&format!("{prefix}nk"), n, QaSource::SelfRagNonRet, |_| Attributes::default()),
            intents: (0..n_intents)
                .map(|i| IntentPhrase {
                    id: format!("{prefix}intent{i}"),
                    text: format!("Look this up online ({i})."),
                })
                .collect(),
        }
    }

    /// Embeds one forged example. Noise is seeded by the example id, so the
    /// same example always maps to the same vector.
    pub fn embed(&self, ex: &ForgedExample) -> FeatureRecord {
        let src = ex.provenance.source_ids.first().expect("forged example has a source");
        let a = self
            .attrs
            .get(src)
            .unwrap_or_else(|| panic!("source {src:?} is not registered in this world"));
        let mut r = rng(derive_seed(self.seed, &ex.id));
        let noise = Normal::new(0.0f32, self.noise).expect("finite noise");
        let sign = |b: bool| if b { self.separation } else { -self.separation };
        let mut v: Vec<f32> = (0..self.dim).map(|_| noise.sample(&mut r)).collect();
        v[axis(Scenario::Intent)] += sign(ex.provenance.intent_position != IntentPosition::None);
        v[axis(Scenario::Knowledge)] += sign(a.knowledge_intensive);
        v[axis(Scenario::Time)] += sign(a.time_sensitive);
        v[axis(Scenario::SelfKnowledge)] += sign(a.unknown);
        FeatureRecord::new(ex.id.clone(), ex.scenario, ex.label, v).with_text(ex.text.clone())
    }

    pub fn features(&self, examples: &[ForgedExample]) -> FeatureDataset {
        let recs = examples.iter().map(|e| self.embed(e)).collect();
        FeatureDataset::new(self.dim, recs, format!("synthetic:attribute-world:seed={}", self.seed)).expect("valid fixture")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clusters_are_balanced_and_seeded() {
        let a = separable_clusters(100, 3, 7, Scenario::Time);
        let b = separable_clusters(100, 3, 7, Scenario::Time);
        assert_eq!(a, b);
        let c = a.label_counts();
        assert_eq!((c.retrieve, c.no_retrieve), (50, 50));
        assert_ne!(a, separable_clusters(100, 3, 8, Scenario::Time));
    }

    #[test]
    fn embedding_encodes_attributes() {
        let mut w = AttributeWorld::new(6, 3.0, 0.01, 1);
        let pools = w.standard_pools("", 4, 2);
        let ex = crate::forge::forge_time_aware(&pools.time_sensitive, &pools.known, 0).unwrap();
        for e in ex.train.iter().chain(&ex.valid) {
            let r = w.embed(e);
            let ts = r.vector[axis(Scenario::Time)] > 0.0;
            assert_eq!(ts, e.label == Label::Retrieve);
            assert!(r.vector[axis(Scenario::Knowledge)] > 0.0);
        }
    }
}
