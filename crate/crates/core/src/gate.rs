//! Retrieval gating policies.
//!
//! The main policy is the criteria cascade over four value heads:
//!
//! 1. explicit retrieval intent → retrieve
//! 2. not knowledge-intensive → don't retrieve
//! 3. time-sensitive → retrieve
//! 4. otherwise retrieve iff the model does not know the answer
//!
//! Baselines (single criterion, constant, min-token-probability threshold)
//! produce the same [`GateDecision`] shape so that harnesses can treat every
//! policy uniformly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierError, LinearClassifier, Prediction};
use crate::scenario::{Scenario, Verdict};

#[derive(Debug, thiserror::Error)]
pub enum GateError {
    #[error("vector has {found} values, gate expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite input value at index {0}")]
    NonFiniteValue(usize),
    #[error("token probability trace is empty")]
    EmptyTrace,
    #[error("token probability {value} at position {index} is outside (0, 1]")]
    InvalidProbability { index: usize, value: f64 },
    #[error("threshold {0} is outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("unknown threshold preset {0:?} (known: 7b, 13b)")]
    UnknownPreset(String),
    #[error("bundle is missing a {0} classifier")]
    MissingCriterion(Scenario),
    #[error("bundle has more than one {0} classifier")]
    DuplicateCriterion(Scenario),
    #[error("classifier in the {slot} slot is tagged {found}")]
    ScenarioMismatch { slot: Scenario, found: Scenario },
    #[error("bundle classifiers disagree on dim: {0:?}")]
    BundleDimMismatch(Vec<(Scenario, usize)>),
    #[error("invalid criteria order: {0}")]
    InvalidOrder(String),
    #[error("policy {policy} needs {needs}")]
    InputMismatch { policy: String, needs: &'static str },
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("cannot read bundle at {path}: {detail}")]
    BundleIo { path: String, detail: String },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

pub type Result<T, E = GateError> = std::result::Result<T, E>;

/// The four value heads, one per criterion, sharing one input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GateBundle {
    intent: LinearClassifier,
    knowledge: LinearClassifier,
    time: LinearClassifier,
    self_knowledge: LinearClassifier,
}

impl GateBundle {
    pub fn new(
        intent: LinearClassifier,
        knowledge: LinearClassifier,
        time: LinearClassifier,
        self_knowledge: LinearClassifier,
    ) -> Result<Self> {
        let b = GateBundle {
            intent,
            knowledge,
            time,
            self_knowledge,
        };
        for s in Scenario::CRITERIA {
            let found = b.classifier(s).scenario;
            if found != s {
                return Err(GateError::ScenarioMismatch { slot: s, found });
            }
        }
        let dims: Vec<(Scenario, usize)> = Scenario::CRITERIA.iter().map(|&s| (s, b.classifier(s).dim)).collect();
        if dims.iter().any(|(_, d)| *d != dims[0].1) {
            return Err(GateError::BundleDimMismatch(dims));
        }
        Ok(b)
    }

    /// Assigns classifiers to slots by their `scenario` tag.
    pub fn from_classifiers(classifiers: impl IntoIterator<Item = LinearClassifier>) -> Result<Self> {
        let mut slots: BTreeMap<Scenario, LinearClassifier> = BTreeMap::new();
        for c in classifiers {
            let s = c.scenario;
            if !Scenario::CRITERIA.contains(&s) {
                return Err(GateError::ScenarioMismatch {
                    slot: Scenario::Unspecified,
                    found: s,
                });
            }
            if slots.insert(s, c).is_some() {
                return Err(GateError::DuplicateCriterion(s));
            }
        }
        let mut take = |s| slots.remove(&s).ok_or(GateError::MissingCriterion(s));
        GateBundle::new(
            take(Scenario::Intent)?,
            take(Scenario::Knowledge)?,
            take(Scenario::Time)?,
            take(Scenario::SelfKnowledge)?,
        )
    }

    /// Loads every `*.json` classifier in a directory.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let io = |e: std::io::Error| GateError::BundleIo {
            path: dir.display().to_string(),
            detail: e.to_string(),
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        let mut classifiers = Vec::with_capacity(paths.len());
        for p in paths {
            let bytes = std::fs::read(&p).map_err(|e| GateError::BundleIo {
                path: p.display().to_string(),
                detail: e.to_string(),
            })?;
            classifiers.push(LinearClassifier::from_json(&bytes)?);
        }
        GateBundle::from_classifiers(classifiers)
    }

    /// Writes the four classifiers as `<scenario>.json`.
    pub fn save_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for s in Scenario::CRITERIA {
            std::fs::write(dir.join(format!("{}.json", s.as_str())), self.classifier(s).to_json())?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.intent.dim
    }

    /// Panics for `Scenario::Unspecified`.
    pub fn classifier(&self, s: Scenario) -> &LinearClassifier {
        match s {
            Scenario::Intent => &self.intent,
            Scenario::Knowledge => &self.knowledge,
            Scenario::Time => &self.time,
            Scenario::SelfKnowledge => &self.self_knowledge,
            Scenario::Unspecified => panic!("no classifier slot for Scenario::Unspecified"),
        }
    }

    pub fn classifier_mut(&mut self, s: Scenario) -> &mut LinearClassifier {
        match s {
            Scenario::Intent => &mut self.intent,
            Scenario::Knowledge => &mut self.knowledge,
            Scenario::Time => &mut self.time,
            Scenario::SelfKnowledge => &mut self.self_knowledge,
            Scenario::Unspecified => panic!("no classifier slot for Scenario::Unspecified"),
        }
    }
}

/// Which policy produced a decision. Serialized as `uar_tree`, `single:<scenario>`,
/// `always`, `never` or `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    UarTree,
    SingleCriterion(Scenario),
    AlwaysRetrieve,
    NeverRetrieve,
    ConfidenceThreshold,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::UarTree => f.write_str("uar_tree"),
            PolicyKind::SingleCriterion(s) => write!(f, "single:{s}"),
            PolicyKind::AlwaysRetrieve => f.write_str("always"),
            PolicyKind::NeverRetrieve => f.write_str("never"),
            PolicyKind::ConfidenceThreshold => f.write_str("threshold"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = GateError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uar_tree" | "tree" | "uar" => Ok(PolicyKind::UarTree),
            "always" => Ok(PolicyKind::AlwaysRetrieve),
            "never" => Ok(PolicyKind::NeverRetrieve),
            "threshold" => Ok(PolicyKind::ConfidenceThreshold),
            other => match other.strip_prefix("single:") {
                Some(sc) => match sc.parse::<Scenario>() {
                    Ok(sc) if sc != Scenario::Unspecified => Ok(PolicyKind::SingleCriterion(sc)),
                    _ => Err(GateError::UnknownPolicy(other.to_string())),
                },
                None => Err(GateError::UnknownPolicy(other.to_string())),
            },
        }
    }
}

impl Serialize for PolicyKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PolicyKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub verdict: Verdict,
    pub logits: [f64; 2],
    pub prob_retrieve: f64,
}

impl CriterionOutcome {
    fn from_prediction(p: &Prediction, threshold: Option<f64>) -> Self {
        CriterionOutcome {
            verdict: p.verdict_at(threshold),
            logits: p.logits,
            prob_retrieve: p.prob_retrieve,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    #[serde(rename = "final")]
    pub final_verdict: Verdict,
    pub policy: PolicyKind,
    /// Criteria consulted, in the order they were consulted.
    pub evaluated: Vec<Scenario>,
    pub criteria: BTreeMap<Scenario, CriterionOutcome>,
}

impl GateDecision {
    pub fn retrieves(&self) -> bool {
        self.final_verdict.is_retrieve()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("decision serializes")
    }
}

/// Cascade configuration. The default is the fixed intent → knowledge →
/// time → self order with lazy evaluation and argmax verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub order: Vec<Scenario>,
    /// Evaluate every head, not only the consulted ones.
    pub eager: bool,
    /// Optional per-head probability thresholds replacing argmax.
    pub thresholds: BTreeMap<Scenario, f64>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            order: Scenario::CRITERIA.to_vec(),
            eager: false,
            thresholds: BTreeMap::new(),
        }
    }
}

impl TreeConfig {
    pub fn eager() -> Self {
        TreeConfig {
            eager: true,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order.is_empty() {
            return Err(GateError::InvalidOrder("order is empty".into()));
        }
        let mut seen = Vec::new();
        for s in &self.order {
            if *s == Scenario::Unspecified {
                return Err(GateError::InvalidOrder("unspecified is not a criterion".into()));
            }
            if seen.contains(s) {
                return Err(GateError::InvalidOrder(format!("{s} listed twice")));
            }
            seen.push(*s);
        }
        for (s, t) in &self.thresholds {
            if !(*t > 0.0 && *t < 1.0) {
                return Err(GateError::InvalidOrder(format!("threshold for {s} is {t}, must be in (0, 1)")));
            }
        }
        Ok(())
    }
}

/// The verdict on which a criterion ends the cascade early. `None` means the
/// criterion always ends it (the self-knowledge check decides both ways).
pub fn short_circuit_verdict(s: Scenario) -> Option<Verdict> {
    match s {
        Scenario::Intent | Scenario::Time => Some(Verdict::Retrieve),
        Scenario::Knowledge => Some(Verdict::NoRetrieve),
        Scenario::SelfKnowledge | Scenario::Unspecified => None,
    }
}

fn check_vector(dim: usize, x: &[f32]) -> Result<()> {
    if x.len() != dim {
        return Err(GateError::DimensionMismatch {
            expected: dim,
            found: x.len(),
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(GateError::NonFiniteValue(i));
    }
    Ok(())
}

/// Runs the criteria cascade with the default configuration.
pub fn decide_tree(bundle: &GateBundle, x: &[f32]) -> Result<GateDecision> {
    decide_tree_with(bundle, x, &TreeConfig::default())
}

pub fn decide_tree_with(bundle: &GateBundle, x: &[f32], cfg: &TreeConfig) -> Result<GateDecision> {
    cfg.validate()?;
    check_vector(bundle.dim(), x)?;
    let outcome = |s: Scenario| -> Result<CriterionOutcome> {
        let p = bundle.classifier(s).predict(x)?;
        Ok(CriterionOutcome::from_prediction(&p, cfg.thresholds.get(&s).copied()))
    };

    let mut criteria = BTreeMap::new();
    if cfg.eager {
        for s in Scenario::CRITERIA {
            criteria.insert(s, outcome(s)?);
        }
    }

    let mut evaluated = Vec::with_capacity(cfg.order.len());
    let mut final_verdict = Verdict::NoRetrieve;
    for (i, &s) in cfg.order.iter().enumerate() {
        let o = match criteria.get(&s) {
            Some(o) => *o,
            None => {
                let o = outcome(s)?;
                criteria.insert(s, o);
                o
            }
        };
        evaluated.push(s);
        final_verdict = o.verdict;
        let last = i + 1 == cfg.order.len();
        if last || short_circuit_verdict(s).is_none_or(|v| v == o.verdict) {
            break;
        }
    }

    Ok(GateDecision {
        final_verdict,
        policy: PolicyKind::UarTree,
        evaluated,
        criteria,
    })
}

/// One head on its own. Every head maps class 1 to `Retrieve`, so the
/// decision is the head's verdict.
pub fn decide_single(clf: &LinearClassifier, x: &[f32]) -> Result<GateDecision> {
    check_vector(clf.dim, x)?;
    let p = clf.predict(x)?;
    let o = CriterionOutcome::from_prediction(&p, None);
    Ok(GateDecision {
        final_verdict: o.verdict,
        policy: PolicyKind::SingleCriterion(clf.scenario),
        evaluated: vec![clf.scenario],
        criteria: BTreeMap::from([(clf.scenario, o)]),
    })
}

pub fn decide_constant(always: bool) -> GateDecision {
    GateDecision {
        final_verdict: Verdict::from_bool(always),
        policy: if always {
            PolicyKind::AlwaysRetrieve
        } else {
            PolicyKind::NeverRetrieve
        },
        evaluated: Vec::new(),
        criteria: BTreeMap::new(),
    }
}

/// Per-token probabilities of a draft generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TokenProbTrace {
    probs: Vec<f64>,
}

impl TokenProbTrace {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(GateError::EmptyTrace);
        }
        if let Some((index, &value)) = probs.iter().enumerate().find(|(_, p)| !(**p > 0.0 && **p <= 1.0)) {
            return Err(GateError::InvalidProbability { index, value });
        }
        Ok(TokenProbTrace { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl TryFrom<Vec<f64>> for TokenProbTrace {
    type Error = GateError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        TokenProbTrace::new(v)
    }
}

impl From<TokenProbTrace> for Vec<f64> {
    fn from(t: TokenProbTrace) -> Self {
        t.probs
    }
}

/// Named thresholds for the min-token-probability gate.
pub fn threshold_preset(name: &str) -> Result<f64> {
    match name.to_ascii_lowercase().as_str() {
        "7b" => Ok(0.006),
        "13b" => Ok(0.02),
        other => Err(GateError::UnknownPreset(other.to_string())),
    }
}

/// Retrieve iff some generated token's probability is strictly below `theta`.
pub fn decide_threshold(trace: &TokenProbTrace, theta: f64) -> Result<GateDecision> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(GateError::InvalidThreshold(theta));
    }
    Ok(GateDecision {
        final_verdict: Verdict::from_bool(trace.min_prob() < theta),
        policy: PolicyKind::ConfidenceThreshold,
        evaluated: Vec::new(),
        criteria: BTreeMap::new(),
    })
}

/// A gating policy bound to the resources it needs.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    UarTree {
        bundle: &'a GateBundle,
        config: &'a TreeConfig,
    },
    Single(&'a LinearClassifier),
    Always,
    Never,
    Threshold { theta: f64 },
}

/// What a policy looks at: a hidden-state vector or a token-probability trace.
#[derive(Debug, Clone, Copy)]
pub enum GateInput<'a> {
    Vector(&'a [f32]),
    Trace(&'a TokenProbTrace),
    /// For constant policies, which need nothing.
    None,
}

impl<'a> Policy<'a> {
    /// Builds a classifier-backed or constant policy from its name.
    pub fn from_kind(kind: PolicyKind, bundle: &'a GateBundle, config: &'a TreeConfig) -> Result<Self> {
        Ok(match kind {
            PolicyKind::UarTree => Policy::UarTree { bundle, config },
            PolicyKind::SingleCriterion(s) => Policy::Single(bundle.classifier(s)),
            PolicyKind::AlwaysRetrieve => Policy::Always,
            PolicyKind::NeverRetrieve => Policy::Never,
            PolicyKind::ConfidenceThreshold => {
                return Err(GateError::InputMismatch {
                    policy: kind.to_string(),
                    needs: "an explicit theta",
                })
            }
        })
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::UarTree { .. } => PolicyKind::UarTree,
            Policy::Single(c) => PolicyKind::SingleCriterion(c.scenario),
            Policy::Always => PolicyKind::AlwaysRetrieve,
            Policy::Never => PolicyKind::NeverRetrieve,
            Policy::Threshold { .. } => PolicyKind::ConfidenceThreshold,
        }
    }

    pub fn decide(&self, input: GateInput<'_>) -> Result<GateDecision> {
        match (self, input) {
            (Policy::Always, _) => Ok(decide_constant(true)),
            (Policy::Never, _) => Ok(decide_constant(false)),
            (Policy::UarTree { bundle, config }, GateInput::Vector(x)) => decide_tree_with(bundle, x, config),
            (Policy::Single(c), GateInput::Vector(x)) => decide_single(c, x),
            (Policy::Threshold { theta }, GateInput::Trace(t)) => decide_threshold(t, *theta),
            (Policy::Threshold { .. }, _) => Err(GateError::InputMismatch {
                policy: self.kind().to_string(),
                needs: "a token probability trace",
            }),
            (_, _) => Err(GateError::InputMismatch {
                policy: self.kind().to_string(),
                needs: "a hidden-state vector",
            }),
        }
    }
}
