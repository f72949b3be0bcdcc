//! Training-set and benchmark construction from labeled source pools.
//!
//! Every forged example carries the pool it was drawn from, so its label can
//! be recomputed from provenance alone with [`recipe_label`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::feature_store::{stratified_partition, DEFAULT_VALID_FRACTION};
use crate::rag::clients::{GenerationClient, JudgeClient, JudgeVerdict, Sampling};
use crate::rag::scoring::lexical_match;
use crate::sampling::{self, derive_seed, shuffled_indices};
use crate::scenario::{Label, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("labels are degenerate: {0}")]
    DegenerateLabels(String),
    #[error("pool {0} is empty")]
    EmptyPool(String),
    #[error("pool {pool} has {available} items, {needed} needed")]
    PoolTooSmall {
        pool: String,
        needed: usize,
        available: usize,
    },
    #[error("intent list is empty")]
    EmptyIntentList,
    #[error("{} drawn items overlap the training ids: {}", .0.len(), preview(.0))]
    OverlapWithTraining(Vec<String>),
    #[error("duplicate example id {0:?}")]
    DuplicateId(String),
    #[error("invalid item {id:?}: {detail}")]
    InvalidItem { id: String, detail: String },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("i/o on {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("suite violates invariants: {}", .0.join("; "))]
    InvalidSuite(Vec<String>),
}

fn preview(ids: &[String]) -> String {
    let head: Vec<&str> = ids.iter().take(5).map(String::as_str).collect();
    if ids.len() > 5 {
        format!("{}, ...", head.join(", "))
    } else {
        head.join(", ")
    }
}

pub type Result<T, E = ForgeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QaSource {
    TriviaQa,
    Taqa,
    SelfRagNonRet,
    Other(String),
}

impl QaSource {
    fn as_str(&self) -> &str {
        match self {
            QaSource::TriviaQa => "trivia_qa",
            QaSource::Taqa => "taqa",
            QaSource::SelfRagNonRet => "self_rag_non_ret",
            QaSource::Other(s) => s,
        }
    }

    /// Sources whose items must come with gold answers.
    pub fn is_qa(&self) -> bool {
        matches!(self, QaSource::TriviaQa | QaSource::Taqa)
    }
}

impl Serialize for QaSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for QaSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(match s.as_str() {
            "trivia_qa" | "triviaqa" => QaSource::TriviaQa,
            "taqa" => QaSource::Taqa,
            "self_rag_non_ret" | "selfrag_nonret" => QaSource::SelfRagNonRet,
            _ => QaSource::Other(s),
        })
    }
}

/// A question or instruction from a source pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub question: String,
    #[serde(rename = "answers", default)]
    pub gold_answers: Vec<String>,
    pub source: QaSource,
}

impl QaItem {
    pub fn new(id: impl Into<String>, question: impl Into<String>, answers: &[&str], source: QaSource) -> Self {
        QaItem {
            id: id.into(),
            question: question.into(),
            gold_answers: answers.iter().map(|s| s.to_string()).collect(),
            source,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(ForgeError::InvalidItem {
                id: self.id.clone(),
                detail: "empty id".into(),
            });
        }
        if self.question.trim().is_empty() {
            return Err(ForgeError::InvalidItem {
                id: self.id.clone(),
                detail: "empty question".into(),
            });
        }
        if self.source.is_qa() && self.gold_answers.is_empty() {
            return Err(ForgeError::InvalidItem {
                id: self.id.clone(),
                detail: format!("{} item without gold answers", self.source.as_str()),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentPhrase {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentPosition {
    Before,
    After,
    None,
}

/// The pool an example was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    /// Questions the model answers correctly in every sample.
    Known,
    /// Questions the model misses in at least one sample.
    Unknown,
    TimeSensitive,
    /// Questions with answers that do not change over time.
    Static,
    NonKnowledgeIntensive,
    KnowledgeIntensive,
    /// Base inputs for intent concatenation.
    IntentBase,
}

impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("pool kind serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub pool: PoolKind,
    pub source_ids: Vec<String>,
    #[serde(default)]
    pub intent_id: Option<String>,
    pub intent_position: IntentPosition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgedExample {
    pub id: String,
    pub text: String,
    pub scenario: Scenario,
    pub label: Label,
    pub provenance: Provenance,
}

/// Recomputes an example's label from its scenario and provenance.
/// Returns `Unlabeled` for combinations no recipe produces.
pub fn recipe_label(scenario: Scenario, prov: &Provenance) -> Label {
    use PoolKind::*;
    match scenario {
        Scenario::Intent => match prov.intent_position {
            IntentPosition::None => Label::NoRetrieve,
            _ => Label::Retrieve,
        },
        Scenario::SelfKnowledge => match prov.pool {
            Unknown => Label::Retrieve,
            Known => Label::NoRetrieve,
            _ => Label::Unlabeled,
        },
        Scenario::Time => match prov.pool {
            TimeSensitive => Label::Retrieve,
            Static | Known => Label::NoRetrieve,
            _ => Label::Unlabeled,
        },
        Scenario::Knowledge => match prov.pool {
            NonKnowledgeIntensive => Label::NoRetrieve,
            KnowledgeIntensive | TimeSensitive | Unknown => Label::Retrieve,
            _ => Label::Unlabeled,
        },
        Scenario::Unspecified => Label::Unlabeled,
    }
}

fn example(scenario: Scenario, pool: PoolKind, item: &QaItem, model_tag: Option<&str>) -> ForgedExample {
    let provenance = Provenance {
        pool,
        source_ids: vec![item.id.clone()],
        intent_id: None,
        intent_position: IntentPosition::None,
        model_tag: model_tag.map(str::to_string),
    };
    ForgedExample {
        id: format!("{}:{}", scenario.as_str(), item.id),
        text: item.question.clone(),
        scenario,
        label: recipe_label(scenario, &provenance),
        provenance,
    }
}

/// A train/validation pair of forged example lists.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForgedSplit {
    pub train: Vec<ForgedExample>,
    pub valid: Vec<ForgedExample>,
}

fn ensure_unique(examples: impl IntoIterator<Item = impl AsRef<str>>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in examples {
        if !seen.insert(id.as_ref().to_string()) {
            return Err(ForgeError::DuplicateId(id.as_ref().to_string()));
        }
    }
    Ok(())
}

fn split_by_label(examples: Vec<ForgedExample>, fraction: f64, seed: u64) -> Result<ForgedSplit> {
    ensure_unique(examples.iter().map(|e| &e.id))?;
    let keys: Vec<Label> = examples.iter().map(|e| e.label).collect();
    let (train_idx, valid_idx) = stratified_partition(&keys, fraction, seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| examples[i].clone()).collect();
    Ok(ForgedSplit {
        train: pick(&train_idx),
        valid: pick(&valid_idx),
    })
}

fn validate_items(items: &[QaItem]) -> Result<()> {
    items.iter().try_for_each(QaItem::validate)
}

// ---------------------------------------------------------------------------
// Self-knowledge labeling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knowledge {
    Known,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfLabelConfig {
    /// Samples drawn per question.
    pub k: usize,
    pub seed: u64,
    pub temperature: f64,
    /// Maximum concurrent client calls.
    pub parallelism: usize,
}

impl Default for SelfLabelConfig {
    fn default() -> Self {
        SelfLabelConfig {
            k: 10,
            seed: 0,
            temperature: 1.0,
            parallelism: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfKnowledgeLabels {
    pub model_tag: String,
    pub labels: BTreeMap<String, Knowledge>,
    /// Items skipped because a client call failed.
    pub failures: Vec<LabelFailure>,
}

impl SelfKnowledgeLabels {
    /// Splits the labeled items into (known, unknown) pools, preserving item order.
    pub fn partition<'a>(&self, items: &'a [QaItem]) -> (Vec<&'a QaItem>, Vec<&'a QaItem>) {
        let mut known = Vec::new();
        let mut unknown = Vec::new();
        for it in items {
            match self.labels.get(&it.id) {
                Some(Knowledge::Known) => known.push(it),
                Some(Knowledge::Unknown) => unknown.push(it),
                None => {}
            }
        }
        (known, unknown)
    }
}

/// Marks each question `Known` iff all `k` sampled answers are correct.
///
/// Correctness is lexical containment of a gold answer unless a judge is
/// supplied, in which case the judge decides. Sample `j` of item `id` uses
/// seed `derive_seed(cfg.seed, id) + j`. Items whose client calls fail are
/// reported in `failures` and get no label.
pub fn label_self_knowledge<G, J>(
    items: &[QaItem],
    llm: &G,
    judge: Option<&J>,
    cfg: &SelfLabelConfig,
) -> Result<SelfKnowledgeLabels>
where
    G: GenerationClient + Sync + ?Sized,
    J: JudgeClient + Sync + ?Sized,
{
    use rayon::prelude::*;

    if cfg.k == 0 {
        return Err(ForgeError::InvalidConfig("k must be >= 1".into()));
    }
    validate_items(items)?;
    ensure_unique(items.iter().map(|i| &i.id))?;
    if let Some(it) = items.iter().find(|i| i.gold_answers.is_empty()) {
        return Err(ForgeError::InvalidItem {
            id: it.id.clone(),
            detail: "self-knowledge labeling needs gold answers".into(),
        });
    }

    let label_one = |item: &QaItem| -> std::result::Result<Knowledge, String> {
        let base = derive_seed(cfg.seed, &item.id);
        let mut all_correct = true;
        for j in 0..cfg.k {
            let sampling = Sampling::Sampled {
                seed: base.wrapping_add(j as u64),
                temperature: cfg.temperature,
            };
            let answer = llm.generate(&item.question, sampling).map_err(|e| e.to_string())?;
            let correct = match judge {
                Some(judge) => judge
                    .judge(&item.question, &answer, &item.gold_answers)
                    .map_err(|e| e.to_string())?
                    == JudgeVerdict::Yes,
                None => lexical_match(&answer, &item.gold_answers),
            };
            all_correct &= correct;
        }
        Ok(if all_correct {
            Knowledge::Known
        } else {
            Knowledge::Unknown
        })
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism.max(1))
        .build()
        .map_err(|e| ForgeError::InvalidConfig(e.to_string()))?;
    let results: Vec<_> = pool.install(|| items.par_iter().map(|it| (it.id.clone(), label_one(it))).collect());

    let mut labels = BTreeMap::new();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(k) => {
                labels.insert(id, k);
            }
            Err(error) => failures.push(LabelFailure { id, error }),
        }
    }
    failures.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(SelfKnowledgeLabels {
        model_tag: llm.model_tag(),
        labels,
        failures,
    })
}

// ---------------------------------------------------------------------------
// Scenario training sets
// ---------------------------------------------------------------------------

/// Unknown questions become retrieve examples, known ones no-retrieve;
/// stratified split with `valid_fraction` held out.
pub fn forge_self_aware(
    known: &[QaItem],
    unknown: &[QaItem],
    seed: u64,
    valid_fraction: f64,
    model_tag: &str,
) -> Result<ForgedSplit> {
    if known.is_empty() || unknown.is_empty() {
        return Err(ForgeError::DegenerateLabels(format!(
            "need known and unknown questions (known={}, unknown={})",
            known.len(),
            unknown.len()
        )));
    }
    validate_items(known)?;
    validate_items(unknown)?;
    let examples = known
        .iter()
        .map(|q| example(Scenario::SelfKnowledge, PoolKind::Known, q, Some(model_tag)))
        .chain(
            unknown
                .iter()
                .map(|q| example(Scenario::SelfKnowledge, PoolKind::Unknown, q, Some(model_tag))),
        )
        .collect();
    split_by_label(examples, valid_fraction, seed)
}

/// Seeded draw of `n` items, kept in pool order.
fn draw(pool: &[QaItem], n: usize, seed: u64, name: &str) -> Result<Vec<QaItem>> {
    if n > pool.len() {
        return Err(ForgeError::PoolTooSmall {
            pool: name.to_string(),
            needed: n,
            available: pool.len(),
        });
    }
    let mut idx: Vec<usize> = shuffled_indices(pool.len(), derive_seed(seed, name))
        .into_iter()
        .take(n)
        .collect();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pool[i].clone()).collect())
}

/// Balances time-sensitive and static questions by downsampling the larger
/// pool, then splits 90/10.
pub fn forge_time_aware(time_sensitive: &[QaItem], static_pool: &[QaItem], seed: u64) -> Result<ForgedSplit> {
    if time_sensitive.is_empty() {
        return Err(ForgeError::EmptyPool("time_sensitive".into()));
    }
    if static_pool.is_empty() {
        return Err(ForgeError::EmptyPool("static".into()));
    }
    validate_items(time_sensitive)?;
    validate_items(static_pool)?;
    let n = time_sensitive.len().min(static_pool.len());
    let ts = draw(time_sensitive, n, seed, "time/time_sensitive")?;
    let st = draw(static_pool, n, seed, "time/static")?;
    let examples = ts
        .iter()
        .map(|q| example(Scenario::Time, PoolKind::TimeSensitive, q, None))
        .chain(st.iter().map(|q| example(Scenario::Time, PoolKind::Static, q, None)))
        .collect();
    split_by_label(examples, DEFAULT_VALID_FRACTION, seed)
}

/// Non-knowledge-intensive instructions → no-retrieve, knowledge-intensive
/// questions → retrieve. The requested validation counts
/// `(non_ki, ki)` are drawn first and the rest of each pool goes to train.
pub fn forge_knowledge_aware(
    non_ki: &[QaItem],
    ki: &[QaItem],
    valid_counts: (usize, usize),
    seed: u64,
) -> Result<ForgedSplit> {
    validate_items(non_ki)?;
    validate_items(ki)?;
    let mut out = ForgedSplit::default();
    for (pool, n_valid, kind, name) in [
        (non_ki, valid_counts.0, PoolKind::NonKnowledgeIntensive, "knowledge/non_ki"),
        (ki, valid_counts.1, PoolKind::KnowledgeIntensive, "knowledge/ki"),
    ] {
        if n_valid > pool.len() {
            return Err(ForgeError::PoolTooSmall {
                pool: name.to_string(),
                needed: n_valid,
                available: pool.len(),
            });
        }
        let order = shuffled_indices(pool.len(), derive_seed(seed, name));
        let mut valid_idx = order[..n_valid].to_vec();
        let mut train_idx = order[n_valid..].to_vec();
        valid_idx.sort_unstable();
        train_idx.sort_unstable();
        out.valid
            .extend(valid_idx.iter().map(|&i| example(Scenario::Knowledge, kind, &pool[i], None)));
        out.train
            .extend(train_idx.iter().map(|&i| example(Scenario::Knowledge, kind, &pool[i], None)));
    }
    ensure_unique(out.train.iter().chain(&out.valid).map(|e| &e.id))?;
    Ok(out)
}

/// Converts forged examples back into pool items, e.g. to feed all of the
/// time-aware data into the knowledge-aware recipe as knowledge-intensive.
pub fn as_pool_items(examples: &[ForgedExample]) -> Vec<QaItem> {
    examples
        .iter()
        .map(|e| QaItem {
            id: e.id.clone(),
            question: e.text.clone(),
            gold_answers: Vec::new(),
            source: QaSource::Other(format!("forged:{}", e.scenario)),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentForgeConfig {
    pub valid_fraction: f64,
    pub test_fraction: f64,
    /// Shares of the intent list reserved for validation and test inputs.
    pub intent_valid_fraction: f64,
    pub intent_test_fraction: f64,
}

impl Default for IntentForgeConfig {
    fn default() -> Self {
        IntentForgeConfig {
            valid_fraction: 0.1,
            test_fraction: 0.1,
            intent_valid_fraction: 1.0 / 6.0,
            intent_test_fraction: 1.0 / 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntentForged {
    pub train: Vec<ForgedExample>,
    pub valid: Vec<ForgedExample>,
    pub test: Vec<ForgedExample>,
}

/// Seeded order of base inputs with the intent position of each. The first
/// `floor(n/2)` get an intent, alternating before/after starting with before.
pub fn intent_layout(n: usize, seed: u64) -> Vec<(usize, IntentPosition)> {
    let half = n / 2;
    shuffled_indices(n, derive_seed(seed, "intent/base"))
        .into_iter()
        .enumerate()
        .map(|(out, base)| {
            let pos = if out >= half {
                IntentPosition::None
            } else if out % 2 == 0 {
                IntentPosition::Before
            } else {
                IntentPosition::After
            };
            (base, pos)
        })
        .collect()
}

fn concat_intent(input: &str, intent: &str, pos: IntentPosition) -> String {
    match pos {
        IntentPosition::Before => format!("{intent} {input}"),
        IntentPosition::After => format!("{input} {intent}"),
        IntentPosition::None => input.to_string(),
    }
}

/// Picks `needed` intents from `pool`: without replacement when the pool is
/// large enough, with replacement otherwise.
fn pick_intents<'a>(pool: &[&'a IntentPhrase], needed: usize, seed: u64) -> Vec<&'a IntentPhrase> {
    let mut rng = sampling::rng(seed);
    if pool.len() >= needed {
        let mut p = pool.to_vec();
        sampling::fisher_yates(&mut p, &mut rng);
        p.truncate(needed);
        p
    } else {
        (0..needed).map(|_| pool[rng.random_range(0..pool.len())]).collect()
    }
}

/// Lays out intent/no-intent examples over `base` (see [`intent_layout`])
/// and fills intent slots from `intents`.
fn intent_examples(
    base: &[QaItem],
    layout: &[(usize, IntentPosition)],
    intents: &[&IntentPhrase],
    seed: u64,
    id_prefix: &str,
) -> Vec<ForgedExample> {
    let needed = layout.iter().filter(|(_, p)| *p != IntentPosition::None).count();
    let mut chosen = pick_intents(intents, needed, seed).into_iter();
    layout
        .iter()
        .map(|&(bi, pos)| {
            let item = &base[bi];
            let intent = (pos != IntentPosition::None).then(|| chosen.next().expect("enough intents"));
            let provenance = Provenance {
                pool: PoolKind::IntentBase,
                source_ids: vec![item.id.clone()],
                intent_id: intent.map(|i| i.id.clone()),
                intent_position: pos,
                model_tag: None,
            };
            ForgedExample {
                id: format!("{id_prefix}:{}", item.id),
                text: intent.map_or_else(|| item.question.clone(), |i| concat_intent(&item.question, &i.text, pos)),
                scenario: Scenario::Intent,
                label: recipe_label(Scenario::Intent, &provenance),
                provenance,
            }
        })
        .collect()
}

/// Splits the intent list into (train, valid, test) shares. Lists shorter
/// than three are shared by all splits.
fn partition_intents<'a>(intents: &'a [IntentPhrase], cfg: &IntentForgeConfig, seed: u64) -> [Vec<&'a IntentPhrase>; 3] {
    let all: Vec<&IntentPhrase> = intents.iter().collect();
    if intents.len() < 3 {
        return [all.clone(), all.clone(), all];
    }
    let order = shuffled_indices(intents.len(), derive_seed(seed, "intent/phrases"));
    let n_test = sampling::held_out_count(intents.len(), cfg.intent_test_fraction);
    let rest = intents.len() - n_test;
    let n_valid = sampling::held_out_count(rest, cfg.intent_valid_fraction * intents.len() as f64 / rest as f64);
    let take = |r: std::ops::Range<usize>| {
        let mut idx = order[r].to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &intents[i]).collect::<Vec<_>>()
    };
    [take(n_test + n_valid..intents.len()), take(n_test..n_test + n_valid), take(0..n_test)]
}

/// Concatenates intents to half of the base inputs and splits the result
/// into train/valid/test, stratified by label. Each split draws intents from
/// its own share of the intent list.
pub fn forge_intent_aware(
    base: &[QaItem],
    intents: &[IntentPhrase],
    seed: u64,
    cfg: &IntentForgeConfig,
) -> Result<IntentForged> {
    if intents.is_empty() {
        return Err(ForgeError::EmptyIntentList);
    }
    if let Some(i) = intents.iter().find(|i| i.text.trim().is_empty()) {
        return Err(ForgeError::InvalidItem {
            id: i.id.clone(),
            detail: "empty intent text".into(),
        });
    }
    validate_items(base)?;
    ensure_unique(base.iter().map(|b| &b.id))?;
    let layout = intent_layout(base.len(), seed);

    // Split positions of the layout, stratified by whether an intent goes there.
    let keys: Vec<bool> = layout.iter().map(|(_, p)| *p != IntentPosition::None).collect();
    let (rest, test_pos) = stratified_partition(&keys, cfg.test_fraction, derive_seed(seed, "intent/test"));
    let rest_keys: Vec<bool> = rest.iter().map(|&i| keys[i]).collect();
    let valid_share = cfg.valid_fraction / (1.0 - cfg.test_fraction).max(f64::EPSILON);
    let (train_rel, valid_rel) = stratified_partition(&rest_keys, valid_share, derive_seed(seed, "intent/valid"));
    let train_pos: Vec<usize> = train_rel.iter().map(|&i| rest[i]).collect();
    let valid_pos: Vec<usize> = valid_rel.iter().map(|&i| rest[i]).collect();

    let [train_intents, valid_intents, test_intents] = partition_intents(intents, cfg, seed);
    let build = |pos: &[usize], pool: &[&IntentPhrase], salt: &str| {
        let sub: Vec<(usize, IntentPosition)> = pos.iter().map(|&i| layout[i]).collect();
        intent_examples(base, &sub, pool, derive_seed(seed, salt), "intent")
    };
    Ok(IntentForged {
        train: build(&train_pos, &train_intents, "intent/pick/train"),
        valid: build(&valid_pos, &valid_intents, "intent/pick/valid"),
        test: build(&test_pos, &test_intents, "intent/pick/test"),
    })
}

// ---------------------------------------------------------------------------
// AR-Bench
// ---------------------------------------------------------------------------

/// Source pools for benchmark construction. `known`/`unknown` are the
/// self-knowledge labeled questions for one specific model.
#[derive(Debug, Clone, Default)]
pub struct BenchPools {
    pub known: Vec<QaItem>,
    pub unknown: Vec<QaItem>,
    pub time_sensitive: Vec<QaItem>,
    pub non_ki: Vec<QaItem>,
    pub intents: Vec<IntentPhrase>,
}

/// Examples per class for each subtask (each subtask has twice this many).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchCounts {
    pub intent: usize,
    pub knowledge: usize,
    pub time: usize,
    #[serde(rename = "self")]
    pub self_knowledge: usize,
}

impl BenchCounts {
    pub fn uniform(per_class: usize) -> Self {
        BenchCounts {
            intent: per_class,
            knowledge: per_class,
            time: per_class,
            self_knowledge: per_class,
        }
    }

    /// 4,000 per class, 8,000 per subtask.
    pub fn paper_scale() -> Self {
        BenchCounts::uniform(4000)
    }

    pub fn get(&self, s: Scenario) -> usize {
        match s {
            Scenario::Intent => self.intent,
            Scenario::Knowledge => self.knowledge,
            Scenario::Time => self.time,
            Scenario::SelfKnowledge => self.self_knowledge,
            Scenario::Unspecified => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub retrieve: usize,
    pub no_retrieve: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchMeta {
    pub model_tag: String,
    pub seed: u64,
    pub counts: BTreeMap<Scenario, ClassCounts>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSuite {
    pub subtasks: BTreeMap<Scenario, Vec<ForgedExample>>,
    pub meta: BenchMeta,
}

fn class_counts(examples: &[ForgedExample]) -> ClassCounts {
    let mut c = ClassCounts::default();
    for e in examples {
        match e.label {
            Label::Retrieve => c.retrieve += 1,
            Label::NoRetrieve => c.no_retrieve += 1,
            Label::Unlabeled => {}
        }
    }
    c
}

/// Hands out disjoint seeded slices of a pool.
struct PoolCursor<'a> {
    items: Vec<&'a QaItem>,
    next: usize,
}

impl<'a> PoolCursor<'a> {
    fn new(name: &'static str, pool: &'a [QaItem], seed: u64) -> Self {
        let items = shuffled_indices(pool.len(), derive_seed(seed, name))
            .into_iter()
            .map(|i| &pool[i])
            .collect();
        PoolCursor { items, next: 0 }
    }

    fn take(&mut self, n: usize) -> &[&'a QaItem] {
        let s = &self.items[self.next..self.next + n];
        self.next += n;
        s
    }
}

/// Builds the four balanced retrieval-timing subtasks.
///
/// Per subtask with `n` examples per class:
/// - self: `n` known (no-retrieve) + `n` unknown (retrieve)
/// - time: `n` time-sensitive (retrieve) + `n` known (no-retrieve)
/// - knowledge: `n` non-knowledge-intensive (no-retrieve) + `n/2`
///   time-sensitive and `n - n/2` unknown (retrieve)
/// - intent: `n` known + `n` non-knowledge-intensive, half of the combined
///   inputs carrying an intent (retrieve)
///
/// No source item is used twice anywhere in the suite.
pub fn build_ar_bench(
    pools: &BenchPools,
    counts: BenchCounts,
    seed: u64,
    exclude_ids: &HashSet<String>,
    model_tag: &str,
) -> Result<BenchSuite> {
    for p in [&pools.known, &pools.unknown, &pools.time_sensitive, &pools.non_ki] {
        validate_items(p)?;
    }
    let n_self = counts.self_knowledge;
    let n_time = counts.time;
    let n_know = counts.knowledge;
    let n_int = counts.intent;
    let ki_ts = n_know / 2;
    let ki_unknown = n_know - ki_ts;

    let needs = [
        ("known", pools.known.len(), n_self + n_time + n_int),
        ("unknown", pools.unknown.len(), n_self + ki_unknown),
        ("time_sensitive", pools.time_sensitive.len(), n_time + ki_ts),
        ("non_ki", pools.non_ki.len(), n_know + n_int),
    ];
    for (pool, available, needed) in needs {
        if needed > available {
            return Err(ForgeError::PoolTooSmall {
                pool: pool.to_string(),
                needed,
                available,
            });
        }
    }
    if n_int > 0 && pools.intents.is_empty() {
        return Err(ForgeError::EmptyIntentList);
    }

    let mut known = PoolCursor::new("bench/known", &pools.known, seed);
    let mut unknown = PoolCursor::new("bench/unknown", &pools.unknown, seed);
    let mut ts = PoolCursor::new("bench/time_sensitive", &pools.time_sensitive, seed);
    let mut non_ki = PoolCursor::new("bench/non_ki", &pools.non_ki, seed);

    let mk = |s: Scenario, pool: PoolKind, items: &[&QaItem]| -> Vec<ForgedExample> {
        items
            .iter()
            .map(|q| {
                let mut e = example(s, pool, q, Some(model_tag));
                e.id = format!("{}:{}", s.subtask_name(), q.id);
                e
            })
            .collect()
    };

    let mut subtasks = BTreeMap::new();

    let mut self_ex = mk(Scenario::SelfKnowledge, PoolKind::Known, known.take(n_self));
    self_ex.extend(mk(Scenario::SelfKnowledge, PoolKind::Unknown, unknown.take(n_self)));
    subtasks.insert(Scenario::SelfKnowledge, self_ex);

    let mut time_ex = mk(Scenario::Time, PoolKind::TimeSensitive, ts.take(n_time));
    time_ex.extend(mk(Scenario::Time, PoolKind::Known, known.take(n_time)));
    subtasks.insert(Scenario::Time, time_ex);

    let mut know_ex = mk(Scenario::Knowledge, PoolKind::NonKnowledgeIntensive, non_ki.take(n_know));
    know_ex.extend(mk(Scenario::Knowledge, PoolKind::TimeSensitive, ts.take(ki_ts)));
    know_ex.extend(mk(Scenario::Knowledge, PoolKind::Unknown, unknown.take(ki_unknown)));
    subtasks.insert(Scenario::Knowledge, know_ex);

    let mut intent_base: Vec<QaItem> = known.take(n_int).iter().map(|q| (*q).clone()).collect();
    intent_base.extend(non_ki.take(n_int).iter().map(|q| (*q).clone()));
    let layout = intent_layout(intent_base.len(), derive_seed(seed, "bench/intent"));
    let intent_refs: Vec<&IntentPhrase> = pools.intents.iter().collect();
    let mut intent_ex = intent_examples(
        &intent_base,
        &layout,
        &intent_refs,
        derive_seed(seed, "bench/intent/pick"),
        Scenario::Intent.subtask_name(),
    );
    for e in &mut intent_ex {
        e.provenance.model_tag = Some(model_tag.to_string());
    }
    subtasks.insert(Scenario::Intent, intent_ex);

    for (s, ex) in subtasks.iter_mut() {
        let order = shuffled_indices(ex.len(), derive_seed(seed, &format!("bench/order/{s}")));
        let mut shuffled: Vec<ForgedExample> = order.into_iter().map(|i| ex[i].clone()).collect();
        std::mem::swap(ex, &mut shuffled);
    }

    let overlap: Vec<String> = {
        let mut v: Vec<String> = subtasks
            .values()
            .flatten()
            .flat_map(|e| e.provenance.source_ids.iter())
            .filter(|id| exclude_ids.contains(*id))
            .cloned()
            .collect();
        v.sort();
        v.dedup();
        v
    };
    if !overlap.is_empty() {
        return Err(ForgeError::OverlapWithTraining(overlap));
    }
    ensure_unique(subtasks.values().flatten().map(|e| &e.id))?;

    let counts = subtasks.iter().map(|(s, ex)| (*s, class_counts(ex))).collect();
    let suite = BenchSuite {
        subtasks,
        meta: BenchMeta {
            model_tag: model_tag.to_string(),
            seed,
            counts,
        },
    };
    validate_suite(&suite, exclude_ids).map_err(ForgeError::InvalidSuite)?;
    Ok(suite)
}

/// Checks every suite invariant; returns all violations found.
pub fn validate_suite(suite: &BenchSuite, exclude_ids: &HashSet<String>) -> std::result::Result<(), Vec<String>> {
    let mut errs = Vec::new();
    for s in Scenario::CRITERIA {
        if !suite.subtasks.contains_key(&s) {
            errs.push(format!("missing subtask {}", s.subtask_name()));
        }
    }
    let mut seen: HashMap<&str, Scenario> = HashMap::new();
    for (s, ex) in &suite.subtasks {
        let c = class_counts(ex);
        if c.retrieve != c.no_retrieve {
            errs.push(format!(
                "{} unbalanced: retrieve={}, no_retrieve={}",
                s.subtask_name(),
                c.retrieve,
                c.no_retrieve
            ));
        }
        if suite.meta.counts.get(s) != Some(&c) {
            errs.push(format!("{} counts disagree with meta", s.subtask_name()));
        }
        for e in ex {
            if let Some(prev) = seen.insert(e.id.as_str(), *s) {
                errs.push(format!("id {:?} appears in {} and {}", e.id, prev.subtask_name(), s.subtask_name()));
            }
            if e.scenario != *s {
                errs.push(format!("{:?} tagged {} inside {}", e.id, e.scenario, s.subtask_name()));
            }
            if e.label == Label::Unlabeled || recipe_label(e.scenario, &e.provenance) != e.label {
                errs.push(format!("{:?} label does not follow its recipe", e.id));
            }
            if let Some(id) = e.provenance.source_ids.iter().find(|id| exclude_ids.contains(*id)) {
                errs.push(format!("{:?} draws training item {id:?}", e.id));
            }
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

fn io_err(path: &Path, e: impl fmt::Display) -> ForgeError {
    ForgeError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    }
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| io_err(path, format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn to_jsonl<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).expect("row serializes");
        out.push(b'\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    std::fs::write(path, to_jsonl(rows)).map_err(|e| io_err(path, e))
}

pub fn read_qa_items(path: &Path) -> Result<Vec<QaItem>> {
    let items: Vec<QaItem> = read_jsonl(path)?;
    validate_items(&items)?;
    Ok(items)
}

pub fn read_intents(path: &Path) -> Result<Vec<IntentPhrase>> {
    read_jsonl(path)
}

impl BenchSuite {
    /// Writes `<subtask>.jsonl` for each subtask plus `meta.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for (s, ex) in &self.subtasks {
            write_jsonl(&dir.join(format!("{}.jsonl", s.subtask_name())), ex)?;
        }
        let mut meta = serde_json::to_vec_pretty(&self.meta).expect("meta serializes");
        meta.push(b'\n');
        let p = dir.join("meta.json");
        std::fs::write(&p, meta).map_err(|e| io_err(&p, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let p = dir.join("meta.json");
        let meta: BenchMeta =
            serde_json::from_slice(&std::fs::read(&p).map_err(|e| io_err(&p, e))?).map_err(|e| io_err(&p, e))?;
        let mut subtasks = BTreeMap::new();
        for s in Scenario::CRITERIA {
            subtasks.insert(s, read_jsonl(&dir.join(format!("{}.jsonl", s.subtask_name())))?);
        }
        Ok(BenchSuite { subtasks, meta })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(prefix: &str, n: usize, source: QaSource) -> Vec<QaItem> {
        (0..n)
            .map(|i| QaItem::new(format!("{prefix}{i}"), format!("question {prefix}{i}?"), &["ans"], source.clone()))
            .collect()
    }

    fn intents(n: usize) -> Vec<IntentPhrase> {
        (0..n)
            .map(|i| IntentPhrase {
                id: format!("i{i}"),
                text: format!("Please search the web ({i})."),
            })
            .collect()
    }

    #[test]
    fn self_aware_counts() {
        let s = forge_self_aware(&pool("k", 100, QaSource::TriviaQa), &pool("u", 100, QaSource::TriviaQa), 1, 0.1, "m").unwrap();
        assert_eq!((s.train.len(), s.valid.len()), (180, 20));
        let retrieve_valid = s.valid.iter().filter(|e| e.label == Label::Retrieve).count();
        assert_eq!(retrieve_valid, 10);
        for e in s.train.iter().chain(&s.valid) {
            let from_unknown = e.provenance.source_ids[0].starts_with('u');
            assert_eq!(e.label == Label::Retrieve, from_unknown);
            assert_eq!(e.provenance.model_tag.as_deref(), Some("m"));
        }
        assert!(matches!(
            forge_self_aware(&pool("k", 3, QaSource::TriviaQa), &[], 1, 0.1, "m"),
            Err(ForgeError::DegenerateLabels(_))
        ));
    }

    #[test]
    fn time_aware_downsamples() {
        let s = forge_time_aware(&pool("t", 300, QaSource::Taqa), &pool("s", 10_000, QaSource::TriviaQa), 5).unwrap();
        let all: Vec<_> = s.train.iter().chain(&s.valid).collect();
        assert_eq!(all.iter().filter(|e| e.label == Label::Retrieve).count(), 300);
        assert_eq!(all.iter().filter(|e| e.label == Label::NoRetrieve).count(), 300);
        let again = forge_time_aware(&pool("t", 300, QaSource::Taqa), &pool("s", 10_000, QaSource::TriviaQa), 5).unwrap();
        assert_eq!(s, again);
        let one = forge_time_aware(&pool("t", 1, QaSource::Taqa), &pool("s", 1, QaSource::TriviaQa), 5).unwrap();
        assert_eq!(one.train.len() + one.valid.len(), 2);
        assert!(matches!(forge_time_aware(&[], &pool("s", 1, QaSource::TriviaQa), 0), Err(ForgeError::EmptyPool(_))));
    }

    #[test]
    fn knowledge_aware_counts() {
        let s = forge_knowledge_aware(&pool("n", 50, QaSource::SelfRagNonRet), &pool("k", 50, QaSource::Taqa), (10, 10), 3).unwrap();
        let count = |v: &[ForgedExample], l| v.iter().filter(|e| e.label == l).count();
        assert_eq!((count(&s.train, Label::NoRetrieve), count(&s.train, Label::Retrieve)), (40, 40));
        assert_eq!((count(&s.valid, Label::NoRetrieve), count(&s.valid, Label::Retrieve)), (10, 10));
        assert!(matches!(
            forge_knowledge_aware(&pool("n", 5, QaSource::SelfRagNonRet), &pool("k", 50, QaSource::Taqa), (6, 1), 3),
            Err(ForgeError::PoolTooSmall { needed: 6, available: 5, .. })
        ));
    }

    #[test]
    fn intent_layout_parity() {
        let layout = intent_layout(10, 4);
        let positions: Vec<IntentPosition> = layout.iter().map(|(_, p)| *p).collect();
        use IntentPosition::*;
        assert_eq!(positions, vec![Before, After, Before, After, Before, None, None, None, None, None]);
        let mut bases: Vec<usize> = layout.iter().map(|(b, _)| *b).collect();
        bases.sort_unstable();
        assert_eq!(bases, (0..10).collect::<Vec<_>>());
        assert!(intent_layout(1, 0).iter().all(|(_, p)| *p == None));
    }

    #[test]
    fn intent_forge_counts_and_texts() {
        let base = pool("b", 10, QaSource::SelfRagNonRet);
        let out = forge_intent_aware(&base, &intents(3), 8, &IntentForgeConfig::default()).unwrap();
        let all: Vec<&ForgedExample> = out.train.iter().chain(&out.valid).chain(&out.test).collect();
        assert_eq!(all.len(), 10);
        assert_eq!(all.iter().filter(|e| e.label == Label::Retrieve).count(), 5);
        let before = all.iter().filter(|e| e.provenance.intent_position == IntentPosition::Before).count();
        let after = all.iter().filter(|e| e.provenance.intent_position == IntentPosition::After).count();
        assert_eq!((before, after), (3, 2));
        for e in &all {
            let src = &base.iter().find(|b| b.id == e.provenance.source_ids[0]).unwrap().question;
            match e.provenance.intent_position {
                IntentPosition::None => {
                    assert_eq!(e.label, Label::NoRetrieve);
                    assert!(e.provenance.intent_id.is_none());
                    assert_eq!(&e.text, src);
                }
                IntentPosition::Before => assert!(e.text.ends_with(src.as_str()) && e.text.starts_with("Please")),
                IntentPosition::After => assert!(e.text.starts_with(src.as_str()) && e.text.ends_with(").")),
            }
        }
        assert!(matches!(forge_intent_aware(&base, &[], 0, &IntentForgeConfig::default()), Err(ForgeError::EmptyIntentList)));
        let one = forge_intent_aware(&base[..1], &intents(2), 0, &IntentForgeConfig::default()).unwrap();
        assert_eq!(one.train.len() + one.valid.len() + one.test.len(), 1);
        assert!(one.train.iter().chain(&one.valid).chain(&one.test).all(|e| e.label == Label::NoRetrieve));
    }

    #[test]
    fn intent_splits_use_disjoint_intents() {
        let base = pool("b", 600, QaSource::SelfRagNonRet);
        let out = forge_intent_aware(&base, &intents(60), 2, &IntentForgeConfig::default()).unwrap();
        let ids = |v: &[ForgedExample]| -> HashSet<String> { v.iter().filter_map(|e| e.provenance.intent_id.clone()).collect() };
        let (tr, va, te) = (ids(&out.train), ids(&out.valid), ids(&out.test));
        assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
        assert!(!te.is_empty() && !va.is_empty());
    }

    fn bench_pools(n: usize) -> BenchPools {
        BenchPools {
            known: pool("kn", 3 * n, QaSource::TriviaQa),
            unknown: pool("un", 2 * n, QaSource::TriviaQa),
            time_sensitive: pool("ts", 2 * n, QaSource::Taqa),
            non_ki: pool("nk", 2 * n, QaSource::SelfRagNonRet),
            intents: intents(7),
        }
    }

    #[test]
    fn bench_desk_scale() {
        let suite = build_ar_bench(&bench_pools(20), BenchCounts::uniform(20), 11, &HashSet::new(), "m7").unwrap();
        for (s, ex) in &suite.subtasks {
            assert_eq!(ex.len(), 40, "{s}");
        }
        assert!(validate_suite(&suite, &HashSet::new()).is_ok());
        let k = &suite.subtasks[&Scenario::Knowledge];
        assert_eq!(k.iter().filter(|e| e.provenance.pool == PoolKind::TimeSensitive).count(), 10);
        assert_eq!(k.iter().filter(|e| e.provenance.pool == PoolKind::Unknown).count(), 10);
    }

    #[test]
    fn bench_errors() {
        let p = bench_pools(20);
        assert!(matches!(
            build_ar_bench(&p, BenchCounts::uniform(40), 1, &HashSet::new(), "m"),
            Err(ForgeError::PoolTooSmall { .. })
        ));
        // The known pool is exhausted exactly, so every known id is drawn.
        let exclude: HashSet<String> = ["kn0".to_string()].into();
        assert!(matches!(
            build_ar_bench(&p, BenchCounts::uniform(20), 1, &exclude, "m"),
            Err(ForgeError::OverlapWithTraining(ids)) if ids == vec!["kn0".to_string()]
        ));
    }

    #[test]
    fn validate_suite_reports_imbalance() {
        let mut suite = build_ar_bench(&bench_pools(4), BenchCounts::uniform(4), 0, &HashSet::new(), "m").unwrap();
        suite.subtasks.get_mut(&Scenario::Time).unwrap().pop();
        let errs = validate_suite(&suite, &HashSet::new()).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("unbalanced")));
    }
}
