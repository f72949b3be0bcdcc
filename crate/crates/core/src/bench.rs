//! Policy evaluation on the four retrieval-timing subtasks and scoring of
//! downstream QA runs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::feature_store::{read_dataset, FeatureDataset, FeatureError};
use crate::gate::{GateBundle, GateError, GateInput, Policy, TreeConfig};
use crate::rag::clients::{JudgeClient, JudgeVerdict};
use crate::rag::scoring::{exact_match, extract_final_answer, lexical_match, ExtractMode};
use crate::rag::{RagExchange, VerdictMethod};
use crate::scenario::{Label, Scenario, Verdict};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("subtask {scenario} is unbalanced: retrieve={retrieve}, no_retrieve={no_retrieve}")]
    UnbalancedSubtask {
        scenario: Scenario,
        retrieve: usize,
        no_retrieve: usize,
    },
    #[error("record {0:?} has no label")]
    UnlabeledRecord(String),
    #[error("no subtasks to evaluate")]
    EmptySuite,
    #[error("exchange {id:?} cannot be scored: {detail}")]
    MissingVerdictInputs { id: String, detail: String },
    #[error("record {id:?}: {source}")]
    Gate {
        id: String,
        #[source]
        source: GateError,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("i/o on {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("report {path} is malformed: {detail}")]
    MalformedReport { path: String, detail: String },
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

/// Binary confusion counts with retrieve as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn record(&mut self, label: Verdict, predicted: Verdict) {
        match (label, predicted) {
            (Verdict::Retrieve, Verdict::Retrieve) => self.tp += 1,
            (Verdict::NoRetrieve, Verdict::Retrieve) => self.fp += 1,
            (Verdict::NoRetrieve, Verdict::NoRetrieve) => self.tn += 1,
            (Verdict::Retrieve, Verdict::NoRetrieve) => self.fn_ += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Verdict, Verdict)>) -> Self {
        let mut c = Confusion::default();
        for (l, p) in pairs {
            c.record(l, p);
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / n as f64
        }
    }

    fn merge(mut self, o: Confusion) -> Confusion {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
        self
    }
}

/// Micro-averaged F1 over both classes, computed from per-class
/// true-positive, false-positive and false-negative tallies.
pub fn micro_f1(labels: &[Verdict], predictions: &[Verdict]) -> f64 {
    assert_eq!(labels.len(), predictions.len(), "label/prediction length mismatch");
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for class in [Verdict::NoRetrieve, Verdict::Retrieve] {
        for (&l, &p) in labels.iter().zip(predictions) {
            match (l == class, p == class) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubtaskResult {
    pub accuracy: f64,
    pub confusion: Confusion,
}

impl From<Confusion> for SubtaskResult {
    fn from(confusion: Confusion) -> Self {
        SubtaskResult {
            accuracy: confusion.accuracy(),
            confusion,
        }
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub report_version: u32,
    pub policy: String,
    pub model_tag: String,
    pub per_subtask: BTreeMap<Scenario, SubtaskResult>,
    /// Unweighted mean of the subtask accuracies.
    pub overall: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl BenchReport {
    pub fn from_confusions(
        policy: impl Into<String>,
        model_tag: impl Into<String>,
        confusions: impl IntoIterator<Item = (Scenario, Confusion)>,
    ) -> Self {
        let per_subtask: BTreeMap<Scenario, SubtaskResult> =
            confusions.into_iter().map(|(s, c)| (s, SubtaskResult::from(c))).collect();
        BenchReport {
            report_version: REPORT_VERSION,
            policy: policy.into(),
            model_tag: model_tag.into(),
            overall: mean(per_subtask.values().map(|r| r.accuracy)),
            per_subtask,
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnbalancedMode {
    #[default]
    Fail,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalOptions {
    pub unbalanced: UnbalancedMode,
    pub model_tag: String,
}

/// Loads `<subtask>.features.jsonl` or `<subtask>.features.bin` for each of
/// the four subtasks in `dir`.
pub fn load_suite_features(dir: &Path) -> Result<BTreeMap<Scenario, FeatureDataset>> {
    let mut out = BTreeMap::new();
    for s in Scenario::CRITERIA {
        let candidates = ["jsonl", "bin"].map(|ext| dir.join(format!("{}.features.{ext}", s.subtask_name())));
        let path = candidates.iter().find(|p| p.exists()).ok_or_else(|| BenchError::Io {
            path: candidates[0].display().to_string(),
            detail: "no feature file for subtask".into(),
        })?;
        out.insert(s, read_dataset(path, None)?);
    }
    Ok(out)
}

fn check_subtask(s: Scenario, ds: &FeatureDataset, mode: UnbalancedMode, warnings: &mut Vec<String>) -> Result<()> {
    if let Some(r) = ds.records.iter().find(|r| r.label == Label::Unlabeled) {
        return Err(BenchError::UnlabeledRecord(r.id.clone()));
    }
    let c = ds.label_counts();
    if c.retrieve != c.no_retrieve {
        match mode {
            UnbalancedMode::Fail => {
                return Err(BenchError::UnbalancedSubtask {
                    scenario: s,
                    retrieve: c.retrieve,
                    no_retrieve: c.no_retrieve,
                })
            }
            UnbalancedMode::Warn => warnings.push(format!(
                "{} unbalanced (retrieve={}, no_retrieve={})",
                s.subtask_name(),
                c.retrieve,
                c.no_retrieve
            )),
        }
    }
    Ok(())
}

fn confusion_for(policy: &Policy<'_>, ds: &FeatureDataset) -> Result<Confusion> {
    use rayon::prelude::*;
    ds.records
        .par_iter()
        .map(|r| {
            let label = r.label.verdict().ok_or_else(|| BenchError::UnlabeledRecord(r.id.clone()))?;
            let d = policy
                .decide(GateInput::Vector(&r.vector))
                .map_err(|source| BenchError::Gate { id: r.id.clone(), source })?;
            Ok(Confusion::from_pairs([(label, d.final_verdict)]))
        })
        .try_reduce(Confusion::default, |a, b| Ok(a.merge(b)))
}

/// Scores `policy` on every subtask present in `suite`.
pub fn eval_ar_bench(
    policy: &Policy<'_>,
    suite: &BTreeMap<Scenario, FeatureDataset>,
    opts: &EvalOptions,
) -> Result<BenchReport> {
    if suite.is_empty() {
        return Err(BenchError::EmptySuite);
    }
    let mut warnings = Vec::new();
    let mut confusions = Vec::new();
    for (&s, ds) in suite {
        check_subtask(s, ds, opts.unbalanced, &mut warnings)?;
        confusions.push((s, confusion_for(policy, ds)?));
    }
    let mut report = BenchReport::from_confusions(policy.kind().to_string(), opts.model_tag.clone(), confusions);
    report.warnings = warnings;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// The scenario's own classifier alone on its subtask.
    pub single: f64,
    /// The full cascade on the same subtask.
    pub composed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub report_version: u32,
    pub model_tag: String,
    pub rows: BTreeMap<Scenario, ComparisonRow>,
}

/// Standalone classifier accuracy next to cascade accuracy, per subtask.
pub fn eval_single_vs_tree(
    bundle: &GateBundle,
    config: &TreeConfig,
    suite: &BTreeMap<Scenario, FeatureDataset>,
    opts: &EvalOptions,
) -> Result<ComparisonTable> {
    if suite.is_empty() {
        return Err(BenchError::EmptySuite);
    }
    let tree = Policy::UarTree { bundle, config };
    let mut rows = BTreeMap::new();
    let mut ignored = Vec::new();
    for (&s, ds) in suite {
        check_subtask(s, ds, opts.unbalanced, &mut ignored)?;
        let single = Policy::Single(bundle.classifier(s));
        rows.insert(
            s,
            ComparisonRow {
                single: confusion_for(&single, ds)?.accuracy(),
                composed: confusion_for(&tree, ds)?.accuracy(),
            },
        );
    }
    Ok(ComparisonTable {
        report_version: REPORT_VERSION,
        model_tag: opts.model_tag.clone(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Downstream scoring
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamItem {
    pub dataset: String,
    pub exchange: RagExchange,
    pub gold_answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scoring {
    /// Gold answer contained in the normalized generation.
    #[default]
    Lexical,
    /// Exact match on the text after the final-answer marker. A missing
    /// marker scores as incorrect.
    ExtractThenExact { mode: ExtractMode },
    /// Verdict of an external judge model.
    Judge,
}

/// Scoring rule per dataset, with a fallback for unlisted datasets.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoringPlan {
    #[serde(default)]
    pub default: Scoring,
    #[serde(default)]
    pub per_dataset: BTreeMap<String, Scoring>,
}

impl ScoringPlan {
    pub fn uniform(s: Scoring) -> Self {
        ScoringPlan {
            default: s,
            per_dataset: BTreeMap::new(),
        }
    }

    pub fn rule(&self, dataset: &str) -> &Scoring {
        self.per_dataset.get(dataset).unwrap_or(&self.default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetResult {
    pub accuracy: f64,
    pub retrieval_rate: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamReport {
    pub report_version: u32,
    pub per_dataset: BTreeMap<String, DatasetResult>,
    /// Unweighted mean of the dataset accuracies.
    pub overall: f64,
}

fn score_one<J: JudgeClient + ?Sized>(item: &DownstreamItem, rule: &Scoring, judge: Option<&J>) -> Result<(bool, VerdictMethod)> {
    let ex = &item.exchange;
    let missing = |detail: &str| BenchError::MissingVerdictInputs {
        id: ex.id.clone(),
        detail: detail.to_string(),
    };
    if item.gold_answers.is_empty() && !matches!(rule, Scoring::Judge) {
        return Err(missing("no gold answers"));
    }
    Ok(match rule {
        Scoring::Lexical => (lexical_match(&ex.generation, &item.gold_answers), VerdictMethod::Lexical),
        Scoring::ExtractThenExact { mode } => (
            extract_final_answer(&ex.generation, mode)
                .map(|a| exact_match(&a, &item.gold_answers))
                .unwrap_or(false),
            VerdictMethod::ExactAfterExtraction,
        ),
        Scoring::Judge => match (judge, ex.verdict) {
            (Some(j), _) => {
                if item.gold_answers.is_empty() {
                    return Err(missing("no gold answers for the judge"));
                }
                let v = j
                    .judge(&ex.question, &ex.generation, &item.gold_answers)
                    .map_err(|e| missing(&format!("judge failed: {e}")))?;
                (v == JudgeVerdict::Yes, VerdictMethod::ExternalJudge)
            }
            (None, Some(v)) if v.method == VerdictMethod::ExternalJudge => (v.correct, v.method),
            (None, _) => return Err(missing("judge scoring needs a judge client or a recorded judge verdict")),
        },
    })
}

/// Accuracy and retrieval rate per dataset. Items are scored in parallel and
/// aggregated in id order.
pub fn score_downstream<J>(items: &[DownstreamItem], plan: &ScoringPlan, judge: Option<&J>) -> Result<DownstreamReport>
where
    J: JudgeClient + Sync + ?Sized,
{
    use rayon::prelude::*;
    let mut scored: Vec<(&str, &str, bool, bool)> = items
        .par_iter()
        .map(|it| {
            let (correct, _) = score_one(it, plan.rule(&it.dataset), judge)?;
            Ok((it.dataset.as_str(), it.exchange.id.as_str(), correct, it.exchange.retrieved()))
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    let mut tallies: BTreeMap<String, (u64, u64, u64)> = BTreeMap::new();
    for (ds, _, correct, retrieved) in scored {
        let t = tallies.entry(ds.to_string()).or_default();
        t.0 += 1;
        t.1 += correct as u64;
        t.2 += retrieved as u64;
    }
    let per_dataset: BTreeMap<String, DatasetResult> = tallies
        .into_iter()
        .map(|(k, (n, c, r))| {
            (
                k,
                DatasetResult {
                    accuracy: c as f64 / n as f64,
                    retrieval_rate: r as f64 / n as f64,
                    n,
                },
            )
        })
        .collect();
    Ok(DownstreamReport {
        report_version: REPORT_VERSION,
        overall: mean(per_dataset.values().map(|d| d.accuracy)),
        per_dataset,
    })
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

pub trait Report: Serialize + DeserializeOwned {
    fn to_markdown(&self) -> String;

    /// Pretty JSON with keys sorted at every level and a trailing newline.
    fn to_canonical_json(&self) -> String {
        // Without serde_json's preserve_order feature, Value maps are sorted.
        let v = serde_json::to_value(self).expect("report serializes");
        let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
        s.push('\n');
        s
    }

    fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_canonical_json(),
            ReportFormat::Markdown => self.to_markdown(),
        }
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", x * 100.0)
}

impl Report for BenchReport {
    fn to_markdown(&self) -> String {
        let cols: Vec<Scenario> = self.per_subtask.keys().copied().collect();
        let mut s = String::from("| Policy |");
        for c in &cols {
            s.push_str(&format!(" {} |", c.title()));
        }
        s.push_str(" Overall |\n|---|");
        s.push_str(&"---:|".repeat(cols.len() + 1));
        s.push_str(&format!("\n| {} |", self.policy));
        for c in &cols {
            s.push_str(&format!(" {} |", pct(self.per_subtask[c].accuracy)));
        }
        s.push_str(&format!(" {} |\n", pct(self.overall)));
        s
    }
}

impl Report for ComparisonTable {
    fn to_markdown(&self) -> String {
        let mut s = String::from("| Scenario | Single | Composed |\n|---|---:|---:|\n");
        for (sc, r) in &self.rows {
            s.push_str(&format!("| {} | {} | {} |\n", sc.title(), pct(r.single), pct(r.composed)));
        }
        s
    }
}

impl Report for DownstreamReport {
    /// One row per dataset: accuracy with the retrieval rate in parentheses.
    fn to_markdown(&self) -> String {
        let mut s = String::from("| Dataset | Accuracy (retrieval %) | n |\n|---|---:|---:|\n");
        for (name, d) in &self.per_dataset {
            s.push_str(&format!("| {name} | {} ({}) | {} |\n", pct(d.accuracy), pct(d.retrieval_rate), d.n));
        }
        s.push_str(&format!("\nOverall: {}\n", pct(self.overall)));
        s
    }
}

pub fn emit_report<R: Report>(report: &R, path: &Path, format: ReportFormat) -> Result<()> {
    std::fs::write(path, report.render(format)).map_err(|e| BenchError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

pub fn read_report<R: Report>(path: &Path) -> Result<R> {
    let bytes = std::fs::read(path).map_err(|e| BenchError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    serde_json::from_slice(&bytes).map_err(|e| BenchError::MalformedReport {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::LinearClassifier;
    use crate::feature_store::FeatureRecord;
    use crate::gate::{decide_constant, GateDecision};
    use crate::rag::clients::MockJudge;
    use crate::rag::AnswerVerdict;

    fn accuracy_confusion(correct: u64, n: u64) -> Confusion {
        // Split evenly between classes; the split does not affect accuracy.
        let wrong = n - correct;
        Confusion {
            tp: correct / 2,
            tn: correct - correct / 2,
            fp: wrong / 2,
            fn_: wrong - wrong / 2,
        }
    }

    #[test]
    fn overall_is_unweighted_mean() {
        let r = BenchReport::from_confusions(
            "uar_tree",
            "m",
            [
                (Scenario::Intent, accuracy_confusion(9188, 10_000)),
                (Scenario::Knowledge, accuracy_confusion(9038, 10_000)),
                (Scenario::Time, accuracy_confusion(8669, 10_000)),
                (Scenario::SelfKnowledge, accuracy_confusion(7232, 10_000)),
            ],
        );
        assert!((r.overall * 100.0 - 85.3175).abs() < 1e-9);
        let ten = BenchReport::from_confusions("p", "m", [(Scenario::Time, accuracy_confusion(9, 10))]);
        assert_eq!(ten.overall, 0.9);
    }

    #[test]
    fn micro_f1_matches_accuracy_example() {
        use Verdict::*;
        let labels = [Retrieve, Retrieve, NoRetrieve, NoRetrieve];
        let preds = [Retrieve, NoRetrieve, NoRetrieve, Retrieve];
        let c = Confusion::from_pairs(labels.iter().copied().zip(preds.iter().copied()));
        assert_eq!(c.accuracy(), 0.5);
        assert_eq!(micro_f1(&labels, &preds), 0.5);
    }

    fn axis_dataset(flip: usize) -> FeatureDataset {
        let recs = (0..20)
            .map(|i| {
                let retrieve = i % 2 == 0;
                let mut x = if retrieve { 1.0 } else { -1.0 };
                if i < flip {
                    x = -x;
                }
                FeatureRecord::new(format!("r{i}"), Scenario::Time, Label::from(Verdict::from_bool(retrieve)), vec![x])
            })
            .collect();
        FeatureDataset::new(1, recs, "test").unwrap()
    }

    fn sign_head(s: Scenario) -> LinearClassifier {
        LinearClassifier::from_parts(s, [vec![0.0], vec![1.0]], [0.0, 0.0]).unwrap()
    }

    #[test]
    fn perfect_classifier_scores_one() {
        let clf = sign_head(Scenario::Time);
        let suite: BTreeMap<_, _> = [(Scenario::Time, axis_dataset(0))].into();
        let r = eval_ar_bench(&Policy::Single(&clf), &suite, &EvalOptions::default()).unwrap();
        assert_eq!(r.overall, 1.0);
        assert_eq!(r.per_subtask[&Scenario::Time].confusion.total(), 20);
        let r = eval_ar_bench(&Policy::Single(&clf), &[(Scenario::Time, axis_dataset(3))].into(), &EvalOptions::default()).unwrap();
        assert_eq!(r.per_subtask[&Scenario::Time].accuracy, 17.0 / 20.0);
    }

    #[test]
    fn unbalanced_is_configurable() {
        let mut ds = axis_dataset(0);
        ds.records.pop();
        let suite: BTreeMap<_, _> = [(Scenario::Time, ds)].into();
        let clf = sign_head(Scenario::Time);
        assert!(matches!(
            eval_ar_bench(&Policy::Single(&clf), &suite, &EvalOptions::default()),
            Err(BenchError::UnbalancedSubtask { .. })
        ));
        let opts = EvalOptions {
            unbalanced: UnbalancedMode::Warn,
            ..Default::default()
        };
        let r = eval_ar_bench(&Policy::Single(&clf), &suite, &opts).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }

    fn item(id: &str, ds: &str, generation: &str, gold: &[&str], d: GateDecision) -> DownstreamItem {
        DownstreamItem {
            dataset: ds.into(),
            gold_answers: gold.iter().map(|s| s.to_string()).collect(),
            exchange: RagExchange {
                id: id.into(),
                question: format!("question {id}"),
                decision: d,
                passages: vec![],
                prompt: String::new(),
                generation: generation.into(),
                verdict: None,
                empty_retrieval: false,
            },
        }
    }

    #[test]
    fn downstream_retrieval_rate() {
        let items: Vec<_> = (0..10)
            .map(|i| item(&format!("q{i}"), "tqa", "Paris", &["paris"], decide_constant(i < 4)))
            .collect();
        let r = score_downstream::<MockJudge>(&items, &ScoringPlan::default(), None).unwrap();
        let d = r.per_dataset["tqa"];
        assert_eq!((d.n, d.accuracy, d.retrieval_rate), (10, 1.0, 0.4));
    }

    #[test]
    fn downstream_rules() {
        let items = vec![
            item("a", "gsm", "so The answer is 12", &["12"], decide_constant(false)),
            item("b", "gsm", "12 apples", &["12"], decide_constant(false)),
            item("c", "gsm", "The answer is 7", &["12"], decide_constant(true)),
            item("d", "qa", "blue", &["red"], decide_constant(true)),
        ];
        let mut plan = ScoringPlan::default();
        plan.per_dataset.insert("gsm".into(), Scoring::ExtractThenExact { mode: ExtractMode::default() });
        let r = score_downstream::<MockJudge>(&items, &plan, None).unwrap();
        assert!((r.per_dataset["gsm"].accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_dataset["qa"].accuracy, 0.0);
        assert!((r.overall - 1.0 / 6.0).abs() < 1e-15);

        let judge_plan = ScoringPlan::uniform(Scoring::Judge);
        assert!(matches!(
            score_downstream::<MockJudge>(&items, &judge_plan, None),
            Err(BenchError::MissingVerdictInputs { .. })
        ));
        let mut recorded = items.clone();
        for it in &mut recorded {
            it.exchange.verdict = Some(AnswerVerdict {
                correct: true,
                method: VerdictMethod::ExternalJudge,
            });
        }
        assert_eq!(score_downstream::<MockJudge>(&recorded, &judge_plan, None).unwrap().overall, 1.0);
        let empty_gold = vec![item("e", "qa", "x", &[], decide_constant(false))];
        assert!(score_downstream::<MockJudge>(&empty_gold, &ScoringPlan::default(), None).is_err());
    }

    #[test]
    fn canonical_json_is_sorted_and_stable() {
        let r = BenchReport::from_confusions("never", "m", [(Scenario::Intent, accuracy_confusion(5, 10))]);
        let a = r.to_canonical_json();
        assert_eq!(a, r.to_canonical_json());
        assert!(a.ends_with("}\n"));
        let keys: Vec<usize> = ["\"model_tag\"", "\"overall\"", "\"per_subtask\"", "\"policy\"", "\"report_version\""]
            .iter()
            .map(|k| a.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        let back: BenchReport = serde_json::from_str(&a).unwrap();
        assert_eq!(back.to_canonical_json(), a);
    }

    #[test]
    fn markdown_layouts() {
        let r = BenchReport::from_confusions(
            "uar_tree",
            "m",
            Scenario::CRITERIA.map(|s| (s, accuracy_confusion(9188, 10_000))),
        );
        let md = r.to_markdown();
        assert!(md.contains("| uar_tree | 91.88 | 91.88 | 91.88 | 91.88 | 91.88 |"));
        let items: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|d| item(d, d, "x", &["x"], decide_constant(true)))
            .collect();
        let dr = score_downstream::<MockJudge>(&items, &ScoringPlan::default(), None).unwrap();
        let md = dr.to_markdown();
        let table_rows = md.lines().filter(|l| l.starts_with('|') && !l.starts_with("|---")).count();
        assert_eq!(table_rows, 3 + 1);
        assert!(md.contains("| a | 100.00 (100.00) | 1 |"));
    }
}
