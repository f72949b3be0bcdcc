//! Single-layer value heads: a 2×d affine map over a last-token hidden state.
//!
//! Class index 1 always means "retrieve" (for the self criterion that is the
//! "unknown" class, for knowledge it is "knowledge-intensive", and so on).
//! The convention is stored in every serialized head as `label_semantics`.

use serde::{Deserialize, Serialize};

use crate::feature_store::{FeatureDataset, FeatureRecord};
use crate::sampling;
use crate::scenario::{Label, Scenario, Verdict};

pub const FORMAT_VERSION: u32 = 1;
pub const LABEL_SEMANTICS: &str = "class1=retrieve";

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("record {0:?} has no label")]
    UnlabeledRecord(String),
    #[error("dimension mismatch: expected {expected}, found {found}{}", id.as_ref().map(|i| format!(" (record {i:?})")).unwrap_or_default())]
    DimensionMismatch {
        expected: usize,
        found: usize,
        id: Option<String>,
    },
    #[error("training set needs both labels (retrieve={retrieve}, no_retrieve={no_retrieve})")]
    DegenerateLabels { retrieve: usize, no_retrieve: usize },
    #[error("non-finite input value at index {0}")]
    NonFiniteValue(usize),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("classifier format_version {0} is not supported (expected {FORMAT_VERSION})")]
    SchemaVersionUnsupported(u64),
    #[error("corrupt classifier payload: {0}")]
    CorruptPayload(String),
}

pub type Result<T, E = ClassifierError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Optimizer {
    pub const fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Adam { .. } => "adam",
            Optimizer::Sgd => "sgd",
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::adam()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            batch_size: 32,
            epochs: 10,
            seed: 0,
            optimizer: Optimizer::adam(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(ClassifierError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(ClassifierError::InvalidConfig("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_trained: usize,
    pub best_epoch: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub validation_accuracy: f64,
    #[serde(default)]
    pub optimizer: String,
    #[serde(default)]
    pub epoch_trace: Vec<EpochStats>,
}

impl TrainingMeta {
    /// Metadata for a head that was built by hand rather than trained.
    pub fn untrained() -> Self {
        TrainingMeta {
            epochs_trained: 0,
            best_epoch: 0,
            learning_rate: 0.0,
            batch_size: 0,
            seed: 0,
            validation_accuracy: 0.0,
            optimizer: String::new(),
            epoch_trace: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub scenario: Scenario,
    pub dim: usize,
    /// Row 0 scores "no retrieve", row 1 scores "retrieve".
    pub weights: [Vec<f64>; 2],
    pub bias: [f64; 2],
    pub training_meta: TrainingMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub verdict: Verdict,
    pub logits: [f64; 2],
    pub prob_retrieve: f64,
}

impl Prediction {
    /// Re-derives the verdict against a probability threshold instead of argmax.
    pub fn verdict_at(&self, threshold: Option<f64>) -> Verdict {
        match threshold {
            None => self.verdict,
            Some(t) => Verdict::from_bool(self.prob_retrieve > t),
        }
    }
}

/// Numerically stable two-class softmax; returns `(p0, p1)`.
pub fn softmax2(logits: [f64; 2]) -> (f64, f64) {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    (e0 / z, e1 / z)
}

impl LinearClassifier {
    pub fn from_parts(scenario: Scenario, weights: [Vec<f64>; 2], bias: [f64; 2]) -> Result<Self> {
        let dim = weights[0].len();
        let clf = LinearClassifier {
            scenario,
            dim,
            weights,
            bias,
            training_meta: TrainingMeta::untrained(),
        };
        clf.validate()?;
        Ok(clf)
    }

    pub fn zeros(scenario: Scenario, dim: usize) -> Self {
        LinearClassifier {
            scenario,
            dim,
            weights: [vec![0.0; dim], vec![0.0; dim]],
            bias: [0.0; 2],
            training_meta: TrainingMeta::untrained(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(ClassifierError::CorruptPayload("dim must be positive".into()));
        }
        for row in &self.weights {
            if row.len() != self.dim {
                return Err(ClassifierError::CorruptPayload(format!(
                    "weight row has {} columns, dim is {}",
                    row.len(),
                    self.dim
                )));
            }
        }
        let all = self.weights.iter().flatten().chain(self.bias.iter());
        if all.into_iter().any(|w| !w.is_finite()) {
            return Err(ClassifierError::CorruptPayload("non-finite weight or bias".into()));
        }
        let acc = self.training_meta.validation_accuracy;
        if !(0.0..=1.0).contains(&acc) {
            return Err(ClassifierError::CorruptPayload(format!(
                "validation_accuracy {acc} outside [0, 1]"
            )));
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f32]) -> Result<[f64; 2]> {
        if x.len() != self.dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
                id: None,
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFiniteValue(i));
        }
        Ok(self.logits_unchecked(x.iter().map(|&v| f64::from(v))))
    }

    fn logits_unchecked(&self, x: impl Iterator<Item = f64> + Clone) -> [f64; 2] {
        let dot = |row: &[f64]| row.iter().zip(x.clone()).map(|(w, v)| w * v).sum::<f64>();
        [dot(&self.weights[0]) + self.bias[0], dot(&self.weights[1]) + self.bias[1]]
    }

    /// Exact ties go to `NoRetrieve`.
    pub fn predict(&self, x: &[f32]) -> Result<Prediction> {
        let logits = self.logits(x)?;
        Ok(prediction_from_logits(logits))
    }

    /// Multiplies every weight and bias by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for w in out.weights.iter_mut().flatten() {
            *w *= c;
        }
        for b in &mut out.bias {
            *b *= c;
        }
        out
    }

    /// Fraction of labeled records whose verdict matches the label.
    pub fn accuracy(&self, ds: &FeatureDataset) -> Result<f64> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for r in &ds.records {
            let target = r
                .label
                .verdict()
                .ok_or_else(|| ClassifierError::UnlabeledRecord(r.id.clone()))?;
            if self.predict(&r.vector)?.verdict == target {
                correct += 1;
            }
            total += 1;
        }
        if total == 0 {
            return Err(ClassifierError::EmptyValidation);
        }
        Ok(correct as f64 / total as f64)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let doc = ClassifierDoc {
            format_version: FORMAT_VERSION,
            scenario: self.scenario,
            dim: self.dim,
            weights: vec![self.weights[0].clone(), self.weights[1].clone()],
            bias: self.bias.to_vec(),
            label_semantics: LABEL_SEMANTICS.to_string(),
            training_meta: self.training_meta.clone(),
        };
        let mut out = serde_json::to_vec_pretty(&doc).expect("classifier serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| ClassifierError::CorruptPayload(e.to_string()))?;
        let version = value
            .get("format_version")
            .ok_or_else(|| ClassifierError::CorruptPayload("missing field `format_version`".into()))?
            .as_u64()
            .ok_or_else(|| ClassifierError::CorruptPayload("format_version is not an integer".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(ClassifierError::SchemaVersionUnsupported(version));
        }
        let doc: ClassifierDoc =
            serde_json::from_value(value).map_err(|e| ClassifierError::CorruptPayload(e.to_string()))?;
        if doc.label_semantics != LABEL_SEMANTICS {
            return Err(ClassifierError::CorruptPayload(format!(
                "label_semantics {:?} (expected {LABEL_SEMANTICS:?})",
                doc.label_semantics
            )));
        }
        if doc.weights.len() != 2 {
            return Err(ClassifierError::CorruptPayload(format!(
                "weights must have exactly 2 rows, found {}",
                doc.weights.len()
            )));
        }
        if doc.bias.len() != 2 {
            return Err(ClassifierError::CorruptPayload(format!(
                "bias must have exactly 2 entries, found {}",
                doc.bias.len()
            )));
        }
        let mut rows = doc.weights.into_iter();
        let clf = LinearClassifier {
            scenario: doc.scenario,
            dim: doc.dim,
            weights: [rows.next().unwrap(), rows.next().unwrap()],
            bias: [doc.bias[0], doc.bias[1]],
            training_meta: doc.training_meta,
        };
        clf.validate()?;
        Ok(clf)
    }
}

pub fn prediction_from_logits(logits: [f64; 2]) -> Prediction {
    let (_, p1) = softmax2(logits);
    Prediction {
        verdict: Verdict::from_bool(logits[1] > logits[0]),
        logits,
        prob_retrieve: p1,
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifierDoc {
    format_version: u32,
    scenario: Scenario,
    dim: usize,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    label_semantics: String,
    training_meta: TrainingMeta,
}

/// Gradient of the mean cross-entropy loss with respect to the head's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: [Vec<f64>; 2],
    pub bias: [f64; 2],
}

/// Mean softmax cross-entropy over a batch and its analytic gradient.
///
/// `xs[i]` is an input vector and `ys[i]` its class index (0 or 1).
pub fn loss_and_gradient<X: AsRef<[f64]>>(
    weights: &[Vec<f64>; 2],
    bias: &[f64; 2],
    xs: &[X],
    ys: &[usize],
) -> (f64, Gradient) {
    assert_eq!(xs.len(), ys.len(), "batch inputs and targets differ in length");
    assert!(!xs.is_empty(), "empty batch");
    let dim = weights[0].len();
    let mut grad = Gradient {
        weights: [vec![0.0; dim], vec![0.0; dim]],
        bias: [0.0; 2],
    };
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let x = x.as_ref();
        let z = [
            dot(&weights[0], x) + bias[0],
            dot(&weights[1], x) + bias[1],
        ];
        let m = z[0].max(z[1]);
        let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
        loss += lse - z[y];
        let (p0, p1) = softmax2(z);
        let dz = [p0 - f64::from(y == 0), p1 - f64::from(y == 1)];
        for ((gw, gb), d) in grad.weights.iter_mut().zip(&mut grad.bias).zip(dz) {
            *gb += d;
            for (g, v) in gw.iter_mut().zip(x) {
                *g += d * v;
            }
        }
    }
    let n = xs.len() as f64;
    for c in 0..2 {
        grad.bias[c] /= n;
        for g in &mut grad.weights[c] {
            *g /= n;
        }
    }
    (loss / n, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Flattened parameter view: row 0, row 1, bias 0, bias 1.
fn flatten(weights: &[Vec<f64>; 2], bias: &[f64; 2]) -> Vec<f64> {
    let mut p = Vec::with_capacity(weights[0].len() * 2 + 2);
    p.extend_from_slice(&weights[0]);
    p.extend_from_slice(&weights[1]);
    p.extend_from_slice(bias);
    p
}

fn unflatten(p: &[f64], weights: &mut [Vec<f64>; 2], bias: &mut [f64; 2]) {
    let d = weights[0].len();
    weights[0].copy_from_slice(&p[..d]);
    weights[1].copy_from_slice(&p[d..2 * d]);
    bias.copy_from_slice(&p[2 * d..]);
}

fn labeled_rows(ds: &FeatureDataset, dim: usize) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut xs = Vec::with_capacity(ds.len());
    let mut ys = Vec::with_capacity(ds.len());
    for r in &ds.records {
        ys.push(target_of(r)?);
        if r.vector.len() != dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: dim,
                found: r.vector.len(),
                id: Some(r.id.clone()),
            });
        }
        xs.push(r.vector.iter().map(|&v| f64::from(v)).collect());
    }
    Ok((xs, ys))
}

fn target_of(r: &FeatureRecord) -> Result<usize> {
    match r.label {
        Label::Unlabeled => Err(ClassifierError::UnlabeledRecord(r.id.clone())),
        l => Ok(l.verdict().expect("labeled").class_index()),
    }
}

/// Trains a head with minibatch gradient descent and returns the epoch
/// checkpoint with the highest validation accuracy (earliest on ties).
///
/// Parameters start at zero. Each epoch reshuffles the training set with a
/// Fisher–Yates pass seeded by `cfg.seed + epoch` (epochs counted from 1);
/// the final partial batch is kept.
pub fn train(train_ds: &FeatureDataset, valid_ds: &FeatureDataset, cfg: &TrainConfig) -> Result<LinearClassifier> {
    cfg.validate()?;
    let dim = train_ds.dim;
    if valid_ds.dim != dim {
        return Err(ClassifierError::DimensionMismatch {
            expected: dim,
            found: valid_ds.dim,
            id: None,
        });
    }
    let (xs, ys) = labeled_rows(train_ds, dim)?;
    let (vxs, vys) = labeled_rows(valid_ds, dim)?;
    let retrieve = ys.iter().filter(|&&y| y == 1).count();
    if retrieve == 0 || retrieve == ys.len() {
        return Err(ClassifierError::DegenerateLabels {
            retrieve,
            no_retrieve: ys.len() - retrieve,
        });
    }
    if vxs.is_empty() {
        return Err(ClassifierError::EmptyValidation);
    }

    let scenario = train_ds
        .records
        .first()
        .map(|r| r.scenario)
        .unwrap_or(Scenario::Unspecified);
    let mut clf = LinearClassifier::zeros(scenario, dim);
    let mut adam = AdamState {
        m: vec![0.0; 2 * dim + 2],
        v: vec![0.0; 2 * dim + 2],
        t: 0,
    };

    let mut best: Option<(LinearClassifier, usize, f64)> = None;
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut bx: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut by: Vec<usize> = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        sampling::fisher_yates(&mut order, &mut sampling::rng(cfg.seed.wrapping_add(epoch as u64)));

        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.push(&xs[i]);
                by.push(ys[i]);
            }
            let (loss, grad) = loss_and_gradient(&clf.weights, &clf.bias, &bx, &by);
            loss_sum += loss * chunk.len() as f64;
            step(&mut clf, &grad, cfg, &mut adam);
        }
        let train_loss = loss_sum / xs.len() as f64;

        let correct = vxs
            .iter()
            .zip(&vys)
            .filter(|(x, &y)| {
                let z = clf.logits_unchecked(x.iter().copied());
                usize::from(z[1] > z[0]) == y
            })
            .count();
        let acc = correct as f64 / vxs.len() as f64;
        trace.push(EpochStats {
            epoch,
            train_loss,
            validation_accuracy: acc,
        });
        if best.as_ref().is_none_or(|(_, _, b)| acc > *b) {
            best = Some((clf.clone(), epoch, acc));
        }
    }

    let (mut out, best_epoch, acc) = best.expect("at least one epoch");
    out.training_meta = TrainingMeta {
        epochs_trained: cfg.epochs,
        best_epoch,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        validation_accuracy: acc,
        optimizer: cfg.optimizer.name().to_string(),
        epoch_trace: trace,
    };
    Ok(out)
}

fn step(clf: &mut LinearClassifier, grad: &Gradient, cfg: &TrainConfig, adam: &mut AdamState) {
    let mut p = flatten(&clf.weights, &clf.bias);
    let g = flatten(&grad.weights, &grad.bias);
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (pi, gi) in p.iter_mut().zip(&g) {
                *pi -= cfg.learning_rate * gi;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            adam.t += 1;
            let bc1 = 1.0 - beta1.powi(adam.t);
            let bc2 = 1.0 - beta2.powi(adam.t);
            for i in 0..p.len() {
                adam.m[i] = beta1 * adam.m[i] + (1.0 - beta1) * g[i];
                adam.v[i] = beta2 * adam.v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = adam.m[i] / bc1;
                let v_hat = adam.v[i] / bc2;
                p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    unflatten(&p, &mut clf.weights, &mut clf.bias);
}
