//! Labeled hidden-state vectors and their two on-disk encodings.
//!
//! JSONL files hold one header line followed by one record per line:
//!
//! ```text
//! {"format":"uar-features","version":1,"dim":4,"provenance":"..."}
//! {"id":"q1","scenario":"self","label":"retrieve","text":"...","vector":[0.1,0.2,0.3,0.4]}
//! ```
//!
//! The header line is optional on read; without it the dimension is taken
//! from the first record. Binary files start with the magic `UARF` and are
//! little-endian throughout:
//!
//! ```text
//! magic "UARF" | u32 version=1 | u32 dim | u64 count
//! per record: u32 id_len | id bytes | u8 scenario | u8 label | dim x f32
//! ```
//!
//! Text is carried by JSONL only; binary files hold no provenance string.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::sampling;
use crate::scenario::{Label, Scenario};

pub const BINARY_MAGIC: &[u8; 4] = b"UARF";
pub const BINARY_VERSION: u32 = 1;
pub const JSONL_FORMAT_TAG: &str = "uar-features";

/// Default held-out fraction for validation splits.
pub const DEFAULT_VALID_FRACTION: f64 = 0.10;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header at byte {offset}: {detail}")]
    MalformedHeader { offset: u64, detail: String },
    #[error("malformed record at {location}: {detail}")]
    MalformedRecord { location: String, detail: String },
    #[error("record {id:?}: vector has {found} values, dataset dim is {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("record {id:?}: non-finite value at index {index}")]
    NonFiniteValue { id: String, index: usize },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("empty record id at {0}")]
    EmptyId(String),
    #[error("dataset dim must be positive")]
    ZeroDim,
    #[error("need at least {min} records to split, got {found}")]
    TooFewRecords { min: usize, found: usize },
    #[error("labels are degenerate: {0}")]
    DegenerateLabels(String),
    #[error("fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
}

pub type Result<T, E = FeatureError> = std::result::Result<T, E>;

/// A single instruction's last-token hidden state plus its label metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub id: String,
    #[serde(default, with = "scenario_opt")]
    pub scenario: Scenario,
    #[serde(default)]
    pub label: Label,
    #[serde(default)]
    pub text: Option<String>,
    pub vector: Vec<f32>,
}

impl FeatureRecord {
    pub fn new(id: impl Into<String>, scenario: Scenario, label: Label, vector: Vec<f32>) -> Self {
        FeatureRecord {
            id: id.into(),
            scenario,
            label,
            text: None,
            vector,
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }
}

/// `Unspecified` maps to JSON `null`.
mod scenario_opt {
    use super::Scenario;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(s: &Scenario, ser: S) -> Result<S::Ok, S::Error> {
        match s {
            Scenario::Unspecified => ser.serialize_none(),
            other => other.serialize(ser),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Scenario, D::Error> {
        Ok(Option::<Scenario>::deserialize(d)?.unwrap_or(Scenario::Unspecified))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub dim: usize,
    pub records: Vec<FeatureRecord>,
    pub provenance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelCounts {
    pub retrieve: usize,
    pub no_retrieve: usize,
    pub unlabeled: usize,
}

impl LabelCounts {
    pub fn has_both(&self) -> bool {
        self.retrieve > 0 && self.no_retrieve > 0
    }
}

impl FeatureDataset {
    /// Builds a dataset and checks every record invariant.
    pub fn new(dim: usize, records: Vec<FeatureRecord>, provenance: impl Into<String>) -> Result<Self> {
        let ds = FeatureDataset {
            dim,
            records,
            provenance: provenance.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(FeatureError::ZeroDim);
        }
        let mut seen = HashSet::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            validate_record(r, self.dim, &format!("record {i}"))?;
            if !seen.insert(r.id.as_str()) {
                return Err(FeatureError::DuplicateId(r.id.clone()));
            }
        }
        Ok(())
    }

    pub fn label_counts(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for r in &self.records {
            match r.label {
                Label::Retrieve => c.retrieve += 1,
                Label::NoRetrieve => c.no_retrieve += 1,
                Label::Unlabeled => c.unlabeled += 1,
            }
        }
        c
    }

    fn subset(&self, idx: &[usize]) -> FeatureDataset {
        FeatureDataset {
            dim: self.dim,
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }
}

fn validate_record(r: &FeatureRecord, dim: usize, location: &str) -> Result<()> {
    if r.id.is_empty() {
        return Err(FeatureError::EmptyId(location.to_string()));
    }
    if r.vector.len() != dim {
        return Err(FeatureError::DimensionMismatch {
            id: r.id.clone(),
            expected: dim,
            found: r.vector.len(),
        });
    }
    if let Some(index) = r.vector.iter().position(|v| !v.is_finite()) {
        return Err(FeatureError::NonFiniteValue {
            id: r.id.clone(),
            index,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetFormat {
    Jsonl,
    Binary,
}

impl DatasetFormat {
    /// Sniffs the format from leading bytes.
    pub fn detect(bytes: &[u8]) -> Self {
        if bytes.starts_with(BINARY_MAGIC) {
            DatasetFormat::Binary
        } else {
            DatasetFormat::Jsonl
        }
    }

    /// Guesses from a file extension (`.bin`/`.uarf` are binary).
    pub fn from_extension(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("uarf") => DatasetFormat::Binary,
            _ => DatasetFormat::Jsonl,
        }
    }
}

impl std::str::FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(DatasetFormat::Jsonl),
            "binary" | "bin" => Ok(DatasetFormat::Binary),
            other => Err(format!("unknown dataset format {other:?}")),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonlHeader {
    format: String,
    version: u32,
    dim: usize,
    #[serde(default)]
    provenance: String,
}

/// Reads a dataset; `format = None` auto-detects by magic bytes.
pub fn read_dataset(path: &Path, format: Option<DatasetFormat>) -> Result<FeatureDataset> {
    let bytes = fs::read(path).map_err(|source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes, format.unwrap_or_else(|| DatasetFormat::detect(&bytes)))
}

pub fn write_dataset(ds: &FeatureDataset, path: &Path, format: DatasetFormat) -> Result<()> {
    let bytes = encode(ds, format)?;
    let io = |source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    f.flush().map_err(io)
}

pub fn encode(ds: &FeatureDataset, format: DatasetFormat) -> Result<Vec<u8>> {
    ds.validate()?;
    Ok(match format {
        DatasetFormat::Jsonl => encode_jsonl(ds),
        DatasetFormat::Binary => encode_binary(ds),
    })
}

pub fn decode(bytes: &[u8], format: DatasetFormat) -> Result<FeatureDataset> {
    let ds = match format {
        DatasetFormat::Jsonl => decode_jsonl(bytes)?,
        DatasetFormat::Binary => decode_binary(bytes)?,
    };
    ds.validate()?;
    Ok(ds)
}

fn encode_jsonl(ds: &FeatureDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + ds.records.len() * (ds.dim * 12 + 48));
    let header = JsonlHeader {
        format: JSONL_FORMAT_TAG.to_string(),
        version: BINARY_VERSION,
        dim: ds.dim,
        provenance: ds.provenance.clone(),
    };
    serde_json::to_writer(&mut out, &header).expect("header serializes");
    out.push(b'\n');
    for r in &ds.records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.push(b'\n');
    }
    out
}

fn decode_jsonl(bytes: &[u8]) -> Result<FeatureDataset> {
    let mut dim = None;
    let mut provenance = String::new();
    let mut records = Vec::new();
    let mut seen = HashSet::new();

    for (lineno, line) in BufReader::new(bytes).lines().enumerate() {
        let location = format!("line {}", lineno + 1);
        let line = line.map_err(|e| FeatureError::MalformedRecord {
            location: location.clone(),
            detail: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(trimmed).map_err(|e| FeatureError::MalformedRecord {
                location: location.clone(),
                detail: e.to_string(),
            })?;
        if value.get("format").is_some() {
            if dim.is_some() || !records.is_empty() {
                return Err(FeatureError::MalformedHeader {
                    offset: lineno as u64,
                    detail: "header line must come first".into(),
                });
            }
            let h: JsonlHeader =
                serde_json::from_value(value).map_err(|e| FeatureError::MalformedHeader {
                    offset: 0,
                    detail: e.to_string(),
                })?;
            if h.format != JSONL_FORMAT_TAG {
                return Err(FeatureError::MalformedHeader {
                    offset: 0,
                    detail: format!("unexpected format tag {:?}", h.format),
                });
            }
            if h.version != BINARY_VERSION {
                return Err(FeatureError::MalformedHeader {
                    offset: 0,
                    detail: format!("unsupported version {}", h.version),
                });
            }
            if h.dim == 0 {
                return Err(FeatureError::MalformedHeader {
                    offset: 0,
                    detail: "dim must be positive".into(),
                });
            }
            dim = Some(h.dim);
            provenance = h.provenance;
            continue;
        }
        let rec: FeatureRecord =
            serde_json::from_value(value).map_err(|e| FeatureError::MalformedRecord {
                location: location.clone(),
                detail: e.to_string(),
            })?;
        let d = *dim.get_or_insert(rec.vector.len());
        validate_record(&rec, d, &location)?;
        if !seen.insert(rec.id.clone()) {
            return Err(FeatureError::DuplicateId(rec.id));
        }
        records.push(rec);
    }

    let dim = dim.ok_or_else(|| FeatureError::MalformedHeader {
        offset: 0,
        detail: "no header line and no records; dimension unknown".into(),
    })?;
    Ok(FeatureDataset {
        dim,
        records,
        provenance,
    })
}

fn encode_binary(ds: &FeatureDataset) -> Vec<u8> {
    let per_record: usize = 4 + 2 + ds.dim * 4;
    let mut out = Vec::with_capacity(20 + ds.records.len() * (per_record + 16));
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.dim as u32).to_le_bytes());
    out.extend_from_slice(&(ds.records.len() as u64).to_le_bytes());
    for r in &ds.records {
        out.extend_from_slice(&(r.id.len() as u32).to_le_bytes());
        out.extend_from_slice(r.id.as_bytes());
        out.push(r.scenario.to_byte());
        out.push(r.label.to_byte());
        for v in &r.vector {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

fn decode_binary(bytes: &[u8]) -> Result<FeatureDataset> {
    let mut c = Cursor { bytes, pos: 0 };
    let header = |offset: usize, detail: &str| FeatureError::MalformedHeader {
        offset: offset as u64,
        detail: detail.to_string(),
    };
    if c.take(4) != Some(BINARY_MAGIC.as_slice()) {
        return Err(header(0, "missing UARF magic"));
    }
    let version = c.u32().ok_or_else(|| header(4, "truncated version"))?;
    if version != BINARY_VERSION {
        return Err(header(4, &format!("unsupported version {version}")));
    }
    let dim = c.u32().ok_or_else(|| header(8, "truncated dim"))? as usize;
    if dim == 0 {
        return Err(header(8, "dim must be positive"));
    }
    let count = c.u64().ok_or_else(|| header(12, "truncated count"))?;

    // Cap the preallocation so a corrupt count cannot request absurd memory.
    let mut records = Vec::with_capacity((count as usize).min(1 << 16));
    let mut seen = HashSet::new();
    for n in 0..count {
        let start = c.pos;
        let truncated = |what: &str| FeatureError::MalformedRecord {
            location: format!("byte {start} (record {n})"),
            detail: format!("truncated {what}"),
        };
        let id_len = c.u32().ok_or_else(|| truncated("id length"))? as usize;
        let id_bytes = c.take(id_len).ok_or_else(|| truncated("id"))?;
        let id = std::str::from_utf8(id_bytes)
            .map_err(|e| FeatureError::MalformedRecord {
                location: format!("byte {start} (record {n})"),
                detail: format!("id is not UTF-8: {e}"),
            })?
            .to_string();
        let sb = c.u8().ok_or_else(|| truncated("scenario"))?;
        let scenario = Scenario::from_byte(sb).ok_or_else(|| FeatureError::MalformedRecord {
            location: format!("record {id:?}"),
            detail: format!("unknown scenario byte {sb}"),
        })?;
        let lb = c.u8().ok_or_else(|| truncated("label"))?;
        let label = Label::from_byte(lb).ok_or_else(|| FeatureError::MalformedRecord {
            location: format!("record {id:?}"),
            detail: format!("unknown label byte {lb}"),
        })?;
        let remaining = bytes.len() - c.pos;
        // Without per-record lengths, a short vector shows up as the file
        // ending mid-record; the final record's float count is recoverable.
        if remaining < dim * 4 && (n + 1 == count) && remaining.is_multiple_of(4) {
            return Err(FeatureError::DimensionMismatch {
                id,
                expected: dim,
                found: remaining / 4,
            });
        }
        let raw = c.take(dim * 4).ok_or_else(|| truncated("vector"))?;
        let vector: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let rec = FeatureRecord {
            id,
            scenario,
            label,
            text: None,
            vector,
        };
        validate_record(&rec, dim, &format!("byte {start}"))?;
        if !seen.insert(rec.id.clone()) {
            return Err(FeatureError::DuplicateId(rec.id));
        }
        records.push(rec);
    }
    if c.pos != bytes.len() {
        return Err(FeatureError::MalformedRecord {
            location: format!("byte {}", c.pos),
            detail: format!("{} trailing bytes after {count} records", bytes.len() - c.pos),
        });
    }
    Ok(FeatureDataset {
        dim,
        records,
        provenance: String::new(),
    })
}

/// Index partition `(train, held_out)` stratified by the supplied group keys.
///
/// Each group is shuffled with one seeded stream and `held_out_count` of its
/// members go to the held-out side. Both returned index lists are ascending,
/// so callers preserve the input order inside each side.
pub fn stratified_partition<K: Ord + Copy>(keys: &[K], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut groups: std::collections::BTreeMap<K, Vec<usize>> = Default::default();
    for (i, k) in keys.iter().enumerate() {
        groups.entry(*k).or_default().push(i);
    }
    let mut rng = sampling::rng(seed);
    let mut train = Vec::with_capacity(keys.len());
    let mut held = Vec::new();
    for (_, mut members) in groups {
        sampling::fisher_yates(&mut members, &mut rng);
        let h = sampling::held_out_count(members.len(), fraction);
        held.extend_from_slice(&members[..h]);
        train.extend_from_slice(&members[h..]);
    }
    train.sort_unstable();
    held.sort_unstable();
    (train, held)
}

/// Minimum dataset size accepted by [`split_dataset`].
pub const MIN_SPLIT_RECORDS: usize = 10;

/// Label-stratified train/validation split.
pub fn split_dataset(ds: &FeatureDataset, valid_fraction: f64, seed: u64) -> Result<(FeatureDataset, FeatureDataset)> {
    if !(valid_fraction > 0.0 && valid_fraction < 1.0) {
        return Err(FeatureError::InvalidFraction(valid_fraction));
    }
    if ds.len() < MIN_SPLIT_RECORDS {
        return Err(FeatureError::TooFewRecords {
            min: MIN_SPLIT_RECORDS,
            found: ds.len(),
        });
    }
    let counts = ds.label_counts();
    if counts.retrieve + counts.no_retrieve > 0 && !counts.has_both() {
        return Err(FeatureError::DegenerateLabels(format!(
            "stratified split needs both labels (retrieve={}, no_retrieve={})",
            counts.retrieve, counts.no_retrieve
        )));
    }
    let keys: Vec<Label> = ds.records.iter().map(|r| r.label).collect();
    let (train, valid) = stratified_partition(&keys, valid_fraction, seed);
    Ok((ds.subset(&train), ds.subset(&valid)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, label: Label, v: Vec<f32>) -> FeatureRecord {
        FeatureRecord::new(id, Scenario::SelfKnowledge, label, v)
    }

    fn labeled(n_ret: usize, n_no: usize) -> FeatureDataset {
        let mut records = Vec::new();
        for i in 0..n_ret {
            records.push(rec(&format!("r{i}"), Label::Retrieve, vec![i as f32]));
        }
        for i in 0..n_no {
            records.push(rec(&format!("n{i}"), Label::NoRetrieve, vec![-(i as f32)]));
        }
        FeatureDataset::new(1, records, "test").unwrap()
    }

    #[test]
    fn one_zero_record_jsonl() {
        let text = br#"{"id":"a","scenario":null,"label":null,"text":null,"vector":[0,0,0,0]}"#;
        let ds = decode(text, DatasetFormat::Jsonl).unwrap();
        assert_eq!(ds.dim, 4);
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.records[0].vector, vec![0.0; 4]);
        assert_eq!(ds.records[0].scenario, Scenario::Unspecified);
        assert_eq!(ds.records[0].label, Label::Unlabeled);
    }

    #[test]
    fn binary_short_vector_is_dimension_mismatch() {
        let mut b = Vec::new();
        b.extend_from_slice(b"UARF");
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&3u32.to_le_bytes());
        b.extend_from_slice(&1u64.to_le_bytes());
        b.extend_from_slice(&1u32.to_le_bytes());
        b.push(b'x');
        b.push(3);
        b.push(1);
        b.extend_from_slice(&1.0f32.to_le_bytes());
        b.extend_from_slice(&2.0f32.to_le_bytes());
        match decode(&b, DatasetFormat::Binary) {
            Err(FeatureError::DimensionMismatch { id, expected, found }) => {
                assert_eq!((id.as_str(), expected, found), ("x", 3, 2));
            }
            other => panic!("expected DimensionMismatch, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_errors_name_the_record() {
        let text = b"{\"id\":\"a\",\"vector\":[1,2]}\n{\"id\":\"b\",\"vector\":[1]}\n";
        assert!(matches!(
            decode(text, DatasetFormat::Jsonl),
            Err(FeatureError::DimensionMismatch { id, .. }) if id == "b"
        ));
        let dup = b"{\"id\":\"a\",\"vector\":[1]}\n{\"id\":\"a\",\"vector\":[2]}\n";
        assert!(matches!(decode(dup, DatasetFormat::Jsonl), Err(FeatureError::DuplicateId(id)) if id == "a"));
        let empty_id = b"{\"id\":\"\",\"vector\":[1]}\n";
        assert!(matches!(decode(empty_id, DatasetFormat::Jsonl), Err(FeatureError::EmptyId(_))));
        assert!(matches!(decode(b"", DatasetFormat::Jsonl), Err(FeatureError::MalformedHeader { .. })));
    }

    #[test]
    fn non_finite_rejected_in_binary() {
        let ds = FeatureDataset {
            dim: 2,
            records: vec![rec("a", Label::Retrieve, vec![1.0, 2.0])],
            provenance: String::new(),
        };
        let mut bytes = encode_binary(&ds);
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode(&bytes, DatasetFormat::Binary),
            Err(FeatureError::NonFiniteValue { index: 1, .. })
        ));
        assert!(matches!(encode(&FeatureDataset { dim: 2, records: vec![rec("a", Label::Retrieve, vec![f32::INFINITY, 0.0])], provenance: String::new() }, DatasetFormat::Jsonl), Err(FeatureError::NonFiniteValue { index: 0, .. })));
    }

    #[test]
    fn bad_magic_and_version() {
        assert!(matches!(decode(b"UARX", DatasetFormat::Binary), Err(FeatureError::MalformedHeader { offset: 0, .. })));
        let mut b = b"UARF".to_vec();
        b.extend_from_slice(&2u32.to_le_bytes());
        assert!(matches!(decode(&b, DatasetFormat::Binary), Err(FeatureError::MalformedHeader { offset: 4, .. })));
    }

    #[test]
    fn empty_binary_dataset() {
        let ds = FeatureDataset::new(5, vec![], "").unwrap();
        let bytes = encode(&ds, DatasetFormat::Binary).unwrap();
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[12..20], &0u64.to_le_bytes());
        let back = decode(&bytes, DatasetFormat::Binary).unwrap();
        assert_eq!(back.dim, 5);
        assert!(back.is_empty());
    }

    #[test]
    fn detection_by_magic() {
        let ds = labeled(1, 1);
        assert_eq!(DatasetFormat::detect(&encode(&ds, DatasetFormat::Binary).unwrap()), DatasetFormat::Binary);
        assert_eq!(DatasetFormat::detect(&encode(&ds, DatasetFormat::Jsonl).unwrap()), DatasetFormat::Jsonl);
    }

    #[test]
    fn split_100_records() {
        let ds = labeled(30, 70);
        let (t, v) = split_dataset(&ds, 0.10, 7).unwrap();
        assert_eq!((t.len(), v.len()), (90, 10));
        let (t2, v2) = split_dataset(&ds, 0.10, 7).unwrap();
        assert_eq!(t, t2);
        assert_eq!(v, v2);
    }

    #[test]
    fn split_stratifies_labels() {
        let ds = labeled(50, 50);
        let (t, v) = split_dataset(&ds, 0.10, 3).unwrap();
        // Oracle: count labels directly.
        let count = |d: &FeatureDataset, l: Label| d.records.iter().filter(|r| r.label == l).count();
        assert_eq!(count(&v, Label::Retrieve), 5);
        assert_eq!(count(&v, Label::NoRetrieve), 5);
        assert_eq!(count(&t, Label::Retrieve), 45);
        assert_eq!(count(&t, Label::NoRetrieve), 45);
    }

    #[test]
    fn split_errors() {
        assert!(matches!(split_dataset(&labeled(3, 2), 0.1, 0), Err(FeatureError::TooFewRecords { found: 5, .. })));
        assert!(matches!(split_dataset(&labeled(12, 0), 0.1, 0), Err(FeatureError::DegenerateLabels(_))));
        assert!(matches!(split_dataset(&labeled(6, 6), 1.0, 0), Err(FeatureError::InvalidFraction(_))));
    }
}
