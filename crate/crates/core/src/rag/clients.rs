//! Retriever, generator and judge client contracts with HTTP, fixture and
//! mock implementations.
//!
//! Wire formats (all POST, JSON):
//!
//! | client    | request                                   | response                                   |
//! |-----------|-------------------------------------------|--------------------------------------------|
//! | retriever | `{"query":str,"top_k":int}`               | `{"passages":[{"rank","text","score"}]}`   |
//! | generator | `{"prompt":str,"temperature":f,"seed":n}` | `{"text":str}`                             |
//! | judge     | `{"prompt":str}`                          | `{"verdict":"Yes"\|"No"}`                  |
//! | extractor | `{"text":str}`                            | `{"vector":[f],"dim":int,"model_tag":str}` |

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompt::judge_prompt;
use super::Passage;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request to {endpoint} failed: {detail}")]
    Transport { endpoint: String, detail: String },
    #[error("{endpoint} answered with status {status}")]
    Status { endpoint: String, status: u16 },
    #[error("cannot decode response from {endpoint}: {detail}")]
    Decode { endpoint: String, detail: String },
    #[error("no scripted response for {0:?}")]
    NoScript(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("fixture {path}: {detail}")]
    Fixture { path: String, detail: String },
}

pub type ClientResult<T> = Result<T, ClientError>;

pub trait RetrieverClient {
    /// Up to `top_k` passages, best first.
    fn retrieve(&self, query: &str, top_k: usize) -> ClientResult<Vec<Passage>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Sampling {
    Greedy,
    Sampled { seed: u64, temperature: f64 },
}

pub trait GenerationClient {
    fn generate(&self, prompt: &str, sampling: Sampling) -> ClientResult<String>;

    /// Identifies the underlying model; stamped into model-specific artifacts.
    fn model_tag(&self) -> String {
        "unknown".to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JudgeVerdict {
    Yes,
    No,
}

pub trait JudgeClient {
    fn judge(&self, question: &str, prediction: &str, gold: &[String]) -> ClientResult<JudgeVerdict>;
}

impl<T: RetrieverClient + ?Sized> RetrieverClient for &T {
    fn retrieve(&self, query: &str, top_k: usize) -> ClientResult<Vec<Passage>> {
        (**self).retrieve(query, top_k)
    }
}

impl<T: GenerationClient + ?Sized> GenerationClient for &T {
    fn generate(&self, prompt: &str, sampling: Sampling) -> ClientResult<String> {
        (**self).generate(prompt, sampling)
    }

    fn model_tag(&self) -> String {
        (**self).model_tag()
    }
}

impl<T: JudgeClient + ?Sized> JudgeClient for &T {
    fn judge(&self, question: &str, prediction: &str, gold: &[String]) -> ClientResult<JudgeVerdict> {
        (**self).judge(question, prediction, gold)
    }
}

/// Makes a client that is not `Sync` usable from many threads by holding a
/// lock around every call.
pub struct Serialized<C>(Mutex<C>);

impl<C> Serialized<C> {
    pub fn new(inner: C) -> Self {
        Serialized(Mutex::new(inner))
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, C> {
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl<C: RetrieverClient> RetrieverClient for Serialized<C> {
    fn retrieve(&self, query: &str, top_k: usize) -> ClientResult<Vec<Passage>> {
        self.lock().retrieve(query, top_k)
    }
}

impl<C: GenerationClient> GenerationClient for Serialized<C> {
    fn generate(&self, prompt: &str, sampling: Sampling) -> ClientResult<String> {
        self.lock().generate(prompt, sampling)
    }

    fn model_tag(&self) -> String {
        self.lock().model_tag()
    }
}

impl<C: JudgeClient> JudgeClient for Serialized<C> {
    fn judge(&self, question: &str, prediction: &str, gold: &[String]) -> ClientResult<JudgeVerdict> {
        self.lock().judge(question, prediction, gold)
    }
}

/// Counts calls to the wrapped retriever.
pub struct CountingRetriever<R> {
    inner: R,
    calls: AtomicUsize,
}

impl<R> CountingRetriever<R> {
    pub fn new(inner: R) -> Self {
        CountingRetriever {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<R: RetrieverClient> RetrieverClient for CountingRetriever<R> {
    fn retrieve(&self, query: &str, top_k: usize) -> ClientResult<Vec<Passage>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.retrieve(query, top_k)
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> ClientResult<Vec<T>> {
    let fixture = |detail: String| ClientError::Fixture {
        path: path.display().to_string(),
        detail,
    };
    let text = std::fs::read_to_string(path).map_err(|e| fixture(e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| fixture(format!("line {}: {e}", i + 1))))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CannedRetrieval {
    pub query: String,
    pub passages: Vec<Passage>,
}

/// Deterministic retriever over canned results keyed by a hash of the query.
///
/// Queries without canned results get `synthesize` generated passages
/// derived from the query hash (zero by default, i.e. an empty result).
#[derive(Debug, Clone, Default)]
pub struct FixtureRetriever {
    canned: HashMap<u64, Vec<Passage>>,
    synthesize: usize,
}

impl FixtureRetriever {
    pub fn new(entries: impl IntoIterator<Item = CannedRetrieval>) -> Self {
        let canned = entries
            .into_iter()
            .map(|mut e| {
                e.passages.sort_by_key(|p| p.rank);
                (fnv1a(&e.query), e.passages)
            })
            .collect();
        FixtureRetriever { canned, synthesize: 0 }
    }

    pub fn from_jsonl(path: &Path) -> ClientResult<Self> {
        Ok(FixtureRetriever::new(read_jsonl::<CannedRetrieval>(path)?))
    }

    pub fn synthesizing(mut self, n: usize) -> Self {
        self.synthesize = n;
        self
    }
}

impl RetrieverClient for FixtureRetriever {
    fn retrieve(&self, query: &str, top_k: usize) -> ClientResult<Vec<Passage>> {
        let h = fnv1a(query);
        let mut out = match self.canned.get(&h) {
            Some(ps) => ps.clone(),
            None => (1..=self.synthesize)
                .map(|r| Passage {
                    rank: r,
                    text: format!("Reference passage {r} for query {h:016x}."),
                    source_id: Some(format!("synthetic-{h:016x}-{r}")),
                    score: Some(1.0 / r as f64),
                })
                .collect(),
        };
        out.truncate(top_k);
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub prompt: String,
    pub responses: Vec<String>,
}

/// Generator returning canned outputs keyed by exact prompt. Repeated calls
/// with the same prompt walk through its response list, wrapping around.
#[derive(Debug, Default)]
pub struct ScriptedGenerator {
    scripts: HashMap<String, Vec<String>>,
    cursors: Mutex<HashMap<String, usize>>,
    fallback: Option<String>,
    model_tag: String,
}

impl ScriptedGenerator {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        ScriptedGenerator {
            scripts: entries.into_iter().map(|e| (e.prompt, e.responses)).collect(),
            cursors: Mutex::new(HashMap::new()),
            fallback: None,
            model_tag: "scripted".to_string(),
        }
    }

    pub fn from_jsonl(path: &Path) -> ClientResult<Self> {
        Ok(ScriptedGenerator::new(read_jsonl::<ScriptEntry>(path)?))
    }

    pub fn with_fallback(mut self, text: impl Into<String>) -> Self {
        self.fallback = Some(text.into());
        self
    }

    pub fn with_model_tag(mut self, tag: impl Into<String>) -> Self {
        self.model_tag = tag.into();
        self
    }

    pub fn insert(&mut self, prompt: impl Into<String>, responses: Vec<String>) {
        self.scripts.insert(prompt.into(), responses);
    }
}

impl GenerationClient for ScriptedGenerator {
    fn generate(&self, prompt: &str, _sampling: Sampling) -> ClientResult<String> {
        match self.scripts.get(prompt).filter(|r| !r.is_empty()) {
            Some(responses) => {
                let mut cursors = self.cursors.lock().unwrap_or_else(|e| e.into_inner());
                let c = cursors.entry(prompt.to_string()).or_insert(0);
                let out = responses[*c % responses.len()].clone();
                *c += 1;
                Ok(out)
            }
            None => self
                .fallback
                .clone()
                .ok_or_else(|| ClientError::NoScript(prompt.chars().take(80).collect())),
        }
    }

    fn model_tag(&self) -> String {
        self.model_tag.clone()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeEntry {
    pub question: String,
    pub prediction: String,
    pub verdict: JudgeVerdict,
}

/// Lookup-table judge; unknown pairs are judged `No`.
#[derive(Debug, Clone, Default)]
pub struct MockJudge {
    table: HashMap<(String, String), JudgeVerdict>,
}

impl MockJudge {
    pub fn new(entries: impl IntoIterator<Item = JudgeEntry>) -> Self {
        MockJudge {
            table: entries
                .into_iter()
                .map(|e| ((e.question, e.prediction), e.verdict))
                .collect(),
        }
    }

    pub fn from_jsonl(path: &Path) -> ClientResult<Self> {
        Ok(MockJudge::new(read_jsonl::<JudgeEntry>(path)?))
    }
}

impl JudgeClient for MockJudge {
    fn judge(&self, question: &str, prediction: &str, _gold: &[String]) -> ClientResult<JudgeVerdict> {
        Ok(self
            .table
            .get(&(question.to_string(), prediction.to_string()))
            .copied()
            .unwrap_or(JudgeVerdict::No))
    }
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn post_json<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    agent: &ureq::Agent,
    endpoint: &str,
    body: &Req,
) -> ClientResult<Resp> {
    let mut resp = agent.post(endpoint).send_json(body).map_err(|e| match e {
        ureq::Error::StatusCode(status) => ClientError::Status {
            endpoint: endpoint.to_string(),
            status,
        },
        other => ClientError::Transport {
            endpoint: endpoint.to_string(),
            detail: other.to_string(),
        },
    })?;
    resp.body_mut().read_json::<Resp>().map_err(|e| ClientError::Decode {
        endpoint: endpoint.to_string(),
        detail: e.to_string(),
    })
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone)]
pub struct HttpRetriever {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpRetriever {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpRetriever {
            endpoint: endpoint.into(),
            agent: agent(DEFAULT_TIMEOUT),
        }
    }
}

#[derive(Serialize)]
struct RetrieveRequest<'a> {
    query: &'a str,
    top_k: usize,
}

#[derive(Deserialize)]
struct RetrieveResponse {
    passages: Vec<Passage>,
}

impl RetrieverClient for HttpRetriever {
    fn retrieve(&self, query: &str, top_k: usize) -> ClientResult<Vec<Passage>> {
        let resp: RetrieveResponse = post_json(&self.agent, &self.endpoint, &RetrieveRequest { query, top_k })?;
        let mut passages = resp.passages;
        if let Some(p) = passages.iter().find(|p| p.rank == 0 || p.text.is_empty()) {
            return Err(ClientError::InvalidResponse(format!(
                "passage with rank {} has empty text or zero rank",
                p.rank
            )));
        }
        passages.sort_by_key(|p| p.rank);
        passages.truncate(top_k);
        Ok(passages)
    }
}

#[derive(Debug, Clone)]
pub struct HttpGenerator {
    endpoint: String,
    model_tag: String,
    agent: ureq::Agent,
}

impl HttpGenerator {
    pub fn new(endpoint: impl Into<String>, model_tag: impl Into<String>) -> Self {
        HttpGenerator {
            endpoint: endpoint.into(),
            model_tag: model_tag.into(),
            agent: agent(DEFAULT_TIMEOUT),
        }
    }
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    temperature: f64,
    seed: u64,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

impl GenerationClient for HttpGenerator {
    fn generate(&self, prompt: &str, sampling: Sampling) -> ClientResult<String> {
        let (temperature, seed) = match sampling {
            Sampling::Greedy => (0.0, 0),
            Sampling::Sampled { seed, temperature } => (temperature, seed),
        };
        let resp: GenerateResponse = post_json(
            &self.agent,
            &self.endpoint,
            &GenerateRequest {
                prompt,
                temperature,
                seed,
            },
        )?;
        Ok(resp.text)
    }

    fn model_tag(&self) -> String {
        self.model_tag.clone()
    }
}

#[derive(Debug, Clone)]
pub struct HttpJudge {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpJudge {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpJudge {
            endpoint: endpoint.into(),
            agent: agent(DEFAULT_TIMEOUT),
        }
    }
}

#[derive(Serialize)]
struct JudgeRequest {
    prompt: String,
}

#[derive(Deserialize)]
struct JudgeResponse {
    verdict: String,
}

impl JudgeClient for HttpJudge {
    fn judge(&self, question: &str, prediction: &str, gold: &[String]) -> ClientResult<JudgeVerdict> {
        let resp: JudgeResponse = post_json(
            &self.agent,
            &self.endpoint,
            &JudgeRequest {
                prompt: judge_prompt(question, prediction, gold),
            },
        )?;
        match resp.verdict.trim() {
            v if v.eq_ignore_ascii_case("yes") => Ok(JudgeVerdict::Yes),
            v if v.eq_ignore_ascii_case("no") => Ok(JudgeVerdict::No),
            other => Err(ClientError::InvalidResponse(format!("judge verdict {other:?}"))),
        }
    }
}

/// Hidden-state vector for one input text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub vector: Vec<f32>,
    pub dim: usize,
    #[serde(default)]
    pub model_tag: Option<String>,
}

pub trait ExtractorClient {
    fn extract(&self, text: &str) -> ClientResult<Extraction>;
}

/// Client for an extractor service at `base_url`; requests go to
/// `{base_url}/v1/extract`.
#[derive(Debug, Clone)]
pub struct HttpExtractor {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpExtractor {
    pub fn new(base_url: &str) -> Self {
        HttpExtractor::with_timeout(base_url, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        HttpExtractor {
            endpoint: format!("{}/v1/extract", base_url.trim_end_matches('/')),
            agent: agent(timeout),
        }
    }
}

#[derive(Serialize)]
struct ExtractRequest<'a> {
    text: &'a str,
}

impl ExtractorClient for HttpExtractor {
    fn extract(&self, text: &str) -> ClientResult<Extraction> {
        let e: Extraction = post_json(&self.agent, &self.endpoint, &ExtractRequest { text })?;
        if e.vector.len() != e.dim {
            return Err(ClientError::InvalidResponse(format!(
                "extractor sent {} values but declared dim {}",
                e.vector.len(),
                e.dim
            )));
        }
        Ok(e)
    }
}
