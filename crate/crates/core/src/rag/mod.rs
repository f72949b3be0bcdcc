//! Gate → retrieve → generate.
//!
//! A [`RagExchange`] records one pass through the pipeline: the gate's
//! decision, the passages fetched (only when the gate said retrieve), the
//! exact prompt sent to the generator and the generation itself.

pub mod clients;
pub mod prompt;
pub mod scoring;

use serde::{Deserialize, Serialize};

pub use clients::{
    ClientError, CountingRetriever, Extraction, ExtractorClient, FixtureRetriever, GenerationClient, HttpExtractor, HttpGenerator, HttpJudge, HttpRetriever,
    JudgeClient, JudgeVerdict, MockJudge, RetrieverClient, Sampling, ScriptedGenerator, Serialized,
};
pub use prompt::{assemble_prompt, judge_prompt, PromptTemplate, DEFAULT_TOP_USE};
pub use scoring::{exact_match, extract_final_answer, lexical_match, lexical_match_with, normalize, ExtractMode, MatchMode};

use crate::gate::{GateDecision, GateError, GateInput, Policy};

/// Number of passages requested from the retriever by default.
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    /// 1-based position in the retriever's ranking.
    pub rank: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl Passage {
    pub fn new(rank: usize, text: impl Into<String>) -> Self {
        Passage {
            rank,
            text: text.into(),
            source_id: None,
            score: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictMethod {
    Lexical,
    ExactAfterExtraction,
    ExternalJudge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerVerdict {
    pub correct: bool,
    pub method: VerdictMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RagExchange {
    pub id: String,
    pub question: String,
    pub decision: GateDecision,
    /// Passages returned by the retriever; empty whenever the gate declined.
    pub passages: Vec<Passage>,
    pub prompt: String,
    pub generation: String,
    #[serde(default)]
    pub verdict: Option<AnswerVerdict>,
    /// Set when the gate asked for retrieval but the retriever returned nothing.
    #[serde(default)]
    pub empty_retrieval: bool,
}

impl RagExchange {
    pub fn retrieved(&self) -> bool {
        self.decision.retrieves()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("exchange serializes")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RagError {
    #[error("exchange {exchange_id}: retriever failed: {source}")]
    RetrieverFailure {
        exchange_id: String,
        #[source]
        source: ClientError,
    },
    #[error("exchange {exchange_id}: generator failed: {source}")]
    GeneratorFailure {
        exchange_id: String,
        #[source]
        source: ClientError,
    },
    #[error("exchange {exchange_id}: gate failed: {source}")]
    Gate {
        exchange_id: String,
        #[source]
        source: GateError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeOptions {
    pub top_k: usize,
    pub top_use: usize,
    pub sampling: Sampling,
}

impl Default for ExchangeOptions {
    fn default() -> Self {
        ExchangeOptions {
            top_k: DEFAULT_TOP_K,
            top_use: DEFAULT_TOP_USE,
            sampling: Sampling::Greedy,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExchangeRequest<'a> {
    pub id: &'a str,
    pub question: &'a str,
    pub template: &'a PromptTemplate,
    pub input: GateInput<'a>,
}

/// Runs one question through gate, (optional) retrieval and generation.
///
/// The retriever is called exactly once when the gate decides to retrieve
/// and never otherwise.
pub fn run_exchange<R, G>(
    req: &ExchangeRequest<'_>,
    policy: &Policy<'_>,
    retriever: &R,
    generator: &G,
    opts: &ExchangeOptions,
) -> Result<RagExchange, RagError>
where
    R: RetrieverClient + ?Sized,
    G: GenerationClient + ?Sized,
{
    let decision = policy.decide(req.input).map_err(|source| RagError::Gate {
        exchange_id: req.id.to_string(),
        source,
    })?;
    let passages = if decision.retrieves() {
        retriever
            .retrieve(req.question, opts.top_k)
            .map_err(|source| RagError::RetrieverFailure {
                exchange_id: req.id.to_string(),
                source,
            })?
    } else {
        Vec::new()
    };
    let empty_retrieval = decision.retrieves() && passages.is_empty();
    let prompt = assemble_prompt(req.question, &passages, req.template, opts.top_use);
    let generation = generator
        .generate(&prompt, opts.sampling)
        .map_err(|source| RagError::GeneratorFailure {
            exchange_id: req.id.to_string(),
            source,
        })?;
    Ok(RagExchange {
        id: req.id.to_string(),
        question: req.question.to_string(),
        decision,
        passages,
        prompt,
        generation,
        verdict: None,
        empty_retrieval,
    })
}

/// Runs many exchanges with up to `parallelism` in flight. Output order
/// follows input order.
pub fn run_exchanges<R, G>(
    reqs: &[ExchangeRequest<'_>],
    policy: &Policy<'_>,
    retriever: &R,
    generator: &G,
    opts: &ExchangeOptions,
    parallelism: usize,
) -> Vec<Result<RagExchange, RagError>>
where
    R: RetrieverClient + Sync + ?Sized,
    G: GenerationClient + Sync + ?Sized,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        reqs.par_iter()
            .map(|r| run_exchange(r, policy, retriever, generator, opts))
            .collect()
    })
}
