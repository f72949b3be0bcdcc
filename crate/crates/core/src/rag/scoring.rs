//! Answer normalization, lexical containment and final-answer extraction.

use serde::{Deserialize, Serialize};

/// Lowercases, splits on whitespace, strips non-alphanumeric characters
/// from both ends of every token, drops emptied tokens and joins with a
/// single space.
pub fn normalize(text: &str) -> String {
    let lowered = text.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    for tok in lowered.split_whitespace() {
        let t = tok.trim_matches(|c: char| !c.is_alphanumeric());
        if t.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Plain substring containment after normalization ("Parisian" contains "paris").
    #[default]
    Substring,
    /// Gold must cover whole normalized tokens.
    TokenBoundary,
}

/// True iff some gold answer is contained in the generation after both are
/// normalized. Gold answers that normalize to nothing never match.
pub fn lexical_match(generation: &str, gold_answers: &[String]) -> bool {
    lexical_match_with(generation, gold_answers, MatchMode::Substring)
}

pub fn lexical_match_with(generation: &str, gold_answers: &[String], mode: MatchMode) -> bool {
    let g = normalize(generation);
    let padded = format!(" {g} ");
    gold_answers.iter().any(|gold| {
        let a = normalize(gold);
        if a.is_empty() {
            return false;
        }
        match mode {
            MatchMode::Substring => g.contains(&a),
            MatchMode::TokenBoundary => padded.contains(&format!(" {a} ")),
        }
    })
}

pub const DEFAULT_ANSWER_MARKER: &str = "The answer is";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtractMode {
    Verbatim,
    AfterMarker { marker: String },
}

impl Default for ExtractMode {
    fn default() -> Self {
        ExtractMode::AfterMarker {
            marker: DEFAULT_ANSWER_MARKER.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("answer marker {0:?} not found in generation")]
pub struct MarkerNotFound(pub String);

/// Text after the last occurrence of the marker, trimmed.
pub fn extract_final_answer(generation: &str, mode: &ExtractMode) -> Result<String, MarkerNotFound> {
    match mode {
        ExtractMode::Verbatim => Ok(generation.to_string()),
        ExtractMode::AfterMarker { marker } => generation
            .rfind(marker.as_str())
            .map(|i| generation[i + marker.len()..].trim().to_string())
            .ok_or_else(|| MarkerNotFound(marker.clone())),
    }
}

/// Exact match of normalized strings against any gold answer.
pub fn exact_match(answer: &str, gold_answers: &[String]) -> bool {
    let a = normalize(answer);
    gold_answers.iter().any(|g| normalize(g) == a)
}
