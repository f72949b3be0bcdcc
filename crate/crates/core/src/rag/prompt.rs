//! Prompt assembly for generation with and without reference passages.

use serde::{Deserialize, Serialize};

use super::Passage;

pub const REFERENCE_HEADER: &str = "Here are some additional reference passages:";
pub const REFERENCE_FOOTER: &str =
    "You can refer to the content of relevant reference passages to answer the questions.";
pub const ANSWER_CUE: &str = "Now give me the answer.";

const DROP_PREAMBLE: &str = "Please answer the question based on the given passage. ";
const GSM8K_PREAMBLE: &str = "Answer the math word question step by step. Your answer needs to end with 'The answer is'";
const GSM8K_CUE: &str = "Let's think step by step and give me the answer.";

/// Default number of retrieved passages placed in the prompt.
pub const DEFAULT_TOP_USE: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PromptTemplate {
    /// Bare question; with passages, a blank-line separated reference block.
    #[default]
    Generic,
    /// Single-newline layout of the reference block.
    Compact,
    /// Reading comprehension over a dataset-supplied passage.
    Drop { passage: String },
    /// Step-by-step math with a trailing "The answer is" marker.
    Gsm8k,
}

/// Builds the generation prompt. Passages are sorted by rank and at most
/// `top_use` of them are placed, one paragraph each; with none placed the
/// template's no-retrieval form is returned.
pub fn assemble_prompt(question: &str, passages: &[Passage], template: &PromptTemplate, top_use: usize) -> String {
    let mut ranked: Vec<&Passage> = passages.iter().collect();
    ranked.sort_by_key(|p| p.rank);
    ranked.truncate(top_use);
    let docs = ranked.iter().map(|p| p.text.as_str()).collect::<Vec<_>>().join("\n\n");
    let with_refs = !ranked.is_empty();

    match (template, with_refs) {
        (PromptTemplate::Generic, false) | (PromptTemplate::Compact, false) => question.to_string(),
        (PromptTemplate::Generic, true) => {
            format!("{question}\n\n{REFERENCE_HEADER}\n{docs}\n\n{REFERENCE_FOOTER}\n{ANSWER_CUE}")
        }
        (PromptTemplate::Compact, true) => {
            format!("{question}\n{REFERENCE_HEADER}\n{docs}\n{REFERENCE_FOOTER}\n{ANSWER_CUE}")
        }
        (PromptTemplate::Drop { passage }, false) => {
            format!("{DROP_PREAMBLE}\nPassage: {passage}\nQuestion: {question}\n{ANSWER_CUE}")
        }
        (PromptTemplate::Drop { passage }, true) => format!(
            "{DROP_PREAMBLE}\nPassage: {passage}\nQuestion: {question}\n    \n{REFERENCE_HEADER}\n{docs}\n\n{REFERENCE_FOOTER}\n{ANSWER_CUE}"
        ),
        (PromptTemplate::Gsm8k, false) => {
            format!("{GSM8K_PREAMBLE}.\nQuestion: {question}\n{GSM8K_CUE}")
        }
        (PromptTemplate::Gsm8k, true) => format!(
            "{GSM8K_PREAMBLE}\nQuestion: {question}\n    \n{REFERENCE_HEADER}\n{docs}\n\n{REFERENCE_FOOTER}\n{GSM8K_CUE}"
        ),
    }
}

/// The grading prompt sent to an external judge model. Multiple gold
/// answers are joined with `"; "`.
pub fn judge_prompt(question: &str, prediction: &str, gold: &[String]) -> String {
    format!(
        "In the following task, you are given a Question, a model Prediction for the Question, and a Ground-truth Answer to the Question. You should decide whether the model Prediction implies the Ground-truth Answer.\n\nQuestion:\n{question}\n\nPrediction:\n{prediction}\n\nGround-truth Answer:\n{}\nDoes the Prediction imply the Ground-truth Answer? Output Yes or No:",
        gold.join("; ")
    )
}
