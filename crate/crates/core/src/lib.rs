//! Active retrieval gating over frozen-LLM hidden states.
//!
//! Four linear heads read the final-token hidden state of an input and each
//! answer one question: does the user explicitly ask for retrieval, does the
//! input need factual knowledge, is it time-sensitive, does the model not
//! know the answer. A fixed cascade turns their verdicts into one
//! retrieve / no-retrieve decision.

pub mod bench;
pub mod classifier;
pub mod feature_store;
pub mod forge;
pub mod gate;
pub mod rag;
pub mod sampling;
pub mod scenario;
pub mod synthetic;

pub use classifier::{train, LinearClassifier, TrainConfig};
pub use feature_store::{read_dataset, write_dataset, DatasetFormat, FeatureDataset, FeatureRecord};
pub use gate::{decide_tree, GateBundle, GateDecision, GateInput, Policy, PolicyKind, TreeConfig};
pub use scenario::{Label, Scenario, Verdict};
