//! Exit codes and the machine-readable error line.

use serde::Serialize;
use uar_core::bench::BenchError;
use uar_core::classifier::ClassifierError;
use uar_core::feature_store::FeatureError;
use uar_core::forge::ForgeError;
use uar_core::gate::GateError;
use uar_core::rag::ClientError;

/// Process exit codes. Each failure class has its own code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitCode {
    Ok,
    /// An input file or directory could not be read, or an output written.
    Io,
    /// Input parsed but does not follow its schema.
    Malformed,
    /// Well-formed input violating a precondition: degenerate labels,
    /// unbalanced subtasks, inconsistent bundles, pools too small.
    Invariant,
    /// Bad configuration values or an unknown policy.
    Config,
    /// A remote retriever, generator, judge or extractor failed.
    Client,
    /// Command line usage error.
    Usage,
}

impl ExitCode {
    pub fn code(self) -> i32 {
        match self {
            ExitCode::Ok => 0,
            ExitCode::Io => 2,
            ExitCode::Malformed => 3,
            ExitCode::Invariant => 4,
            ExitCode::Config => 5,
            ExitCode::Client => 6,
            ExitCode::Usage => 64,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub exit: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn new(exit: ExitCode, message: impl Into<String>) -> Self {
        CliError {
            exit,
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::new(ExitCode::Io, format!("{}: {e}", path.display()))
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::new(ExitCode::Config, message)
    }

    /// `{"level":"error","exit_code":n,"kind":"...","message":"..."}`
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "level": "error",
            "exit_code": self.exit.code(),
            "kind": self.exit,
            "message": self.message,
        })
        .to_string()
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        let exit = match &e {
            FeatureError::Io { .. } => ExitCode::Io,
            FeatureError::TooFewRecords { .. } | FeatureError::DegenerateLabels(_) => ExitCode::Invariant,
            FeatureError::InvalidFraction(_) => ExitCode::Config,
            _ => ExitCode::Malformed,
        };
        CliError::new(exit, e.to_string())
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        CliError::new(classifier_exit(&e), e.to_string())
    }
}

fn classifier_exit(c: &ClassifierError) -> ExitCode {
    match c {
        ClassifierError::SchemaVersionUnsupported(_) | ClassifierError::CorruptPayload(_) => ExitCode::Malformed,
        ClassifierError::InvalidConfig(_) => ExitCode::Config,
        _ => ExitCode::Invariant,
    }
}

impl From<GateError> for CliError {
    fn from(e: GateError) -> Self {
        let exit = match &e {
            GateError::BundleIo { .. } => ExitCode::Io,
            GateError::Classifier(c) => classifier_exit(c),
            GateError::UnknownPolicy(_)
            | GateError::UnknownPreset(_)
            | GateError::InvalidThreshold(_)
            | GateError::InvalidOrder(_) => ExitCode::Config,
            _ => ExitCode::Invariant,
        };
        CliError::new(exit, e.to_string())
    }
}

impl From<ForgeError> for CliError {
    fn from(e: ForgeError) -> Self {
        let exit = match &e {
            ForgeError::Io { .. } => ExitCode::Io,
            ForgeError::InvalidItem { .. } => ExitCode::Malformed,
            ForgeError::InvalidConfig(_) => ExitCode::Config,
            _ => ExitCode::Invariant,
        };
        CliError::new(exit, e.to_string())
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Feature(f) => f.into(),
            BenchError::Io { .. } => CliError::new(ExitCode::Io, e.to_string()),
            BenchError::MalformedReport { .. } => CliError::new(ExitCode::Malformed, e.to_string()),
            BenchError::MissingVerdictInputs { .. } => CliError::new(ExitCode::Malformed, e.to_string()),
            _ => CliError::new(ExitCode::Invariant, e.to_string()),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        let exit = match &e {
            ClientError::Fixture { .. } => ExitCode::Io,
            _ => ExitCode::Client,
        };
        CliError::new(exit, e.to_string())
    }
}
