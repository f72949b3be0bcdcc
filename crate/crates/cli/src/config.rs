//! Service configuration. Each key resolves as flag, then environment
//! variable, then config file, then built-in default.
//!
//! | key            | flag               | env                 | default          |
//! |----------------|--------------------|---------------------|------------------|
//! | bind           | `--bind`           | `UAR_BIND`          | `127.0.0.1:8080` |
//! | bundle         | `--bundle`         | `UAR_BUNDLE`        | (required)       |
//! | policy         | `--policy`         | `UAR_POLICY`        | `uar_tree`       |
//! | extractor_url  | `--extractor-url`  | `UAR_EXTRACTOR_URL` | none             |
//! | retriever_url  | `--retriever-url`  | `UAR_RETRIEVER_URL` | none             |
//! | generator_url  | `--generator-url`  | `UAR_GENERATOR_URL` | none             |
//! | max_body_bytes | `--max-body-bytes` | `UAR_MAX_BODY_BYTES`| 1048576          |
//! | log_level      | `--log-level`      | `UAR_LOG_LEVEL`     | `info`           |
//! | model_tag      | `--model-tag`      | `UAR_MODEL_TAG`     | bundle dir name  |
//!
//! The file is TOML with the same key names, given by `--config` or `UAR_CONFIG`.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use uar_core::gate::PolicyKind;

use crate::error::{CliError, CliResult, ExitCode};

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_MAX_BODY_BYTES: usize = 1 << 20;
pub const DEFAULT_LOG_LEVEL: &str = "info";

#[derive(Debug, Clone, Default, Args)]
pub struct ServeArgs {
    /// TOML config file.
    #[arg(long, env = "UAR_CONFIG")]
    pub config: Option<PathBuf>,
    /// Listen address, host:port.
    #[arg(long, env = "UAR_BIND")]
    pub bind: Option<String>,
    /// Directory holding the four classifier JSON files.
    #[arg(long, env = "UAR_BUNDLE")]
    pub bundle: Option<PathBuf>,
    /// Policy used when a request names none: uar_tree, single:<scenario>, always, never.
    #[arg(long, env = "UAR_POLICY")]
    pub policy: Option<String>,
    /// Base URL of a hidden-state extractor serving POST /v1/extract.
    #[arg(long, env = "UAR_EXTRACTOR_URL")]
    pub extractor_url: Option<String>,
    #[arg(long, env = "UAR_RETRIEVER_URL")]
    pub retriever_url: Option<String>,
    #[arg(long, env = "UAR_GENERATOR_URL")]
    pub generator_url: Option<String>,
    /// Request bodies above this size get 413.
    #[arg(long, env = "UAR_MAX_BODY_BYTES")]
    pub max_body_bytes: Option<usize>,
    /// tracing filter directive, e.g. info or uar_cli=debug.
    #[arg(long, env = "UAR_LOG_LEVEL")]
    pub log_level: Option<String>,
    #[arg(long, env = "UAR_MODEL_TAG")]
    pub model_tag: Option<String>,
    /// Validate the bundle, print the resolved config and exit.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub bind: Option<String>,
    pub bundle: Option<PathBuf>,
    pub policy: Option<String>,
    pub extractor_url: Option<String>,
    pub retriever_url: Option<String>,
    pub generator_url: Option<String>,
    pub max_body_bytes: Option<usize>,
    pub log_level: Option<String>,
    pub model_tag: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServiceConfig {
    pub bind: String,
    pub bundle: PathBuf,
    pub policy: PolicyKind,
    pub extractor_url: Option<String>,
    pub retriever_url: Option<String>,
    pub generator_url: Option<String>,
    pub max_body_bytes: usize,
    pub log_level: String,
    pub model_tag: String,
}

impl ServiceConfig {
    /// Merges flag/env values (already combined by clap) over the file.
    pub fn resolve(args: &ServeArgs, file: &FileConfig) -> CliResult<Self> {
        let bundle = args
            .bundle
            .clone()
            .or_else(|| file.bundle.clone())
            .ok_or_else(|| CliError::new(ExitCode::Config, "no bundle directory (use --bundle, UAR_BUNDLE or the config file)"))?;
        let policy_name = args.policy.clone().or_else(|| file.policy.clone()).unwrap_or_else(|| "uar_tree".into());
        let policy: PolicyKind = policy_name.parse().map_err(CliError::from)?;
        if policy == PolicyKind::ConfidenceThreshold {
            return Err(CliError::config("the service decides from hidden states; the threshold policy is not servable"));
        }
        let max_body_bytes = args.max_body_bytes.or(file.max_body_bytes).unwrap_or(DEFAULT_MAX_BODY_BYTES);
        if max_body_bytes == 0 {
            return Err(CliError::config("max_body_bytes must be positive"));
        }
        let model_tag = args.model_tag.clone().or_else(|| file.model_tag.clone()).unwrap_or_else(|| {
            bundle
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "unspecified".into())
        });
        Ok(ServiceConfig {
            bind: args.bind.clone().or_else(|| file.bind.clone()).unwrap_or_else(|| DEFAULT_BIND.into()),
            bundle,
            policy,
            extractor_url: args.extractor_url.clone().or_else(|| file.extractor_url.clone()),
            retriever_url: args.retriever_url.clone().or_else(|| file.retriever_url.clone()),
            generator_url: args.generator_url.clone().or_else(|| file.generator_url.clone()),
            max_body_bytes,
            log_level: args.log_level.clone().or_else(|| file.log_level.clone()).unwrap_or_else(|| DEFAULT_LOG_LEVEL.into()),
            model_tag,
        })
    }

    pub fn from_args(args: &ServeArgs) -> CliResult<Self> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        ServiceConfig::resolve(args, &file)
    }
}
