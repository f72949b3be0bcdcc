use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use uar_core::bench::{
    eval_ar_bench, eval_single_vs_tree, load_suite_features, score_downstream, DownstreamItem, EvalOptions, Report,
    ReportFormat, Scoring, ScoringPlan, UnbalancedMode,
};
use uar_core::classifier::{train as train_head, Optimizer, TrainConfig};
use uar_core::feature_store::{read_dataset, split_dataset};
use uar_core::forge::{
    self, build_ar_bench, forge_intent_aware, forge_knowledge_aware, forge_self_aware, forge_time_aware,
    label_self_knowledge, read_intents, read_qa_items, validate_suite, BenchCounts, BenchPools, BenchSuite,
    ForgedExample, IntentForgeConfig, SelfLabelConfig,
};
use uar_core::gate::{decide_threshold, threshold_preset, GateBundle, GateDecision, GateInput, Policy, PolicyKind, TokenProbTrace, TreeConfig};
use uar_core::rag::{GenerationClient, HttpGenerator, HttpJudge, JudgeClient, ScriptedGenerator};
use uar_core::Scenario;

use crate::config::{ServeArgs, ServiceConfig};
use crate::error::{CliError, CliResult, ExitCode};
use crate::service::{self, AppState};
use crate::{
    ArBenchArgs, ArEvalArgs, BenchCommand, CheckBenchArgs, DecideArgs, DownstreamArgs, ForgeCommand, SelfLabelArgs,
    TrainArgs,
};

fn require_file(p: &Path) -> CliResult<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(CliError::io(p, "no such file or directory"))
    }
}

fn write_bytes(p: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(p, bytes).map_err(|e| CliError::io(p, e))
}

fn stdout_line(s: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{s}").map_err(|e| CliError::new(ExitCode::Io, format!("stdout: {e}")))
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    require_file(&a.train)?;
    let optimizer = match a.optimizer.as_str() {
        "adam" => Optimizer::adam(),
        "sgd" => Optimizer::Sgd,
        other => return Err(CliError::config(format!("unknown optimizer {other:?} (adam, sgd)"))),
    };
    let cfg = TrainConfig {
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: a.seed,
        optimizer,
    };
    cfg.validate()?;
    let ds = read_dataset(&a.train, None)?;
    let (tr, va) = match &a.valid {
        Some(v) => {
            require_file(v)?;
            (ds, read_dataset(v, None)?)
        }
        None => split_dataset(&ds, a.valid_fraction, a.seed)?,
    };
    tracing::info!(train = tr.len(), valid = va.len(), dim = tr.dim, "training");
    let mut clf = train_head(&tr, &va, &cfg)?;
    if let Some(s) = &a.scenario {
        clf.scenario = s.parse::<Scenario>().map_err(|e| CliError::config(e.to_string()))?;
    }
    for e in &clf.training_meta.epoch_trace {
        stdout_line(&serde_json::to_string(e).expect("epoch stats serialize"))?;
    }
    write_bytes(&a.out, &clf.to_json())?;
    stdout_line(
        &serde_json::json!({
            "out": a.out.display().to_string(),
            "scenario": clf.scenario,
            "best_epoch": clf.training_meta.best_epoch,
            "validation_accuracy": clf.training_meta.validation_accuracy,
        })
        .to_string(),
    )
}

fn write_examples(dir: &Path, name: &str, ex: &[ForgedExample]) -> CliResult<()> {
    write_bytes(&dir.join(name), &forge::to_jsonl(ex))
}

fn qa(p: &Path) -> CliResult<Vec<forge::QaItem>> {
    require_file(p)?;
    Ok(read_qa_items(p)?)
}

/// Ids to keep out of a benchmark: `provenance.source_ids` of forged
/// examples, otherwise each line's `id`.
fn read_exclusions(paths: &[std::path::PathBuf]) -> CliResult<HashSet<String>> {
    let mut out = HashSet::new();
    for p in paths {
        require_file(p)?;
        let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let v: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| CliError::new(ExitCode::Malformed, format!("{}:{}: {e}", p.display(), i + 1)))?;
            match v.pointer("/provenance/source_ids").and_then(|s| s.as_array()) {
                Some(ids) => out.extend(ids.iter().filter_map(|s| s.as_str().map(str::to_string))),
                None => match v.get("id").and_then(|s| s.as_str()) {
                    Some(id) => {
                        out.insert(id.to_string());
                    }
                    None => {
                        return Err(CliError::new(
                            ExitCode::Malformed,
                            format!("{}:{}: line has neither provenance.source_ids nor id", p.display(), i + 1),
                        ))
                    }
                },
            }
        }
    }
    Ok(out)
}

pub fn forge(cmd: &ForgeCommand) -> CliResult<()> {
    match cmd {
        ForgeCommand::SelfLabel(a) => self_label(a),
        ForgeCommand::SelfAware(a) => {
            let s = forge_self_aware(&qa(&a.known)?, &qa(&a.unknown)?, a.seed, a.valid_fraction, &a.model_tag)?;
            write_examples(&a.out_dir, "train.jsonl", &s.train)?;
            write_examples(&a.out_dir, "valid.jsonl", &s.valid)
        }
        ForgeCommand::TimeAware(a) => {
            let s = forge_time_aware(&qa(&a.time_sensitive)?, &qa(&a.static_pool)?, a.seed)?;
            write_examples(&a.out_dir, "train.jsonl", &s.train)?;
            write_examples(&a.out_dir, "valid.jsonl", &s.valid)
        }
        ForgeCommand::KnowledgeAware(a) => {
            let s = forge_knowledge_aware(&qa(&a.non_ki)?, &qa(&a.ki)?, (a.valid_non_ki, a.valid_ki), a.seed)?;
            write_examples(&a.out_dir, "train.jsonl", &s.train)?;
            write_examples(&a.out_dir, "valid.jsonl", &s.valid)
        }
        ForgeCommand::IntentAware(a) => {
            require_file(&a.intents)?;
            let s = forge_intent_aware(&qa(&a.base)?, &read_intents(&a.intents)?, a.seed, &IntentForgeConfig::default())?;
            write_examples(&a.out_dir, "train.jsonl", &s.train)?;
            write_examples(&a.out_dir, "valid.jsonl", &s.valid)?;
            write_examples(&a.out_dir, "test.jsonl", &s.test)
        }
        ForgeCommand::ArBench(a) => ar_bench(a),
        ForgeCommand::CheckBench(a) => check_bench(a),
    }
}

fn self_label(a: &SelfLabelArgs) -> CliResult<()> {
    let items = qa(&a.items)?;
    let generator: Box<dyn GenerationClient + Sync> = match (&a.generator_url, &a.script) {
        (Some(url), None) => Box::new(HttpGenerator::new(url.clone(), a.model_tag.clone())),
        (None, Some(p)) => {
            require_file(p)?;
            Box::new(ScriptedGenerator::from_jsonl(p)?.with_model_tag(a.model_tag.clone()))
        }
        _ => return Err(CliError::config("give exactly one of --generator-url or --script")),
    };
    let judge: Option<HttpJudge> = a.judge_url.as_ref().map(HttpJudge::new);
    let cfg = SelfLabelConfig {
        k: a.k,
        seed: a.seed,
        temperature: a.temperature,
        parallelism: a.parallelism,
    };
    let labels = label_self_knowledge(&items, generator.as_ref(), judge.as_ref().map(|j| j as &(dyn JudgeClient + Sync)), &cfg)?;
    for f in &labels.failures {
        tracing::warn!(id = %f.id, error = %f.error, "item skipped");
    }
    let (known, unknown) = labels.partition(&items);
    let mut json = serde_json::to_vec_pretty(&labels).expect("labels serialize");
    json.push(b'\n');
    write_bytes(&a.out_dir.join("labels.json"), &json)?;
    write_bytes(&a.out_dir.join("known.jsonl"), &forge::to_jsonl(&known))?;
    write_bytes(&a.out_dir.join("unknown.jsonl"), &forge::to_jsonl(&unknown))?;
    stdout_line(
        &serde_json::json!({"known": known.len(), "unknown": unknown.len(), "failures": labels.failures.len()}).to_string(),
    )
}

fn ar_bench(a: &ArBenchArgs) -> CliResult<()> {
    require_file(&a.intents)?;
    let pools = BenchPools {
        known: qa(&a.known)?,
        unknown: qa(&a.unknown)?,
        time_sensitive: qa(&a.time_sensitive)?,
        non_ki: qa(&a.non_ki)?,
        intents: read_intents(&a.intents)?,
    };
    let exclude = read_exclusions(&a.exclude)?;
    let suite = build_ar_bench(&pools, BenchCounts::uniform(a.per_class), a.seed, &exclude, &a.model_tag)?;
    suite.write_dir(&a.out_dir)?;
    stdout_line(&serde_json::to_string(&suite.meta).expect("meta serializes"))
}

fn check_bench(a: &CheckBenchArgs) -> CliResult<()> {
    require_file(&a.dir)?;
    let suite = BenchSuite::read_dir(&a.dir)?;
    let exclude = read_exclusions(&a.exclude)?;
    match validate_suite(&suite, &exclude) {
        Ok(()) => stdout_line(&serde_json::json!({"valid": true}).to_string()),
        Err(errs) => {
            stdout_line(&serde_json::json!({"valid": false, "violations": errs}).to_string())?;
            Err(CliError::new(ExitCode::Invariant, format!("{} suite invariant violations", errs.len())))
        }
    }
}

fn load_bundle(dir: &Path) -> CliResult<GateBundle> {
    require_file(dir)?;
    Ok(GateBundle::load_dir(dir)?)
}

fn emit<R: Report>(report: &R, format: &str, out: Option<&Path>) -> CliResult<()> {
    let format: ReportFormat = format.parse().map_err(CliError::config)?;
    let text = report.render(format);
    match out {
        Some(p) => write_bytes(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn bench(cmd: &BenchCommand) -> CliResult<()> {
    match cmd {
        BenchCommand::Ar(a) | BenchCommand::Compare(a) => {
            let bundle = load_bundle(&a.bundle)?;
            require_file(&a.suite)?;
            let suite = load_suite_features(&a.suite)?;
            let opts = eval_options(a);
            let tree = TreeConfig::default();
            if matches!(cmd, BenchCommand::Compare(_)) {
                let table = eval_single_vs_tree(&bundle, &tree, &suite, &opts)?;
                return emit(&table, &a.format, a.out.as_deref());
            }
            let kind: PolicyKind = a.policy.parse()?;
            let policy = Policy::from_kind(kind, &bundle, &tree)?;
            let report = eval_ar_bench(&policy, &suite, &opts)?;
            for w in &report.warnings {
                tracing::warn!(warning = %w, "unbalanced subtask");
            }
            emit(&report, &a.format, a.out.as_deref())
        }
        BenchCommand::Downstream(a) => downstream(a),
    }
}

fn eval_options(a: &ArEvalArgs) -> EvalOptions {
    EvalOptions {
        unbalanced: if a.allow_unbalanced {
            UnbalancedMode::Warn
        } else {
            UnbalancedMode::Fail
        },
        model_tag: a.model_tag.clone(),
    }
}

fn downstream(a: &DownstreamArgs) -> CliResult<()> {
    require_file(&a.items)?;
    let items: Vec<DownstreamItem> = forge::read_jsonl(&a.items)?;
    let default = match a.scoring.as_str() {
        "lexical" => Scoring::Lexical,
        "extract" => Scoring::ExtractThenExact { mode: Default::default() },
        "judge" => Scoring::Judge,
        other => return Err(CliError::config(format!("unknown scoring {other:?} (lexical, extract, judge)"))),
    };
    let plan = match &a.plan {
        Some(p) => {
            require_file(p)?;
            let bytes = std::fs::read(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_slice::<ScoringPlan>(&bytes).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
        None => ScoringPlan::uniform(default),
    };
    let judge = a.judge_url.as_ref().map(HttpJudge::new);
    let report = score_downstream(&items, &plan, judge.as_ref())?;
    emit(&report, &a.format, a.out.as_deref())
}

#[derive(Deserialize)]
struct TraceLine {
    id: String,
    probs: Vec<f64>,
}

#[derive(Serialize)]
struct IdDecision<'a> {
    id: &'a str,
    decision: &'a GateDecision,
}

fn decision_line(id: &str, d: &GateDecision, with_ids: bool) -> String {
    if with_ids {
        serde_json::to_string(&IdDecision { id, decision: d }).expect("decision serializes")
    } else {
        d.to_json()
    }
}

pub fn decide(a: &DecideArgs) -> CliResult<()> {
    let mut lines = Vec::new();
    if let Some(traces) = &a.traces {
        require_file(traces)?;
        let theta = match (a.theta, &a.preset) {
            (Some(t), None) => t,
            (None, Some(p)) => threshold_preset(p)?,
            _ => return Err(CliError::config("the threshold policy needs --theta or --preset")),
        };
        for t in forge::read_jsonl::<TraceLine>(traces)? {
            let trace = TokenProbTrace::new(t.probs).map_err(|e| CliError::new(ExitCode::Malformed, format!("{}: {e}", t.id)))?;
            lines.push(decision_line(&t.id, &decide_threshold(&trace, theta)?, a.with_ids));
        }
    } else {
        let (Some(bundle_dir), Some(input)) = (&a.bundle, &a.input) else {
            return Err(CliError::new(ExitCode::Usage, "--bundle and --input are required"));
        };
        let bundle = load_bundle(bundle_dir)?;
        require_file(input)?;
        let ds = read_dataset(input, None)?;
        let tree = TreeConfig {
            eager: a.eager,
            ..TreeConfig::default()
        };
        let policy = Policy::from_kind(a.policy.parse()?, &bundle, &tree)?;
        for r in &ds.records {
            let d = policy
                .decide(GateInput::Vector(&r.vector))
                .map_err(|e| CliError::new(ExitCode::Invariant, format!("record {:?}: {e}", r.id)))?;
            lines.push(decision_line(&r.id, &d, a.with_ids));
        }
    }
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    match &a.out {
        Some(p) => write_bytes(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn serve(a: &ServeArgs) -> CliResult<()> {
    let cfg = ServiceConfig::from_args(a)?;
    crate::init_logging(&cfg.log_level);
    let state = AppState::from_config(&cfg)?;
    if a.dry_run {
        let mut v = serde_json::to_value(&cfg).expect("config serializes");
        v["dim"] = state.bundle.dim().into();
        return stdout_line(&v.to_string());
    }
    service::serve_forever(state, &cfg)
}
