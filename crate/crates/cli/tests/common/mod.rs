#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};
use std::thread;

use uar_core::classifier::LinearClassifier;
use uar_core::feature_store::{write_dataset, DatasetFormat};
use uar_core::forge::{build_ar_bench, write_jsonl, BenchCounts, BenchPools};
use uar_core::gate::GateBundle;
use uar_core::synthetic::{axis, AttributeWorld};
use uar_core::Scenario;

pub fn uar(args: &[&str]) -> Output {
    uar_with_env(args, &[])
}

pub fn uar_with_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_uar"));
    cmd.args(args);
    for k in ["UAR_CONFIG", "UAR_BIND", "UAR_BUNDLE", "UAR_POLICY", "UAR_LOG_LEVEL", "UAR_MODEL_TAG", "UAR_MAX_BODY_BYTES"] {
        cmd.env_remove(k);
    }
    cmd.envs(env.iter().copied());
    cmd.output().expect("uar binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 stdout")
}

/// Each head reads its own attribute axis, so on a low-noise attribute world
/// every criterion is answered correctly.
pub fn perfect_bundle(dim: usize) -> GateBundle {
    let heads = Scenario::CRITERIA.map(|s| {
        let mut w = [vec![0.0; dim], vec![0.0; dim]];
        w[0][axis(s)] = -10.0;
        w[1][axis(s)] = 10.0;
        LinearClassifier::from_parts(s, w, [0.0, 0.0]).expect("finite weights")
    });
    GateBundle::from_classifiers(heads).expect("consistent bundle")
}

pub const WORLD_DIM: usize = 8;

pub fn quiet_world() -> AttributeWorld {
    AttributeWorld::new(WORLD_DIM, 3.0, 0.05, 17)
}

/// Writes `<subtask>.features.jsonl` for a balanced suite of `per_class`
/// examples per class.
pub fn write_feature_suite(world: &mut AttributeWorld, dir: &Path, per_class: usize) {
    let pools = world.standard_pools("b-", per_class * 3, 6);
    let suite = build_ar_bench(&pools, BenchCounts::uniform(per_class), 3, &Default::default(), "synthetic").unwrap();
    std::fs::create_dir_all(dir).unwrap();
    for (s, ex) in &suite.subtasks {
        let path = dir.join(format!("{}.features.jsonl", s.subtask_name()));
        write_dataset(&world.features(ex), &path, DatasetFormat::Jsonl).unwrap();
    }
}

/// Writes the five pool files `forge ar-bench` reads.
pub fn write_pools(pools: &BenchPools, dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    write_jsonl(&dir.join("known.jsonl"), &pools.known).unwrap();
    write_jsonl(&dir.join("unknown.jsonl"), &pools.unknown).unwrap();
    write_jsonl(&dir.join("time_sensitive.jsonl"), &pools.time_sensitive).unwrap();
    write_jsonl(&dir.join("non_ki.jsonl"), &pools.non_ki).unwrap();
    write_jsonl(&dir.join("intents.jsonl"), &pools.intents).unwrap();
}

pub fn ar_bench_args<'a>(pools: &'a str, per_class: &'a str, out: &'a str) -> Vec<String> {
    let p = |f: &str| format!("{pools}/{f}");
    vec![
        "forge".into(),
        "ar-bench".into(),
        "--known".into(),
        p("known.jsonl"),
        "--unknown".into(),
        p("unknown.jsonl"),
        "--time-sensitive".into(),
        p("time_sensitive.jsonl"),
        "--non-ki".into(),
        p("non_ki.jsonl"),
        "--intents".into(),
        p("intents.jsonl"),
        "--per-class".into(),
        per_class.into(),
        "--seed".into(),
        "7".into(),
        "--out-dir".into(),
        out.into(),
    ]
}

/// One-connection-per-response HTTP server. Returns its base URL and a
/// handle yielding the request bodies it saw.
pub fn fake_server(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let h = thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(String::from_utf8(buf).unwrap());
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        bodies
    });
    (url, h)
}

/// Client that hands back error statuses as responses.
pub fn http() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

pub fn post(agent: &ureq::Agent, url: &str, body: &[u8]) -> (u16, serde_json::Value) {
    let mut r = agent
        .post(url)
        .header("content-type", "application/json")
        .send(body)
        .expect("request reaches the service");
    let status = r.status().as_u16();
    let text = r.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(serde_json::Value::String(text)))
}

pub fn get(agent: &ureq::Agent, url: &str) -> (u16, serde_json::Value) {
    let mut r = agent.get(url).call().expect("request reaches the service");
    let status = r.status().as_u16();
    (status, r.body_mut().read_json().unwrap())
}
