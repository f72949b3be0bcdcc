mod common;

use common::*;
use rand::{Rng, SeedableRng};
use uar_cli::service::{spawn, AppState, RunningService};
use uar_core::decide_tree;

fn running(extractor: Option<&str>, max_body: usize) -> (RunningService, uar_core::GateBundle) {
    let bundle = perfect_bundle(WORLD_DIM);
    let mut st = AppState::new(bundle.clone(), "test-model");
    st.extractor = extractor.map(uar_core::rag::HttpExtractor::new);
    (spawn(st, "127.0.0.1:0", max_body).unwrap(), bundle)
}

fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut r = rand::rngs::StdRng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| r.random_range(-5.0f32..5.0)).collect()).collect()
}

#[test]
fn health_reports_dim_and_tag() {
    let (svc, _) = running(None, 1 << 20);
    let (status, v) = get(&http(), &format!("{}/v1/health", svc.url()));
    assert_eq!(status, 200);
    assert_eq!(v, serde_json::json!({"status": "ok", "dim": WORLD_DIM, "model_tag": "test-model"}));
}

#[test]
fn service_matches_library_on_1000_vectors() {
    let (svc, bundle) = running(None, 1 << 20);
    let agent = http();
    let url = format!("{}/v1/decide", svc.url());
    for x in random_vectors(1000, WORLD_DIM, 5) {
        let (status, got) = post(&agent, &url, serde_json::json!({"vector": x}).to_string().as_bytes());
        assert_eq!(status, 200);
        let want: serde_json::Value = serde_json::from_str(&decide_tree(&bundle, &x).unwrap().to_json()).unwrap();
        assert_eq!(got, want);
    }
}

#[test]
fn named_policies_are_honoured() {
    let (svc, _) = running(None, 1 << 20);
    let url = format!("{}/v1/decide", svc.url());
    let body = |p: &str| serde_json::json!({"vector": vec![0.5f32; WORLD_DIM], "policy": p}).to_string();
    let (s, v) = post(&http(), &url, body("always").as_bytes());
    assert_eq!((s, v["final"].as_str()), (200, Some("retrieve")));
    let (s, v) = post(&http(), &url, body("never").as_bytes());
    assert_eq!((s, v["final"].as_str()), (200, Some("no_retrieve")));
    let (s, v) = post(&http(), &url, body("single:time").as_bytes());
    assert_eq!((s, v["final"].as_str()), (200, Some("retrieve")));
    let (s, v) = post(&http(), &url, body("sometimes").as_bytes());
    assert_eq!((s, v["error"]["code"].as_str()), (400, Some("unknown_policy")));
}

#[test]
fn bad_requests_get_coded_errors() {
    let (svc, _) = running(None, 256);
    let agent = http();
    let url = format!("{}/v1/decide", svc.url());
    for dim in [0, WORLD_DIM - 1, WORLD_DIM + 1] {
        let (s, v) = post(&agent, &url, serde_json::json!({"vector": vec![0.0; dim]}).to_string().as_bytes());
        assert_eq!(s, 400);
        assert_eq!(v["error"]["code"], "dimension_mismatch");
    }
    for bad in ["{", "[]", "{\"vector\":\"x\"}", "{\"vec\":[1]}", "{\"vector\":[1],\"extra\":1}"] {
        let (s, v) = post(&agent, &url, bad.as_bytes());
        assert_eq!(s, 400, "{bad}");
        assert_eq!(v["error"]["code"], "malformed_request");
    }
    let big = serde_json::json!({"vector": vec![0.123456f32; 200]}).to_string();
    let (s, v) = post(&agent, &url, big.as_bytes());
    assert_eq!(s, 413);
    assert_eq!(v["error"]["code"], "payload_too_large");
}

#[test]
fn decide_text_without_extractor_is_503() {
    let (svc, _) = running(None, 1 << 20);
    let (s, v) = post(&http(), &format!("{}/v1/decide_text", svc.url()), b"{\"text\":\"hello\"}");
    assert_eq!(s, 503);
    assert_eq!(v["error"]["code"], "extractor_unavailable");
}

#[test]
fn decide_text_proxies_through_the_extractor() {
    let x = random_vectors(1, WORLD_DIM, 9).remove(0);
    let reply = serde_json::json!({"vector": x, "dim": WORLD_DIM, "model_tag": "m"}).to_string();
    let (ext_url, handle) = fake_server(vec![(200, reply), (500, "{}".into())]);
    let (svc, bundle) = running(Some(&ext_url), 1 << 20);
    let url = format!("{}/v1/decide_text", svc.url());

    let (s, v) = post(&http(), &url, b"{\"text\":\"Who won yesterday?\"}");
    assert_eq!(s, 200);
    let want: serde_json::Value = serde_json::from_str(&decide_tree(&bundle, &x).unwrap().to_json()).unwrap();
    assert_eq!(v, want);

    let (s, v) = post(&http(), &url, b"{\"text\":\"again\"}");
    assert_eq!(s, 502);
    assert_eq!(v["error"]["code"], "extractor_failed");

    let bodies = handle.join().unwrap();
    let first: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(first, serde_json::json!({"text": "Who won yesterday?"}));
}

#[test]
fn extractor_dim_must_match_bundle() {
    let reply = serde_json::json!({"vector": [1.0, 2.0], "dim": 2}).to_string();
    let (ext_url, handle) = fake_server(vec![(200, reply)]);
    let (svc, _) = running(Some(&ext_url), 1 << 20);
    let (s, v) = post(&http(), &format!("{}/v1/decide_text", svc.url()), b"{\"text\":\"t\"}");
    assert_eq!(s, 400);
    assert_eq!(v["error"]["code"], "dimension_mismatch");
    handle.join().unwrap();
}
