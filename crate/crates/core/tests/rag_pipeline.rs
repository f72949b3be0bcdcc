use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use uar_core::gate::GateInput;
use uar_core::rag::{
    run_exchange, run_exchanges, ClientError, CountingRetriever, ExchangeOptions, ExchangeRequest, FixtureRetriever,
    GenerationClient, HttpGenerator, HttpJudge, HttpRetriever, JudgeClient, JudgeVerdict, PromptTemplate, RetrieverClient,
    Sampling, ScriptedGenerator,
};
use uar_core::Policy;

fn questions(n: usize) -> Vec<(String, String)> {
    (0..n).map(|i| (format!("q{i}"), format!("Question number {i}?"))).collect()
}

#[test]
fn retriever_calls_follow_the_gate() {
    let qs = questions(100);
    let t = PromptTemplate::Generic;
    let reqs: Vec<ExchangeRequest> = qs
        .iter()
        .map(|(id, q)| ExchangeRequest {
            id,
            question: q,
            template: &t,
            input: GateInput::None,
        })
        .collect();
    let g = ScriptedGenerator::default().with_fallback("answer");
    let opts = ExchangeOptions::default();

    let never = CountingRetriever::new(FixtureRetriever::default().synthesizing(10));
    let out = run_exchanges(&reqs, &Policy::Never, &never, &g, &opts, 4);
    assert_eq!(never.calls(), 0);
    assert!(out.iter().all(|r| r.as_ref().unwrap().passages.is_empty()));

    let always = CountingRetriever::new(FixtureRetriever::default().synthesizing(10));
    let out = run_exchanges(&reqs, &Policy::Always, &always, &g, &opts, 4);
    assert_eq!(always.calls(), 100);
    let ids: Vec<&str> = out.iter().map(|r| r.as_ref().unwrap().id.as_str()).collect();
    let expected: Vec<&str> = qs.iter().map(|(id, _)| id.as_str()).collect();
    assert_eq!(ids, expected);
}

#[test]
fn repeated_exchange_is_identical() {
    let t = PromptTemplate::Generic;
    let req = ExchangeRequest {
        id: "a",
        question: "Q?",
        template: &t,
        input: GateInput::None,
    };
    let r = FixtureRetriever::default().synthesizing(3);
    let g = ScriptedGenerator::default().with_fallback("x");
    let a = run_exchange(&req, &Policy::Always, &r, &g, &ExchangeOptions::default()).unwrap();
    let b = run_exchange(&req, &Policy::Always, &r, &g, &ExchangeOptions::default()).unwrap();
    assert_eq!(a, b);
}

/// Serves `responses` to consecutive connections and hands back the request bodies.
fn serve(responses: Vec<(u16, &'static str)>) -> (String, thread::JoinHandle<Vec<String>>) {
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

#[test]
fn http_clients_speak_the_wire_format() {
    let (url, h) = serve(vec![
        (200, r#"{"passages":[{"rank":2,"text":"b","score":0.5},{"rank":1,"text":"a","score":0.9}]}"#),
        (200, r#"{"text":"Paris"}"#),
        (200, r#"{"verdict":"Yes"}"#),
        (500, r#"{"error":"boom"}"#),
    ]);
    let ps = HttpRetriever::new(format!("{url}/retrieve")).retrieve("capital of France", 2).unwrap();
    assert_eq!(ps.iter().map(|p| p.rank).collect::<Vec<_>>(), vec![1, 2]);
    let g = HttpGenerator::new(format!("{url}/generate"), "remote");
    let text = g.generate("p", Sampling::Sampled { seed: 7, temperature: 1.0 }).unwrap();
    assert_eq!(text, "Paris");
    assert_eq!(g.model_tag(), "remote");
    let v = HttpJudge::new(format!("{url}/judge")).judge("q", "Paris", &["paris".to_string()]).unwrap();
    assert_eq!(v, JudgeVerdict::Yes);
    let err = HttpRetriever::new(format!("{url}/retrieve")).retrieve("x", 1).unwrap_err();
    assert!(matches!(err, ClientError::Status { .. }), "{err:?}");

    let bodies = h.join().unwrap();
    let req: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(req, serde_json::json!({"query": "capital of France", "top_k": 2}));
    let req: serde_json::Value = serde_json::from_str(&bodies[1]).unwrap();
    assert_eq!(req["prompt"], "p");
    assert_eq!(req["seed"], 7);
    assert_eq!(req["temperature"], 1.0);
    let req: serde_json::Value = serde_json::from_str(&bodies[2]).unwrap();
    assert!(req["prompt"].as_str().unwrap().contains("Ground-truth Answer:\nparis"));
}
