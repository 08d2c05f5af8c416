use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Duration;

use serde_json::Value;

use synapseroute::jsonl::read_jsonl;
use synapseroute::training::load_model;
use synapseroute_core::domain::{LabeledQuestion, OptionLetter, QuestionRecord};
use synapseroute_core::evaluate::ModeLogRecord;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_synapseroute"));
    c.env_remove("RUST_LOG");
    for var in ["SYNAPSE_BACKEND_URL", "SYNAPSE_BACKEND_MODEL", "SYNAPSE_MODE_CONTROL", "SYNAPSE_EMBED_URL", "SYNAPSE_EMBED_MODEL", "SYNAPSE_EMBED_DIM"] {
        c.env_remove(var);
    }
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["train", "--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    let unknown = run(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("Usage"));
    assert_eq!(run(&["simulate", "--n", "10"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--n", "10", "--dist", "0.5,0.5", "--out", "/tmp/never"]).status.code(), Some(2));
    assert_eq!(run(&["ingest", "--source", "nowhere", "--in", "x", "--out", "y"]).status.code(), Some(1));
    let missing = run(&["ingest", "--source", "usmle", "--in", "/nonexistent/raw.jsonl", "--out", "/tmp/never.jsonl"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["simulate", "--n", "200", "--seed", "7", "--out", s(&a)]);
    ok(&["simulate", "--n", "200", "--seed", "7", "--out", s(&b)]);
    for f in ["questions.jsonl", "profile.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let q: Vec<QuestionRecord> = read_jsonl(&a.join("questions.jsonl")).unwrap();
    assert_eq!(q.len(), 200);
}

#[test]
fn ingest_and_sample() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("ori_pqal.json");
    fs::write(
        &raw,
        r#"{"1": {"QUESTION": "Q one?", "CONTEXTS": ["c"], "final_decision": "yes"},
            "2": {"QUESTION": "Q two?", "CONTEXTS": ["c"], "final_decision": "no"},
            "3": {"QUESTION": "Q three?", "CONTEXTS": ["c"], "final_decision": "maybe"},
            "4": {"QUESTION": "Q four?", "CONTEXTS": ["c"], "final_decision": "yes"}}"#,
    )
    .unwrap();
    let out = dir.path().join("q.jsonl");
    ok(&["ingest", "--source", "pubmedqa", "--in", s(&raw), "--out", s(&out)]);
    let q: Vec<QuestionRecord> = read_jsonl(&out).unwrap();
    let golds: Vec<OptionLetter> = q.iter().map(|r| r.gold).collect();
    assert_eq!(golds, [OptionLetter::A, OptionLetter::B, OptionLetter::C, OptionLetter::A]);

    let sampled = dir.path().join("s.jsonl");
    ok(&["sample", "--in", s(&out), "--n", "2", "--seed", "1", "--out", s(&sampled)]);
    assert_eq!(read_jsonl::<QuestionRecord>(&sampled).unwrap().len(), 2);
    assert_eq!(run(&["sample", "--in", s(&out), "--n", "9", "--seed", "1", "--out", s(&sampled)]).status.code(), Some(2));
}

#[test]
fn full_pipeline_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("corpus");
    ok(&["simulate", "--n", "500", "--dist", "0.5775,0.3474,0.0751", "--seed", "3", "--out", s(&corpus)]);
    let questions = corpus.join("questions.jsonl");

    let labeled = d.join("labeled.jsonl");
    let stats = d.join("stats.json");
    ok(&["label", "--questions", s(&questions), "--sim", s(&corpus), "--out", s(&labeled), "--stats", s(&stats)]);
    let first: Vec<LabeledQuestion> = read_jsonl(&labeled).unwrap();
    assert_eq!(first.len(), 500);
    let st: Value = serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(st["total"], 500);

    // Resume after a crash that left a torn line behind.
    let text = fs::read_to_string(&labeled).unwrap();
    let mut kept: String = text.lines().take(120).map(|l| format!("{l}\n")).collect();
    kept.push_str(&text.lines().nth(120).unwrap()[..40]);
    fs::write(&labeled, kept).unwrap();
    ok(&["label", "--questions", s(&questions), "--sim", s(&corpus), "--out", s(&labeled), "--resume"]);
    let mut resumed: Vec<LabeledQuestion> = read_jsonl(&labeled).unwrap();
    let mut original = first.clone();
    resumed.sort_by(|a, b| a.question.id.cmp(&b.question.id));
    original.sort_by(|a, b| a.question.id.cmp(&b.question.id));
    assert_eq!(resumed, original);

    let model = d.join("model.json");
    let test = d.join("test.jsonl");
    let report = d.join("train.json");
    let embed = ["--embed-provider", "hashing", "--embed-dim", "512"];
    let mut args = vec!["train", "--labeled", s(&labeled), "--out", s(&model), "--seed", "5"];
    args.extend(["--test-out", s(&test), "--report", s(&report)]);
    args.extend(embed);
    ok(&args);
    let m = load_model(&model).unwrap();
    assert_eq!(m.dim, 512);
    assert_eq!(m.train_meta.seed, 5);
    let tr: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(tr["test_total"], 100);

    let mut logs = Vec::new();
    for mode in ["non_thinking", "thinking", "dynamic"] {
        let out = d.join(format!("{mode}.jsonl"));
        let mut args = vec!["replay", "--questions", s(&test), "--sim", s(&corpus), "--mode", mode];
        args.extend(["--model", s(&model), "--out", s(&out)]);
        args.extend(embed);
        ok(&args);
        let log: Vec<ModeLogRecord> = read_jsonl(&out).unwrap();
        assert_eq!(log.len(), 100);
        logs.push(out);
    }

    let eval = d.join("eval.json");
    let csv = d.join("eval.csv");
    ok(&[
        "eval", "--non-thinking", s(&logs[0]), "--thinking", s(&logs[1]), "--dynamic", s(&logs[2]),
        "--iterations", "200", "--seed", "9", "--out", s(&eval), "--csv", s(&csv),
    ]);
    let ev: Value = serde_json::from_str(&fs::read_to_string(&eval).unwrap()).unwrap();
    assert_eq!(ev["n_questions"], 100);
    let acc = |i: usize| ev["modes"][i]["metrics"]["accuracy"].as_f64().unwrap();
    assert!(acc(2) > acc(1), "dynamic {} vs thinking {}", acc(2), acc(1));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 3 * 5);

    // Mismatched logs are a runtime error.
    let out = run(&["eval", "--non-thinking", s(&logs[0]), "--thinking", s(&questions), "--dynamic", s(&logs[2])]);
    assert_eq!(out.status.code(), Some(2));
}

#[tokio::test]
async fn serve_routes_and_logs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("corpus");
    ok(&["simulate", "--n", "300", "--seed", "4", "--out", s(&corpus)]);
    let labeled = d.join("labeled.jsonl");
    ok(&["label", "--questions", s(&corpus.join("questions.jsonl")), "--sim", s(&corpus), "--out", s(&labeled)]);
    let model = d.join("model.json");
    ok(&["train", "--labeled", s(&labeled), "--out", s(&model), "--seed", "1", "--embed-provider", "hashing", "--embed-dim", "128"]);

    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let config = d.join("gateway.toml");
    let telemetry = d.join("telemetry.jsonl");
    fs::write(
        &config,
        format!(
            "[embedding]\nprovider = \"hashing\"\ndim = 128\n\n[gateway]\nmodel_path = {:?}\ntelemetry_path = {:?}\n\n[gateway.simulator]\nquestions = {:?}\nprofile = {:?}\n",
            model,
            telemetry,
            corpus.join("questions.jsonl"),
            corpus.join("profile.json"),
        ),
    )
    .unwrap();
    let mut child = bin()
        .args(["serve", "--config", s(&config), "--port", &port.to_string(), "--json-logs"])
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();

    let client = reqwest::Client::new();
    let base = format!("http://127.0.0.1:{port}");
    let mut up = false;
    for _ in 0..100 {
        if let Ok(r) = client.get(format!("{base}/healthz")).send().await {
            up = r.status().is_success();
            break;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    assert!(up, "gateway did not come up");

    let questions: Vec<QuestionRecord> = read_jsonl(&corpus.join("questions.jsonl")).unwrap();
    let q = &questions[0];
    let body = serde_json::json!({
        "messages": [{"role": "user", "content": synapseroute_core::prompt::user_message(q)}],
        "metadata": {"question_id": q.id, "gold": q.gold},
    });
    let r = client.post(format!("{base}/v1/chat/completions")).json(&body).send().await.unwrap();
    assert!(r.status().is_success());
    let mode = r.headers()["x-synapseroute-mode"].to_str().unwrap().to_string();
    let prob: f64 = r.headers()["x-synapseroute-prob"].to_str().unwrap().parse().unwrap();
    let v: Value = r.json().await.unwrap();
    assert_eq!(v["synapseroute"]["chosen_mode"], mode.as_str());
    assert_eq!(v["synapseroute"]["probability_thinking"].as_f64().unwrap(), prob);
    assert!(v["usage"]["completion_tokens"].as_u64().unwrap() > 0);

    let bad = client.post(format!("{base}/v1/chat/completions")).json(&serde_json::json!({"messages": []})).send().await.unwrap();
    assert_eq!(bad.status(), 400);
    let garbled = client.post(format!("{base}/v1/route")).json(&serde_json::json!({"txt": 1})).send().await.unwrap();
    assert_eq!(garbled.status(), 400);
    let route: Value = client
        .post(format!("{base}/v1/route"))
        .json(&serde_json::json!({"text": synapseroute_core::prompt::feature_text(q)}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(route["probability_thinking"].as_f64().unwrap(), prob);

    child.kill().unwrap();
    child.wait().unwrap();
    let lines: Vec<Value> = read_jsonl(&telemetry).unwrap();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["question_id"], q.id.as_str());
}
