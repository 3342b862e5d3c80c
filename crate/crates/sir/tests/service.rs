use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sir::formats::MetaRecord;
use sir::service::{router, AppState, ServiceConfig};
use sir_core::synth::{clustered, ClusterSpec};
use sir_core::{CodecConfig, IngestRecord, Timestamp};
use tower::ServiceExt;

const NOW: Timestamp = Timestamp::from_secs(1_700_000_000);

fn codec() -> CodecConfig {
    CodecConfig::new(16, 64, 8, 2).unwrap()
}

fn app(dir: &std::path::Path) -> (Router, Arc<AppState>) {
    let config = ServiceConfig::new(dir, codec());
    let state = Arc::new(AppState::open_with_clock(&config, Arc::new(|| NOW)).unwrap());
    (router(state.clone(), None), state)
}

fn records() -> Vec<IngestRecord> {
    let mut spec = ClusterSpec::new(6, 5, 16, 0.2, 3, NOW);
    spec.keyword_every = 3;
    clustered(&spec).unwrap().records
}

fn jsonl(records: &[IngestRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    send(app, req.body(body).unwrap()).await
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn post_jsonl(app: &Router, body: String, key: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::post("/items").header("content-type", "application/x-ndjson");
    if let Some(k) = key {
        req = req.header("idempotency-key", k);
    }
    send(app, req.body(Body::from(body)).unwrap()).await
}

#[tokio::test]
async fn status_of_a_fresh_store() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = app(tmp.path());
    let (status, body) = call(&app, "GET", "/status", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["item_count"], 0);
    assert_eq!(body["codec"]["B"], 64);
    assert_eq!(body["codec"]["m"], 8);
}

#[tokio::test]
async fn jsonl_ingest_then_search() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = app(tmp.path());
    let recs = records();
    let mut body = jsonl(&recs);
    body.push_str("{not json}\n");
    let (status, out) = post_jsonl(&app, body, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(out["inserted"], recs.len());
    assert_eq!(out["rejected"], 1);
    assert_eq!(out["errors"].as_array().unwrap().len(), 1);

    let target = &recs[7].id;
    let (status, page) = call(&app, "POST", "/search", Some(json!({"item_id": target, "k": 5}))).await;
    assert_eq!(status, StatusCode::OK);
    let hits = page["hits"].as_array().unwrap();
    assert!(!hits.is_empty() && hits.len() <= 5);
    assert_eq!(hits[0]["id"], target.as_str());
    assert_eq!(hits[0]["hamming_distance"], 0);

    let (status, page) = call(
        &app,
        "POST",
        "/search",
        Some(json!({"embedding": recs[0].embedding, "k": 30, "radius": 8, "filter": {"any_of": [{"all_of": ["lamp"]}]}})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    for h in page["hits"].as_array().unwrap() {
        assert!(h["title"].as_str().unwrap().contains("lamp"), "{h}");
    }
}

#[tokio::test]
async fn bad_requests_carry_an_error_code() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = app(tmp.path());
    let (status, body) = call(&app, "POST", "/search", Some(json!({"k": 3}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["code"].is_string() && body["message"].is_string(), "{body}");

    let (status, body) = call(&app, "POST", "/search", Some(json!({"item_id": "missing"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND, "{body}");
    assert_eq!(body["code"], "not_found");

    let (status, _) = call(&app, "GET", "/rules/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn multipart_ingest() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, state) = app(tmp.path());
    let recs = records();
    let mut vectors = Vec::new();
    let mut w = sir::sirv::SirvWriter::new(&mut vectors, 16, recs.len() as u64).unwrap();
    for r in &recs {
        w.write(&r.id, r.embedding.values()).unwrap();
    }
    w.finish().unwrap();
    let meta: String = recs.iter().map(|r| serde_json::to_string(&MetaRecord::of(r)).unwrap() + "\n").collect();

    let boundary = "XBOUNDARYX";
    let mut body = Vec::new();
    for (name, data) in [("vectors", &vectors[..]), ("meta", meta.as_bytes())] {
        body.extend_from_slice(
            format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}\"\r\nContent-Type: application/octet-stream\r\n\r\n")
                .as_bytes(),
        );
        body.extend_from_slice(data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    let req = Request::post("/items")
        .header("content-type", format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let (status, out) = send(&app, req).await;
    assert_eq!(status, StatusCode::OK, "{out}");
    assert_eq!(out["inserted"], recs.len());
    assert_eq!(state.item_count(), recs.len());
}

#[tokio::test]
async fn idempotent_replay_and_key_reuse() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, state) = app(tmp.path());
    let recs = records();
    let body = jsonl(&recs[..10]);
    let (s1, first) = post_jsonl(&app, body.clone(), Some("batch-1")).await;
    let (s2, second) = post_jsonl(&app, body, Some("batch-1")).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    // the replay returns the first answer, not "10 unchanged"
    assert_eq!(first, second);
    assert_eq!(second["inserted"], 10);
    assert_eq!(state.item_count(), 10);

    let (s3, err) = post_jsonl(&app, jsonl(&recs[10..]), Some("batch-1")).await;
    assert_eq!(s3, StatusCode::UNPROCESSABLE_ENTITY, "{err}");
    assert_eq!(state.item_count(), 10);
}

#[tokio::test]
async fn rule_lifecycle_and_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = app(tmp.path());
    let recs = records();
    post_jsonl(&app, jsonl(&recs), None).await;
    let seed = &recs[0].id;

    let (status, rule) = call(
        &app,
        "POST",
        "/rules",
        Some(json!({"id": "r1", "seed_item_ids": [seed], "threshold": {"max_hamming": 12}, "combine": "IMAGE_ONLY"})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{rule}");
    assert_eq!(rule["status"], "draft");

    let (status, sim) = call(&app, "POST", "/rules/r1/simulate", Some(json!({"limit": 5}))).await;
    assert_eq!(status, StatusCode::OK, "{sim}");
    let sim_text = sim.to_string();
    assert!(sim_text.contains(seed.as_str()), "{sim}");

    let (status, patched) = call(&app, "PATCH", "/rules/r1", Some(json!({"threshold": {"max_hamming": 4}}))).await;
    assert_eq!(status, StatusCode::OK, "{patched}");
    assert_eq!(patched["threshold"]["max_hamming"], 4);

    let (status, fin) = call(&app, "POST", "/rules/r1/finalize", None).await;
    assert_eq!(status, StatusCode::OK, "{fin}");
    assert_eq!(fin["status"], "finalized");
    let (status, _) = call(&app, "PATCH", "/rules/r1", Some(json!({"threshold": {"max_hamming": 9}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, listed) = call(&app, "GET", "/rules", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(listed.as_array().unwrap().len(), 1);

    let (status, job) = call(&app, "POST", "/sweeps", Some(json!({"rule_ids": ["r1"], "corpus_ref": "store"}))).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{job}");
    let job_id = job["job_id"].as_str().unwrap().to_string();
    let mut last = Value::Null;
    for _ in 0..200 {
        let (status, s) = call(&app, "GET", &format!("/sweeps/{job_id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        last = s;
        if last["done"] == true {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(last["done"], true, "{last}");
    assert_eq!(last["scanned"], recs.len());
    let flagged: Vec<&str> = last["flagged"].as_array().unwrap().iter().map(|f| f["item_id"].as_str().unwrap()).collect();
    assert!(flagged.contains(&seed.as_str()), "{last}");
    assert_eq!(last["flagged_count"], flagged.len());
}

#[tokio::test]
async fn variants_endpoint_returns_the_candidate_set() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = app(tmp.path());
    let recs = records();
    post_jsonl(&app, jsonl(&recs), None).await;
    let (status, set) = call(&app, "POST", "/variants/generate", Some(json!({"item_id": recs[3].id, "n": 5, "k": 2}))).await;
    assert_eq!(status, StatusCode::OK, "{set}");
    assert_eq!(set["query_id"], recs[3].id.as_str());
    let entries = set["entries"].as_object().unwrap();
    assert!(!entries.is_empty() && entries.len() <= 5 * 3, "{set}");
    assert!(!entries.contains_key(&recs[3].id));
}

#[test]
fn reopening_with_another_codec_is_a_conflict() {
    let tmp = tempfile::tempdir().unwrap();
    drop(app(tmp.path()));
    let other = ServiceConfig::new(tmp.path(), CodecConfig::new(16, 128, 8, 2).unwrap());
    let err = AppState::open_with_clock(&other, Arc::new(|| NOW)).err().expect("conflict");
    assert_eq!(err.code(), "config_conflict", "{err}");
}

#[test]
fn checkpoint_then_reopen_keeps_items() {
    let tmp = tempfile::tempdir().unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let recs = records();
    {
        let (app, state) = app(tmp.path());
        rt.block_on(post_jsonl(&app, jsonl(&recs), None));
        state.checkpoint().unwrap();
    }
    let (_, state) = app(tmp.path());
    assert_eq!(state.item_count(), recs.len());
}
