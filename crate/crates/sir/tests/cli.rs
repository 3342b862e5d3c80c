use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

const NOW: &str = "2023-11-14T22:13:20Z";

fn sir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sir")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = sir(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthesizes a clustered corpus and ingests it into a fresh store.
fn seeded_store(root: &Path) {
    let corpus = root.join("corpus");
    let store = root.join("store");
    ok(&["--now", NOW, "synth", "clusters", "--out", p(&corpus), "--groups", "10", "--group-size", "8", "--dim", "32"]);
    let out = ok(&[
        "--store",
        p(&store),
        "--now",
        NOW,
        "--json",
        "ingest",
        p(&corpus.join("vectors.sirv")),
        p(&corpus.join("meta.jsonl")),
        "--dim",
        "32",
        "--bits",
        "128",
    ]);
    let v: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["inserted"], 80, "{v}");
    assert_eq!(v["item_count"], 80);
}

#[test]
fn item_search_lists_the_item_first() {
    let tmp = tempfile::tempdir().unwrap();
    seeded_store(tmp.path());
    let meta = std::fs::read_to_string(tmp.path().join("corpus/meta.jsonl")).unwrap();
    let first: Value = serde_json::from_str(meta.lines().nth(11).unwrap()).unwrap();
    let id = first["id"].as_str().unwrap();
    let store = tmp.path().join("store");
    let out = ok(&["--store", p(&store), "--now", NOW, "--json", "search", "--item", id, "--k", "5", "--radius", "8"]);
    let page: Value = serde_json::from_str(out.trim()).unwrap();
    let hits = page["hits"].as_array().unwrap();
    assert_eq!(hits.len(), 5);
    assert_eq!(hits[0]["id"], id);
    let dists: Vec<u64> = hits.iter().map(|h| h["hamming_distance"].as_u64().unwrap()).collect();
    assert!(dists.windows(2).all(|w| w[0] <= w[1]), "{dists:?}");

    let text = ok(&["--store", p(&store), "--now", NOW, "search", "--item", id, "--k", "3", "--radius", "8"]);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().next().unwrap().contains(id));

    let status = ok(&["--store", p(&store), "--now", NOW, "--json", "status"]);
    let status: Value = serde_json::from_str(status.trim()).unwrap();
    assert_eq!(status["item_count"], 80);
    assert_eq!(status["codec"]["B"], 128);
}

#[test]
fn truncated_vector_file_is_an_integrity_error() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    ok(&["--now", NOW, "synth", "clusters", "--out", p(&corpus), "--groups", "3", "--group-size", "4", "--dim", "16"]);
    let vectors = corpus.join("vectors.sirv");
    let bytes = std::fs::read(&vectors).unwrap();
    std::fs::write(&vectors, &bytes[..bytes.len() - 7]).unwrap();
    let out = sir(&[
        "--store",
        p(&tmp.path().join("store")),
        "--now",
        NOW,
        "ingest",
        p(&vectors),
        p(&corpus.join("meta.jsonl")),
        "--dim",
        "16",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("error[integrity_error]"), "{err}");
}

#[test]
fn usage_errors_exit_with_two() {
    let out = sir(&["search", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let out = sir(&["status"]);
    assert_eq!(out.status.code(), Some(1), "no store given");
}

#[test]
fn dimension_mismatch_on_reopen_is_a_conflict() {
    let tmp = tempfile::tempdir().unwrap();
    seeded_store(tmp.path());
    let corpus = tmp.path().join("corpus");
    let out = sir(&[
        "--store",
        p(&tmp.path().join("store")),
        "--now",
        NOW,
        "ingest",
        p(&corpus.join("vectors.sirv")),
        p(&corpus.join("meta.jsonl")),
        "--dim",
        "32",
        "--bits",
        "256",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config_conflict"));
}

#[test]
fn bench_tables_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = json!({
        "corpus": {"clusters": 20, "per_cluster": 10, "dim": 32, "noise": 0.5, "seed": 4, "now": NOW},
        "variants": [{"label": "B=128", "code_bits": 128}, {"label": "B=64", "code_bits": 64}],
        "projection_seed": 1,
        "k": 20
    });
    let spec_path = tmp.path().join("spec.json");
    std::fs::write(&spec_path, spec.to_string()).unwrap();
    let run = |name: &str| {
        let dir = tmp.path().join(name);
        ok(&["bench", "--spec", p(&spec_path), "--out-dir", p(&dir)]);
        (std::fs::read(dir.join("quality.csv")).unwrap(), dir)
    };
    let (a, dir) = run("a");
    let (b, _) = run("b");
    assert_eq!(a, b);
    let quality = String::from_utf8(a).unwrap();
    assert!(quality.lines().count() == 3, "{quality}");
    assert!(dir.join("latency.csv").exists());
}

#[test]
fn rules_from_the_command_line() {
    let tmp = tempfile::tempdir().unwrap();
    seeded_store(tmp.path());
    let store = tmp.path().join("store");
    let meta = std::fs::read_to_string(tmp.path().join("corpus/meta.jsonl")).unwrap();
    let seed: Value = serde_json::from_str(meta.lines().next().unwrap()).unwrap();
    let seed = seed["id"].as_str().unwrap();
    let help = ok(&["rule", "create", "--help"]);
    assert!(help.contains("--seed"), "{help}");
    let base = ["--store", p(&store), "--now", NOW, "--json"];
    let run = |extra: &[&str]| ok(&[&base[..], extra].concat());
    run(&["rule", "create", "--id", "near-seed", "--seed", seed, "--max-hamming", "10", "--combine", "image-only"]);
    let sim: Value = serde_json::from_str(run(&["rule", "simulate", "near-seed"]).trim()).unwrap();
    assert!(sim.to_string().contains(seed), "{sim}");
    run(&["rule", "finalize", "near-seed"]);
    let shown: Value = serde_json::from_str(run(&["rule", "show", "near-seed"]).trim()).unwrap();
    assert_eq!(shown["status"], "finalized");
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

/// Minimal HTTP/1.1 POST; returns the status code, or None when the
/// connection dies before a full response arrives.
fn post(port: u16, path: &str, body: &str) -> Option<u16> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    s.set_read_timeout(Some(Duration::from_secs(10))).ok()?;
    write!(
        s,
        "POST {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/x-ndjson\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .ok()?;
    let mut resp = String::new();
    s.read_to_string(&mut resp).ok()?;
    let status = resp.split(' ').nth(1)?.parse().ok()?;
    resp.contains("\r\n\r\n").then_some(status)
}

fn wait_for(port: u16) {
    let start = Instant::now();
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(start.elapsed() < Duration::from_secs(20), "server did not start");
        std::thread::sleep(Duration::from_millis(20));
    }
}

#[test]
fn killed_server_keeps_every_acknowledged_record() {
    let tmp = tempfile::tempdir().unwrap();
    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap().as_secs();
    let corpus = tmp.path().join("corpus");
    ok(&["--now", &now.to_string(), "synth", "clusters", "--out", p(&corpus), "--groups", "100", "--group-size", "20", "--dim", "32"]);
    let vectors = sir::sirv::read_all(&corpus.join("vectors.sirv")).unwrap().1;
    let meta: Vec<Value> = std::fs::read_to_string(corpus.join("meta.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let lines: Vec<String> = vectors
        .iter()
        .zip(&meta)
        .map(|(v, m)| {
            let mut r = m.clone();
            r["embedding"] = json!(v.values);
            r.to_string()
        })
        .collect();

    let port = free_port();
    let config = json!({
        "listen": format!("127.0.0.1:{port}"),
        "store_dir": tmp.path().join("store"),
        "codec": {"dim": 32, "code_bits": 128, "subcode_count": 8, "projection_seed": 0},
        "checkpoint_every": 700
    });
    let config_path = tmp.path().join("service.json");
    std::fs::write(&config_path, config.to_string()).unwrap();
    let mut server = Command::new(env!("CARGO_BIN_EXE_sir"))
        .args(["--config", p(&config_path), "serve"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    wait_for(port);

    // batches of 50 from a client thread; the server is killed part way
    let (tx, rx) = std::sync::mpsc::channel();
    let batches: Vec<String> = lines.chunks(50).map(|c| c.join("\n") + "\n").collect();
    let client = std::thread::spawn(move || {
        for (i, b) in batches.iter().enumerate() {
            match post(port, "/items", b) {
                Some(200) => tx.send(i).unwrap(),
                _ => break,
            }
        }
    });
    let mut acked = Vec::new();
    while acked.len() < 15 {
        acked.push(rx.recv_timeout(Duration::from_secs(30)).expect("batch acknowledged"));
    }
    server.kill().unwrap();
    server.wait().unwrap();
    client.join().unwrap();
    acked.extend(rx.try_iter());
    let acked_records = acked.len() * 50;

    let status = ok(&["--config", p(&config_path), "--json", "status"]);
    let status: Value = serde_json::from_str(status.trim()).unwrap();
    let count = status["item_count"].as_u64().unwrap() as usize;
    // a batch in flight at the kill may or may not have been logged
    assert!(
        count == acked_records || count == acked_records + 50,
        "{count} items after restart, {acked_records} acknowledged"
    );
    assert!(acked_records < lines.len(), "the kill landed after the last batch");
}
