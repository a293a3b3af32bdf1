mod common;

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::Stdio;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use serde_json::Value;
use tempfile::TempDir;

use chronotopic::config::RunConfig;
use common::*;

/// One bundle shared by the read-only tests.
fn fitted() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = project(dir.path(), &three_epoch_corpus(1), FAST_HDP);
        run_project(&config);
        dir
    })
    .path()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn topic_counts(bundle: &Path) -> Vec<usize> {
    let epochs = read_json(&bundle.join("epochs.json"));
    (0..epochs.as_array().unwrap().len())
        .map(|t| read_json(&bundle.join(format!("models/epoch-{t}.json")))["topics"].as_array().unwrap().len())
        .collect()
}

type EdgeKey = (u64, u64, u64, u64);

fn surviving_edges(graph: &Value) -> BTreeSet<EdgeKey> {
    graph["edges"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["surviving"].as_bool().unwrap())
        .map(|e| {
            let n = |v: &Value| v.as_u64().unwrap();
            (n(&e["from"]["epoch"]), n(&e["from"]["id"]), n(&e["to"]["epoch"]), n(&e["to"]["id"]))
        })
        .collect()
}

#[test]
fn missing_corpus_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, "[paths]\ncorpus = \"nowhere/corpus.jsonl\"\noutput = \"bundle\"\n").unwrap();
    let o = run(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere/corpus.jsonl"), "{}", stderr(&o));
    assert!(!dir.path().join("bundle").exists());
}

#[test]
fn bad_configs_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let docs = three_epoch_corpus(2);
    let cases = ["[hdp]\nalpha = -1.0\n", "[zeta]\nbhattacharyya = 1.5\n", "[hdp]\nno_such_key = 3\n"];
    for extra in cases {
        let config = project(dir.path(), &docs, extra);
        let o = run(&["run", "--config", config.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{extra}: {}", stderr(&o));
    }
    let o = run(&["run", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_failure_exits_2() {
    // one epoch only: nothing to relate
    let dir = tempfile::tempdir().unwrap();
    let docs: Vec<_> = three_epoch_corpus(3).into_iter().filter(|d| d.timestamp.to_string().starts_with("2000")).collect();
    let config = project(dir.path(), &docs, FAST_HDP);
    let o = run(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!dir.path().join("bundle").exists());
}

#[test]
fn default_config_round_trips() {
    let o = run(&["run", "--print-default-config"]);
    assert!(o.status.success());
    let cfg = RunConfig::parse(&stdout(&o), Path::new("default.toml")).unwrap();
    cfg.analysis().validate().unwrap();
    assert_eq!(cfg.hdp, Default::default());
}

#[test]
fn run_writes_bundle_and_reports_progress() {
    let bundle = fitted().join("bundle");
    for f in ["manifest.json", "epochs.json", "events.json", "vocabulary.json", "graphs/bhattacharyya.json", "models/epoch-2.json"] {
        assert!(bundle.join(f).is_file(), "{f}");
    }
    assert_eq!(topic_counts(&bundle).len(), 3);
}

#[test]
fn rerun_is_deterministic_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let config = project(dir.path(), &three_epoch_corpus(4), FAST_HDP);
    let first = run_project(&config);
    let h1 = manifest_hash(&dir.path().join("bundle"));
    assert_eq!(stdout(&first).trim(), h1);
    assert!(stderr(&first).contains("partitioned into 3 epochs"));
    run_project(&config);
    assert_eq!(manifest_hash(&dir.path().join("bundle")), h1);

    let o = run(&["run", "--config", config.to_str().unwrap(), "--seed", "99", "--jobs", "2"]);
    assert!(o.status.success());
    let h3 = manifest_hash(&dir.path().join("bundle"));
    assert_ne!(h3, h1);
    let o = run(&["run", "--config", config.to_str().unwrap(), "--seed", "99"]);
    assert!(o.status.success());
    assert_eq!(manifest_hash(&dir.path().join("bundle")), h3);
}

#[test]
fn export_scatter_and_overlap_row_counts() {
    let bundle = fitted().join("bundle");
    let out = tempfile::tempdir().unwrap();
    let k = topic_counts(&bundle);
    let pairs: usize = k.windows(2).map(|w| w[0] * w[1]).sum();

    let scatter = out.path().join("scatter.csv");
    let o = run(&["export", "--bundle", bundle.to_str().unwrap(), "--what", "scatter", "--out", scatter.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&scatter).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bc,kld_forward,kld_backward"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), pairs);
    assert!(rows.iter().all(|r| r.len() == 3 && (0.0..=1.0 + 1e-12).contains(&r[0]) && r[1] >= 0.0 && r[2] >= 0.0));

    let overlap = out.path().join("overlap.csv");
    for measure in [None, Some("kld_backward")] {
        let mut args = vec!["export", "--bundle", bundle.to_str().unwrap(), "--what", "overlap", "--out", overlap.to_str().unwrap()];
        args.extend(measure.iter().flat_map(|m| ["--measure", *m]));
        let o = run(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = std::fs::read_to_string(&overlap).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch_pair,bhd_edges,kld_edges,shared,bhd_norm,kld_norm");
        assert_eq!(&lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect::<Vec<_>>(), &["0-1", "1-2"]);
    }
}

#[test]
fn export_graph_nested_under_zeta() {
    let bundle = fitted().join("bundle");
    let out = tempfile::tempdir().unwrap();
    let export = |zeta: &str, measure: &str| {
        let path = out.path().join(format!("graph-{measure}-{zeta}.json"));
        let o = run(&[
            "export", "--bundle", bundle.to_str().unwrap(), "--what", "graph", "--out", path.to_str().unwrap(), "--zeta", zeta, "--measure", measure,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        read_json(&path)
    };
    for measure in ["bhattacharyya", "kld_forward", "kld_backward"] {
        let hi = export("0.8", measure);
        let lo = export("0.2", measure);
        let all = export("0", measure);
        assert_eq!(hi["measure"], measure);
        assert_eq!(hi["zeta"], 0.8);
        let (hi, lo, all) = (surviving_edges(&hi), surviving_edges(&lo), surviving_edges(&all));
        assert!(hi.is_subset(&lo), "{measure}");
        assert!(hi.len() < lo.len(), "{measure}");
        assert_eq!(all.len(), export("0", measure)["edges"].as_array().unwrap().len());
    }
}

#[test]
fn export_events_matches_bundle() {
    let bundle = fitted().join("bundle");
    let out = tempfile::tempdir().unwrap();
    let path = out.path().join("events.json");
    let o = run(&["export", "--bundle", bundle.to_str().unwrap(), "--what", "events", "--out", path.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(read_json(&path), read_json(&bundle.join("events.json")));
    let events = read_json(&path);
    let total: usize = topic_counts(&bundle).iter().sum();
    assert_eq!(events.as_array().unwrap().len(), total);
}

#[test]
fn export_failures_exit_1() {
    let bundle = fitted().join("bundle");
    let out = tempfile::tempdir().unwrap();
    let o = run(&["export", "--bundle", out.path().join("nope").to_str().unwrap(), "--what", "events", "--out", out.path().join("e.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope"));
    let o = run(&["export", "--bundle", bundle.to_str().unwrap(), "--what", "events", "--out", out.path().join("missing/dir/e.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing/dir/e.json"));
    let o = run(&["export", "--bundle", bundle.to_str().unwrap(), "--what", "graph", "--zeta", "2", "--out", out.path().join("g.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reprune_rewrites_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let config = project(dir.path(), &three_epoch_corpus(6), FAST_HDP);
    run_project(&config);
    let bundle = dir.path().join("bundle");
    let before = manifest_hash(&bundle);
    let total = read_json(&bundle.join("graphs/kld_forward.json"))["edges"].as_array().unwrap().len();

    let o = run(&["reprune", "--bundle", bundle.to_str().unwrap(), "--measure", "kld_forward", "--zeta", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains(&format!("surviving_edges={total}")));
    let g = read_json(&bundle.join("graphs/kld_forward.json"));
    assert_eq!(g["zeta"], 0.0);
    assert_eq!(surviving_edges(&g).len(), total);
    let after = manifest_hash(&bundle);
    assert_ne!(after, before);
    assert!(stdout(&o).contains(&format!("content_hash={after}")));
    let m = read_json(&bundle.join("manifest.json"));
    assert_eq!(m["config"]["zeta"]["kld_forward"], 0.0);

    let o = run(&["reprune", "--bundle", bundle.to_str().unwrap(), "--measure", "kld_forward", "--zeta", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["reprune", "--bundle", bundle.to_str().unwrap(), "--measure", "cosine", "--zeta", "0.5"]);
    assert_eq!(o.status.code(), Some(2), "clap usage errors exit 2");
    assert_eq!(manifest_hash(&bundle), after);
}

fn http_get(port: u16, path: &str) -> (u16, String) {
    let mut s = TcpStream::connect(("127.0.0.1", port)).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
    let mut text = String::new();
    s.read_to_string(&mut text).unwrap();
    let (head, body) = text.split_once("\r\n\r\n").unwrap();
    let status = head.split(' ').nth(1).unwrap().parse().unwrap();
    (status, body.to_owned())
}

#[test]
fn serve_answers_and_stops_on_interrupt() {
    let bundle = fitted().join("bundle");
    let mut child = bin()
        .args(["serve", "--bundle", bundle.to_str().unwrap(), "--port", "0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut err = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    err.read_line(&mut line).unwrap();
    let port: u16 = line.trim().rsplit(':').next().unwrap().trim_end_matches("/api/v1").parse().expect(&line);

    let (status, body) = http_get(port, "/api/v1/health");
    assert_eq!(status, 200);
    let health: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(health["bundle_hash"].as_str().unwrap(), manifest_hash(&bundle));

    let (status, body) = http_get(port, "/api/v1/epochs");
    assert_eq!(status, 200);
    let served: Value = serde_json::from_str(&body).unwrap();
    let stored = read_json(&bundle.join("epochs.json"));
    assert_eq!(served.as_array().unwrap().len(), stored.as_array().unwrap().len());
    for (a, b) in served.as_array().unwrap().iter().zip(stored.as_array().unwrap()) {
        assert_eq!(a["index"], b["index"]);
        assert_eq!(a["start"], b["start"]);
        assert_eq!(a["end"], b["end"]);
        assert_eq!(a["document_count"].as_u64().unwrap() as usize, b["document_ids"].as_array().unwrap().len());
    }

    // a second server cannot take the same port
    let o = run(&["serve", "--bundle", bundle.to_str().unwrap(), "--port", &port.to_string()]);
    assert_eq!(o.status.code(), Some(1));

    let sent = Instant::now();
    unsafe { libc::kill(child.id() as libc::pid_t, libc::SIGINT) };
    let status = loop {
        if let Some(s) = child.try_wait().unwrap() {
            break s;
        }
        assert!(sent.elapsed() < Duration::from_secs(5), "server still running 5 s after SIGINT");
        std::thread::sleep(Duration::from_millis(20));
    };
    assert_eq!(status.code(), Some(0));
}

#[test]
fn serve_rejects_unreadable_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["serve", "--bundle", dir.path().to_str().unwrap(), "--port", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn demo_config_runs() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo");
    let dir = tempfile::tempdir().unwrap();
    for f in ["config.toml", "corpus.jsonl"] {
        std::fs::copy(root.join(f), dir.path().join(f)).unwrap();
    }
    let start = Instant::now();
    let o = run(&["run", "--config", dir.path().join("config.toml").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(start.elapsed() < Duration::from_secs(300));
    assert!(stderr(&o).contains("loaded 200 documents"));
    assert_eq!(manifest_hash(&dir.path().join("bundle")), stdout(&o).trim());
}
