#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chronotopic::corpus::RawDocument;
use chronotopic::synthetic::{block_topic, text_documents};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chronotopic"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn chronotopic")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn write_corpus(path: &Path, docs: &[RawDocument]) {
    let mut f = std::fs::File::create(path).unwrap();
    for d in docs {
        writeln!(f, "{}", serde_json::to_string(d).unwrap()).unwrap();
    }
}

/// Three yearly epochs of block topics, with one topic appearing in the
/// second year.
pub fn three_epoch_corpus(seed: u64) -> Vec<RawDocument> {
    let v = 24;
    let [a, b, c] = [block_topic(v, 0..8), block_topic(v, 8..16), block_topic(v, 16..24)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    text_documents(&[vec![a.clone(), b.clone()], vec![a.clone(), b.clone(), c.clone()], vec![a, b, c]], 15, 30, &mut rng)
}

pub const FAST_HDP: &str = "[hdp]\niterations = 120\nburn_in = 60\nseed = 5\n";

/// Corpus and config in `dir`; returns the config path. The bundle goes to
/// `dir/bundle`.
pub fn project(dir: &Path, docs: &[RawDocument], extra: &str) -> PathBuf {
    write_corpus(&dir.join("corpus.jsonl"), docs);
    let config = dir.join("config.toml");
    let text = format!(
        "[paths]\ncorpus = \"corpus.jsonl\"\noutput = \"bundle\"\n\n[epochs]\nlength_months = 12\nmin_documents = 5\n\n[preprocess]\nenergy_fraction = 1.0\n\n{extra}"
    );
    std::fs::write(&config, text).unwrap();
    config
}

pub fn run_project(config: &Path) -> Output {
    let o = run(&["run", "--config", config.to_str().unwrap()]);
    assert!(o.status.success(), "run failed: {}", stderr(&o));
    o
}

pub fn manifest_hash(bundle: &Path) -> String {
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(bundle.join("manifest.json")).unwrap()).unwrap();
    m["content_hash"].as_str().unwrap().to_owned()
}
