use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_maxent-cluster");

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic.txt")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn maxent-cluster")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(text: &str, key: &str) -> f64 {
    let prefix = format!("{key}=");
    text.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in {text:?}"))
        .parse()
        .unwrap()
}

fn train(dir: &TempDir, name: &str, extra: &[&str]) -> (Output, PathBuf) {
    let model = dir.path().join(name);
    let c = corpus();
    let mut args = vec!["train", "--corpus", c.to_str().unwrap(), "--model", model.to_str().unwrap()];
    args.extend_from_slice(extra);
    (run(&args), model)
}

#[test]
fn train_converges_and_writes_artifacts() {
    let dir = TempDir::new().unwrap();
    let (out, model) = train(&dir, "m.model", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("converged=true"));
    assert!(model.exists());
    let manifest = std::fs::read_to_string(dir.path().join("m.model.manifest")).unwrap();
    for key in ["version=", "corpus_sha256=", "seed=7", "algorithm=iis", "bigram_min_count=3", "converged=true"] {
        assert!(manifest.contains(key), "{key} missing from manifest");
    }
    let diag = std::fs::read_to_string(dir.path().join("m.model.diag")).unwrap();
    assert!(diag.lines().next().unwrap().starts_with("iter=0 ll="));
}

#[test]
fn forced_non_convergence_exits_2_and_still_saves() {
    let dir = TempDir::new().unwrap();
    let (out, model) = train(&dir, "m.model", &["--max-iters", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(model.exists());
    assert!(dir.path().join("m.model.manifest").exists());
}

#[test]
fn missing_corpus_exits_1_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("no-such-corpus.txt");
    let out = run(&["train", "--corpus", missing.to_str().unwrap(), "--model", "unused.model"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-corpus.txt"));
    assert!(!Path::new("unused.model").exists());
}

#[test]
fn eval_reports_perplexity_below_vocabulary_size() {
    let dir = TempDir::new().unwrap();
    let (_, model) = train(&dir, "m.model", &[]);
    let c = corpus();
    let out = run(&["eval", "--model", model.to_str().unwrap(), "--corpus", c.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("mixture=true-topic\n"));
    let ppl = field(&text, "ppl");
    assert!(ppl > 1.0 && ppl < 50.0, "{ppl}");
}

#[test]
fn untrained_model_has_perplexity_v() {
    let dir = TempDir::new().unwrap();
    let (out, model) = train(&dir, "z.model", &["--init-only"]);
    assert_eq!(out.status.code(), Some(0));
    let c = corpus();
    let out = run(&["eval", "--model", model.to_str().unwrap(), "--corpus", c.to_str().unwrap()]);
    assert_eq!(field(&stdout(&out), "ppl"), 50.0);
}

#[test]
fn uniform_mixture_is_labeled() {
    let dir = TempDir::new().unwrap();
    let (_, model) = train(&dir, "m.model", &[]);
    let c = corpus();
    let out = run(&["eval", "--model", model.to_str().unwrap(), "--corpus", c.to_str().unwrap(), "--mixture", "uniform"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("mixture=uniform\n"), "{text}");
    assert!(field(&text, "ppl") > 1.0);
}

#[test]
fn eval_rejects_topics_the_model_does_not_know() {
    let dir = TempDir::new().unwrap();
    let (_, model) = train(&dir, "m.model", &[]);
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "9\tw01 w02\n").unwrap();
    let out = run(&["eval", "--model", model.to_str().unwrap(), "--corpus", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gis_trains_with_slack() {
    let dir = TempDir::new().unwrap();
    let (out, model) = train(&dir, "g.model", &["--algorithm", "gis", "--max-iters", "5"]);
    assert_eq!(out.status.code(), Some(2));
    let manifest = std::fs::read_to_string(dir.path().join("g.model.manifest")).unwrap();
    assert!(manifest.contains("slack=true"));
    let out = run(&["inspect", "--model", model.to_str().unwrap()]);
    assert!(stdout(&out).contains("slack=true"));
}

const SMALL: [&str; 12] = [
    "--vocab", "1000", "--topics", "5", "--topic-words", "30", "--predecessors", "50", "--successors", "20",
    "--topics-per-prev", "2",
];

#[test]
fn bench_prints_both_engines_and_speedup() {
    let mut args = vec!["bench"];
    args.extend_from_slice(&SMALL);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let timing: Vec<&str> = text.lines().filter(|l| l.starts_with("engine=")).collect();
    assert_eq!(timing.len(), 4, "{text}");
    assert!(timing[0].starts_with("engine=d phase=z seconds="));
    assert!(timing[3].starts_with("engine=c phase=coef seconds="));
    assert!(field(&text, "speedup") > 0.0);
}

#[test]
fn bench_engine_only_skips_speedup() {
    let mut args = vec!["bench", "--engine-only", "cluster"];
    args.extend_from_slice(&SMALL);
    let text = stdout(&run(&args));
    assert!(text.lines().filter(|l| l.starts_with("engine=")).all(|l| l.starts_with("engine=c ")));
    assert!(text.contains("engine=c phase=z"));
    assert!(!text.contains("speedup="));
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (a, ma) = train(&dir, "a.model", &["--deterministic", "--max-iters", "40"]);
    let (b, mb) = train(&dir, "b.model", &["--deterministic", "--max-iters", "40"]);
    assert_eq!(a.status.code(), b.status.code());
    assert_eq!(std::fs::read(&ma).unwrap(), std::fs::read(&mb).unwrap());
    let diag = |m: &Path| std::fs::read(format!("{}.diag", m.display())).unwrap();
    assert_eq!(diag(&ma), diag(&mb));
    assert!(String::from_utf8(diag(&ma)).unwrap().lines().all(|l| l.ends_with("secs=0")));
}

#[test]
fn thread_count_does_not_change_the_model() {
    let dir = TempDir::new().unwrap();
    let (_, one) = train(&dir, "one.model", &["--deterministic", "--max-iters", "20"]);
    let (_, four) = train(&dir, "four.model", &["--deterministic", "--threads", "4", "--max-iters", "20"]);
    assert_eq!(std::fs::read(one).unwrap(), std::fs::read(four).unwrap());
}

#[test]
fn synth_reproduces_the_bundled_corpus() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("s.txt");
    let out = run(&["synth", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(out_path).unwrap(), std::fs::read(corpus()).unwrap());
    let out_path = dir.path().join("t.txt");
    run(&["--seed", "8", "synth", "--out", out_path.to_str().unwrap()]);
    assert_ne!(std::fs::read(out_path).unwrap(), std::fs::read(corpus()).unwrap());
}
