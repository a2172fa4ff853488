use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SPEC: &str = "\
agents = A, B, C
order = 1
transition.A = B:0.7, C:0.3
transition.B = A:0.5, C:0.5
transition.C = A:0.9, B:0.1
topic.A = apple, apricot
topic.B = banana, berry
topic.C = cherry, citrus
dialogues = 30
turns = 12
seed = 5
";

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_turntaking"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn synth_then_stats() {
    let dir = TempDir::new().unwrap();
    let spec = write(dir.path(), "spec.txt", SPEC);
    let out = dir.path().join("corpus.jsonl");
    let o = bin(&["synth", &spec, out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines = fs::read_to_string(&out).unwrap().lines().count();
    assert_eq!(lines, 30);

    let o = bin(&["stats", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("dialogues"));
    assert!(text.contains("next-speaker frequencies"));
}

#[test]
fn synth_same_seed_identical_files() {
    let dir = TempDir::new().unwrap();
    let spec = write(dir.path(), "spec.txt", SPEC);
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let c = dir.path().join("c.jsonl");
    assert_eq!(code(&bin(&["synth", &spec, a.to_str().unwrap()])), 0);
    assert_eq!(code(&bin(&["synth", &spec, b.to_str().unwrap()])), 0);
    assert_eq!(
        code(&bin(&["--seed", "99", "synth", &spec, c.to_str().unwrap()])),
        0
    );
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn synth_bad_row_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let spec = write(
        dir.path(),
        "spec.txt",
        &SPEC.replace("transition.A = B:0.7", "transition.A = B:0.6"),
    );
    let out = dir.path().join("x.jsonl");
    let o = bin(&["synth", &spec, out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn stats_load_failures() {
    let dir = TempDir::new().unwrap();
    let bad = write(
        dir.path(),
        "bad.jsonl",
        "{\"id\":\"d\",\"turns\":[{\"speaker\":\"A\",\"text\":\"hi\"}]}\nnot json\n",
    );
    let o = bin(&["stats", &bad]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let empty = write(dir.path(), "empty.jsonl", "");
    assert_eq!(code(&bin(&["stats", &empty])), 2);
    assert_eq!(code(&bin(&["stats", "/nonexistent/corpus.jsonl"])), 2);
}

#[test]
fn run_minimal_config() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "spec.txt", SPEC);
    let cfg = write(
        dir.path(),
        "exp.txt",
        "synthetic = spec.txt\nmodels = repeat_last\nwindows = 1\nout = report\n",
    );
    let o = bin(&["--quiet", "run", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let jsonl = fs::read_to_string(dir.path().join("report/report.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 1);
    assert!(dir.path().join("report/report.txt").exists());
}

#[test]
fn run_overrides_and_byte_identical_reports() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "spec.txt", SPEC);
    let cfg = write(
        dir.path(),
        "exp.txt",
        "synthetic = spec.txt\nmodels = a_mle, ac_svm, a_cnn\nembedding_dim = 8\n\
         embedding_epochs = 1\ncnn_epochs = 1\nmaxlen = 16\n",
    );
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    for out in [&one, &two] {
        let o = bin(&["--w", "2", "--seed", "3", "--out", out.to_str().unwrap(), "run", &cfg]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("a_mle"));
    }
    let a = fs::read(one.join("report.jsonl")).unwrap();
    assert_eq!(a, fs::read(two.join("report.jsonl")).unwrap());
    // --w 2 replaces the default 1,2
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 3);
}

#[test]
fn run_usage_errors() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "spec.txt", SPEC);
    let unknown = write(
        dir.path(),
        "a.txt",
        "synthetic = spec.txt\nmodels = a_mle, gpt\n",
    );
    let o = bin(&["run", &unknown]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("gpt"));

    let typo = write(dir.path(), "b.txt", "synthetic = spec.txt\nmodel = a_mle\n");
    assert_eq!(code(&bin(&["run", &typo])), 2);

    let ok = write(dir.path(), "c.txt", "synthetic = spec.txt\nmodels = a_mle\n");
    assert_eq!(code(&bin(&["--w", "7", "run", &ok])), 2);
    assert_eq!(code(&bin(&["run"])), 2);
    assert_eq!(code(&bin(&["frobnicate"])), 2);
}
