use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cpcv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpcv"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.cfg");
    let text = format!(
        "corpus = {}\nworkdir = {}\n{extra}\n",
        dir.join("corpus").display(),
        dir.join("work").display()
    );
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn show_config_prints_parseable_defaults() {
    let out = cpcv(&["show-config", "--seed", "9"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("seed = 9\n"));
    assert!(text.contains("features = mfcc\n"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("shown.cfg");
    fs::write(&path, &text).unwrap();
    let again = cpcv(&["show-config", "--config", path.to_str().unwrap()]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "features = nope");
    assert_eq!(cpcv(&["eval", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(cpcv(&["no-such-stage"]).status.code(), Some(2));
    assert_eq!(cpcv(&["eval", "--bogus"]).status.code(), Some(2));
    assert_eq!(cpcv(&["eval", "--config", "/nonexistent.cfg"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = cpcv(&["score", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pool"));
    // No corpus on disk.
    assert_eq!(cpcv(&["ingest", "--config", &cfg]).status.code(), Some(3));
}

#[test]
fn toy_corpus_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let made = cpcv(&["make-toy", "--out", corpus.to_str().unwrap(), "--speakers", "4"]);
    assert!(made.status.success(), "{}", String::from_utf8_lossy(&made.stderr));
    assert!(stdout(&made).contains("wrote 128 utterances"));

    let cfg = write_config(dir.path(), "protocols = 1");
    let out = cpcv(&["run-all", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("mfcc_pool protocol 1"), "{text}");

    let again = cpcv(&["run-all", "--config", &cfg]);
    assert!(stdout(&again).lines().filter(|l| l.contains(" ran ")).count() == 0);
    let single = cpcv(&["eval", "--config", &cfg]);
    assert!(stdout(&single).contains("up to date"));
}

#[test]
fn nce_commands_report() {
    let out = cpcv(&["nce-bound", "--trials", "2"]);
    assert!(out.status.success());
    let csv = stdout(&out);
    assert_eq!(csv.lines().next(), Some("trial,I_true,loss,bound"));
    assert_eq!(csv.lines().count(), 3);

    let fit = cpcv(&["nce-fit", "--samples", "20000"]);
    assert!(fit.status.success());
    assert!(stdout(&fit).starts_with("mean "));
}
