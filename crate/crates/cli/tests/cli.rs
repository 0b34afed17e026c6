//! End-to-end behavior of the `mmpt` binary: exit codes, reproducibility and
//! config-file precedence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mmpt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmpt")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn corpus() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data/toy_corpus.smi")
        .to_string_lossy()
        .into_owned()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn version_and_usage() {
    let out = mmpt(&["--version"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("0.1.0 (checkpoint format 1)"));
    assert_eq!(code(&mmpt(&[])), 64);
    assert_eq!(code(&mmpt(&["mine", "--bogus"])), 64);
    assert_eq!(code(&mmpt(&["--threads", "0", "mine", "--input", "x", "--out", "y"])), 64);
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmpt(&["mine", "--input", &path(dir.path(), "none.smi"), "--out", &path(dir.path(), "p.tsv")]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn corpus_without_pairs_is_empty_result() {
    let dir = tempfile::tempdir().unwrap();
    let input = path(dir.path(), "two.smi");
    fs::write(&input, "CCO\nc1ccccc1\n").unwrap();
    assert_eq!(code(&mmpt(&["mine", "--input", &input, "--out", &path(dir.path(), "p.tsv")])), 3);
}

#[test]
fn bad_constraints_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "p.tsv");
    assert_eq!(code(&mmpt(&["mine", "--input", &corpus(), "--out", &out, "--max-ratio", "1.5"])), 64);
    assert_eq!(code(&mmpt(&["mine", "--input", &corpus(), "--out", &out, "--per-rule-cap", "0"])), 64);
}

#[test]
fn mining_is_reproducible_and_config_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = corpus();
    let run = |name: &str, extra: &[&str]| -> Vec<u8> {
        let out = path(dir.path(), name);
        let mut args = vec!["mine", "--input", &corpus[..], "--out", &out];
        args.extend_from_slice(extra);
        let status = mmpt(&args);
        assert_eq!(code(&status), 0, "{}", String::from_utf8_lossy(&status.stderr));
        fs::read(&out).unwrap()
    };
    let a = run("a.tsv", &["--sample", "300", "--seed", "2"]);
    assert_eq!(a, run("b.tsv", &["--sample", "300", "--seed", "2"]));
    assert_ne!(a, run("c.tsv", &["--sample", "300", "--seed", "1"]));
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 301);

    let cfg = path(dir.path(), "run.cfg");
    fs::write(&cfg, "# sampling\nsample = 300\nseed=1\n").unwrap();
    let from_config = run("d.tsv", &["--config", &cfg]);
    assert_eq!(from_config, run("e.tsv", &["--sample", "300", "--seed", "1"]));
    assert_eq!(a, run("f.tsv", &["--config", &cfg, "--seed", "2"]));

    fs::write(&cfg, "no equals sign\n").unwrap();
    assert_eq!(code(&mmpt(&["mine", "--config", &cfg, "--input", &corpus, "--out", &path(dir.path(), "g.tsv")])), 64);
}

#[test]
fn split_errors() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = path(dir.path(), "p.tsv");
    assert_eq!(code(&mmpt(&["mine", "--input", &corpus(), "--out", &pairs, "--sample", "40"])), 0);
    let prefix = path(dir.path(), "s");
    assert_eq!(code(&mmpt(&["split", "--pairs", &pairs, "--out-prefix", &prefix, "--ratios", "0.5,0.5"])), 64);
    assert_eq!(code(&mmpt(&["split", "--pairs", &pairs, "--out-prefix", &prefix, "--ratios", "0.9,0.2,0.1"])), 64);
    // a handful of sources cannot fill a 98/1/1 split
    assert_eq!(code(&mmpt(&["split", "--pairs", &pairs, "--out-prefix", &prefix, "--ratios", "0.98,0.01,0.01"])), 4);
    assert_eq!(code(&mmpt(&["split", "--pairs", &path(dir.path(), "none.tsv"), "--out-prefix", &prefix])), 2);
}

/// Mines a small sample, splits it and trains a tiny model for one epoch.
fn tiny_checkpoint(dir: &Path) -> PathBuf {
    let pairs = path(dir, "p.tsv");
    assert_eq!(code(&mmpt(&["mine", "--input", &corpus(), "--out", &pairs, "--sample", "400"])), 0);
    let prefix = path(dir, "s");
    assert_eq!(code(&mmpt(&["split", "--pairs", &pairs, "--out-prefix", &prefix])), 0);
    let ckpt = path(dir, "m.ckpt");
    let out = mmpt(&[
        "train", "--train", &format!("{prefix}.train.tsv"), "--valid", &format!("{prefix}.valid.tsv"),
        "--out-ckpt", &ckpt, "--d-model", "16", "--heads", "2", "--encoder-layers", "1", "--decoder-layers", "1",
        "--d-ffn", "32", "--max-epochs", "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(ckpt)
}

#[test]
fn train_generate_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path());
    let ck = ckpt.to_str().unwrap();
    let log = fs::read_to_string(format!("{ck}.log")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,train_loss,valid_loss"));
    assert_eq!(log.lines().count(), 2);

    let gen = mmpt(&["generate", "--ckpt", ck, "--source", "Oc1ccc(Cl)cc1", "--k", "3", "--beam", "5"]);
    assert_eq!(code(&gen), 0, "{}", String::from_utf8_lossy(&gen.stderr));
    let text = String::from_utf8_lossy(&gen.stdout);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("source\trank\tscore\tsmirks\tproducts"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty() && rows.len() <= 3);
    assert!(rows.iter().all(|r| r.split('\t').count() == 5));

    // the fragment must be present
    let missing = mmpt(&["generate", "--ckpt", ck, "--source", "Oc1ccccc1", "--replace", "[*:1]Br", "--beam", "4", "--k", "4"]);
    assert_eq!(code(&missing), 5);
    assert_eq!(code(&mmpt(&["generate", "--ckpt", ck, "--source", "Oc1ccccc1", "--beam", "2", "--k", "3"])), 64);
    assert_eq!(code(&mmpt(&["generate", "--ckpt", &path(dir.path(), "none.ckpt"), "--source", "C"])), 2);

    let csv = path(dir.path(), "eval.csv");
    let test = path(dir.path(), "s.test.tsv");
    let out = mmpt(&["eval", "--ckpt", ck, "--test", &test, "--ks", "1,2", "--beam", "4", "--limit", "3", "--out", &csv]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(&csv).unwrap();
    assert!(report.lines().any(|l| l.starts_with("# exist_universe=")));
    let rows: Vec<&str> = report.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "k,percent_valid,percent_exist");
    assert_eq!(rows.len(), 3);
    assert_eq!(code(&mmpt(&["eval", "--ckpt", ck, "--test", &test, "--ks", "5,2", "--beam", "6"])), 64);
    assert_eq!(code(&mmpt(&["eval", "--ckpt", ck, "--test", &test, "--ks", "1,10", "--beam", "4"])), 64);

    let sweep = mmpt(&["sweep", "--ckpt", ck, "--subset", &test, "--ks", "1,2,4", "--limit", "2"]);
    assert_eq!(code(&sweep), 0, "{}", String::from_utf8_lossy(&sweep.stderr));
    let text = String::from_utf8_lossy(&sweep.stdout);
    let rows: Vec<Vec<usize>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.windows(2).all(|w| w[0][1] <= w[1][1] && w[0][2] <= w[1][2]));

    // resuming continues the epoch count and appends to the log
    let train = path(dir.path(), "s.train.tsv");
    let valid = path(dir.path(), "s.valid.tsv");
    let resumed = mmpt(&["train", "--train", &train, "--valid", &valid, "--out-ckpt", ck, "--resume", ck, "--max-epochs", "2"]);
    assert_eq!(code(&resumed), 0, "{}", String::from_utf8_lossy(&resumed.stderr));
    let log = fs::read_to_string(format!("{ck}.log")).unwrap();
    assert_eq!(log.lines().last().unwrap().split(',').next(), Some("2"));
    let clash = mmpt(&["train", "--train", &train, "--valid", &valid, "--out-ckpt", ck, "--resume", ck, "--d-model", "32"]);
    assert_eq!(code(&clash), 64);
}

#[test]
fn external_predictions_need_no_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let known = path(dir.path(), "known.tsv");
    fs::write(&known, "source\ttarget\tsmirks\tcore\nOc1ccccc1\tNc1ccccc1\t[*:1]O>>[*:1]N\t[*:1]c1ccccc1\n").unwrap();
    let preds = path(dir.path(), "preds.tsv");
    fs::write(&preds, "source\trank\tprediction\nOc1ccccc1\t1\tNc1ccccc1\nOc1ccccc1\t2\t[*:1]O>>[*:1]F\n").unwrap();
    let out = mmpt(&["eval", "--test", &known, "--predictions", &preds, "--ks", "1,2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows, ["k,percent_valid,percent_exist", "1,1.000000,1.000000", "2,1.000000,0.500000"]);

    fs::write(&preds, "Oc1ccccc1\tfirst\tC\n").unwrap();
    assert_eq!(code(&mmpt(&["eval", "--test", &known, "--predictions", &preds])), 2);
    assert_eq!(code(&mmpt(&["eval", "--test", &known])), 64);
}
