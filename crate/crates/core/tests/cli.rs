mod common;

use std::io::Write;
use std::process::{Command, Output, Stdio};

use common::fixture;

fn lowres(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_lowres-mt"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(rel: &str) -> String {
    fixture(rel).to_str().unwrap().to_owned()
}

#[test]
fn every_subcommand_has_help() {
    for sub in ["train-tokenizer", "encode", "decode", "bleu", "attention-bench", "pipeline"] {
        let o = lowres(&[sub, "--help"], "");
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
    assert_eq!(lowres(&[], "").status.code(), Some(1));
}

#[test]
fn training_reproduces_the_golden_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.model");
    let o = lowres(
        &[
            "train-tokenizer",
            "--input",
            &path("tokenizer/corpus.txt"),
            "--vocab-size",
            "40",
            "--output",
            out.to_str().unwrap(),
        ],
        "",
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "tokens=40 merges=23\n");
    let golden = std::fs::read_to_string(fixture("tokenizer/golden.model")).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), golden);
}

#[test]
fn encode_and_decode_match_golden_ids() {
    let model = path("tokenizer/golden.model");
    let text = std::fs::read_to_string(fixture("tokenizer/golden.txt")).unwrap();
    let ids = std::fs::read_to_string(fixture("tokenizer/golden.ids")).unwrap();
    let o = lowres(&["encode", "--model", &model, "--bos-eos"], &text);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), ids);
    let o = lowres(&["decode", "--model", &model], &ids);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), text);
}

#[test]
fn decode_rejects_bad_ids() {
    let model = path("tokenizer/golden.model");
    let o = lowres(&["decode", "--model", &model], "5 6\n5 99999\n");
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 2") && err.contains("99999"), "{err}");

    let o = lowres(&["decode", "--model", &model], "5 x\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("position 1"));
}

#[test]
fn malformed_model_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.model");
    std::fs::write(&bad, "not a model\n").unwrap();
    let o = lowres(&["encode", "--model", bad.to_str().unwrap()], "abc\n");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn vocab_size_zero_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    let o = lowres(
        &["train-tokenizer", "--input", &path("tokenizer/corpus.txt"), "--vocab-size", "0", "--output", out.to_str().unwrap()],
        "",
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn bleu_prints_score_then_json() {
    let dir = tempfile::tempdir().unwrap();
    let cand = dir.path().join("cand");
    let reference = dir.path().join("ref");
    std::fs::write(&cand, "a b c d\n").unwrap();
    std::fs::write(&reference, "a b c d e\n").unwrap();
    let o = lowres(
        &["bleu", "--candidate", cand.to_str().unwrap(), "--reference", reference.to_str().unwrap()],
        "",
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("77.88"));
    let json: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(json["c"], 4);
    assert_eq!(json["r"], 5);
    assert_eq!(json["p1"], serde_json::json!([4, 4]));
}

#[test]
fn bleu_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cand = dir.path().join("cand");
    let reference = dir.path().join("ref");
    std::fs::write(&cand, "a b\nc d\n").unwrap();
    std::fs::write(&reference, "a b\n").unwrap();
    let (c, r) = (cand.to_str().unwrap(), reference.to_str().unwrap());

    let missing = dir.path().join("nope");
    let o = lowres(&["bleu", "--candidate", c, "--reference", missing.to_str().unwrap()], "");
    assert_eq!(o.status.code(), Some(1));

    let o = lowres(&["bleu", "--candidate", c, "--reference", r], "");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mismatch"));

    let o = lowres(&["bleu", "--candidate", c, "--reference", c, "--smoothing", "laplace"], "");
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn attention_bench_is_reproducible_without_timing() {
    let args = ["attention-bench", "--sizes", "8x4,16x8", "--tiles", "2x2,4x16", "--no-timing", "--repeats", "1"];
    let a = lowres(&args, "");
    let b = lowres(&args, "");
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let out = stdout(&a);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "kernel,N,d,tile_rows,tile_cols,wall_ns,peak_buffer_elems,max_abs_diff");
    assert_eq!(lines.len(), 1 + 2 * 3);
    let tiled: Vec<&str> = lines.iter().filter(|l| l.starts_with("tiled,")).copied().collect();
    assert_eq!(tiled.len(), 4);
    for line in tiled {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[5], "0");
        let peak: usize = cols[6].parse().unwrap();
        let tr: usize = cols[3].parse().unwrap();
        let tc: usize = cols[4].parse().unwrap();
        assert!(peak <= tr * tc);
        assert!(cols[7].parse::<f64>().unwrap() <= 1e-10);
    }
}

#[test]
fn attention_bench_rejects_bad_sizes() {
    assert_eq!(lowres(&["attention-bench", "--sizes", "64"], "").status.code(), Some(1));
    assert_eq!(lowres(&["attention-bench", "--tiles", "0x4"], "").status.code(), Some(1));
}

fn pipeline_args<'a>(config: &'a str, report: &'a str) -> Vec<String> {
    let mut v: Vec<String> = vec!["pipeline".into(), "--config".into(), config.into()];
    for (flag, rel) in [
        ("--source", "pipeline/train.src"),
        ("--target", "pipeline/train.tgt"),
        ("--mono-source", "pipeline/mono.src"),
        ("--mono-target", "pipeline/mono.tgt"),
        ("--test-source", "pipeline/test.src"),
        ("--test-target", "pipeline/test.tgt"),
    ] {
        v.push(flag.into());
        v.push(path(rel));
    }
    v.push("--report".into());
    v.push(report.into());
    v
}

#[test]
fn pipeline_reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = path("pipeline/toy.conf");
    let mut outputs = Vec::new();
    for name in ["a.jsonl", "b.jsonl"] {
        let report = dir.path().join(name);
        let args = pipeline_args(&config, report.to_str().unwrap());
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = lowres(&args, "");
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push(std::fs::read(&report).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    let sizes: Vec<u64> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["train_size"].as_u64().unwrap())
        .collect();
    assert_eq!(sizes, [40, 60]);
}

#[test]
fn pipeline_unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.conf");
    std::fs::write(&config, "iterations = 1\nlearning_rate = 0.1\n").unwrap();
    let report = dir.path().join("r.jsonl");
    let args = pipeline_args(config.to_str().unwrap(), report.to_str().unwrap());
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = lowres(&args, "");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("learning_rate"));
}

#[test]
fn pipeline_missing_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.jsonl");
    let mut args = pipeline_args(&path("pipeline/toy.conf"), report.to_str().unwrap());
    let missing = dir.path().join("missing.src");
    args[4] = missing.to_str().unwrap().to_owned();
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(lowres(&args, "").status.code(), Some(2));
}
