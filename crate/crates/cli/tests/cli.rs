use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

fn syllab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_syllab")).args(args).output().expect("run syllab")
}

fn syllab_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_syllab"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn syllab");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn stats_on_three_words() {
    let tmp = TempDir::new().unwrap();
    let corpus = tmp.path().join("c.txt");
    fs::write(&corpus, "ke pe\nchü ü mo -u\na\n").unwrap();
    let out = tmp.path().join("stats");
    ok(&syllab(&["stats", "--corpus", p(&corpus), "--out", p(&out)]));
    let cv = fs::read_to_string(out.join("cv_histogram.csv")).unwrap();
    assert_eq!(cv, "template,count\nCV,3\nV,3\nCCV,1\n");
    let top = fs::read_to_string(out.join("top_syllables.csv")).unwrap();
    assert!(top.starts_with("rank,syllable,count\n1,-u,1\n"));
    let pos = fs::read_to_string(out.join("positional_histogram.csv")).unwrap();
    assert!(pos.contains("beginning,CV,1\n") && pos.contains("end,V,1\n"));
    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["word_count"], 3);
    assert_eq!(stats["syllable_count"], 7);
    assert_eq!(manifest(&out)["command"], "stats");
}

#[test]
fn invalid_character_exits_with_validation_code() {
    let tmp = TempDir::new().unwrap();
    let corpus = tmp.path().join("c.txt");
    fs::write(&corpus, "ke pe\nk3 a\n").unwrap();
    let out = syllab(&["stats", "--corpus", p(&corpus), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let missing = syllab(&["stats", "--corpus", p(&tmp.path().join("none.txt")), "--out", p(tmp.path())]);
    assert_eq!(missing.status.code(), Some(1));
    let bad_model = syllab(&["train", "--model", "gpt", "--corpus", p(&corpus), "--out", p(tmp.path())]);
    assert_eq!(bad_model.status.code(), Some(2));
}

#[test]
fn synth_then_split_sizes() {
    let tmp = TempDir::new().unwrap();
    let synth = tmp.path().join("synth");
    ok(&syllab(&["synth", "--words", "200", "--seed", "4", "--out", p(&synth)]));
    let corpus = synth.join("corpus.txt");
    assert_eq!(fs::read_to_string(&corpus).unwrap().lines().count(), 200);
    assert_eq!(manifest(&synth)["seed"], 4);
    let parts = tmp.path().join("split");
    let stdout = ok(&syllab(&["split", "--corpus", p(&corpus), "--split", "80:10:10", "--out", p(&parts)]));
    assert!(stdout.contains("train 160 / valid 20 / test 20"));
    for (name, n) in [("train", 160), ("valid", 20), ("test", 20)] {
        assert_eq!(fs::read_to_string(parts.join(format!("{name}.txt"))).unwrap().lines().count(), n);
    }
}

#[test]
fn train_is_reproducible_and_syllabify_round_trips() {
    let tmp = TempDir::new().unwrap();
    let synth = tmp.path().join("synth");
    ok(&syllab(&["synth", "--words", "120", "--seed", "1", "--out", p(&synth)]));
    let corpus = synth.join("corpus.txt");
    let train = |dir: &Path| {
        ok(&syllab(&[
            "train", "--model", "blstm-crf", "--corpus", p(&corpus), "--epochs", "2", "--embedding-dim", "6",
            "--hidden-dim", "6", "--seed", "9", "--out", p(dir),
        ]))
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(train(&a).contains("test word accuracy"));
    train(&b);
    let metrics = fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(metrics, fs::read(b.join("metrics.csv")).unwrap());
    assert!(String::from_utf8(metrics).unwrap().starts_with("epoch,train_loss,train_acc,valid_loss,valid_acc\n"));
    assert_eq!(manifest(&a)["config"]["train"]["batch_size"], 128);

    let ckpt = a.join("model.ckpt");
    let stdout = ok(&syllab_stdin(&["syllabify", "--checkpoint", p(&ckpt)], "tenyidie\na\n\nchüümo-u\n"));
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], "a");
    let reparsed = syllab_core::corpus::parse_corpus(&stdout).unwrap();
    assert_eq!(reparsed[2].surface(), "chüümo-u");
    assert_eq!(ok(&syllab_stdin(&["syllabify", "--checkpoint", p(&ckpt)], "")), "");

    let eval = tmp.path().join("eval");
    ok(&syllab(&["eval", "--checkpoint", p(&ckpt), "--corpus", p(&a.join("test.txt")), "--out", p(&eval)]));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    let (correct, total) = (report["correct"].as_u64().unwrap(), report["total"].as_u64().unwrap());
    assert_eq!(total, 12);
    let errors = fs::read_to_string(eval.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count() as u64 - 1, total - correct);
}

#[test]
fn baseline_sentinel_and_comparison() {
    let tmp = TempDir::new().unwrap();
    let corpus = tmp.path().join("c.txt");
    let words = ["ke pe", "te nyi die", "she so u", "ke vi -e", "a", "me chü u -e", "ke pe ke", "nyi a", "die pe", "so u"];
    fs::write(&corpus, words.join("\n")).unwrap();
    let base = tmp.path().join("base");
    ok(&syllab(&["train", "--model", "baseline", "--corpus", p(&corpus), "--split", "80:10:10", "--out", p(&base)]));
    let inv = base.join("inventory.txt");
    fs::write(&inv, "ke\npe\nte\nnyi\ndie\na\n").unwrap();
    let stdout = ok(&syllab_stdin(&["syllabify", "--checkpoint", p(&inv)], "tenyidie\na\nxyzword\n"));
    assert_eq!(stdout, "te nyi die\na\n?xyzword\n");

    let test = tmp.path().join("test.txt");
    fs::write(&test, "ke pe\nshe so u\n").unwrap();
    let e1 = tmp.path().join("e1");
    ok(&syllab(&["eval", "--checkpoint", p(&inv), "--corpus", p(&test), "--out", p(&e1)]));
    let full = tmp.path().join("full.txt");
    fs::write(&full, "ke\npe\nshe\nso\nu\n").unwrap();
    let e2 = tmp.path().join("e2");
    ok(&syllab(&["eval", "--checkpoint", p(&full), "--corpus", p(&test), "--out", p(&e2)]));
    let mut r2: serde_json::Value = serde_json::from_str(&fs::read_to_string(e2.join("report.json")).unwrap()).unwrap();
    r2["model"] = "full".into();
    fs::write(e2.join("report.json"), r2.to_string()).unwrap();
    let cmp = tmp.path().join("cmp");
    let r1 = e1.join("report.json");
    ok(&syllab(&["compare", p(&r1), p(&e2.join("report.json")), "--out", p(&cmp)]));
    let csv = fs::read_to_string(cmp.join("comparison.csv")).unwrap();
    assert_eq!(csv, "word,parse,actual,baseline,baseline_correct,full,full_correct\nshesou,she+so+u,SCCSCS,,false,SCCSCS,true\n");
    let other = tmp.path().join("other.txt");
    fs::write(&other, "a\n").unwrap();
    let e3 = tmp.path().join("e3");
    ok(&syllab(&["eval", "--checkpoint", p(&inv), "--corpus", p(&other), "--out", p(&e3)]));
    let mismatch = syllab(&["compare", p(&r1), p(&e3.join("report.json")), "--out", p(&cmp)]);
    assert_eq!(mismatch.status.code(), Some(2));
}

#[test]
fn seq2seq_eval_writes_traces() {
    let tmp = TempDir::new().unwrap();
    let synth = tmp.path().join("synth");
    ok(&syllab(&["synth", "--words", "100", "--seed", "2", "--out", p(&synth)]));
    let model = tmp.path().join("s2s");
    ok(&syllab(&[
        "train", "--model", "seq2seq", "--corpus", p(&synth.join("corpus.txt")), "--epochs", "1", "--embedding-dim", "4",
        "--hidden-dim", "4", "--out", p(&model),
    ]));
    assert_eq!(manifest(&model)["config"]["train"]["batch_size"], 16);
    let eval = tmp.path().join("eval");
    ok(&syllab(&[
        "eval", "--checkpoint", p(&model.join("model.ckpt")), "--corpus", p(&model.join("test.txt")), "--out", p(&eval),
        "--traces", "2",
    ]));
    let traces: Vec<_> = fs::read_dir(eval.join("traces")).unwrap().map(|e| e.unwrap().path()).collect();
    assert!(!traces.is_empty() && traces.len() <= 4);
    for t in traces {
        let text = fs::read_to_string(&t).unwrap();
        let mut lines = text.lines();
        let width = lines.next().unwrap().split(',').count();
        for row in lines {
            let cells: Vec<&str> = row.split(',').collect();
            assert_eq!(cells.len(), width);
            let sum: f64 = cells[1..].iter().map(|c| c.parse::<f64>().unwrap()).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}
