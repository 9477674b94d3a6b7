use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use taas_core::corpus::{TopicVocabulary, SPECIAL_TOKENS};
use taas_core::seq2seq::TaasModel;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn taas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taas")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SMALL: [&str; 8] = [
    "hidden=16",
    "ffn_width=32",
    "encoder_layers=1",
    "decoder_layers=1",
    "ntm_hidden=8",
    "ntm_pretrain_epochs=3",
    "learning_rate=0.003",
    "max_summary_len=12",
];

/// Trains on the tiny fixture into `dir` and returns the exit status.
fn train_tiny(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train".to_string(), "--quiet".into()];
    let sets = [
        format!("train_path={}", fixture("tiny.jsonl").display()),
        format!("output_dir={}", dir.display()),
    ];
    for s in sets.iter().map(String::as_str).chain(SMALL).chain(extra.iter().copied()) {
        args.push("--set".into());
        args.push(s.to_string());
    }
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    taas(&args)
}

fn trained(extra: &[&str]) -> (TempDir, PathBuf) {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    let out = train_tiny(&run, extra);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    (tmp, run)
}

fn read_jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_corpus_path_is_a_named_validation_error() {
    let tmp = TempDir::new().unwrap();
    let out = taas(&["train", "--set", &format!("output_dir={}", tmp.path().display())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("train_path"), "{}", stderr(&out));
    assert!(fs::read_dir(tmp.path()).unwrap().next().is_none());

    let out = taas(&["train", "--set", "train_path=/nonexistent.jsonl", "--set", "output_dir=x"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("train_path"));
}

#[test]
fn invalid_fields_are_rejected_before_any_work() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    for (bad, field) in [
        ("heads=3", "heads"),
        ("epochz=2", "epochz"),
        ("pooling_mode=max", "pooling_mode"),
        ("lambda=2", "lambda"),
    ] {
        let out = train_tiny(&run, &[bad]);
        assert_eq!(code(&out), 1, "{bad}");
        assert!(stderr(&out).contains(field), "{bad}: {}", stderr(&out));
        assert!(!run.exists());
    }
    assert_eq!(code(&taas(&["train", "--set", "no-equals-sign"])), 1);
}

#[test]
fn config_file_with_overrides() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    let run = tmp.path().join("run");
    let mut object = serde_json::json!({
        "train_path": fixture("tiny.jsonl"),
        "output_dir": run,
        "epochs": 7,
        "hidden": 16,
        "ffn_width": 32,
        "ntm_pretrain_epochs": 2,
    });
    fs::write(&cfg, object.to_string()).unwrap();
    let out = taas(&["train", "-q", "--config", path_str(&cfg), "--set", "epochs=2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let snapshot: Value = serde_json::from_str(&fs::read_to_string(run.join("run.json")).unwrap()).unwrap();
    assert_eq!(snapshot["epochs"], 2);
    assert_eq!(snapshot["hidden"], 16);

    object["bogus"] = Value::from(1);
    fs::write(&cfg, object.to_string()).unwrap();
    let out = taas(&["train", "-q", "--config", path_str(&cfg)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("bogus"));
}

#[test]
fn metrics_have_one_training_row_per_epoch() {
    let (_tmp, run) = trained(&["epochs=5"]);
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("epoch,split,l_ntm,l_sum,combined"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.iter().filter(|l| l.split(',').nth(1) == Some("train")).count(), 5);
    assert_eq!(rows.iter().filter(|l| l.split(',').nth(1) == Some("validation")).count(), 5);
    for name in ["model.ckpt", "config.json", "run.json", "vocab.txt", "topic_vocab.txt"] {
        assert!(run.join(name).is_file(), "{name}");
    }
    let vocab = fs::read_to_string(run.join("vocab.txt")).unwrap();
    assert_eq!(vocab.lines().take(5).collect::<Vec<_>>(), SPECIAL_TOKENS);
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let (tmp, a) = trained(&["epochs=2"]);
    let b = tmp.path().join("again");
    assert_eq!(code(&train_tiny(&b, &["epochs=2"])), 0);
    for name in ["model.ckpt", "config.json", "vocab.txt", "topic_vocab.txt", "metrics.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let c = tmp.path().join("other-seed");
    assert_eq!(code(&train_tiny(&c, &["epochs=2", "seed=5"])), 0);
    assert_ne!(fs::read(a.join("model.ckpt")).unwrap(), fs::read(c.join("model.ckpt")).unwrap());
}

#[test]
fn summarize_is_one_to_one_and_repeatable() {
    let (tmp, run) = trained(&["epochs=2"]);
    let input = fixture("tiny.jsonl");
    let before = fs::read(&input).unwrap();
    let outputs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let out_path = tmp.path().join(format!("out{i}.jsonl"));
            let o = taas(&[
                "summarize",
                "--run",
                path_str(&run),
                "--input",
                path_str(&input),
                "--output",
                path_str(&out_path),
                "--beam",
                "2",
            ]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            fs::read(out_path).unwrap()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(fs::read(&input).unwrap(), before);

    let records = read_jsonl(&tmp.path().join("out0.jsonl"));
    let ids: Vec<&str> = records.iter().map(|r| r["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["t1", "t2", "t3", "t4", "t5", "t6", "t7", "t8"]);
    for r in &records {
        assert!(r["summary"].is_string());
        assert!(r["score"].as_f64().unwrap().is_finite());
    }

    let stdout = taas(&["summarize", "--run", path_str(&run), "--input", path_str(&input), "--beam", "2"]);
    assert_eq!(stdout.stdout, outputs[0]);
}

#[test]
fn empty_input_gives_empty_output() {
    let (tmp, run) = trained(&["epochs=1"]);
    let empty = tmp.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let out_path = tmp.path().join("out.jsonl");
    let o = taas(&[
        "summarize",
        "--run",
        path_str(&run),
        "--input",
        path_str(&empty),
        "--output",
        path_str(&out_path),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out_path).unwrap(), "");
}

#[test]
fn attention_dump_reports_the_five_heaviest_tokens() {
    let (tmp, run) = trained(&["epochs=2"]);
    let dump = tmp.path().join("attention.jsonl");
    let o = taas(&[
        "summarize",
        "--run",
        path_str(&run),
        "--input",
        path_str(&fixture("tiny.jsonl")),
        "--output",
        path_str(&tmp.path().join("s.jsonl")),
        "--dump-attention",
        path_str(&dump),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let records = read_jsonl(&dump);
    assert_eq!(records.len(), 8);
    for r in records {
        let tokens: Vec<&str> = r["tokens"].as_array().unwrap().iter().map(|t| t.as_str().unwrap()).collect();
        let alpha: Vec<f64> = r["alpha_hat"].as_array().unwrap().iter().map(|a| a.as_f64().unwrap()).collect();
        assert_eq!(tokens.len(), alpha.len());
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mut order: Vec<usize> = (0..tokens.len()).filter(|&i| !SPECIAL_TOKENS.contains(&tokens[i])).collect();
        order.sort_by(|&a, &b| alpha[b].partial_cmp(&alpha[a]).unwrap().then(a.cmp(&b)));
        let expected: Vec<&str> = order.iter().take(5).map(|&i| tokens[i]).collect();
        let reported: Vec<&str> = r["top"].as_array().unwrap().iter().map(|t| t["token"].as_str().unwrap()).collect();
        assert_eq!(reported, expected);
    }
}

#[test]
fn vocabulary_mismatch_is_refused() {
    let (tmp, run) = trained(&["epochs=1"]);
    let mut vocab = fs::read_to_string(run.join("vocab.txt")).unwrap();
    vocab.push_str("extra-token\n");
    fs::write(run.join("vocab.txt"), vocab).unwrap();
    let o = taas(&[
        "summarize",
        "--run",
        path_str(&run),
        "--input",
        path_str(&fixture("tiny.jsonl")),
        "--output",
        path_str(&tmp.path().join("o.jsonl")),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("vocab.txt"), "{}", stderr(&o));
}

#[test]
fn evaluate_identity_lead3_and_buckets() {
    let tmp = TempDir::new().unwrap();
    let refs = fixture("news_test.jsonl");
    let cands = tmp.path().join("cands.jsonl");
    let copies: Vec<String> = read_jsonl(&refs)
        .iter()
        .map(|r| serde_json::json!({"id": r["id"], "summary": r["summary"]}).to_string())
        .collect();
    fs::write(&cands, copies.join("\n") + "\n").unwrap();
    let csv = tmp.path().join("scores.csv");
    let o = taas(&[
        "evaluate",
        "--references",
        path_str(&refs),
        "--candidates",
        path_str(&cands),
        "--csv",
        path_str(&csv),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout).into_owned();
    let row = table.lines().find(|l| l.starts_with("model")).unwrap();
    assert_eq!(row.split_whitespace().skip(1).collect::<Vec<_>>(), ["100.00"; 3]);
    let rows: Vec<String> = fs::read_to_string(&csv).unwrap().lines().skip(1).map(String::from).collect();
    assert_eq!(rows.len(), 40);
    for row in rows {
        let f1: Vec<&str> = row.split(',').skip(1).skip(2).step_by(3).collect();
        assert_eq!(f1, ["1.000000", "1.000000", "1.000000"]);
    }

    let o = taas(&["evaluate", "--references", path_str(&refs), "--lead3", "--buckets", "19,30"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(table.contains("lead-3"));
    for bucket in ["short", "medium", "long"] {
        assert_eq!(table.lines().filter(|l| l.starts_with(bucket)).count(), 1, "{table}");
    }
}

#[test]
fn evaluate_lists_unmatched_ids() {
    let tmp = TempDir::new().unwrap();
    let cands = tmp.path().join("cands.jsonl");
    fs::write(
        &cands,
        "{\"id\": \"t1\", \"summary\": \"x\"}\n{\"id\": \"ghost\", \"summary\": \"y\"}\n",
    )
    .unwrap();
    let o = taas(&[
        "evaluate",
        "--references",
        path_str(&fixture("tiny.jsonl")),
        "--candidates",
        path_str(&cands),
    ]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    for id in ["ghost", "t2", "t8"] {
        assert!(err.contains(id), "{err}");
    }
    let o = taas(&["evaluate", "--references", path_str(&fixture("tiny.jsonl"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn topics_report_sorted_words_per_topic() {
    let (_tmp, run) = trained(&["epochs=1", "num_topics=2"]);
    let o = taas(&["topics", "--run", path_str(&run)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);

    let model = TaasModel::load(&run.join("model.ckpt"), &run.join("config.json")).unwrap();
    let topic_vocab = TopicVocabulary::load(&run.join("topic_vocab.txt")).unwrap();
    let beta = model.ntm.beta(&model.store);
    for (k, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields[0], k.to_string());
        assert_eq!(fields.len(), 11);
        let weights: Vec<f64> = fields[1..].iter().map(|w| beta.get(k, topic_vocab.id(w).unwrap())).collect();
        assert!(weights.windows(2).all(|w| w[0] >= w[1]));
        let max = (0..beta.cols()).map(|j| beta.get(k, j)).fold(f64::MIN, f64::max);
        assert_eq!(weights[0], max);
    }
}

#[test]
fn topic_count_sweep_writes_one_row_per_count() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path().join("sweep");
    let sets = [
        format!("train_path={}", fixture("tiny.jsonl").display()),
        format!("output_dir={}", root.display()),
        "epochs=1".to_string(),
        "beam_size=1".to_string(),
    ];
    let mut args = vec!["topics", "--sweep", "5,10,20", "-q"];
    for s in sets.iter().map(String::as_str).chain(SMALL) {
        args.extend(["--set", s]);
    }
    let o = taas(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(root.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "num_topics,best_epoch,rouge1,rouge2,rouge_l");
    let counts: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(counts, ["5", "10", "20"]);
    for k in [5, 10, 20] {
        assert!(root.join(format!("k{k}/model.ckpt")).is_file());
    }
}

#[test]
fn usage_errors_exit_with_validation_status() {
    assert_eq!(code(&taas(&["frobnicate"])), 1);
    assert_eq!(code(&taas(&["summarize", "--run", "/nonexistent", "--input", "/nonexistent"])), 1);
    assert_eq!(code(&taas(&["--help"])), 0);
}
