use std::path::Path;

use newsbridge_cli::run_cli;

fn write_config(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("data");
    let text = format!(
        r#"seed = 3
out = "{out}"
datasets = ["{data}"]

[translator]
kind = "lexicon"
path = "{data}/lexicon.tsv"

[embeddings]
kind = "hash-fallback"
dim = 16

[train]
epochs = 2
batch_size = 16

[train.model]
embedding_dim = 8
n_heads = 2
attention_hidden = 4

[synth]
topics = 3
source_news = 40
target_news = 40
source_users = 20
target_train_users = 6
target_valid_users = 5
target_test_users = 6
topic_words = 8
novel_words = 4
filler_words = 10
heldout_patterns = 1
"#,
        out = dir.join("run").display(),
        data = data.display(),
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    let p = path.to_str().unwrap();
    assert_eq!(run_cli(["newsbridge", "--config", p, "--out", data.to_str().unwrap(), "synth"]), 0);
    path
}

#[test]
fn unknown_subcommand_is_rejected() {
    assert_ne!(run_cli(["newsbridge", "frobnicate"]), 0);
    assert_ne!(run_cli(["newsbridge"]), 0);
}

#[test]
fn missing_config_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(run_cli(["newsbridge", "--config", missing.to_str().unwrap(), "train"]), 1);
}

#[test]
fn train_then_eval_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let run = dir.path().join("run");

    assert_eq!(run_cli(["newsbridge", "--config", cfg, "--few-shot-users", "4", "--jobs", "1", "train"]), 0);
    for f in ["checkpoint.bin", "run_log.json", "config.toml", "vocab.txt", "augmented.jsonl"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let log: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("run_log.json")).unwrap()).unwrap();
    assert_eq!(log["epochs"].as_array().unwrap().len(), 2);

    assert_eq!(run_cli(["newsbridge", "--config", cfg, "--few-shot-users", "4", "eval"]), 0);
    let first = std::fs::read(run.join("metrics.json")).unwrap();
    assert_eq!(run_cli(["newsbridge", "--config", cfg, "--few-shot-users", "4", "--jobs", "2", "eval"]), 0);
    assert_eq!(first, std::fs::read(run.join("metrics.json")).unwrap());

    assert_eq!(run_cli(["newsbridge", "--config", cfg, "--few-shot-users", "4", "dump-embeddings"]), 0);
    let dump = std::fs::read_to_string(run.join("embeddings.tsv")).unwrap();
    assert_eq!(dump.lines().count(), 80);
    assert!(dump.lines().all(|l| l.split('\t').count() == 3));
}

#[test]
fn config_echo_records_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("aug");
    let code = run_cli([
        "newsbridge",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "11",
        "--out",
        out.to_str().unwrap(),
        "augment",
    ]);
    assert_eq!(code, 0);
    let echo = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echo.contains("seed = 11"));
    assert!(out.join("augmented.jsonl").exists());
}
