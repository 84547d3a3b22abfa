use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gtrans(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtrans"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = r#"
[model]
variant = "g-transformer"
n_layers = 2
n_heads = 2
d_model = 16
d_ff = 32
k_combined = 1
dropout = 0.0

[train]
learning_rate = 1e-3
warmup_steps = 2
batch_tokens = 400
max_steps = 6
eval_every = 3
trace_every = 3
trace_docs = 2

[decode]
beam_size = 2

[data]
task = "copy"
vocab_size = 16
train = 12
dev = 4
test = 3
seed = 4
"#;

#[test]
fn full_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("small.toml"), SMALL).unwrap();

    let o = gtrans(&["gen-data", "--config", "small.toml", "--out", "data"], d);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    for f in ["train.src", "train.tgt", "dev.src", "test.tgt", "vocab.txt", "corpus.json", "manifest.json"] {
        assert!(d.join("data").join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_to_string(d.join("data/test.src")).unwrap().lines().count(), 3);

    let o = gtrans(&["train", "--config", "small.toml", "--data", "data", "--out", "run", "--seed", "3"], d);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(stdout(&o).contains("trained 6 steps"));
    for f in ["best.ckpt", "log.jsonl", "entropy.csv", "config.toml", "manifest.json"] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 3);
    assert!(manifest["git_revision"].is_string());

    let o = gtrans(
        &[
            "decode", "--checkpoint", "run/best.ckpt", "--vocab", "data/vocab.txt", "--input", "data/test.src",
            "--output", "hyp.txt", "--alignment", "align.txt", "--run-dir", "dec",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let hyp = fs::read_to_string(d.join("hyp.txt")).unwrap();
    let src = fs::read_to_string(d.join("data/test.src")).unwrap();
    assert_eq!(hyp.lines().count(), 3);
    for (h, s) in hyp.lines().zip(src.lines()) {
        assert_eq!(h.matches("</s>").count(), s.matches("</s>").count());
    }
    let align = fs::read_to_string(d.join("align.txt")).unwrap();
    assert!(align.lines().next().unwrap().starts_with("0-0"));
    assert!(d.join("dec/manifest.json").exists());

    let o = gtrans(&["eval", "--candidates", "data/test.tgt", "--references", "data/test.tgt", "--run-dir", "ev"], d);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let record: serde_json::Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(record["d_bleu"]["score"], 100.0);
    assert_eq!(record["s_bleu"]["score"], 100.0);

    let o = gtrans(&["eval", "--candidates", "hyp.txt", "--references", "data/test.tgt", "--run-dir", "ev2"], d);
    assert_eq!(o.status.code(), Some(0), "{o:?}");

    let o = gtrans(&["diagnose", "--run", "run", "--window", "1", "--log-loss", "--run-dir", "diag"], d);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let text = stdout(&o);
    assert!(text.contains("validation checkpoints"));
    assert!(text.contains("cross"));
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(gtrans(&["no-such-command"], d).status.code(), Some(2));
    assert_eq!(gtrans(&["gen-data"], d).status.code(), Some(2));
    assert_eq!(gtrans(&["gen-data", "--out", "x", "--task", "poetry"], d).status.code(), Some(2));
    assert_eq!(gtrans(&["gen-data", "--out", "x", "--config", "missing.toml"], d).status.code(), Some(2));
    fs::write(d.join("bad.toml"), "[train]\nwarmup_steps = 0\n").unwrap();
    assert_eq!(gtrans(&["gen-data", "--out", "x", "--config", "bad.toml"], d).status.code(), Some(2));
    fs::write(d.join("typo.toml"), "[modle]\nd_model = 8\n").unwrap();
    assert_eq!(gtrans(&["gen-data", "--out", "x", "--config", "typo.toml"], d).status.code(), Some(2));
    assert_eq!(gtrans(&["gen-data", "--out", "x", "--vocab-size", "3"], d).status.code(), Some(2));
    assert_eq!(gtrans(&["--help"], d).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(gtrans(&["train", "--data", "nowhere", "--out", "run"], d).status.code(), Some(1));
    fs::write(d.join("a.txt"), "<s> x y </s>\n").unwrap();
    fs::write(d.join("b.txt"), "<s> x y\n").unwrap();
    assert_eq!(
        gtrans(&["eval", "--candidates", "a.txt", "--references", "b.txt", "--run-dir", "e"], d).status.code(),
        Some(1)
    );
    assert_eq!(gtrans(&["diagnose", "--run", "missing", "--run-dir", "g"], d).status.code(), Some(1));
}

#[test]
fn named_configs_resolve_from_the_configs_directory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir(d.join("configs")).unwrap();
    fs::write(d.join("configs/small.toml"), SMALL).unwrap();
    let o = gtrans(&["gen-data", "--config", "small", "--out", "data"], d);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert_eq!(fs::read_to_string(d.join("data/train.src")).unwrap().lines().count(), 12);
}

#[test]
fn repository_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(root).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            gtransformer::cli::RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n > 0);
}
