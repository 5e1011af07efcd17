use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn skd(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skd"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Temp dir holding a small synthetic corpus and a config naming it.
struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let o = skd(
            &[
                "synth", "--tokens", "6000", "--clusters", "8", "--words-per-cluster", "5", "--out",
                "data",
            ],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let config = r#"{
  "train_path": "data/train.txt",
  "valid_path": "data/valid.txt",
  "vocab_size": 100,
  "embed_in": 8,
  "hidden": 8,
  "embed_out": 8,
  "epochs": 2,
  "batch_size": 8,
  "window": 10,
  "log_interval": 10,
  "warmup_k": 20,
  "eta": 0.05,
  "learning_rate": 0.5
}"#;
        fs::write(dir.path().join("run.json"), config).unwrap();
        Workspace { dir }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn run(&self, args: &[&str]) -> Output {
        skd(args, self.path())
    }

    fn file(&self, rel: &str) -> PathBuf {
        self.path().join(rel)
    }
}

fn last_valid_nll(metrics: &str) -> f64 {
    let last = metrics.lines().last().unwrap();
    last.rsplit(',').next().unwrap().parse().unwrap()
}

#[test]
fn train_writes_artifacts_and_is_deterministic() {
    let ws = Workspace::new();
    for out in ["a", "b"] {
        let o = ws.run(&["train", "--config", "run.json", "--objective", "ce", "--out", out]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for name in ["model.ckpt", "metrics.csv", "manifest.json", "vocab.txt", "report.json"] {
        assert!(ws.file("a").join(name).exists(), "{name} missing");
    }
    let a = fs::read(ws.file("a/metrics.csv")).unwrap();
    assert_eq!(a, fs::read(ws.file("b/metrics.csv")).unwrap());
    assert_eq!(fs::read(ws.file("a/model.ckpt")).unwrap(), fs::read(ws.file("b/model.ckpt")).unwrap());
}

#[test]
fn skd_objective_and_overrides_reach_the_manifest() {
    let ws = Workspace::new();
    let o = ws.run(&[
        "train", "--config", "run.json", "--objective", "skd", "--set", "sigma=0.1", "--seed", "7",
        "--out", "r",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ws.file("r/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["objective"], "skd");
    assert_eq!(manifest["sigma"], 0.1);
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["learning_rate"], 0.5);
    let train_path = PathBuf::from(manifest["train_path"].as_str().unwrap());
    assert!(train_path.is_absolute());

    let metrics = fs::read_to_string(ws.file("r/metrics.csv")).unwrap();
    let mut rows = metrics.lines().skip(1).peekable();
    assert!(rows.peek().is_some());
    for row in rows {
        let f: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        let expected = ((f[0] - 20.0) * 0.05).clamp(0.0, 1.0);
        assert!((f[1] - expected).abs() < 1e-12, "{row}");
        assert!(f[3] > 0.0 && f[3] <= 0.5);
    }
}

#[test]
fn replaying_a_manifest_reproduces_metrics() {
    let ws = Workspace::new();
    let o = ws.run(&[
        "train", "--config", "run.json", "--objective", "noise+skd", "--set", "noise_std=0.05", "--out",
        "first",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = ws.run(&["train", "--config", "first/manifest.json", "--out", "replay"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        fs::read(ws.file("first/metrics.csv")).unwrap(),
        fs::read(ws.file("replay/metrics.csv")).unwrap()
    );
}

#[test]
fn warmup_rows_match_between_objectives() {
    let ws = Workspace::new();
    for (objective, out) in [("ce", "ce"), ("skd", "skd")] {
        let o = ws.run(&[
            "train", "--config", "run.json", "--objective", objective, "--set", "warmup_k=30", "--out", out,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let rows = |out: &str| -> Vec<String> {
        fs::read_to_string(ws.file(out).join("metrics.csv"))
            .unwrap()
            .lines()
            .map(str::to_owned)
            .collect()
    };
    let (ce, skd) = (rows("ce"), rows("skd"));
    // header plus the rows at iterations 10, 20 and 30
    assert_eq!(ce[..4], skd[..4]);
    assert_ne!(ce[4], skd[4]);
}

#[test]
fn bad_config_exits_two_without_output() {
    let ws = Workspace::new();
    for args in [
        vec!["train", "--config", "run.json", "--set", "lambda=2", "--out", "x"],
        vec!["train", "--config", "run.json", "--set", "no_such_key=1", "--out", "x"],
        vec!["train", "--config", "run.json", "--objective", "skd", "--set", "eta=0", "--out", "x"],
        vec!["train", "--config", "run.json", "--objective", "noise", "--set", "noise_std=0", "--out", "x"],
        vec!["train", "--config", "run.json", "--objective", "bogus", "--out", "x"],
    ] {
        let o = ws.run(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
        assert!(!ws.file("x").exists());
    }
}

#[test]
fn divergence_exits_three() {
    let ws = Workspace::new();
    let o = ws.run(&[
        "train", "--config", "run.json", "--set", "learning_rate=1e300", "--set", "clip_norm=null",
        "--out", "x",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("batch") && err.contains("position"), "{err}");
    assert!(!ws.file("x").exists());
}

#[test]
fn eval_reproduces_final_validation_row() {
    let ws = Workspace::new();
    let o = ws.run(&["train", "--config", "run.json", "--objective", "skd", "--out", "r"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for chunk in ["4096", "7"] {
        let o = ws.run(&["eval", "--checkpoint", "r/model.ckpt", "--chunk", chunk, "data/valid.txt"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        let logged = last_valid_nll(&fs::read_to_string(ws.file("r/metrics.csv")).unwrap());
        let token_nll = report["token_nll"].as_f64().unwrap();
        assert!((token_nll - logged).abs() < 1e-9, "{token_nll} vs {logged}");
        assert!((report["perplexity"].as_f64().unwrap() - token_nll.exp()).abs() < 1e-9);
        assert!(report["sentence_nll"].as_f64().unwrap() > token_nll);
    }
}

#[test]
fn untrained_checkpoint_is_near_uniform() {
    let ws = Workspace::new();
    let o = ws.run(&["train", "--config", "run.json", "--set", "epochs=0", "--out", "init"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = ws.run(&["eval", "--checkpoint", "init/model.ckpt", "data/test.txt"]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let vocab = fs::read_to_string(ws.file("init/vocab.txt")).unwrap().lines().count();
    let ln_v = (vocab as f64).ln();
    let token_nll = report["token_nll"].as_f64().unwrap();
    assert!((token_nll / ln_v - 1.0).abs() < 0.02, "{token_nll} vs {ln_v}");
}

#[test]
fn eval_dimension_mismatch_exits_two() {
    let ws = Workspace::new();
    let o = ws.run(&["train", "--config", "run.json", "--set", "epochs=0", "--out", "big"]);
    assert_eq!(o.status.code(), Some(0));
    let o = ws.run(&["train", "--config", "run.json", "--set", "epochs=0", "--set", "vocab_size=10", "--out", "small"]);
    assert_eq!(o.status.code(), Some(0));
    let o = ws.run(&["eval", "--checkpoint", "big/model.ckpt", "--vocab", "small/vocab.txt", "data/valid.txt"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
}

#[test]
fn missing_files_fail_without_output() {
    let ws = Workspace::new();
    let o = ws.run(&["train", "--config", "run.json", "--set", "epochs=0", "--out", "r"]);
    assert_eq!(o.status.code(), Some(0));
    for args in [
        vec!["eval", "--checkpoint", "nope.ckpt", "data/valid.txt"],
        vec!["eval", "--checkpoint", "r/model.ckpt", "data/nope.txt"],
        vec!["train", "--config", "nope.json", "--out", "x"],
        vec!["train", "--config", "run.json", "--set", "train_path=nope.txt", "--out", "x"],
    ] {
        let o = ws.run(&args);
        assert_ne!(o.status.code(), Some(0), "{args:?}");
        assert!(stdout(&o).is_empty(), "{args:?}");
        assert!(!ws.file("x").exists());
    }
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let ws = Workspace::new();
    let o = ws.run(&["train", "--config", "run.json", "--set", "epochs=0", "--out", "r"]);
    assert_eq!(o.status.code(), Some(0));
    let bytes = fs::read(ws.file("r/model.ckpt")).unwrap();
    fs::write(ws.file("r/model.ckpt"), &bytes[..bytes.len() - 8]).unwrap();
    let o = ws.run(&["eval", "--checkpoint", "r/model.ckpt", "data/valid.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).is_empty());
}

#[test]
fn gradcheck_passes_by_default() {
    let ws = Workspace::new();
    let o = ws.run(&["gradcheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("max relative error"));
    assert_eq!(out.lines().filter(|l| l.contains("alpha=")).count(), 4);
}

#[test]
fn corrupted_gradient_fails_naming_the_parameter() {
    let ws = Workspace::new();
    let o = ws.run(&["gradcheck", "--corrupt", "ff.weights"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ff.weights"), "{}", stderr(&o));
}

#[test]
fn broken_distillation_leaves_cross_entropy_case_passing() {
    let ws = Workspace::new();
    let o = ws.run(&["gradcheck", "--corrupt", "distill"]);
    assert_eq!(o.status.code(), Some(1));
    let errors: Vec<(String, f64)> = stdout(&o)
        .lines()
        .filter(|l| l.contains("alpha="))
        .map(|l| {
            let err = l.split("max_rel_error=").nth(1).unwrap().split_whitespace().next().unwrap();
            (l.split_whitespace().take(2).collect::<Vec<_>>().join(" "), err.parse().unwrap())
        })
        .collect();
    for (case, err) in &errors {
        if case.ends_with("alpha=0") {
            assert!(*err < 1e-4, "{case}: {err}");
        } else {
            assert!(*err >= 1e-4, "{case}: {err}");
        }
    }
}

#[test]
fn gradcheck_rejects_large_dims() {
    let ws = Workspace::new();
    assert_eq!(ws.run(&["gradcheck", "--vocab", "50"]).status.code(), Some(2));
    assert_eq!(ws.run(&["gradcheck", "--corrupt", "nonsense"]).status.code(), Some(2));
}

#[test]
fn compare_emits_table_and_runs() {
    let ws = Workspace::new();
    let o = ws.run(&[
        "compare", "--config", "run.json", "--set", "epochs=1", "--set", "noise_std=0.05", "--seeds",
        "1,2", "--out", "cmp",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = stdout(&o);
    for label in ["| Baseline |", "| +Noise |", "| +SKD |", "| +Noise+SKD |"] {
        assert!(table.contains(label), "{table}");
    }
    let mut rdr = csv::Reader::from_path(ws.file("cmp/compare.csv")).unwrap();
    assert_eq!(rdr.records().count(), 8);
    assert!(ws.file("cmp/skd-seed2/metrics.csv").exists());
    assert!(ws.file("cmp/summary.md").exists());
}
