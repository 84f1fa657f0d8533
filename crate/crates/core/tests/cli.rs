use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
epochs = 2
[data.synth]
n_train = 12
n_test = 8
"#;

fn patchmil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchmil"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = patchmil(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn train_writes_one_metrics_row_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    ok(&[
        "train",
        "--config",
        &cfg,
        "--strategy",
        "monte_carlo",
        "--profile",
        "desk",
        "--out",
        out_s,
        "--sequential",
    ]);
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "epoch,train_acc,test_acc,loss,seconds");
    assert_eq!(lines.len(), 3);
    for f in [
        "model.ckpt",
        "traces.csv",
        "focus.csv",
        "config.toml",
        "timing.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn eval_of_generated_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let (data_s, run_s) = (data.to_str().unwrap(), run.to_str().unwrap());
    ok(&["generate", "--config", &cfg, "--seed", "4", "--out", data_s]);
    let manifest = std::fs::read_to_string(data.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().next(), Some("id,label,split"));
    assert_eq!(manifest.lines().count(), 1 + 12 + 8);

    ok(&[
        "train",
        "--config",
        &cfg,
        "--data",
        data_s,
        "--strategy",
        "uniform",
        "--seed",
        "4",
        "--out",
        run_s,
    ]);
    let ckpt = run.join("model.ckpt");
    let ckpt_s = ckpt.to_str().unwrap();
    let a = ok(&[
        "eval",
        "--config",
        &cfg,
        "--checkpoint",
        ckpt_s,
        "--data",
        data_s,
    ]);
    let b = ok(&[
        "eval",
        "--config",
        &cfg,
        "--checkpoint",
        ckpt_s,
        "--data",
        data_s,
    ]);
    assert!(a.starts_with("test_acc="));
    assert_eq!(a, b);

    let map = dir.path().join("m.pgm");
    let image = data.join("test-00000.pgm");
    ok(&[
        "map",
        "--checkpoint",
        ckpt_s,
        "--image",
        image.to_str().unwrap(),
        "--out",
        map.to_str().unwrap(),
    ]);
    let img = patchmil::pgm::read(&map).unwrap();
    assert_eq!((img.width, img.height), (15, 15));
}

#[test]
fn compare_writes_a_summary_row_per_strategy_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("cmp");
    ok(&[
        "compare",
        "--config",
        &cfg,
        "--profile",
        "desk",
        "--seeds",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "strategy,seed,test_acc");
    assert_eq!(lines.len(), 10);
    for s in ["grid", "uniform", "monte_carlo"] {
        assert_eq!(
            lines
                .iter()
                .filter(|l| l.starts_with(&format!("{s},")))
                .count(),
            3
        );
    }
}

#[test]
fn failures_print_one_parsable_line() {
    let out = patchmil(&["eval", "--checkpoint", "/definitely/not/here.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=io msg="), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "epochs = 0").unwrap();
    let out = patchmil(&["train", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error kind=config"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(patchmil(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        patchmil(&["train", "--no-such-flag"]).status.code(),
        Some(2)
    );
    assert_eq!(
        patchmil(&["train", "--profile", "huge"]).status.code(),
        Some(2)
    );
    assert!(patchmil(&["--help"]).status.success());
}
