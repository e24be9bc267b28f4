use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn multigait(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multigait"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// A small run with quick evaluation settings.
const SMOKE: &str = r#"
num_envs = 8
iterations = 10
checkpoint_interval = 5

[eval]
runs = 2
duration = 0.5
climb_time = 1.0
analysis_frames = 12
"#;

#[test]
fn config_init_writes_loadable_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = multigait(&["config", "init", "--out", "cfg.toml"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("cfg.toml")).unwrap();
    let cfg = multigait::config::RunConfig::from_toml(&text).unwrap();
    assert_eq!(cfg, multigait::config::RunConfig::default());
    assert_eq!(code(&multigait(&["config", "init", "--out", "cfg.toml"], dir.path())), 1);
    assert_eq!(code(&multigait(&["config", "init", "--out", "cfg.toml", "--force"], dir.path())), 0);
}

#[test]
fn exit_codes_by_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&multigait(&["frobnicate"], p)), 1);
    assert_eq!(code(&multigait(&["--help"], p)), 0);
    fs::write(p.join("bad.toml"), "bogus_key = 1\n").unwrap();
    assert_eq!(code(&multigait(&["train", "--config", "bad.toml"], p)), 1);
    fs::write(p.join("odd.toml"), "num_envs = 3\n").unwrap();
    assert_eq!(code(&multigait(&["dataset", "--config", "odd.toml"], p)), 1);
    assert_eq!(code(&multigait(&["dataset", "--config", "missing.toml"], p)), 3);
    assert_eq!(code(&multigait(&["train", "--dataset", "nowhere"], p)), 3);
    assert_eq!(code(&multigait(&["eval", "--checkpoint", "none.mgck"], p)), 3);
    fs::write(p.join("junk.mgck"), b"not a checkpoint").unwrap();
    assert_eq!(code(&multigait(&["analyze", "--checkpoint", "junk.mgck", "--out", "a"], p)), 1);
}

#[test]
fn dataset_files_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&multigait(&["dataset", "--out", "d1"], p)), 0);
    assert_eq!(code(&multigait(&["--seed", "9", "dataset", "--out", "d2"], p)), 0);
    let names = |d: &str| {
        let mut v: Vec<String> = fs::read_dir(p.join(d))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    let files = names("d1");
    assert_eq!(files.len(), 11);
    assert!(files.contains(&"manifest.csv".to_string()));
    assert_eq!(files, names("d2"));
    for f in &files {
        assert_eq!(fs::read(p.join("d1").join(f)).unwrap(), fs::read(p.join("d2").join(f)).unwrap());
    }
    let manifest = fs::read_to_string(p.join("d1/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 11);
}

#[test]
fn smoke_train_eval_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("smoke.toml"), SMOKE).unwrap();
    assert_eq!(code(&multigait(&["dataset", "--out", "dataset"], p)), 0);

    let start = Instant::now();
    let o = multigait(&["--threads", "1", "train", "--config", "smoke.toml", "--out", "run"], p);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(start.elapsed() < Duration::from_secs(300));
    let (header, rows) = multigait::trainer::read_metrics(&p.join("run/metrics.csv")).unwrap();
    assert_eq!(header.len(), multigait::trainer::METRICS_COLUMNS.len());
    assert_eq!(rows.len(), 10);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], i.to_string());
    }
    assert!(p.join("run/checkpoint.mgck").exists());
    assert!(p.join("run/config.toml").exists());

    let o = multigait(&["eval", "--checkpoint", "run", "--gait", "trotting", "--out", "eval.json"], p);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("RMSE") && stdout.contains("±"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("eval.json")).unwrap()).unwrap();
    assert_eq!(report["tracking"].as_array().unwrap().len(), 3);
    assert_eq!(report["tracking"][0]["rmse"].as_array().unwrap().len(), 2);
    assert!(p.join("eval.mghf").exists());
    assert_eq!(code(&multigait(&["eval", "--checkpoint", "run", "--gait", "galloping"], p)), 1);

    let o = multigait(&["--threads", "1", "analyze", "--checkpoint", "run", "--out", "analysis"], p);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = p.join("analysis");
    let matrix = fs::read_to_string(a.join("dtw_matrix.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 19);
    let emb = fs::read_to_string(a.join("embeddings.csv")).unwrap();
    assert!(emb.lines().all(|l| l.split(',').count() == 18));
    assert_eq!(fs::read_dir(a.join("diagrams")).unwrap().count(), 18);
    assert!(fs::read_to_string(a.join("diagrams.txt")).unwrap().contains("contact match"));
}

#[test]
fn resume_continues_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("c.toml"), "num_envs = 4\niterations = 3\ncheckpoint_interval = 1\n").unwrap();
    assert_eq!(code(&multigait(&["dataset", "--out", "dataset"], p)), 0);
    let run = |extra: &[&str]| {
        let mut args = vec!["--threads", "1", "train", "--config", "c.toml"];
        args.extend_from_slice(extra);
        multigait(&args, p)
    };
    assert_eq!(code(&run(&["--out", "full"])), 0);
    assert_eq!(code(&run(&["--out", "split", "--iterations", "2"])), 0);
    assert_eq!(code(&run(&["--out", "split", "--resume"])), 0);
    let full = fs::read_to_string(p.join("full/metrics.csv")).unwrap();
    let split = fs::read_to_string(p.join("split/metrics.csv")).unwrap();
    assert_eq!(full, split);
}
