use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn atlas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atlas"))
        .args(args)
        .env_remove("ATLAS_SEED")
        .output()
        .expect("run atlas")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn init_then_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let out = atlas(&[
        "init",
        "--n",
        "2",
        "--M",
        "3",
        "--r",
        "3",
        "--random",
        "4",
        "--out",
        path(&model),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = atlas(&["verify", path(&model), "--pairs", "500", "--points", "200"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 5);
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["pass"], true);
    }
}

#[test]
fn property_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let out = atlas(&[
        "init",
        "--n",
        "1",
        "--M",
        "1",
        "--r",
        "3",
        "--variant",
        "all_densities_trainable",
        "--random",
        "1",
        "--out",
        path(&model),
    ]);
    assert!(out.status.success());
    // lower banks overlap at this gap, so gradients are not orthogonal
    let out = atlas(&["verify", path(&model), "--gap", "0.2", "--pairs", "200"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"format_version\": 1}").unwrap();
    assert_eq!(atlas(&["verify", path(&bad)]).status.code(), Some(1));
    assert_eq!(
        atlas(&["verify", "/nonexistent/model.json"]).status.code(),
        Some(1)
    );
    assert_eq!(atlas(&["grid", "--widths", "1.5"]).status.code(), Some(1));
    assert_eq!(atlas(&["grid", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(atlas(&["--help"]).status.code(), Some(0));
}

#[test]
fn eval_prints_one_line_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    assert!(atlas(&[
        "init",
        "--n",
        "2",
        "--p",
        "2",
        "--M",
        "1",
        "--r",
        "1",
        "--out",
        path(&model)
    ])
    .status
    .success());
    let points = dir.path().join("x.csv");
    fs::write(&points, "x1,x2\n0.1,0.2\n0.9,0.5\n").unwrap();
    let out = atlas(&["eval", path(&model), path(&points)]);
    assert!(out.status.success());
    // zero model: every output is exactly zero
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "0,0\n0,0\n");
    fs::write(&points, "0.1,1.5\n").unwrap();
    assert_eq!(
        atlas(&["eval", path(&model), path(&points)]).status.code(),
        Some(1)
    );
}

#[test]
fn grid_writes_results_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let args = [
        "grid",
        "--dims",
        "1",
        "--widths",
        "0.5",
        "--trials",
        "2",
        "--points-per-split",
        "200",
        "--rbf-count",
        "20",
        "--epochs-task1",
        "2",
        "--epochs-task2",
        "2",
        "--lr",
        "0.005",
        "--noise-sigma",
        "0.1",
        "--seed",
        "3",
        "--out",
        path(&out_dir),
    ];
    let out = atlas(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let results = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(results.starts_with("trial_id,n,delta,variant,lr,noise,task,split,epoch,mae\n"));
    assert_eq!(results.lines().count(), 1 + 4 * 9);
    assert_eq!(
        fs::read_to_string(out_dir.join("records.jsonl"))
            .unwrap()
            .lines()
            .count(),
        4
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["master_seed"], 3);
    assert_eq!(manifest["record_count"], 4);

    let again = atlas(&args);
    assert!(again.status.success());
    assert_eq!(
        fs::read_to_string(out_dir.join("results.csv")).unwrap(),
        results
    );

    // the manifest's config reruns the same grid
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, manifest["config"].to_string()).unwrap();
    let rerun = dir.path().join("rerun");
    assert!(
        atlas(&["grid", "--config", path(&cfg), "--out", path(&rerun)])
            .status
            .success()
    );
    assert_eq!(
        fs::read_to_string(rerun.join("results.csv")).unwrap(),
        results
    );
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let out_dir = dir.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_atlas"))
            .args([
                "grid",
                "--dims",
                "1",
                "--widths",
                "0.5",
                "--trials",
                "1",
                "--points-per-split",
                "100",
                "--rbf-count",
                "10",
                "--epochs-task1",
                "1",
                "--epochs-task2",
                "1",
                "--out",
                path(&out_dir),
            ])
            .env("ATLAS_SEED", seed)
            .output()
            .unwrap();
        assert!(out.status.success());
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap())
                .unwrap();
        m["master_seed"].as_u64().unwrap()
    };
    assert_eq!(run("42", "a"), 42);
}

#[test]
fn appendix_writes_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = atlas(&[
        "appendix",
        "-e",
        "D",
        "--segments",
        "3",
        "--segment-epochs",
        "1",
        "--appendix-task2-epochs",
        "1",
        "--points-per-split",
        "300",
        "--out",
        path(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in [
        "model_segment1.json",
        "model_segment2.json",
        "model_segment3.json",
        "model_task2.json",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let snap = dir.path().join("model_segment3.json");
    assert_eq!(
        atlas(&["verify", path(&snap), "--pairs", "200", "--points", "100"])
            .status
            .code(),
        Some(0)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("segment\tr\tM"));
}
