//! Behavioral tests of the `gctd` binary: exit codes, output files,
//! determinism and the grid runner.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gctd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gctd"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    gctd().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

fn condense_args<'a>(dataset: &'a str, out: &'a str, seed: &'a str) -> Vec<&'a str> {
    vec![
        "condense",
        "--dataset",
        dataset,
        "--ratio",
        "0.15",
        "--views",
        "1",
        "--pr",
        "0.1",
        "--pa",
        "0.05",
        "--seed",
        seed,
        "--deterministic",
        "--batch-size",
        "256",
        "--dec-epochs",
        "80",
        "--out",
        out,
    ]
}

#[test]
fn condense_writes_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let ds = fixture("sbm60");
    let result = run(&condense_args(
        ds.to_str().unwrap(),
        out.to_str().unwrap(),
        "7",
    ));
    assert!(result.status.success(), "stderr: {}", stderr(&result));
    for file in ["condensed.json", "checkpoint.bin", "loss.csv", "config.json"] {
        assert!(out.join(file).is_file(), "{file} missing");
    }
    let text = stdout(&result);
    assert!(text.contains("-> 9 synthetic nodes"), "stdout: {text}");
    // config echo embeds the resolved seed
    let cfg: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["seed"], 7);
    assert_eq!(cfg["ratio"], 0.15);
}

#[test]
fn stats_on_condensed_output_matches_condense_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let ds = fixture("sbm60");
    let condense = run(&condense_args(
        ds.to_str().unwrap(),
        out.to_str().unwrap(),
        "3",
    ));
    assert!(condense.status.success());
    let stats = run(&["stats", out.join("condensed.json").to_str().unwrap()]);
    assert!(stats.status.success());
    // the stats row printed by `condense` must agree with `stats` on its file
    let row_of = |text: &str| {
        text.lines()
            .filter(|l| l.trim_start().starts_with("condensed"))
            .next_back()
            .expect("stats row")
            .split_whitespace()
            .skip(1)
            .map(str::to_string)
            .collect::<Vec<_>>()
    };
    assert_eq!(row_of(&stdout(&condense)), row_of(&stdout(&stats)));
}

#[test]
fn stats_on_dataset_prints_counts() {
    let out = run(&["stats", fixture("karate").to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("34"), "{text}");
    assert!(text.contains("78"), "{text}");
}

#[test]
fn evaluate_single_run_has_zero_std() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let ds = fixture("sbm60");
    assert!(run(&condense_args(ds.to_str().unwrap(), out.to_str().unwrap(), "3")).status.success());
    let eval = run(&[
        "evaluate",
        "--condensed",
        out.join("condensed.json").to_str().unwrap(),
        "--dataset",
        ds.to_str().unwrap(),
        "--runs",
        "1",
        "--eval-epochs",
        "60",
        "--hidden",
        "16",
        "--epoch-csv",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(eval.status.success(), "stderr: {}", stderr(&eval));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["runs"].as_array().unwrap().len(), 1);
    assert_eq!(report["std"], 0.0);
    assert_eq!(report["model"], "gcn");
    let csv = fs::read_to_string(out.join("epochs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 60, "one row per epoch plus header");
}

#[test]
fn evaluate_dispatches_to_sgc() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let ds = fixture("sbm60");
    assert!(run(&condense_args(ds.to_str().unwrap(), out.to_str().unwrap(), "3")).status.success());
    let eval = run(&[
        "evaluate",
        "--condensed",
        out.join("condensed.json").to_str().unwrap(),
        "--dataset",
        ds.to_str().unwrap(),
        "--model",
        "sgc",
        "--runs",
        "2",
        "--eval-epochs",
        "60",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(eval.status.success(), "stderr: {}", stderr(&eval));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["model"], "sgc");
}

#[test]
fn exit_code_1_for_config_errors() {
    // bad ratio
    let out = run(&[
        "condense",
        "--dataset",
        fixture("sbm60").to_str().unwrap(),
        "--ratio",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
    // deterministic without a seed
    let out = run(&[
        "condense",
        "--dataset",
        fixture("sbm60").to_str().unwrap(),
        "--deterministic",
    ]);
    assert_eq!(out.status.code(), Some(1));
    // unknown assignment strategy resolves late but is still a config error
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "condense",
        "--dataset",
        fixture("sbm60").to_str().unwrap(),
        "--ratio",
        "0.15",
        "--assign",
        "spectral",
        "--seed",
        "1",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
    // usage errors behave like config errors
    let out = run(&["condense", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_code_2_for_data_errors() {
    let out = run(&["condense", "--dataset", "/nonexistent/place", "--ratio", "0.1"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
    let out = run(&["stats", "/nonexistent/place"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_code_3_for_numerical_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "condense",
        "--dataset",
        fixture("sbm60").to_str().unwrap(),
        "--ratio",
        "0.15",
        "--seed",
        "1",
        "--dec-lr",
        "1e300",
        "--allow-off-grid",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
    let text = stderr(&out);
    assert!(text.contains("numerical"), "{text}");
    assert!(text.contains("decomposer") || text.contains("condenser"), "{text}");
}

#[test]
fn warnings_for_off_grid_values_still_proceed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "condense",
        "--dataset",
        fixture("sbm60").to_str().unwrap(),
        "--ratio",
        "0.5",
        "--seed",
        "1",
        "--dec-epochs",
        "5",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("warning"), "{}", stderr(&out));
}

#[test]
fn export_dot_produces_graphviz() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let ds = fixture("sbm60");
    assert!(run(&condense_args(ds.to_str().unwrap(), out.to_str().unwrap(), "3")).status.success());
    let dot = run(&[
        "export-dot",
        "--condensed",
        out.join("condensed.json").to_str().unwrap(),
    ]);
    assert!(dot.status.success());
    let text = stdout(&dot);
    assert!(text.starts_with("graph condensed {"));
    assert!(text.contains("fillcolor"));
}

fn hash_file(path: &Path) -> u64 {
    let bytes = fs::read(path).unwrap();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

#[test]
fn deterministic_mode_reproduces_output_bytes() {
    let ds = fixture("karate");
    let mut hashes = Vec::new();
    for attempt in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let condense = run(&[
            "condense",
            "--dataset",
            ds.to_str().unwrap(),
            "--ratio",
            "0.2",
            "--views",
            "1",
            "--seed",
            "99",
            "--deterministic",
            "--batch-size",
            "128",
            "--dec-epochs",
            "60",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(condense.status.success(), "stderr: {}", stderr(&condense));
        let eval = run(&[
            "evaluate",
            "--condensed",
            out.join("condensed.json").to_str().unwrap(),
            "--dataset",
            ds.to_str().unwrap(),
            "--deterministic",
            "--seed",
            "99",
            "--runs",
            "2",
            "--eval-epochs",
            "60",
            "--hidden",
            "16",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(eval.status.success(), "stderr: {}", stderr(&eval));
        hashes.push((
            hash_file(&out.join("condensed.json")),
            hash_file(&out.join("report.json")),
            attempt,
        ));
    }
    assert_eq!(hashes[0].0, hashes[1].0, "condensed.json differs between runs");
    assert_eq!(hashes[0].1, hashes[1].1, "report.json differs between runs");
}

#[test]
fn rerun_from_embedded_config_reproduces_bytes() {
    let ds = fixture("sbm60");
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let mut args = condense_args(ds.to_str().unwrap(), first.to_str().unwrap(), "21");
    let run1 = run(&args);
    assert!(run1.status.success(), "stderr: {}", stderr(&run1));
    // second run driven purely by the echoed config
    let second = dir.path().join("second");
    args.clear();
    let config_path = first.join("config.json");
    args.extend([
        "condense",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    let run2 = run(&args);
    assert!(run2.status.success(), "stderr: {}", stderr(&run2));
    assert_eq!(
        fs::read(first.join("condensed.json")).unwrap(),
        fs::read(second.join("condensed.json")).unwrap(),
        "embedded config did not reproduce the condensed graph"
    );
}

#[test]
fn tensor_cache_is_reused_and_rebuilt_when_stale() {
    let ds = fixture("sbm60");
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("tensor.bin");
    let run_with = |out: &Path, seed: &str| {
        let mut args = condense_args(ds.to_str().unwrap(), out.to_str().unwrap(), seed);
        let cache_s = cache.to_str().unwrap().to_string();
        let mut owned: Vec<String> = args.drain(..).map(str::to_string).collect();
        owned.push("--tensor-cache".into());
        owned.push(cache_s);
        gctd().args(&owned).output().expect("binary runs")
    };
    let a = run_with(&dir.path().join("a"), "5");
    assert!(a.status.success(), "stderr: {}", stderr(&a));
    assert!(cache.is_file());
    let cache_bytes = fs::read(&cache).unwrap();
    // same seed: cache hit, identical output
    let b = run_with(&dir.path().join("b"), "5");
    assert!(b.status.success());
    assert_eq!(
        fs::read(dir.path().join("a/condensed.json")).unwrap(),
        fs::read(dir.path().join("b/condensed.json")).unwrap()
    );
    // different seed: stale key, cache rebuilt
    let c = run_with(&dir.path().join("c"), "6");
    assert!(c.status.success());
    assert_ne!(fs::read(&cache).unwrap(), cache_bytes, "stale cache not rebuilt");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let ds = fixture("sbm60");
    let mut outputs = Vec::new();
    for threads in ["1", "2"] {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let condense = gctd()
            .env("THREADS", threads)
            .args(condense_args(ds.to_str().unwrap(), out.to_str().unwrap(), "31"))
            .output()
            .unwrap();
        assert!(condense.status.success(), "stderr: {}", stderr(&condense));
        let eval = gctd()
            .env("THREADS", threads)
            .args([
                "evaluate",
                "--condensed",
                out.join("condensed.json").to_str().unwrap(),
                "--dataset",
                ds.to_str().unwrap(),
                "--runs",
                "2",
                "--eval-epochs",
                "60",
                "--hidden",
                "16",
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(eval.status.success(), "stderr: {}", stderr(&eval));
        outputs.push((
            fs::read(out.join("condensed.json")).unwrap(),
            fs::read(out.join("report.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "thread count changed condensed.json");
    assert_eq!(outputs[0].1, outputs[1].1, "thread count changed report.json");
}

#[test]
fn grid_runs_all_combinations_and_ranks_them() {
    let dir = tempfile::tempdir().unwrap();
    let grid_path = dir.path().join("grid.json");
    fs::write(
        &grid_path,
        r#"{"dec_learning_rate": [0.01, 0.001], "views": [0, 1]}"#,
    )
    .unwrap();
    let out = dir.path().join("grid-out");
    let result = run(&[
        "grid",
        "--dataset",
        fixture("sbm60").to_str().unwrap(),
        "--grid",
        grid_path.to_str().unwrap(),
        "--ratio",
        "0.15",
        "--seed",
        "4",
        "--batch-size",
        "256",
        "--dec-epochs",
        "40",
        "--eval-epochs",
        "40",
        "--hidden",
        "16",
        "--runs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "stderr: {}", stderr(&result));
    assert!(stdout(&result).contains("grid: 4 combinations"));
    let leaderboard = fs::read_to_string(out.join("leaderboard.csv")).unwrap();
    let lines: Vec<&str> = leaderboard.lines().collect();
    assert_eq!(lines.len(), 5, "header + 4 rows: {leaderboard}");
    assert!(lines[0].starts_with("rank,index,views"));
    // ranked by validation accuracy, descending
    let val_col = lines[0].split(',').position(|c| c == "val_acc_mean").unwrap();
    let vals: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(val_col).unwrap().parse().unwrap())
        .collect();
    for w in vals.windows(2) {
        assert!(w[0] >= w[1], "leaderboard not sorted: {vals:?}");
    }
    let best: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("best_config.json")).unwrap()).unwrap();
    assert_eq!(best["seed"], 4);
}

#[test]
fn grid_rejects_off_grid_values_without_flag() {
    let dir = tempfile::tempdir().unwrap();
    let grid_path = dir.path().join("grid.json");
    fs::write(&grid_path, r#"{"dec_learning_rate": [0.5]}"#).unwrap();
    let out = run(&[
        "grid",
        "--dataset",
        fixture("sbm60").to_str().unwrap(),
        "--grid",
        grid_path.to_str().unwrap(),
        "--seed",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr(&out));
}

/// An interrupted grid leaves the rows finished so far on disk and exits
/// through the default SIGINT path (code 130).
#[cfg(unix)]
#[test]
fn interrupted_grid_flushes_partial_leaderboard() {
    use std::time::{Duration, Instant};
    let dir = tempfile::tempdir().unwrap();
    let grid_path = dir.path().join("grid.json");
    // four slow-ish combinations
    fs::write(
        &grid_path,
        r#"{"dec_learning_rate": [0.01, 0.001], "views": [2, 3]}"#,
    )
    .unwrap();
    let out = dir.path().join("grid-out");
    let mut child = gctd()
        .args([
            "grid",
            "--dataset",
            fixture("sbm200").to_str().unwrap(),
            "--grid",
            grid_path.to_str().unwrap(),
            "--ratio",
            "0.06",
            "--seed",
            "4",
            "--batch-size",
            "256",
            "--dec-epochs",
            "400",
            "--eval-epochs",
            "400",
            "--runs",
            "4",
            "--out",
            out.to_str().unwrap(),
        ])
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn()
        .expect("spawn grid");

    // wait until at least one combination has been flushed
    let leaderboard = out.join("leaderboard.csv");
    let deadline = Instant::now() + Duration::from_secs(120);
    loop {
        if let Ok(text) = fs::read_to_string(&leaderboard) {
            if text.lines().count() >= 2 {
                break;
            }
        }
        if Instant::now() > deadline {
            let _ = child.kill();
            panic!("grid produced no leaderboard rows within the deadline");
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    unsafe {
        libc::kill(child.id() as i32, libc::SIGINT);
    }
    let status = child.wait().expect("child exits");
    assert!(!status.success());
    let text = fs::read_to_string(&leaderboard).unwrap();
    let rows = text.lines().count() - 1;
    assert!(
        (1..4).contains(&rows),
        "expected a partial leaderboard, found {rows} rows"
    );
}
