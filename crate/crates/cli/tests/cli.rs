//! Black-box tests of the `geoswarm` binary: exit codes, strict config
//! validation, byte-identical reruns, and dataset round-trips.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geoswarm"))
}

/// Fresh scratch directory, unique per test name.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("geoswarm-cli-test-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// All files under `dir` as (relative path, bytes), sorted for comparison.
fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn unknown_config_key_is_rejected_and_named() {
    let dir = scratch("unknown-key");
    let config = write_config(&dir, r#"{"seed": 1, "foo": 3}"#);
    let out = bin()
        .args(["bounds", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(
        stderr_of(&out).contains("foo"),
        "stderr does not name the bad key: {}",
        stderr_of(&out)
    );
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = scratch("missing-seed");
    let config = write_config(&dir, "{}");
    let out = bin()
        .args(["rho", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(
        stderr_of(&out).contains("seed"),
        "stderr does not mention the seed: {}",
        stderr_of(&out)
    );
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = scratch("rerun");
    let (a, b) = (dir.join("a"), dir.join("b"));
    for out_dir in [&a, &b] {
        let out = bin()
            .args(["simplex-zero", "--seed", "9", "--out"])
            .arg(out_dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    }
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    assert!(!ta.is_empty(), "no artifacts written");
    assert!(
        ta.iter().any(|(rel, _)| rel == "verdicts.json"),
        "verdicts.json missing: {:?}",
        ta.iter().map(|(r, _)| r).collect::<Vec<_>>()
    );
    assert_eq!(ta, tb, "rerun artifacts differ");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn thread_count_does_not_change_artifacts() {
    let dir = scratch("threads");
    let config = write_config(&dir, r#"{"seed": 11, "num_samples": 300}"#);
    let (a, b) = (dir.join("t1"), dir.join("t3"));
    for (threads, out_dir) in [("1", &a), ("3", &b)] {
        let out = bin()
            .args(["bounds", "--threads", threads, "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert!(
            matches!(out.status.code(), Some(0) | Some(1)),
            "unexpected exit: {:?}, stderr: {}",
            out.status.code(),
            stderr_of(&out)
        );
    }
    assert_eq!(read_tree(&a), read_tree(&b), "thread count changed artifacts");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn failed_verdict_exits_one_and_is_recorded() {
    let dir = scratch("fail-verdict");
    // Heavy observation noise on a small sample defeats the noisy recovery
    // target while the noiseless fit still succeeds.
    let config = write_config(&dir, r#"{"seed": 3, "num_samples": 60, "noise_sd": 5.0}"#);
    let out_dir = dir.join("out");
    let out = bin()
        .args(["recover", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "stderr: {}", stderr_of(&out));
    let verdicts = std::fs::read_to_string(out_dir.join("verdicts.json")).unwrap();
    assert!(
        verdicts.contains("\"pass\": false"),
        "no failed verdict recorded: {verdicts}"
    );
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn simulate_writes_a_readable_dataset() {
    let dir = scratch("simulate");
    let config = write_config(&dir, r#"{"seed": 5, "num_trajectories": 4}"#);
    let out_dir = dir.join("out");
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let dataset = geoswarm::dynamics::read_dataset_dir(&out_dir.join("dataset")).unwrap();
    assert_eq!(dataset.meta.num_trajectories, 4);
    assert_eq!(
        dataset.len(),
        4 * dataset.meta.samples_per_trajectory,
        "sample count inconsistent with manifest"
    );
    let _ = std::fs::remove_dir_all(&dir);
}
