//! End-to-end behavior of the binary: determinism, config layering, trace
//! replay, sweep degeneracies, and exit codes.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_specasr"))
}

fn scratch_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("specasr-cli-{}-{tag}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn specasr");
    assert!(
        out.status.success(),
        "specasr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn identical_invocations_are_byte_identical() {
    let args = ["run", "--seed", "5", "--len", "50", "--repeats", "2"];
    let a = run_ok(&args);
    let b = run_ok(&args);
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}

#[test]
fn csv_file_output_is_stable_and_headed() {
    let dir = scratch_dir("csv");
    let out1 = dir.join("one.csv");
    let out2 = dir.join("two.csv");
    for out in [&out1, &out2] {
        run_ok(&[
            "run", "--seed", "3", "--len", "40", "--strategy", "asp", "--out",
            out.to_str().unwrap(),
        ]);
    }
    let a = fs::read(&out1).unwrap();
    assert_eq!(a, fs::read(&out2).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with(specasr_core::CSV_HEADER));
    assert_eq!(text.lines().count(), 2);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn gen_trace_reruns_byte_identically_and_replays() {
    let dir_a = scratch_dir("tr-a");
    let dir_b = scratch_dir("tr-b");
    for dir in [&dir_a, &dir_b] {
        run_ok(&[
            "gen-trace", "--seed", "9", "--len", "60", "--vocab", "128", "--out",
            dir.to_str().unwrap(),
        ]);
    }
    for name in ["target.jsonl", "draft.jsonl", "target.manifest.json", "draft.manifest.json"] {
        assert_eq!(
            fs::read(dir_a.join(name)).unwrap(),
            fs::read(dir_b.join(name)).unwrap(),
            "{name} differs between identical invocations"
        );
    }

    // The replayed pair passes the losslessness gate for every strategy.
    let out = run_ok(&[
        "run",
        "--target-trace",
        dir_a.join("target.jsonl").to_str().unwrap(),
        "--draft-trace",
        dir_a.join("draft.jsonl").to_str().unwrap(),
        "--len",
        "60",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 6, "header plus one row per strategy");
    fs::remove_dir_all(&dir_a).ok();
    fs::remove_dir_all(&dir_b).ok();
}

#[test]
fn disabled_threshold_sweep_point_equals_fixed_length_baseline() {
    // tau = 0 never truncates, so the adaptive strategy must behave exactly
    // like fixed-length speculation at the cap; every measured column agrees.
    let sweep = run_ok(&[
        "sweep", "--sweep", "tau", "--grid", "0", "--seed", "21", "--len", "80",
        "--strategy", "asp", "--max-draft-len", "12",
    ]);
    let base = run_ok(&[
        "run", "--seed", "21", "--len", "80", "--strategy", "baseline_spec",
        "--draft-len", "12",
    ]);
    let row_of = |o: &Output| {
        String::from_utf8(o.stdout.clone())
            .unwrap()
            .lines()
            .nth(1)
            .unwrap()
            .to_string()
    };
    let sweep_cols: Vec<String> = row_of(&sweep).split(',').map(str::to_string).collect();
    let base_cols: Vec<String> = row_of(&base).split(',').map(str::to_string).collect();
    // Skip the identity columns (strategy, seed, p1, p2, tau, draft_len);
    // everything measured must match exactly.
    assert_eq!(sweep_cols[6..], base_cols[6..]);
}

#[test]
fn config_file_fills_gaps_but_flags_win() {
    let dir = scratch_dir("cfg");
    let cfg = dir.join("exp.toml");
    fs::write(&cfg, "tau = 0.8\nseed = 40\nlen = 30\nstrategies = [\"asp\"]\n").unwrap();
    let out = run_ok(&[
        "run", "--config", cfg.to_str().unwrap(), "--tau", "0.2",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().nth(1).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(cols[0], "asp", "strategy from file");
    assert_eq!(cols[1], "40", "seed from file");
    assert_eq!(cols[4], "0.2", "tau from the flag, not the file");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = scratch_dir("cfg-bad");
    let cfg = dir.join("exp.toml");
    fs::write(&cfg, "tua = 0.8\n").unwrap();
    let out = bin()
        .args(["run", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_errors_exit_one() {
    let out = bin()
        .args(["run", "--draft-len", "0", "--len", "10"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin()
        .args(["run", "--cost-preset", "7to2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin()
        .args(["run", "--strategy", "warp-drive"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn environment_seed_is_the_default_but_flags_win() {
    let with_env = bin()
        .args(["run", "--len", "20", "--strategy", "asp"])
        .env("SPECASR_SEED", "123")
        .output()
        .unwrap();
    assert!(with_env.status.success());
    let text = String::from_utf8(with_env.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("asp,123,"));

    let with_flag = bin()
        .args(["run", "--len", "20", "--strategy", "asp", "--seed", "4"])
        .env("SPECASR_SEED", "123")
        .output()
        .unwrap();
    let text = String::from_utf8(with_flag.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("asp,4,"));

    let bad_env = bin()
        .args(["run", "--len", "20"])
        .env("SPECASR_SEED", "twelve")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(1));
}

#[test]
fn sweeps_validate_their_grids() {
    for args in [
        ["sweep", "--sweep", "tau", "--grid", "0,1.5"].as_slice(),
        ["sweep", "--sweep", "draft-len", "--grid", "2.5"].as_slice(),
        ["sweep", "--sweep", "entropy", "--grid", "1"].as_slice(),
        ["sweep", "--sweep", "tau", "--grid", ""].as_slice(),
    ] {
        let out = bin().args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "args {args:?}");
    }
}
