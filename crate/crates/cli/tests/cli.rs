//! End-to-end checks of the command-line surface: exit codes, output files,
//! negative controls and bitwise reproducibility of deterministic runs.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cheblap"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn synth_into(dir: &Path) {
    let out = run(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--train-per-class",
        "4",
        "--test-per-class",
        "2",
        "--seed",
        "3",
    ]);
    assert!(out.status.success());
}

fn write_config(path: &Path, epochs: usize) {
    let text = format!(
        "K = 3\nkind = ndrw\nmode = learned\nsym = 1\north = 1\nepochs = {epochs}\n\
         batch_size = 8\nbase_lr = 0.01\nchannels = 4\nblocks = 1\nseed = 9\ndeterministic = 1\n"
    );
    std::fs::write(path, text).unwrap();
}

#[test]
fn train_writes_the_three_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth_into(&data);
    let config = dir.path().join("run.conf");
    write_config(&config, 3);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    for file in ["checkpoint.txt", "metrics.log", "run_manifest.txt"] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }
    let metrics = std::fs::read_to_string(out_dir.join("metrics.log")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
}

#[test]
fn missing_order_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth_into(&data);
    let config = dir.path().join("run.conf");
    std::fs::write(&config, "kind = ndrw\nmode = learned\n").unwrap();
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("`K`"), "stderr: {stderr}");
}

#[test]
fn missing_dataset_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    write_config(&config, 2);
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        dir.path().join("nope").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn runaway_learning_rate_exits_4_naming_the_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth_into(&data);
    let config = dir.path().join("run.conf");
    write_config(&config, 40);
    let out = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--base-lr",
        "1e3",
    ]);
    assert_eq!(out.status.code(), Some(4), "{out:?}");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("epoch"), "stderr: {stderr}");
}

#[test]
fn deterministic_runs_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth_into(&data);
    let config = dir.path().join("run.conf");
    write_config(&config, 4);
    for name in ["a", "b"] {
        let out = run(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            dir.path().join(name).to_str().unwrap(),
            "--deterministic",
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    for file in ["metrics.log", "checkpoint.txt"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }
}

#[test]
fn gradcheck_passes_and_the_corrupt_hook_fails_it() {
    let ok = run(&["gradcheck", "--n", "4", "--K", "3", "--seeds", "2"]);
    assert_eq!(ok.status.code(), Some(0), "{ok:?}");
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.contains("S-DN"), "stdout: {stdout}");

    let corrupt = bin()
        .args(["gradcheck", "--n", "4", "--K", "3", "--seeds", "1"])
        .env("CHEBLAP_CORRUPT_JACOBIAN", "1")
        .output()
        .unwrap();
    assert_eq!(corrupt.status.code(), Some(1));
}

#[test]
fn gradcheck_with_order_one_is_trivially_clean() {
    let out = run(&["gradcheck", "--n", "4", "--K", "1", "--seeds", "2"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn gradcheck_rejects_oversized_graphs() {
    let out = run(&["gradcheck", "--n", "32"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_scores_a_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth_into(&data);
    let config = dir.path().join("run.conf");
    write_config(&config, 3);
    let out_dir = dir.path().join("out");
    assert!(run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ])
    .status
    .success());
    let out = run(&[
        "eval",
        "--checkpoint",
        out_dir.join("checkpoint.txt").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("class_averaged_accuracy"));
    assert!(stdout.contains("confusion"));
}

#[test]
fn inspect_frozen_checkpoint_lists_no_off_skeleton_edges() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth_into(&data);
    let config = dir.path().join("run.conf");
    write_config(&config, 2);
    let out_dir = dir.path().join("out");
    assert!(run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--mode",
        "hl",
    ])
    .status
    .success());
    let insp = dir.path().join("insp");
    let out = run(&[
        "inspect",
        "--checkpoint",
        out_dir.join("checkpoint.txt").to_str().unwrap(),
        "--out",
        insp.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let edges = std::fs::read_to_string(insp.join("off_skeleton_edges.txt")).unwrap();
    assert!(edges.trim().is_empty(), "frozen run leaked edges: {edges}");
    // the dumped adjacency equals the handcrafted graph
    let learned = std::fs::read_to_string(insp.join("learned_adjacency.txt")).unwrap();
    assert!(learned.starts_with("15\n"));
}

#[test]
fn inspect_learned_checkpoint_reports_a_hit_rate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth_into(&data);
    let config = dir.path().join("run.conf");
    write_config(&config, 5);
    let out_dir = dir.path().join("out");
    assert!(run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ])
    .status
    .success());
    let out = run(&[
        "inspect",
        "--checkpoint",
        out_dir.join("checkpoint.txt").to_str().unwrap(),
        "--out",
        dir.path().join("insp").to_str().unwrap(),
        "--truth",
        data.join("hidden_edges.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("hit_rate"), "stdout: {stdout}");
}

#[test]
fn inspect_truncated_checkpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("ck.txt");
    std::fs::write(&ck, "cheblap-checkpoint v1\nmode = hl\n").unwrap();
    let out = run(&[
        "inspect",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--out",
        dir.path().join("insp").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn every_subcommand_offers_help() {
    for sub in ["train", "eval", "gradcheck", "synth", "inspect"] {
        let out = run(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub} --help failed");
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains("--help"));
    }
}

#[test]
fn thread_cap_env_var_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth_into(&data);
    let config = dir.path().join("run.conf");
    write_config(&config, 2);
    let out = bin()
        .args([
            "train",
            "--config",
            config.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
        ])
        .env("CHEBLAP_THREADS", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let ok = bin()
        .args([
            "train",
            "--config",
            config.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            dir.path().join("out2").to_str().unwrap(),
        ])
        .env("CHEBLAP_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{ok:?}");
}
