//! Black-box tests of the `sgbh` binary: every subcommand, exit codes, and
//! the resolved-config and output-file contracts.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sgbh"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn sgbh");
    assert!(
        out.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    edges: PathBuf,
    codebook: PathBuf,
}

/// synth + train once, shared by the downstream command tests.
fn trained_workspace() -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let synth_out = root.join("data");
    run_ok(&[
        "synth",
        "--out",
        synth_out.to_str().unwrap(),
        "--blocks",
        "3",
        "--sources",
        "24",
        "--destinations",
        "30",
        "--p-in",
        "0.7",
        "--p-out",
        "0.05",
        "--seed",
        "1",
    ]);
    let edges = synth_out.join("edges.tsv");
    assert!(edges.exists());

    let run_out = root.join("run");
    run_ok(&[
        "train",
        "--edges",
        edges.to_str().unwrap(),
        "--out",
        run_out.to_str().unwrap(),
        "--mode",
        "sgbgh",
        "--dim",
        "16",
        "--layers",
        "2",
        "--epochs",
        "6",
        "--batch-size",
        "256",
        "--lr",
        "0.003",
        "--lambda",
        "0",
        "--centers",
        "6",
        "--seed",
        "3",
    ]);
    let codebook = run_out.join("codebook.sgbh");
    assert!(codebook.exists());
    assert!(run_out.join("train_log.csv").exists());
    assert!(run_out.join("resolved.conf").exists());
    assert!(run_out.join("source_ids.tsv").exists());
    assert!(run_out.join("dest_ids.tsv").exists());
    Workspace {
        _dir: dir,
        root,
        edges,
        codebook,
    }
}

#[test]
fn full_pipeline_through_the_binary() {
    let ws = trained_workspace();

    // resolved config echoes overrides and defaults
    let conf = std::fs::read_to_string(ws.root.join("run/resolved.conf")).unwrap();
    assert!(conf.contains("mode = sgbgh"));
    assert!(conf.contains("centers = 6"));
    assert!(conf.contains("tau = 0.2"), "default tau echoed: {conf}");

    // eval writes metrics.csv whose k=20 row matches the stdout line
    let eval_out = ws.root.join("eval");
    let out = run_ok(&[
        "eval",
        "--codebook",
        ws.codebook.to_str().unwrap(),
        "--edges",
        ws.edges.to_str().unwrap(),
        "--out",
        eval_out.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    let text = stdout(&out);
    let csv = std::fs::read_to_string(eval_out.join("metrics.csv")).unwrap();
    let row20 = csv.lines().find(|l| l.starts_with("20,")).unwrap();
    let recall_csv: f64 = row20.split(',').nth(1).unwrap().parse().unwrap();
    let recall_stdout: f64 = text
        .lines()
        .find(|l| l.starts_with("recall@20"))
        .and_then(|l| l.split_whitespace().nth(2))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(recall_csv, recall_stdout);

    // diagnose writes the similarity table
    let diag_out = ws.root.join("diag");
    run_ok(&[
        "diagnose",
        "--codebook",
        ws.codebook.to_str().unwrap(),
        "--edges",
        ws.edges.to_str().unwrap(),
        "--out",
        diag_out.to_str().unwrap(),
        "--seed",
        "3",
        "--neg-samples",
        "100",
        "--groups",
        "4",
    ]);
    let sim = std::fs::read_to_string(diag_out.join("similarity.csv")).unwrap();
    assert!(sim.starts_with("layer,group,kind,mean,count"));
    // 3 layers x 4 groups x 2 kinds data rows
    assert_eq!(sim.lines().count(), 1 + 3 * 4 * 2);
}

#[test]
fn search_reports_counter_arithmetic_and_error_rows() {
    let ws = trained_workspace();
    let search_out = ws.root.join("search");
    let out = run_ok(&[
        "search",
        "--codebook",
        ws.codebook.to_str().unwrap(),
        "--out",
        search_out.to_str().unwrap(),
        "--random-queries",
        "1000",
        "--k",
        "5",
        "--seed",
        "9",
    ]);
    let summary = stdout(&out);
    // 1000 queries over 30 destinations, 3 segments, d = 16
    let want_bops = 1000u64 * 30 * 3 * 16;
    assert!(
        summary.contains(&format!("bops={want_bops}")),
        "summary was: {summary}"
    );
    let rows = std::fs::read_to_string(search_out.join("results.tsv")).unwrap();
    assert_eq!(rows.lines().count(), 1000 * 5);

    // invalid ids produce per-query error rows, valid ones still answer
    let search2 = ws.root.join("search2");
    run_ok(&[
        "search",
        "--codebook",
        ws.codebook.to_str().unwrap(),
        "--out",
        search2.to_str().unwrap(),
        "--queries",
        "0,999",
        "--k",
        "3",
    ]);
    let rows = std::fs::read_to_string(search2.join("results.tsv")).unwrap();
    let error_rows: Vec<&str> = rows.lines().filter(|l| l.contains("\terror\t")).collect();
    assert_eq!(error_rows.len(), 1);
    assert!(error_rows[0].starts_with("999\t"));
    assert_eq!(rows.lines().filter(|l| l.starts_with("0\t")).count(), 3);
}

#[test]
fn missing_edges_file_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "train",
            "--edges",
            "/no/such/file.tsv",
            "--out",
            dir.path().join("x").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/no/such/file.tsv"), "stderr: {err}");
}

#[test]
fn codebook_graph_size_mismatch_exits_2_naming_both_counts() {
    let ws = trained_workspace();
    // a second, smaller graph
    let other = ws.root.join("other");
    run_ok(&[
        "synth",
        "--out",
        other.to_str().unwrap(),
        "--blocks",
        "2",
        "--sources",
        "10",
        "--destinations",
        "12",
        "--seed",
        "2",
    ]);
    let out = bin()
        .args([
            "eval",
            "--codebook",
            ws.codebook.to_str().unwrap(),
            "--edges",
            other.join("edges.tsv").to_str().unwrap(),
            "--out",
            ws.root.join("bad").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("54") && err.contains("22"), "stderr: {err}");
}

#[test]
fn config_file_applies_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    run_ok(&[
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--blocks",
        "2",
        "--sources",
        "12",
        "--destinations",
        "16",
        "--seed",
        "4",
    ]);
    let conf_path = dir.path().join("run.conf");
    std::fs::write(&conf_path, "dim = 16\nepochs = 2\nlambda = 0\nmode = lightgch\n").unwrap();

    let run_out = dir.path().join("run");
    run_ok(&[
        "train",
        "--edges",
        data.join("edges.tsv").to_str().unwrap(),
        "--out",
        run_out.to_str().unwrap(),
        "--config",
        conf_path.to_str().unwrap(),
        "--dim",
        "8",
        "--batch-size",
        "64",
    ]);
    let resolved = std::fs::read_to_string(run_out.join("resolved.conf")).unwrap();
    assert!(resolved.contains("dim = 8"), "flag beats file: {resolved}");
    assert!(resolved.contains("epochs = 2"), "file beats default: {resolved}");
    assert!(resolved.contains("mode = lightgch"));
}

#[test]
fn bad_codebook_magic_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let fake = dir.path().join("fake.sgbh");
    std::fs::write(&fake, b"WRONGMAGICxxxxxxxxxxxx").unwrap();
    let out = bin()
        .args([
            "search",
            "--codebook",
            fake.to_str().unwrap(),
            "--out",
            dir.path().join("o").to_str().unwrap(),
            "--queries",
            "0",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn commands_do_not_mutate_inputs() {
    let ws = trained_workspace();
    let edges_before = std::fs::read(&ws.edges).unwrap();
    let cb_before = std::fs::read(&ws.codebook).unwrap();
    run_ok(&[
        "eval",
        "--codebook",
        ws.codebook.to_str().unwrap(),
        "--edges",
        ws.edges.to_str().unwrap(),
        "--out",
        ws.root.join("again").to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert_eq!(std::fs::read(&ws.edges).unwrap(), edges_before);
    assert_eq!(std::fs::read(&ws.codebook).unwrap(), cb_before);
}
