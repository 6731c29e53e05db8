//! End-to-end runs of the binary at toy scale: every subcommand, exit
//! codes, and output files.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_induction-lens"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A tiny trained model shared by the smoke tests.
fn toy_run(dir: &Path) -> (String, String) {
    let corpus = dir.join("corpus.jsonl");
    run_ok(&[
        "build-corpus",
        "--kind",
        "mixed",
        "--n",
        "600",
        "--seed",
        "5",
        "--out",
        corpus.to_str().unwrap(),
    ]);
    let run_dir = dir.join("run");
    run_ok(&[
        "train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out-dir",
        run_dir.to_str().unwrap(),
        "--steps",
        "20",
        "--interval",
        "10",
        "--n-layers",
        "2",
        "--n-heads",
        "2",
        "--d-model",
        "32",
        "--max-seq-len",
        "64",
        "--seed",
        "3",
    ]);
    (
        corpus.to_str().unwrap().to_string(),
        run_dir.join("ckpt_20.ilw").to_str().unwrap().to_string(),
    )
}

#[test]
fn full_cli_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, ckpt) = toy_run(dir.path());

    // analyses
    let table = dir.path().join("subj.csv");
    run_ok(&[
        "analyze",
        "relation-index",
        "--ckpt",
        &ckpt,
        "--corpus",
        &corpus,
        "--relation",
        "subj",
        "--no-tau-gate",
        "--out",
        table.to_str().unwrap(),
    ]);
    assert!(table.exists());
    let text = std::fs::read_to_string(&table).unwrap();
    assert!(text.starts_with("# induction-lens v"));
    assert!(text.contains("layer,head,mean,count"));

    run_ok(&[
        "analyze",
        "baseline",
        "--ckpt",
        &ckpt,
        "--corpus",
        &corpus,
        "--no-tau-gate",
    ]);
    run_ok(&[
        "analyze",
        "grouping",
        "--ckpt",
        &ckpt,
        "--corpus",
        &corpus,
        "--relation",
        "subj",
        "--no-tau-gate",
    ]);
    run_ok(&["analyze", "tau-dist", "--ckpt", &ckpt, "--corpus", &corpus]);
    run_ok(&["analyze", "copying", "--ckpt", &ckpt]);
    run_ok(&[
        "analyze",
        "prefix-match",
        "--ckpt",
        &ckpt,
        "--n-seqs",
        "5",
        "--seq-len",
        "16",
    ]);

    // icl + probe
    let icl_csv = dir.path().join("icl.csv");
    run_ok(&[
        "icl",
        "eval",
        "--ckpt",
        &ckpt,
        "--task",
        "binary",
        "--shots",
        "1,4",
        "--trials",
        "20",
        "--out",
        icl_csv.to_str().unwrap(),
    ]);
    assert!(icl_csv.exists());
    run_ok(&[
        "icl",
        "loss-reduction",
        "--ckpt",
        &ckpt,
        "--texts",
        &corpus,
        "--i",
        "4",
        "--j",
        "8",
    ]);
    let probe_path = dir.path().join("probe.ilw");
    run_ok(&[
        "probe",
        "train",
        "--ckpt",
        &ckpt,
        "--corpus",
        &corpus,
        "--out",
        probe_path.to_str().unwrap(),
        "--epochs",
        "20",
        "--take",
        "80",
    ]);
    let out = run_ok(&[
        "probe",
        "eval",
        "--probe",
        probe_path.to_str().unwrap(),
        "--ckpt",
        &ckpt,
        "--corpus",
        &corpus,
        "--skip",
        "80",
        "--take",
        "40",
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("probe accuracy"));

    // figures from the relation table
    let heat = dir.path().join("heat.svg");
    run_ok(&[
        "report",
        "heatmap",
        "--input",
        table.to_str().unwrap(),
        "--out",
        heat.to_str().unwrap(),
    ]);
    let svg_text = std::fs::read_to_string(&heat).unwrap();
    assert!(svg_text.starts_with("<?xml"));
    assert!(svg_text.contains("</svg>"));
}

#[test]
fn sweep_resumes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (_corpus, ckpt) = toy_run(dir.path());
    let ckpt10 = Path::new(&ckpt).with_file_name("ckpt_10.ilw");

    let out_dir = dir.path().join("sweep");
    let manifest = serde_json::json!({
        "checkpoints": [ckpt10, ckpt],
        "analyses": [
            {"kind": "relation-index", "relation": "subj"},
            {"kind": "copying"},
            {"kind": "icl", "task": "binary", "shots": [1, 2]},
        ],
        "output_dir": out_dir,
        "deterministic": true,
        "seed": 5,
        "icl_trials": 10,
    });
    let mpath = dir.path().join("sweep.json");
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();

    run_ok(&["sweep", "--manifest", mpath.to_str().unwrap()]);
    // cardinality: one row per head per checkpoint for a per-head analysis
    let cell = std::fs::read_to_string(out_dir.join("20_relidx_subj_fwd.csv")).unwrap();
    let head_rows = cell.lines().skip(2).count();
    assert_eq!(head_rows, 2 * 2, "2 layers x 2 heads");
    assert!(out_dir.join("summary.txt").exists());

    // resumability: delete one cell, touch the rest, rerun; only the
    // missing cell is recomputed
    let victim = out_dir.join("10_copying.csv");
    std::fs::remove_file(&victim).unwrap();
    let before = std::fs::read_to_string(out_dir.join("20_copying.csv")).unwrap();
    let out = run_ok(&["sweep", "--manifest", mpath.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("(1 run, 5 skipped"), "{stdout}");
    assert!(victim.exists());
    assert_eq!(
        before,
        std::fs::read_to_string(out_dir.join("20_copying.csv")).unwrap()
    );

    // curves from the sweep outputs
    let curves = dir.path().join("curves.svg");
    run_ok(&[
        "report",
        "curves",
        "--input",
        out_dir.to_str().unwrap(),
        "--metric",
        "copying",
        "--select",
        "top2",
        "--out",
        curves.to_str().unwrap(),
    ]);
    assert!(curves.exists());
}

#[test]
fn exit_codes() {
    // input error -> 1
    let out = bin()
        .args(["analyze", "copying", "--ckpt", "/nonexistent/x.ilw"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // unloadable checkpoint in a sweep -> partial completion, exit 3
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("ckpt_5.ilw");
    std::fs::write(&bogus, b"not a weight file").unwrap();
    let manifest = serde_json::json!({
        "checkpoints": [bogus],
        "analyses": [{"kind": "copying"}],
        "output_dir": dir.path().join("out"),
        "seed": 1,
    });
    let mpath = dir.path().join("m.json");
    std::fs::write(&mpath, serde_json::to_string(&manifest).unwrap()).unwrap();
    let out = bin()
        .args(["sweep", "--manifest", mpath.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("out/failures.csv").exists());

    // grad-check success -> 0
    let out = bin().args(["grad-check"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn deterministic_flag_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, ckpt) = toy_run(dir.path());
    let t1 = dir.path().join("t1.csv");
    let t2 = dir.path().join("t2.csv");
    for t in [&t1, &t2] {
        run_ok(&[
            "--deterministic",
            "analyze",
            "relation-index",
            "--ckpt",
            &ckpt,
            "--corpus",
            &corpus,
            "--relation",
            "obj",
            "--no-tau-gate",
            "--out",
            t.to_str().unwrap(),
        ]);
    }
    assert_eq!(
        std::fs::read(&t1).unwrap(),
        std::fs::read(&t2).unwrap()
    );
}
