use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use rfir_cli::{snapshot_name, Cli, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

fn rfir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfir")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn infer_arguments_parse() {
    let cli = Cli::try_parse_from([
        "rfir",
        "infer",
        "--ckpt",
        "m.bin",
        "--image",
        "x.ppm",
        "--prompt",
        "Remove blur.",
        "--out",
        "y.ppm",
    ])
    .unwrap();
    match cli.command {
        rfir_cli::Command::Infer(a) => {
            assert_eq!(a.prompt, "Remove blur.");
            assert_eq!(a.out, Path::new("y.ppm"));
        }
        other => panic!("parsed as {}", other.name()),
    }
}

#[test]
fn usage_errors_exit_one() {
    let o = rfir(&["infer", "--ckpt", "m.bin", "--image", "x.ppm", "--out", "y.ppm"]);
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
    assert!(stderr(&o).contains("--prompt"), "{}", stderr(&o));

    let o = rfir(&["bench", "--suite", "attention", "--report", "r.json", "--bogus"]);
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
    assert!(stderr(&o).contains("--bogus"));

    assert_eq!(rfir(&["frobnicate"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(rfir(&["eval", "--help"]).status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&rfir(&["train", "--help"]).stdout).contains("--data"));
}

#[test]
fn empty_manifest_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.jsonl");
    std::fs::write(&manifest, "").unwrap();
    let report = dir.path().join("r.json");
    let o = rfir(&[
        "eval",
        "--ckpt",
        "missing.ckpt",
        "--manifest",
        s(&manifest),
        "--report",
        s(&report),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_RUNTIME));
    let err = stderr(&o);
    assert!(err.contains("empty manifest"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn bench_writes_report_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("bench.json");
    let o = rfir(&["-q", "bench", "--suite", "attention", "--report", s(&report)]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["entries"].as_array().unwrap().len(), 6);
    assert_eq!(json["entries"][0]["report"]["flops"], 553_648_128u64);
    assert!(dir.path().join(snapshot_name("bench")).exists());
    assert!(o.stdout.is_empty());
}

fn datagen(out: &Path, seed: &str) -> Output {
    rfir(&[
        "-q",
        "datagen",
        "--out",
        s(out),
        "--seed",
        seed,
        "--count",
        "12",
        "--image-size",
        "16",
    ])
}

#[test]
fn pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = datagen(d, "7");
        assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    }
    let snap = std::fs::read_to_string(a.join(snapshot_name("datagen"))).unwrap();
    assert!(snap.lines().any(|l| l == "seed=7"), "{snap}");
    assert!(snap.contains("count=12"));
    assert_eq!(
        std::fs::read(a.join("manifest.jsonl")).unwrap(),
        std::fs::read(b.join("manifest.jsonl")).unwrap()
    );

    // The snapshot is itself a valid config that reproduces the dataset.
    let c = dir.path().join("c");
    let o = rfir(&[
        "-q",
        "datagen",
        "--config",
        s(&a.join(snapshot_name("datagen"))),
        "--out",
        s(&c),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(a.join("manifest.jsonl")).unwrap(),
        std::fs::read(c.join("manifest.jsonl")).unwrap()
    );

    let cfg = dir.path().join("train.txt");
    std::fs::write(&cfg, "preset=micro\nbatch_size=4\n").unwrap();
    let manifest = a.join("manifest.jsonl");
    let mut ckpts = Vec::new();
    for run in ["r1", "r2"] {
        let out = dir.path().join(run);
        let o = rfir(&[
            "-q",
            "train",
            "--config",
            s(&cfg),
            "--data",
            s(&manifest),
            "--out",
            s(&out),
            "--epochs",
            "1",
            "--seed",
            "3",
        ]);
        assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
        let snap = std::fs::read_to_string(out.join(snapshot_name("train"))).unwrap();
        assert!(snap.contains("seed=3\n") && snap.contains("epochs=1\n") && snap.contains("model.channels=8\n"));
        ckpts.push(std::fs::read(out.join("model.ckpt")).unwrap());
        assert!(out.join("loss_curve.json").exists());
    }
    assert_eq!(ckpts[0], ckpts[1]);

    let ckpt = dir.path().join("r1/model.ckpt");
    let report = dir.path().join("eval/report.json");
    let o = rfir(&[
        "-q",
        "eval",
        "--ckpt",
        s(&ckpt),
        "--manifest",
        s(&manifest),
        "--report",
        s(&report),
        "--weights",
        "live",
    ]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["overall"]["count"], 12);
    assert_eq!(json["weights"], "live");
    let snap = std::fs::read_to_string(dir.path().join("eval").join(snapshot_name("eval"))).unwrap();
    assert!(snap.contains("weights=live"));

    let img = a.join("images/000000_degraded.ppm");
    let out = dir.path().join("infer/out.ppm");
    let o = rfir(&[
        "-q",
        "infer",
        "--ckpt",
        s(&ckpt),
        "--image",
        s(&img),
        "--prompt",
        "Remove rain.",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    let restored = rfir_datagen::read_ppm(&out).unwrap();
    assert_eq!((restored.height, restored.width), (16, 16));

    let bad = rfir(&[
        "-q",
        "infer",
        "--ckpt",
        s(&ckpt),
        "--image",
        s(&manifest),
        "--prompt",
        "Remove rain.",
        "--out",
        s(&out),
    ]);
    assert_eq!(bad.status.code(), Some(EXIT_RUNTIME));
}

#[test]
fn bad_config_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.txt");
    std::fs::write(&cfg, "count=ten\n").unwrap();
    let o = rfir(&["datagen", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(EXIT_RUNTIME));
    assert!(stderr(&o).contains("count"));
}
