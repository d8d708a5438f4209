//! End-to-end CLI workflows against the offline stubs: context generation,
//! embedding, training, evaluation, and OOD scoring on a synthetic dataset.

use std::path::Path;

use fseb::cli::run_cli;

fn run(args: &[&str]) -> i32 {
    let argv: Vec<String> = std::iter::once("fseb")
        .chain(args.iter().copied())
        .map(str::to_string)
        .collect();
    run_cli(&argv)
}

fn write_config(dir: &Path, bundle: &Path, out: &Path, seed: u64) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "arch": "desk_mlp",
        "arch_hidden": 24,
        "arch_dropout": 0.15,
        "arch_input": [1, 12, 12],
        "dataset": {
            "kind": "synth",
            "spec": {
                "generator": "stripes",
                "size": 12,
                "classes": 3,
                "per_class": 30,
                "noise_level": 0.05,
                "ood": "disjoint_family",
                "ood_count": 60,
                "seed": 5
            }
        },
        "bundle_dir": bundle,
        "out_dir": out,
        "train": {
            "batch_size": 32,
            "lr": 3e-3,
            "weight_decay": 1e-5,
            "context_batch": 8,
            "max_epochs": 6,
            "patience": 3,
            "val_fraction": 0.2,
            "seed": seed,
            "val_mc_samples": 4
        },
        "kernel": { "tau1": 0.5, "tau2": 1.0 },
        "s_eval": 8,
        "seeds": [seed]
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn stub_workflow_gen_embed_train_eval_ood() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), &bundle, &out, 7);

    assert_eq!(
        run(&[
            "gen-context",
            "--out",
            bundle.to_str().unwrap(),
            "--provider",
            "stub",
            "--classes",
            "class-0,class-1,class-2",
            "--per-class",
            "20",
            "--size",
            "12",
            "--seed",
            "3",
        ]),
        0
    );
    assert!(bundle.join("manifest.json").exists());
    assert!(bundle.join("images.u8").exists());

    assert_eq!(
        run(&[
            "embed",
            "--bundle",
            bundle.to_str().unwrap(),
            "--provider",
            "semantic-stub",
            "--semantic-classes",
            "3",
            "--embed-dim",
            "16",
            "--batch-size",
            "8",
        ]),
        0
    );
    let loaded = fseb::context::load_context_bundle(&bundle).unwrap();
    assert_eq!(loaded.m_total, 60);
    assert_eq!(loaded.d, 16);
    loaded.validate().unwrap();

    assert_eq!(run(&["train", "--config", cfg.to_str().unwrap()]), 0);
    assert!(out.join("reports/train_report.json").exists());
    assert!(out.join("checkpoints/best.ckpt").exists());
    assert!(out.join("config.json").exists());
    assert!(out.join("run_meta.json").exists());

    assert_eq!(run(&["eval", "--run", out.to_str().unwrap()]), 0);
    let eval_report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("reports/eval_report.json")).unwrap(),
    )
    .unwrap();
    assert!(eval_report["acc"].as_f64().unwrap() > 0.3);

    assert_eq!(
        run(&["ood", "--run", out.to_str().unwrap(), "--ood", "noise"]),
        0
    );
    let ood_report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("reports/ood_report.json")).unwrap(),
    )
    .unwrap();
    let scores = ood_report["auroc"]["noise"].as_object().unwrap();
    assert_eq!(scores.len(), 3);
    for key in ["msp", "entropy", "expected_entropy"] {
        let v = scores[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
}

#[test]
fn train_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    assert_eq!(
        run(&[
            "gen-context",
            "--out",
            bundle.to_str().unwrap(),
            "--classes",
            "class-0,class-1,class-2",
            "--per-class",
            "10",
            "--size",
            "12",
            "--seed",
            "9",
        ]),
        0
    );
    assert_eq!(
        run(&[
            "embed",
            "--bundle",
            bundle.to_str().unwrap(),
            "--embed-dim",
            "8",
        ]),
        0
    );
    let out_a = dir.path().join("run_a");
    let out_b = dir.path().join("run_b");
    let cfg = write_config(dir.path(), &bundle, &out_a, 11);
    assert_eq!(run(&["train", "--config", cfg.to_str().unwrap()]), 0);
    assert_eq!(
        run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_b.to_str().unwrap(),
        ]),
        0
    );
    let a = std::fs::read(out_a.join("reports/train_report.json")).unwrap();
    let b = std::fs::read(out_b.join("reports/train_report.json")).unwrap();
    assert_eq!(a, b, "train reports differ between identical runs");
    let ca = std::fs::read(out_a.join("checkpoints/best.ckpt")).unwrap();
    let cb = std::fs::read(out_b.join("checkpoints/best.ckpt")).unwrap();
    assert_eq!(ca, cb, "checkpoints differ between identical runs");
}

#[test]
fn hpo_writes_trial_table() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    assert_eq!(
        run(&[
            "gen-context",
            "--out",
            bundle.to_str().unwrap(),
            "--classes",
            "class-0,class-1,class-2",
            "--per-class",
            "8",
            "--size",
            "12",
            "--seed",
            "2",
        ]),
        0
    );
    assert_eq!(
        run(&["embed", "--bundle", bundle.to_str().unwrap(), "--embed-dim", "8"]),
        0
    );
    let out = dir.path().join("hpo_run");
    let cfg = write_config(dir.path(), &bundle, &out, 3);
    // shrink the training budget for the search
    let mut parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    parsed["train"]["max_epochs"] = 1.into();
    parsed["train"]["patience"] = 1.into();
    std::fs::write(&cfg, serde_json::to_string_pretty(&parsed).unwrap()).unwrap();

    assert_eq!(
        run(&[
            "hpo",
            "--config",
            cfg.to_str().unwrap(),
            "--trials",
            "4",
        ]),
        0
    );
    let table = std::fs::read_to_string(out.join("trials.csv")).unwrap();
    assert!(table.starts_with("trial,lambda,tau1,tau2,val_nll,status,stopped_epoch"));
    assert_eq!(table.lines().count(), 5);
    assert!(out.join("reports/hpo_best.json").exists());
}

#[test]
fn config_validation_precedes_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never_created");
    let cfg = serde_json::json!({
        "arch": "desk_mlp",
        "dataset": {"kind": "synth", "spec": {
            "generator": "stripes", "size": 8, "classes": 3, "per_class": 10,
            "ood": "noise", "ood_count": 5, "seed": 0
        }},
        "bundle_dir": dir.path().join("nope"),
        "out_dir": out,
        "train": { "val_fraction": 2.0 }
    });
    let path = dir.path().join("bad.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    assert_eq!(run(&["train", "--config", path.to_str().unwrap()]), 2);
    assert!(!out.exists(), "invalid config must not create outputs");
}
