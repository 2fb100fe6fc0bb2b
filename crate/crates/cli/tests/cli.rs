mod common;

use common::*;
use earmetrics_core::geometry::FEATURE_NAMES;
use earmetrics_core::synthetic::{silhouette_size_set, SilhouetteConfig};

#[test]
fn help_exits_zero_for_every_subcommand() {
    assert_eq!(earmetrics(&["--help"]).status.code(), Some(0));
    for sub in [
        "ingest",
        "annotate-serve",
        "extract",
        "augment",
        "split",
        "train",
        "finetune",
        "eval",
    ] {
        let out = earmetrics(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(
            String::from_utf8_lossy(&out.stdout).contains("Usage"),
            "{sub}"
        );
    }
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let labels = write_reference_labels(tmp.path());
    for args in [
        vec![],
        vec!["frobnicate"],
        vec!["split", "--labels", p(&labels), "--task", "age"],
        vec![
            "split",
            "--labels",
            p(&labels),
            "--task",
            "age",
            "--seed",
            "1",
            "--colour",
            "red",
        ],
        vec![
            "split",
            "--labels",
            p(&labels),
            "--task",
            "height",
            "--seed",
            "1",
        ],
        vec![
            "split",
            "--labels",
            p(&labels),
            "--task",
            "gender",
            "--seed",
            "1",
            "--counts-override",
            "male=lots",
        ],
        vec![
            "split",
            "--labels",
            p(&labels),
            "--task",
            "age",
            "--seed",
            "1",
            "--test-frac",
            "1.5",
        ],
    ] {
        let out = earmetrics(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn split_reproduces_reference_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let labels = write_reference_labels(tmp.path());
    let manifest = tmp.path().join("age.json");
    let s = summary(&earmetrics(&[
        "split",
        "--labels",
        p(&labels),
        "--task",
        "age",
        "--seed",
        "7",
        "--out",
        p(&manifest),
    ]));
    let expect = [
        ("18-28", 50, 7, 14),
        ("29-38", 53, 7, 15),
        ("39-48", 51, 7, 14),
        ("49-58", 42, 6, 12),
        ("59-68+", 42, 6, 12),
    ];
    for (g, tr, va, te) in expect {
        let c = &s["strata"][g];
        assert_eq!(
            (c["train"].as_u64(), c["val"].as_u64(), c["test"].as_u64()),
            (Some(tr), Some(va), Some(te)),
            "{g}"
        );
    }
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["task"], "age");
    assert_eq!(m["seed"], 7);

    let s = summary(&earmetrics(&[
        "split",
        "--labels",
        p(&labels),
        "--task",
        "gender",
        "--seed",
        "7",
        "--counts-override",
        "male=38:19",
    ]));
    assert_eq!(
        s["strata"]["male"],
        serde_json::json!({"train": 131, "val": 19, "test": 38})
    );
    assert_eq!(
        s["strata"]["female"],
        serde_json::json!({"train": 105, "val": 15, "test": 30})
    );
}

#[test]
fn extract_train_eval_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (lm_dir, labels) = write_landmark_corpus(dir, 60, 60, 3);
    let inputs_before = snapshot(dir);

    let features = dir.join("features.csv");
    let s = summary(&earmetrics(&[
        "extract",
        "--landmarks",
        p(&lm_dir),
        "--out",
        p(&features),
    ]));
    assert_eq!(s["rows"], 120);
    let text = std::fs::read_to_string(&features).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header[0], "subject_id");
    assert_eq!(&header[1..], &FEATURE_NAMES[..]);
    assert_eq!(text.lines().count(), 121);

    let manifest = dir.join("gender.json");
    summary(&earmetrics(&[
        "split",
        "--labels",
        p(&labels),
        "--task",
        "gender",
        "--seed",
        "1",
        "--out",
        p(&manifest),
    ]));

    let mut accuracies = Vec::new();
    for (model, extra) in [
        ("svm", vec![]),
        ("logreg", vec![]),
        ("forest", vec!["--trees", "50"]),
        ("mlp", vec!["--epochs", "100"]),
    ] {
        let model_path = dir.join(format!("{model}.json"));
        let mut args = vec![
            "train",
            "--features",
            p(&features),
            "--labels",
            p(&labels),
            "--task",
            "gender",
            "--model",
            model,
            "--seed",
            "5",
            "--manifest",
            p(&manifest),
            "--out",
            p(&model_path),
        ];
        args.extend(extra.iter().copied());
        let s = summary(&earmetrics(&args));
        let acc = s["accuracy"].as_f64().unwrap();
        assert!(acc > 0.8, "{model}: {acc}");
        assert_eq!(s["test"]["n"], 24);

        let before = std::fs::read(&model_path).unwrap();
        summary(&earmetrics(&args));
        assert_eq!(
            std::fs::read(&model_path).unwrap(),
            before,
            "{model} rerun differs"
        );

        let e = summary(&earmetrics(&[
            "eval",
            "--model",
            p(&model_path),
            "--features",
            p(&features),
            "--labels",
            p(&labels),
            "--task",
            "gender",
            "--manifest",
            p(&manifest),
            "--subset",
            "test",
        ]));
        assert_eq!(e["accuracy"].as_f64(), Some(acc), "{model}");
        accuracies.push(acc);
    }

    let selected = dir.join("selected.json");
    let s = summary(&earmetrics(&[
        "train",
        "--features",
        p(&features),
        "--labels",
        p(&labels),
        "--task",
        "gender",
        "--model",
        "logreg",
        "--seed",
        "5",
        "--manifest",
        p(&manifest),
        "--out",
        p(&selected),
        "--select",
        "reference",
    ]));
    assert_eq!(s["selected_features"].as_array().unwrap().len(), 6);

    // inputs untouched apart from the files written alongside them
    let after: Vec<_> = snapshot(dir)
        .into_iter()
        .filter(|(k, _)| inputs_before.iter().any(|(b, _)| b == k))
        .collect();
    assert_eq!(after, inputs_before);
}

#[test]
fn training_without_manifest_splits_by_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (lm_dir, labels) = write_landmark_corpus(tmp.path(), 30, 30, 9);
    let features = tmp.path().join("f.csv");
    summary(&earmetrics(&[
        "extract",
        "--landmarks",
        p(&lm_dir),
        "--out",
        p(&features),
    ]));
    let s = summary(&earmetrics(&[
        "train",
        "--features",
        p(&features),
        "--labels",
        p(&labels),
        "--task",
        "gender",
        "--model",
        "logreg",
        "--seed",
        "2",
        "--out",
        p(&tmp.path().join("m.json")),
    ]));
    // 30 per gender: 6 test, 3 val, 21 train each
    assert_eq!(s["n_train"], 42);
    assert_eq!(s["test"]["n"], 12);
    assert_eq!(s["val"]["n"], 6);
}

#[test]
fn data_errors_exit_two_with_file_context() {
    let tmp = tempfile::tempdir().unwrap();
    let (lm_dir, labels) = write_landmark_corpus(tmp.path(), 5, 5, 1);
    let bad = lm_dir.join("s004.json");
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&bad).unwrap()).unwrap();
    doc["landmarks"]["sba"] = doc["landmarks"]["sa"].clone();
    std::fs::write(&bad, doc.to_string()).unwrap();
    let out = earmetrics(&[
        "extract",
        "--landmarks",
        p(&lm_dir),
        "--out",
        p(&tmp.path().join("f.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("s004.json"));
    assert!(!tmp.path().join("f.csv").exists());

    std::fs::write(&bad, "{ not json").unwrap();
    let out = earmetrics(&[
        "extract",
        "--landmarks",
        p(&bad),
        "--out",
        p(&tmp.path().join("f.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let dup = tmp.path().join("dup.csv");
    std::fs::write(
        &dup,
        "subject_id,age,gender,image\na,30,male,a.png\na,31,female,b.png\n",
    )
    .unwrap();
    let out = earmetrics(&[
        "split",
        "--labels",
        p(&dup),
        "--task",
        "gender",
        "--seed",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dup.csv") && err.contains("line 3"), "{err}");

    let out = earmetrics(&["ingest", "--labels", p(&labels)]);
    assert_eq!(out.status.code(), Some(2), "images do not exist");
}

#[test]
fn solver_failure_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let (lm_dir, labels) = write_landmark_corpus(tmp.path(), 30, 30, 4);
    let features = tmp.path().join("f.csv");
    summary(&earmetrics(&[
        "extract",
        "--landmarks",
        p(&lm_dir),
        "--out",
        p(&features),
    ]));
    let out = earmetrics(&[
        "train",
        "--features",
        p(&features),
        "--labels",
        p(&labels),
        "--task",
        "gender",
        "--model",
        "svm",
        "--seed",
        "0",
        "--svm-max-iter",
        "1",
        "--out",
        p(&tmp.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!tmp.path().join("m.json").exists());
}

#[test]
fn ingest_counts_records() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for id in ["a", "b", "c"] {
        write_png(&dir.join(format!("img/{id}.png")), &textured(4, 4, 0));
    }
    let labels = dir.join("labels.csv");
    std::fs::write(
        &labels,
        "subject_id,age,gender,image\na,25,female,a.png\nb,70,male,b.png\nc,41,male,c.png\n",
    )
    .unwrap();
    let out_json = dir.join("records.json");
    let s = summary(&earmetrics(&[
        "ingest",
        "--labels",
        p(&labels),
        "--images",
        p(&dir.join("img")),
        "--out",
        p(&out_json),
    ]));
    assert_eq!(s["subjects"], 3);
    assert_eq!(s["gender"]["male"], 2);
    assert_eq!(s["age_groups"]["59-68+"], 1);
    let records: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_json).unwrap()).unwrap();
    assert_eq!(records.as_array().unwrap().len(), 3);
}

#[test]
fn augment_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let inp = tmp.path().join("in");
    write_png(&inp.join("female/s1.png"), &textured(20, 20, 1));
    write_png(&inp.join("male/s2.png"), &textured(20, 20, 2));
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("out{k}"));
        let s = summary(&earmetrics(&[
            "augment",
            "--input",
            p(&inp),
            "--out",
            p(&out),
            "--seed",
            "9",
            "--resize",
            "16",
        ]));
        assert_eq!(s["written"], 110);
        assert_eq!(s["transforms"], 55);
        let snap: Vec<_> = snapshot(&out)
            .into_iter()
            .filter(|(k, _)| k.ends_with(".png"))
            .collect();
        runs.push(snap);
    }
    assert_eq!(runs[0].len(), 110);
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn finetune_then_eval_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SilhouetteConfig {
        size: 24,
        min_height: 8.0,
        max_height: 18.0,
        max_shift: 1.0,
        ..Default::default()
    };
    let write_set = |name: &str, n: usize, seed: u64| {
        let (imgs, labels) = silhouette_size_set(&cfg, 2, n, seed);
        for (i, (img, y)) in imgs.iter().zip(labels).enumerate() {
            write_png(&tmp.path().join(format!("{name}/c{y}/{i:03}.png")), img);
        }
        tmp.path().join(name)
    };
    let target = write_set("target", 16, 1);
    let domain = write_set("domain", 16, 2);
    let val = write_set("val", 10, 3);
    let ckpt = tmp.path().join("cnn.json");
    let log = tmp.path().join("log.csv");
    let args = [
        "finetune",
        "--target",
        p(&target),
        "--domain",
        p(&domain),
        "--val",
        p(&val),
        "--seed",
        "4",
        "--out",
        p(&ckpt),
        "--log",
        p(&log),
        "--size",
        "24",
        "--crop",
        "20",
        "--channels",
        "2,4",
        "--domain-epochs",
        "1",
        "--target-epochs",
        "2",
        "--batch-size",
        "4",
    ];
    let s = summary(&earmetrics(&args));
    assert_eq!(s["stages"].as_array().unwrap().len(), 2);
    let acc = s["validation_accuracy"].as_f64().unwrap();
    let first = std::fs::read(&ckpt).unwrap();
    summary(&earmetrics(&args));
    assert_eq!(std::fs::read(&ckpt).unwrap(), first);
    let log_text = std::fs::read_to_string(&log).unwrap();
    assert!(log_text.starts_with("step,stage,epoch,loss,lr\n"));

    let e = summary(&earmetrics(&[
        "eval",
        "--model",
        p(&ckpt),
        "--images",
        p(&val),
        "--size",
        "24",
        "--crop",
        "20",
    ]));
    assert_eq!(e["accuracy"].as_f64(), Some(acc));
    assert_eq!(e["n"], 10);

    let out = earmetrics(&["eval", "--model", p(&ckpt)]);
    assert_eq!(out.status.code(), Some(1));
}
