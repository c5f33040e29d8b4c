use reademb::dataio::{save_raw_samples, Label, RawWord, Sidecar};
use reademb::features::EegEpoch;
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn reademb(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reademb"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = reademb(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    reademb(dir, args).status.code().expect("exit code")
}

fn json(path: PathBuf) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn synth_small(dir: &Path, name: &str, extra: &[&str]) {
    let mut args = vec![
        "synth", "--out", name, "--sentences", "20", "--words", "5", "--delta", "20", "--eeg-dim", "8",
    ];
    args.extend_from_slice(extra);
    ok(dir, &args);
}

#[test]
fn synth_counts_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(d, &["synth", "--sentences", "100", "--words", "10", "--delta", "2", "--seed", "7", "--eeg-dim", "4", "--out", "a.jsonl"]);
    assert!(out.contains("1000 words"), "{out}");
    let text = std::fs::read_to_string(d.join("a.jsonl")).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains("\"word\"")).count(), 1000);

    ok(d, &["synth", "--sentences", "100", "--words", "10", "--delta", "2", "--seed", "7", "--eeg-dim", "4", "--out", "b.jsonl"]);
    let a = std::fs::read(d.join("a.eeg.bin")).unwrap();
    let b = std::fs::read(d.join("b.eeg.bin")).unwrap();
    assert_eq!(a, b);
    assert_eq!(text.replace("a.eeg.bin", "b.eeg.bin"), std::fs::read_to_string(d.join("b.jsonl")).unwrap());

    assert_eq!(code(d, &["synth", "--delta", "-1", "--out", "c.jsonl"]), 2);
    assert!(!d.join("c.jsonl").exists());
    assert_eq!(code(d, &["synth", "--sentences", "0", "--out", "c.jsonl"]), 2);
    assert_eq!(code(d, &["synth"]), 2);
}

fn raw_words(channels: usize, words: u32) -> Vec<RawWord> {
    (0..words)
        .map(|w| {
            let chans: Vec<Vec<f64>> = (0..channels)
                .map(|c| (0..32).map(|t| ((t * (c + 2) + w as usize) as f64 * 0.37).sin()).collect())
                .collect();
            RawWord {
                subject: "S01".into(),
                sentence_id: 0,
                word_index: w,
                token: format!("w{w}"),
                label: Some(if w % 2 == 0 { Label::Hrw } else { Label::Lrw }),
                valid: true,
                eye: (0..12).map(|k| (k + w as usize) as f64).collect(),
                fixations: vec![EegEpoch::from_channels(&chans).unwrap()],
                wemb: None,
            }
        })
        .collect()
}

#[test]
fn extract_reduces_raw_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    save_raw_samples(&raw_words(3, 4), &d.join("raw3.jsonl")).unwrap();
    let out = ok(d, &["extract", "--input", "raw3.jsonl", "--out", "ce3.jsonl", "--bins", "8", "--l1-eye", "--inline"]);
    assert!(out.contains("3 channels -> 3 features (8 bins)"), "{out}");
    let text = std::fs::read_to_string(d.join("ce3.jsonl")).unwrap();
    let header: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header["header"]["eeg_channels"], 3);
    assert_eq!(header["header"]["bins"], 8);
    let first: Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    assert_eq!(first["eeg"].as_array().unwrap().len(), 3);
    let eye_col: f64 = text
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["eye"][5].as_f64().unwrap())
        .sum();
    assert!((eye_col - 1.0).abs() < 1e-12);

    save_raw_samples(&raw_words(105, 1), &d.join("raw105.jsonl")).unwrap();
    let out = ok(d, &["extract", "--input", "raw105.jsonl", "--out", "ce105.jsonl"]);
    assert!(out.contains("105 channels -> 5460 features"), "{out}");

    assert_eq!(code(d, &["extract", "--input", "ce3.jsonl", "--out", "again.jsonl"]), 3);
    assert!(!d.join("again.jsonl").exists());
    // a single channel has no pairs to compare
    Sidecar::new(vec![1, 1, 8], vec![0.5; 8]).unwrap().write(&d.join("raw1.raw.bin")).unwrap();
    let line = r#"{"subject":"S01","sentence":0,"word":0,"label":"HRW","valid":true,"eye":[1,1,1,1,1,1,1,1,1,1,1,1],"eeg_raw":[{"ref":0}]}"#;
    std::fs::write(d.join("raw1.jsonl"), format!("{line}\n")).unwrap();
    assert_eq!(code(d, &["extract", "--input", "raw1.jsonl", "--out", "ce1.jsonl"]), 3);
}

#[test]
fn cv_modalities_outputs_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_small(d, "d.jsonl", &["--wemb-dim", "6"]);
    let common = ["--epochs", "3", "--no-checkpoints"];
    for (mods, expect) in [
        ("eye", vec!["eye"]),
        ("eeg,eye", vec!["eye", "eeg"]),
        ("wemb", vec!["wemb"]),
    ] {
        let out_dir = format!("cv-{}", mods.replace(',', "-"));
        let mut args = vec!["cv", "--data", "d.jsonl", "--out", &out_dir, "--modalities", mods];
        args.extend_from_slice(&common);
        let stdout = ok(d, &args);
        assert!(stdout.contains("mean accuracy"), "{stdout}");
        let m = json(d.join(&out_dir).join("metrics.json"));
        assert_eq!(m["command"], "cv");
        let got: Vec<&str> = m["config"]["train"]["model"]["modalities"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap())
            .collect();
        assert_eq!(got, expect);
        assert_eq!(m["metrics"]["subjects"][0]["folds"].as_array().unwrap().len(), 5);
        assert!(d.join(&out_dir).join("roc.csv").exists());
        assert!(!d.join(&out_dir).join("checkpoints").exists());
    }
    assert_eq!(json(d.join("cv-eye/metrics.json"))["config"]["train"]["model"]["eeg_dim"], 8);

    ok(d, &["cv", "--data", "d.jsonl", "--out", "r1", "--epochs", "2", "--folds", "3", "--seed", "5"]);
    ok(d, &["cv", "--data", "d.jsonl", "--out", "r2", "--epochs", "2", "--folds", "3", "--seed", "5", "--jobs", "2"]);
    for f in ["metrics.json", "roc.csv", "checkpoints/S01-fold2.json", "checkpoints/S01-fold2.bin"] {
        assert_eq!(std::fs::read(d.join("r1").join(f)).unwrap(), std::fs::read(d.join("r2").join(f)).unwrap(), "{f}");
    }
    assert!(!d.join("r1/checkpoints/S01-fold3.json").exists());

    assert_eq!(code(d, &["cv", "--data", "missing.jsonl", "--out", "x"]), 1);
    assert_eq!(code(d, &["cv", "--data", "d.jsonl", "--out", "x", "--modalities", "gaze"]), 2);
    assert_eq!(code(d, &["cv", "--data", "d.jsonl", "--out", "x", "--folds", "1"]), 2);
    assert_eq!(code(d, &["cv", "--data", "d.jsonl", "--out", "x", "--lr", "1e300", "--epochs", "2"]), 4);
    assert!(!d.join("x").exists());
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_small(d, "d.jsonl", &[]);
    std::fs::write(
        d.join("run.toml"),
        "bins = 8\n[train]\nfolds = 3\nlr = 0.1\nepochs = 2\n[train.loss]\nstandard_f1 = true\n",
    )
    .unwrap();
    ok(d, &["cv", "--config", "run.toml", "--lr", "0.02", "--lambda2", "0", "--literal-n", "--data", "d.jsonl", "--out", "o"]);
    let cfg = &json(d.join("o/metrics.json"))["config"];
    assert_eq!(cfg["bins"], 8);
    assert_eq!(cfg["train"]["folds"], 3);
    assert_eq!(cfg["train"]["lr"], 0.02);
    assert_eq!(cfg["train"]["epochs"], 2);
    assert_eq!(cfg["train"]["loss"]["standard_f1"], true);
    assert_eq!(cfg["train"]["loss"]["normalizer"], "literal");
    assert_eq!(cfg["train"]["loss"]["weights"]["mse"], 0.0);
    assert_eq!(cfg["train"]["loss"]["weights"]["bce"], 1.0);
    assert!(cfg.get("jobs").is_none());

    std::fs::write(d.join("bad.toml"), "[train]\nlearning_rate = 0.1\n").unwrap();
    assert_eq!(code(d, &["cv", "--config", "bad.toml", "--data", "d.jsonl", "--out", "b"]), 2);
    std::fs::write(d.join("zero.toml"), "[train]\nepochs = 0\n").unwrap();
    assert_eq!(code(d, &["cv", "--config", "zero.toml", "--data", "d.jsonl", "--out", "b"]), 2);
    assert_eq!(code(d, &["cv", "--config", "nope.toml", "--data", "d.jsonl", "--out", "b"]), 2);
    assert!(!d.join("b").exists());
}

#[test]
fn train_eval_export_flow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth_small(d, "d.jsonl", &[]);
    let out = ok(d, &["train", "--data", "d.jsonl", "--out", "m", "--epochs", "4"]);
    assert!(out.starts_with("trained "), "{out}");
    let t = json(d.join("m/train.json"));
    assert_eq!(t["checkpoint"], "model.json");
    assert!(!t["training"]["loss_trace"].as_array().unwrap().is_empty());

    let out = ok(d, &["eval", "--data", "d.jsonl", "--checkpoint", "m/model.json", "--out", "ev"]);
    assert!(out.contains("accuracy"), "{out}");
    let m = json(d.join("ev/metrics.json"));
    let c = &m["confusion"];
    let total: u64 = ["tp", "fp", "tn", "fn"].iter().map(|k| c[k].as_u64().unwrap()).sum();
    assert_eq!(total, m["test_samples"].as_u64().unwrap());
    assert!(m["accuracy"].as_f64().unwrap() >= 0.9);
    assert!(std::fs::read_to_string(d.join("ev/roc.csv")).unwrap().starts_with("threshold,fpr,tpr\ninf,0,0\n"));

    let out = ok(d, &["export", "--data", "d.jsonl", "--checkpoint", "m/model.json", "--out", "emb.bin"]);
    assert!(out.contains("exported 100 rows x 128 dims"), "{out}");
    let manifest = json(d.join("emb.json"));
    assert_eq!(manifest["rows"], 100);
    let first = std::fs::read(d.join("emb.bin")).unwrap();
    ok(d, &["export", "--data", "d.jsonl", "--checkpoint", "m/model.json", "--out", "emb.bin"]);
    assert_eq!(std::fs::read(d.join("emb.bin")).unwrap(), first);

    let bin = d.join("m/model.bin");
    let mut bytes = std::fs::read(&bin).unwrap();
    bytes[100] ^= 1;
    std::fs::write(&bin, bytes).unwrap();
    assert_eq!(code(d, &["export", "--data", "d.jsonl", "--checkpoint", "m/model.json", "--out", "bad.bin"]), 3);
    assert!(!d.join("bad.bin").exists());
}
