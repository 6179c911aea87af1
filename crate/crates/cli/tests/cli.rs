use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
  "seed": 11,
  "corpus": { "n_sequences": 10, "duration_s": 2.0, "eeg_channels": 8 },
  "train": { "epochs": 2 },
  "kpca": { "out_dim": 10, "max_fit_samples": 200 }
}"#;

fn eegvad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eegvad")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, TINY).unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_feature_mode_is_a_config_error() {
    let out = eegvad(&["train", "--feature-mode", "spectrogram", "--out", "/tmp/unused"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = eegvad(&["train", "--config", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_config_value_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{ "corpus": { "n_sequences": 0 } }"#).unwrap();
    let out = eegvad(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_out_is_a_config_error() {
    assert_eq!(eegvad(&["synth"]).status.code(), Some(2));
}

#[test]
fn corrupt_results_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("results.csv");
    std::fs::write(&bad, "corpus,feature_mode,accuracy_pct\nx,mfcc,not-a-number\n").unwrap();
    assert_eq!(eegvad(&["table", s(&bad)]).status.code(), Some(2));
}

#[test]
fn damaged_corpus_is_a_pipeline_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let corpus = dir.path().join("corpus");
    assert!(eegvad(&["synth", "--config", &cfg, "--out", s(&corpus)]).status.success());
    for entry in std::fs::read_dir(&corpus).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "f32") {
            std::fs::write(&p, [0u8; 3]).unwrap();
        }
    }
    let out = eegvad(&["train", "--config", &cfg, "--corpus", s(&corpus), "--out", s(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let corpus = dir.path().join("corpus");
    let feats = dir.path().join("features");
    let kpca = dir.path().join("kpca");
    let run = dir.path().join("run");

    let out = eegvad(&["synth", "--config", &cfg, "--snr-db", "-10", "--out", s(&corpus)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(corpus.join("manifest.json").exists());

    let out = eegvad(&["features", "--config", &cfg, "--corpus", s(&corpus), "--out", s(&feats)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(feats.join("features.json").exists());

    let out = eegvad(&["kpca-fit", "--config", &cfg, "--features", s(&feats), "--out", s(&kpca)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let curve = std::fs::read_to_string(kpca.join("variance_curve.csv")).unwrap();
    assert!(curve.lines().count() > 1);

    let out = eegvad(&["train", "--config", &cfg, "--corpus", s(&corpus), "--feature-mode", "mfcc+eeg", "--out", s(&run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["model.json", "model.f32", "kpca.json", "train_log.csv", "results.csv", "results.txt"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let out = eegvad(&["eval", "--model", s(&run), "--corpus", s(&corpus)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("test accuracy"), "{text}");

    let curve_path = dir.path().join("curve.csv");
    let out = eegvad(&["variance-curve", "--kpca", s(&run.join("kpca")), "--out", s(&curve_path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(curve_path.exists());

    let merged = dir.path().join("merged");
    let out = eegvad(&["table", s(&run), "--out", s(&merged)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(merged.join("results.csv").exists());
}

#[test]
fn eval_matches_training_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let run = dir.path().join("run");
    let train = eegvad(&["train", "--config", &cfg, "--feature-mode", "eeg", "--out", s(&run)]);
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let eval = eegvad(&["eval", "--model", s(&run)]);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let pct = |o: &Output| {
        let t = String::from_utf8_lossy(&o.stdout).into_owned();
        let i = t.find('%').unwrap();
        let start = t[..i].rfind(' ').unwrap() + 1;
        t[start..i].to_string()
    };
    assert_eq!(pct(&train), pct(&eval));
}
