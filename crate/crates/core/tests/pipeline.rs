use eegvad::harness::{run_vad_on_features, vad_features, ExperimentConfig, FeatureMode, ResultsTable};

fn tiny() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.corpus.n_sequences = 10;
    cfg.corpus.duration_s = 2.0;
    cfg.corpus.eeg_channels = 6;
    cfg.train.epochs = 1;
    cfg.kpca.max_fit_samples = 150;
    cfg.kpca.out_dim = 8;
    cfg.seed = 3;
    cfg
}

#[test]
fn one_row_holds_all_three_feature_modes() {
    let cfg = tiny();
    let features = vad_features(&cfg).unwrap();
    let mut table = ResultsTable::new(&cfg);
    let mut dims = Vec::new();
    for mode in FeatureMode::ALL {
        let run = run_vad_on_features(&features, &ExperimentConfig { feature_mode: mode, ..cfg.clone() }).unwrap();
        assert!((0.0..=100.0).contains(&run.accuracy_pct));
        assert!(run.test_frames > 0);
        dims.push(run.transforms.input_dim());
        table.insert(&cfg.name, mode, run.accuracy_pct).unwrap();
    }
    assert_eq!(dims, vec![13, 8, 21]);
    let parsed = ResultsTable::from_csv(&table.to_csv()).unwrap();
    assert_eq!(parsed.rows.len(), 3);
    assert!(parsed.rows.keys().all(|(c, _)| c == &cfg.name));
    let pretty = table.to_pretty();
    for mode in FeatureMode::ALL {
        assert!(pretty.contains(mode.title()), "{pretty}");
    }
}

#[test]
fn feature_frames_align_with_labels() {
    let cfg = tiny();
    for f in vad_features(&cfg).unwrap() {
        assert_eq!(f.mfcc.nrows(), f.labels.len());
        assert_eq!(f.eeg.nrows(), f.labels.len());
        assert_eq!(f.mfcc.ncols(), 13);
        assert_eq!(f.eeg.ncols(), 6 * 5);
        assert!(f.mfcc.iter().chain(f.eeg.iter()).all(|v| v.is_finite()));
    }
}
