use eegvad::models::{
    accuracy, build_continuation, build_vad, predict_frames, predict_sequence, train, LabeledSequence, Target,
    TrainConfig, VadVariant, CONTINUATION_CLASSES,
};
use eegvad::nn::{Network, Params};
use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Closed form: a GRU layer has three gates, each with input weights,
/// recurrent weights and a bias.
fn gru_params(input: usize, hidden: usize) -> usize {
    3 * (input * hidden + hidden * hidden + hidden)
}

fn dense_params(input: usize, output: usize) -> usize {
    input * output + output
}

fn zeroed(mut net: Network) -> Network {
    for b in net.blocks_mut() {
        b.iter_mut().for_each(|v| *v = 0.0);
    }
    net
}

/// Frame labels follow the sign of the first input dimension.
fn toy_frames(n: usize, t: usize, dim: usize, seed: u64) -> Vec<LabeledSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = Array2::from_shape_fn((t, dim), |_| rng.random_range(-1.0..1.0));
            let labels = x.column(0).iter().map(|&v| usize::from(v > 0.0)).collect();
            LabeledSequence { features: x, target: Target::Frames(labels) }
        })
        .collect()
}

#[test]
fn parameter_counts_match_closed_form() {
    let d = 45;
    let d1 = build_vad(VadVariant::Dataset1, d, 0).unwrap();
    let want1 = gru_params(d, 128) + gru_params(128, 32) + gru_params(32, 8) + dense_params(8, 4) + dense_params(4, 2);
    assert_eq!(d1.param_count(), want1);

    let d2 = build_vad(VadVariant::Dataset2, d, 0).unwrap();
    let want2 =
        gru_params(d, 128) + gru_params(128, 64) + gru_params(64, 32) + dense_params(32, 4) + dense_params(4, 2);
    assert_eq!(d2.param_count(), want2);

    let c = build_continuation(d, 0).unwrap();
    assert_eq!(c.param_count(), gru_params(d, 64) + gru_params(64, 32) + dense_params(32, 4));
}

#[test]
fn zero_weights_give_uniform_outputs_and_silence() {
    let x = Array2::from_shape_fn((9, 6), |(i, j)| (i as f64 - j as f64) * 0.3);
    let net = zeroed(build_vad(VadVariant::Dataset1, 6, 1).unwrap());
    let preds = predict_frames(&net, x.view()).unwrap();
    assert_eq!(preds.len(), 9);
    for p in &preds {
        assert_eq!(p.class, 0);
        for &q in &p.probs {
            assert!((q - 0.5).abs() < 1e-12);
        }
    }
    let cont = zeroed(build_continuation(6, 1).unwrap());
    let p = predict_sequence(&cont, x.view()).unwrap();
    assert_eq!(p.class, 0);
    assert_eq!(p.probs.len(), CONTINUATION_CLASSES);
    for &q in &p.probs {
        assert!((q - 0.25).abs() < 1e-12);
    }
}

#[test]
fn single_frame_sequences_are_accepted() {
    let net = build_vad(VadVariant::Dataset2, 4, 3).unwrap();
    let x = Array2::from_elem((1, 4), 0.7);
    let preds = predict_frames(&net, x.view()).unwrap();
    assert_eq!(preds.len(), 1);
    assert!((preds[0].probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let cont = build_continuation(4, 3).unwrap();
    assert!(predict_sequence(&cont, x.view()).is_ok());
}

#[test]
fn predictions_depend_on_frame_order() {
    let net = build_vad(VadVariant::Dataset1, 5, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Array2::from_shape_fn((20, 5), |_| rng.random_range(-2.0..2.0));
    let reversed = x.slice(s![..;-1, ..]).to_owned();
    let forward = predict_frames(&net, x.view()).unwrap();
    let mut backward = predict_frames(&net, reversed.view()).unwrap();
    backward.reverse();
    let max_diff = forward
        .iter()
        .zip(&backward)
        .map(|(a, b)| (a.probs[1] - b.probs[1]).abs())
        .fold(0.0, f64::max);
    assert!(max_diff > 1e-6, "recurrent state should carry order information");
}

#[test]
fn zero_weight_accuracy_equals_silence_share() {
    let set = toy_frames(6, 25, 3, 9);
    let net = zeroed(build_vad(VadVariant::Dataset1, 3, 0).unwrap());
    let (mut hits, mut total, mut silent) = (0.0, 0.0, 0.0);
    for seq in &set {
        let pred: Vec<usize> = predict_frames(&net, seq.features.view()).unwrap().iter().map(|p| p.class).collect();
        let truth = seq.targets();
        hits += accuracy(&pred, &truth).unwrap() * truth.len() as f64;
        total += truth.len() as f64;
        silent += truth.iter().filter(|&&c| c == 0).count() as f64;
    }
    assert!((hits / total - silent / total).abs() < 1e-12);
    assert!((silent / total - 0.5).abs() < 0.1);
}

#[test]
fn zero_weight_continuation_scores_a_quarter_on_balanced_classes() {
    let net = zeroed(build_continuation(3, 0).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for i in 0..40 {
        let x = Array2::from_shape_fn((15, 3), |_| rng.random_range(-1.0..1.0));
        pred.push(predict_sequence(&net, x.view()).unwrap().class);
        truth.push(i % CONTINUATION_CLASSES);
    }
    assert!((accuracy(&pred, &truth).unwrap() - 0.25).abs() < 1e-12);
}

fn toy_config(epochs: usize, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::vad();
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.adam.lr = 0.01;
    cfg
}

#[test]
fn training_loss_decreases_on_a_learnable_task() {
    let mut net = build_vad(VadVariant::Dataset1, 3, 5).unwrap();
    net.dropout_rate = 0.0;
    let train_set = toy_frames(20, 30, 3, 1);
    let val = toy_frames(5, 30, 3, 2);
    // Full-batch steps keep the descent monotone.
    let cfg = TrainConfig { batch_size: 20, ..toy_config(10, 7) };
    let out = train(&net, &train_set, &val, &cfg).unwrap();
    let losses: Vec<f64> = out.log.iter().map(|r| r.train_loss).collect();
    assert_eq!(losses.len(), 10);
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn training_is_reproducible_for_a_seed() {
    let net = build_vad(VadVariant::Dataset2, 3, 5).unwrap();
    let train_set = toy_frames(10, 12, 3, 1);
    let val = toy_frames(3, 12, 3, 2);
    let a = train(&net, &train_set, &val, &toy_config(3, 11)).unwrap();
    let b = train(&net, &train_set, &val, &toy_config(3, 11)).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.network, b.network);
    let c = train(&net, &train_set, &val, &toy_config(3, 12)).unwrap();
    assert_ne!(a.log, c.log);
}

#[test]
fn zero_epochs_return_the_initial_network() {
    let net = build_vad(VadVariant::Dataset1, 3, 5).unwrap();
    let set = toy_frames(4, 8, 3, 1);
    let out = train(&net, &set, &set, &toy_config(0, 0)).unwrap();
    assert_eq!(out.network, net);
    assert_eq!(out.best_epoch, 0);
    assert!(out.log.is_empty());
}

#[test]
fn early_stopping_keeps_the_best_epoch() {
    let net = build_continuation(3, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let set: Vec<LabeledSequence> = (0..12)
        .map(|i| LabeledSequence {
            features: Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0)),
            target: Target::Sequence(i % 4),
        })
        .collect();
    let mut cfg = TrainConfig::continuation();
    cfg.epochs = 60;
    cfg.early_stopping = Some(3);
    cfg.adam.lr = 0.05;
    let out = train(&net, &set[..8], &set[8..], &cfg).unwrap();
    let best = out.log.iter().min_by(|a, b| a.val_loss.total_cmp(&b.val_loss)).unwrap();
    assert_eq!(out.best_epoch, best.epoch);
    if out.stopped_early {
        assert_eq!(out.log.len(), out.best_epoch + 3);
    }
}
