use eegvad::synth::{generate_sequence, speech_segments, CorpusSpec, FRAME_RATE_HZ};

fn spec(acoustic: f64, eeg: f64) -> CorpusSpec {
    CorpusSpec {
        n_sequences: 1,
        duration_s: 12.0,
        eeg_channels: 6,
        acoustic_snr_db: acoustic,
        eeg_snr_db: eeg,
        seed: 21,
        ..CorpusSpec::default()
    }
}

fn speech_samples(activity: &[bool], hop: usize, x: &[f64]) -> Vec<f64> {
    activity
        .iter()
        .enumerate()
        .filter(|(_, &a)| a)
        .flat_map(|(k, _)| x[k * hop..(k + 1) * hop].iter().copied())
        .collect()
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

#[test]
fn in_segment_snr_matches_request() {
    let clean = generate_sequence(&spec(f64::INFINITY, 10.0), 0).unwrap();
    let hop = (clean.audio.sample_rate_hz() / FRAME_RATE_HZ) as usize;
    for snr in [20.0, 0.0, -10.0] {
        let noisy = generate_sequence(&spec(snr, 10.0), 0).unwrap();
        assert_eq!(noisy.activity, clean.activity);
        let s = speech_samples(&clean.activity, hop, clean.audio.channel(0));
        let noise: Vec<f64> =
            noisy.audio.channel(0).iter().zip(clean.audio.channel(0)).map(|(a, b)| a - b).collect();
        let n = speech_samples(&clean.activity, hop, &noise);
        let measured = 10.0 * (power(&s) / power(&n)).log10();
        assert!((measured - snr).abs() < 1.0, "requested {snr} dB, measured {measured:.2} dB");
    }
}

#[test]
fn lower_snr_raises_silence_level() {
    let rms_of_silence = |snr: f64| {
        let seq = generate_sequence(&spec(snr, 10.0), 0).unwrap();
        let hop = (seq.audio.sample_rate_hz() / FRAME_RATE_HZ) as usize;
        let silent: Vec<bool> = seq.activity.iter().map(|a| !a).collect();
        power(&speech_samples(&silent, hop, seq.audio.channel(0))).sqrt()
    };
    let levels: Vec<f64> = [20.0, 0.0, -10.0].iter().map(|&s| rms_of_silence(s)).collect();
    assert!(levels[0] < levels[1] && levels[1] < levels[2], "{levels:?}");
}

/// Best single-threshold classifier on frame power averaged over channels.
fn best_threshold_accuracy(power: &[f64], labels: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..power.len()).collect();
    order.sort_by(|&a, &b| power[a].total_cmp(&power[b]));
    // Threshold below everything: all frames called speech.
    let mut correct = labels.iter().filter(|&&l| l).count();
    let mut best = correct;
    for &i in &order {
        if labels[i] {
            correct -= 1;
        } else {
            correct += 1;
        }
        best = best.max(correct);
    }
    best as f64 / labels.len() as f64
}

#[test]
fn eeg_power_tracks_activity_at_high_snr() {
    let seq = generate_sequence(&spec(20.0, 30.0), 0).unwrap();
    let hop = (seq.eeg.sample_rate_hz() / FRAME_RATE_HZ) as usize;
    let frames = seq.activity.len();
    let p: Vec<f64> = (0..frames)
        .map(|k| {
            (0..seq.eeg.channels())
                .map(|c| power(&seq.eeg.channel(c)[k * hop..(k + 1) * hop]))
                .sum::<f64>()
        })
        .collect();
    let acc = best_threshold_accuracy(&p, &seq.activity);
    assert!(acc >= 0.97, "threshold accuracy {acc:.4}");
}

#[test]
fn segments_cover_exactly_the_speech_frames() {
    let seq = generate_sequence(&spec(20.0, 10.0), 0).unwrap();
    let mut rebuilt = vec![false; seq.activity.len()];
    for (a, b) in speech_segments(&seq.activity) {
        assert!(a < b);
        rebuilt[a..b].iter_mut().for_each(|v| *v = true);
    }
    assert_eq!(rebuilt, seq.activity);
}

#[test]
fn sequences_are_reproducible_and_distinct() {
    let s = spec(0.0, 10.0);
    assert_eq!(generate_sequence(&s, 3).unwrap(), generate_sequence(&s, 3).unwrap());
    assert_ne!(generate_sequence(&s, 3).unwrap().activity, generate_sequence(&s, 4).unwrap().activity);
}
