#![allow(dead_code)]

use eegvad::nn::{Activation, Dense, GruLayer, Params};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cyclic Jacobi rotations on a dense symmetric matrix; eigenvalues sorted
/// descending.
pub fn jacobi_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

/// Centred Gram of the cubic kernel, built entry by entry.
pub fn brute_centered_gram(x: &Array2<f64>, gamma: f64, coef0: f64) -> Array2<f64> {
    let n = x.nrows();
    let k = Array2::from_shape_fn((n, n), |(i, j)| {
        (gamma * x.row(i).dot(&x.row(j)) + coef0).powi(3)
    });
    let one = Array2::from_elem((n, n), 1.0 / n as f64);
    let kc = &k - &one.dot(&k) - &k.dot(&one) + &one.dot(&k).dot(&one);
    kc
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-7)
}

/// Linear probe `L = Σ c ⊙ y` turns any layer output into a scalar.
pub fn probe(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

pub fn random_input(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.5..1.5))
}

/// Worst relative error over 20 random coordinates of every parameter block
/// and of the input, for a GRU layer under a linear probe.
pub fn gru_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = GruLayer::init(4, 6, &mut rng);
    for b in [&mut layer.b_z, &mut layer.b_r, &mut layer.b_h] {
        b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let x = random_input(7, 4, seed + 1);
    let c = probe(7, 6, seed + 2);
    let loss = |l: &GruLayer, x: &Array2<f64>| (l.forward(x.view(), None).unwrap() * &c).sum();
    let cache = layer.forward_cached(x.view(), None).unwrap();
    let mut grads = GruLayer::zeros(4, 6);
    let dx = layer.backward(&cache, c.view(), &mut grads).unwrap();
    worst_error(&layer, &grads, &x, &dx, loss, seed)
}

pub fn dense_gradient_error(activation: Activation, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = Dense::init(5, 4, activation, &mut rng);
    layer.b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    let x = random_input(6, 5, seed + 1);
    let c = probe(6, 4, seed + 2);
    let loss = |l: &Dense, x: &Array2<f64>| (l.forward_cached(x.view()).unwrap().output * &c).sum();
    let cache = layer.forward_cached(x.view()).unwrap();
    let mut grads = Dense::zeros(5, 4, activation);
    let dx = layer.backward(&cache, c.view(), &mut grads).unwrap();
    worst_error(&layer, &grads, &x, &dx, loss, seed)
}

fn worst_error<L: Params + Clone>(
    layer: &L,
    grads: &L,
    x: &Array2<f64>,
    dx: &Array2<f64>,
    loss: impl Fn(&L, &Array2<f64>) -> f64,
    seed: u64,
) -> f64 {
    let h = 1e-5;
    let mut pick = ChaCha8Rng::seed_from_u64(seed + 3);
    let mut worst: f64 = 0.0;
    for (bi, g) in grads.blocks().iter().enumerate() {
        for _ in 0..20 {
            let k = pick.random_range(0..g.len());
            let mut plus = layer.clone();
            plus.blocks_mut()[bi][k] += h;
            let mut minus = layer.clone();
            minus.blocks_mut()[bi][k] -= h;
            let numeric = (loss(&plus, x) - loss(&minus, x)) / (2.0 * h);
            worst = worst.max(rel_err(g[k], numeric));
        }
    }
    for _ in 0..20 {
        let idx = (pick.random_range(0..x.nrows()), pick.random_range(0..x.ncols()));
        let mut xp = x.clone();
        xp[idx] += h;
        let mut xm = x.clone();
        xm[idx] -= h;
        let numeric = (loss(layer, &xp) - loss(layer, &xm)) / (2.0 * h);
        worst = worst.max(rel_err(dx[idx], numeric));
    }
    worst
}

/// Worst relative error of the softmax + cross-entropy composite with
/// respect to the logits, through an identity head.
pub fn softmax_ce_gradient_error(seed: u64) -> f64 {
    use eegvad::nn::{softmax_rows, Network, Readout};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Network {
        gru: vec![GruLayer::init(3, 4, &mut rng)],
        dropout_rate: 0.0,
        hidden_dense: None,
        head: Dense::init(4, 3, Activation::Identity, &mut rng),
        readout: Readout::EveryStep,
    };
    let x = random_input(5, 3, seed + 1);
    let targets = [0usize, 2, 1, 1, 0];
    let trace = net.forward(x.view(), None).unwrap();
    let mut grads = net.zeros_like();
    net.backward(&trace, &targets, 1.0, &mut grads).unwrap();
    // The head bias gradient is the logit gradient summed over frames.
    let feats = net.gru[0].forward(x.view(), None).unwrap();
    let logits = feats.dot(&net.head.w) + &net.head.b;
    let ce = |l: &Array2<f64>| {
        let p = softmax_rows(l.view()).unwrap();
        -targets.iter().enumerate().map(|(t, &c)| p[[t, c]].ln()).sum::<f64>() / targets.len() as f64
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..3 {
        let mut numeric = 0.0;
        for t in 0..targets.len() {
            let mut lp = logits.clone();
            lp[[t, j]] += h;
            let mut lm = logits.clone();
            lm[[t, j]] -= h;
            numeric += (ce(&lp) - ce(&lm)) / (2.0 * h);
        }
        worst = worst.max(rel_err(grads.head.b[j], numeric));
    }
    let mut pick = ChaCha8Rng::seed_from_u64(seed + 9);
    for _ in 0..20 {
        let (t, j) = (pick.random_range(0..5), pick.random_range(0..3));
        let mut lp = logits.clone();
        lp[[t, j]] += h;
        let mut lm = logits.clone();
        lm[[t, j]] -= h;
        let numeric = (ce(&lp) - ce(&lm)) / (2.0 * h);
        let p = softmax_rows(logits.view()).unwrap();
        let analytic = (p[[t, j]] - f64::from(u8::from(targets[t] == j))) / targets.len() as f64;
        worst = worst.max(rel_err(analytic, numeric));
    }
    worst
}

/// Full-network check with dropout active and masks replayed from a seed.
pub fn network_gradient_error(readout: eegvad::nn::Readout, activation: Activation, seed: u64) -> f64 {
    use eegvad::nn::Network;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Network {
        gru: vec![GruLayer::init(3, 5, &mut rng), GruLayer::init(5, 4, &mut rng)],
        dropout_rate: 0.2,
        hidden_dense: Some(Dense::init(4, 4, activation, &mut rng)),
        head: Dense::init(4, 2, Activation::Identity, &mut rng),
        readout,
    };
    let x = random_input(6, 3, seed + 1);
    let targets: Vec<usize> = match readout {
        eegvad::nn::Readout::EveryStep => vec![0, 1, 1, 0, 0, 1],
        eegvad::nn::Readout::LastStep => vec![1],
    };
    let loss = |n: &Network| {
        let mut r = ChaCha8Rng::seed_from_u64(seed + 5);
        let tr = n.forward(x.view(), Some(&mut r)).unwrap();
        n.loss(&tr, &targets).unwrap()
    };
    let mut r = ChaCha8Rng::seed_from_u64(seed + 5);
    let trace = net.forward(x.view(), Some(&mut r)).unwrap();
    let mut grads = net.zeros_like();
    net.backward(&trace, &targets, 1.0, &mut grads).unwrap();
    let h = 1e-5;
    let mut pick = ChaCha8Rng::seed_from_u64(seed + 7);
    let mut worst: f64 = 0.0;
    for (bi, g) in grads.blocks().iter().enumerate() {
        for _ in 0..20 {
            let k = pick.random_range(0..g.len());
            let mut plus = net.clone();
            plus.blocks_mut()[bi][k] += h;
            let mut minus = net.clone();
            minus.blocks_mut()[bi][k] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(g[k], numeric));
        }
    }
    worst
}
