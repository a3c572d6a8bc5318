use imprint_core::neural::{backprop_grad, batch_loss, train_adam, Mlp, Split, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut ChaCha8Rng, n: usize, d_in: usize, d_out: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let xs = (0..n).map(|_| (0..d_in).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let ys = (0..n).map(|_| (0..d_out).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (xs, ys)
}

/// Largest relative gap between backprop and central differences over all
/// parameters of one network and batch.
fn max_relative_gradient_error(m: &Mlp, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    let (_, g) = backprop_grad(m, xs, ys).unwrap();
    let analytic = g.flat();
    let base = m.params_flat();
    let eps = 1e-6;
    let mut probe = m.clone();
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] = base[k] + eps;
        probe.set_params_flat(&p).unwrap();
        let up = batch_loss(&probe, xs, ys).unwrap();
        p[k] = base[k] - eps;
        probe.set_params_flat(&p).unwrap();
        let down = batch_loss(&probe, xs, ys).unwrap();
        let fd = (up - down) / (2.0 * eps);
        let denom = (analytic[k].abs() + fd.abs()).max(1e-7);
        worst = worst.max((analytic[k] - fd).abs() / denom);
    }
    worst
}

/// Smallest hidden pre-activation magnitude; central differences are only
/// meaningful when no rectifier switches within the probe step.
fn kink_margin(m: &Mlp, x: &[f64]) -> f64 {
    let mut a = m.normalize_input(x);
    let layers = m.dims.len() - 1;
    let mut margin = f64::INFINITY;
    for l in 0..layers - 1 {
        let z: Vec<f64> = (0..m.dims[l + 1])
            .map(|o| m.biases[l][o] + (0..m.dims[l]).map(|i| m.weights[l][o * m.dims[l] + i] * a[i]).sum::<f64>())
            .collect();
        margin = z.iter().fold(margin, |acc, v| acc.min(v.abs()));
        a = z.iter().map(|v| v.max(0.0)).collect();
    }
    margin
}

fn away_from_kinks(m: &Mlp, rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    while xs.len() < n {
        let (x, y) = random_batch(rng, 1, m.d_in(), m.d_out());
        if kink_margin(m, &x[0]) > 1e-4 {
            xs.extend(x);
            ys.extend(y);
        }
    }
    (xs, ys)
}

#[test]
fn backprop_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for net in 0..20u64 {
        let mut m = Mlp::with_hidden(4, &[8, 8, 8], 2, net);
        for b in m.biases.iter_mut().flatten() {
            *b = rng.random_range(-0.2..0.2);
        }
        for batch in [1usize, 7, 32] {
            let (xs, ys) = away_from_kinks(&m, &mut rng, batch);
            worst = worst.max(max_relative_gradient_error(&m, &xs, &ys));
        }
    }
    assert!(worst < 1e-4, "max relative gradient error {worst:e}");
}

#[test]
fn standard_network_gradient_spot_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = Mlp::new(13, 4, 77);
    let (xs, ys) = away_from_kinks(&m, &mut rng, 16);
    let worst = max_relative_gradient_error(&m, &xs, &ys);
    assert!(worst < 1e-4, "{worst:e}");
}

fn linear_problem() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let xs: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 99.0]).collect();
    let ys = xs.iter().map(|x| vec![2.0 * x[0] + 1.0]).collect();
    (xs, ys)
}

fn fit_linear(seed: u64) -> (Mlp, imprint_core::neural::History) {
    let (xs, ys) = linear_problem();
    let (train_x, val_x): (Vec<_>, Vec<_>) = xs.iter().cloned().enumerate().partition(|(i, _)| i % 5 != 0);
    let (train_y, val_y): (Vec<_>, Vec<_>) = ys.iter().cloned().enumerate().partition(|(i, _)| i % 5 != 0);
    let strip = |v: Vec<(usize, Vec<f64>)>| v.into_iter().map(|(_, r)| r).collect::<Vec<_>>();
    let (tx, ty, vx, vy) = (strip(train_x), strip(train_y), strip(val_x), strip(val_y));
    let m = Mlp::for_data(&tx, &ty, seed).unwrap();
    let cfg = TrainConfig {
        seed,
        patience: 0,
        ..Default::default()
    };
    train_adam(
        &m,
        Split {
            inputs: &tx,
            targets: &ty,
        },
        Split {
            inputs: &vx,
            targets: &vy,
        },
        &cfg,
    )
    .unwrap()
}

#[test]
fn learns_affine_target_and_is_deterministic() {
    let (a, hist) = fit_linear(11);
    assert!(hist.best_val_mape < 0.01, "val MAPE {}", hist.best_val_mape);
    let (b, _) = fit_linear(11);
    assert_eq!(a.params_flat(), b.params_flat());

    // window-mean training loss does not rise; the slack covers Adam's
    // fluctuation once the loss sits at its noise floor
    let losses: Vec<f64> = hist.epochs.iter().map(|e| e.train_loss).collect();
    let window = 50;
    let means: Vec<f64> = losses
        .chunks(window)
        .filter(|c| c.len() == window)
        .map(|c| c.iter().sum::<f64>() / window as f64)
        .collect();
    for w in means.windows(2) {
        assert!(w[1] <= w[0] * 1.02, "{:e} -> {:e}", w[0], w[1]);
    }
}

#[test]
fn descaling_reproduces_physical_targets() {
    let (xs, ys) = linear_problem();
    let m = Mlp::for_data(&xs, &ys, 0).unwrap();
    for y in &ys {
        let back = m.descale_target(&m.scale_target(y));
        assert!((back[0] - y[0]).abs() <= 1e-12 * y[0].abs());
    }
}
