use ndarray::Array2;
use poselift::gradcheck::{grad_check, randomize_affine};
use poselift::nn::{Architecture, Flags, LiftingNetwork, Mode};
use poselift::optim::{mse_loss, Optimizer, OptimizerKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn batch(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.5..1.5))
}

fn net(width: usize, blocks: usize, flags: Flags, dropout: f64, seed: u64) -> LiftingNetwork<f64> {
    let arch = Architecture {
        dropout_rate: dropout,
        ..Architecture::new(width, blocks, flags)
    };
    let mut n = LiftingNetwork::init(32, 48, arch, seed).unwrap();
    randomize_affine(&mut n, seed + 100);
    n.apply_max_norm(arch.maxnorm_c);
    n
}

#[test]
fn every_flag_combination_matches_finite_differences() {
    let x = batch(4, 32, 1);
    let y = batch(4, 48, 2);
    for flags in Flags::grid() {
        for dropout in [0.0, 0.25] {
            let report = grad_check(&net(8, 1, flags, dropout, 3), x.view(), y.view(), 1e-5, 4).unwrap();
            println!(
                "{flags:?} dropout={dropout}: {:.3e} at {:?}",
                report.max_rel_error, report.worst
            );
            assert!(report.max_rel_error < 1e-4, "{flags:?}: {report:?}");
        }
    }
}

#[test]
fn zero_block_network_matches_finite_differences() {
    let x = batch(4, 32, 5);
    let y = batch(4, 48, 6);
    for flags in [Flags::ALL, Flags::NONE] {
        let report = grad_check(&net(8, 0, flags, 0.25, 7), x.view(), y.view(), 1e-5, 8).unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}

#[test]
fn linear_regime_is_nearly_exact() {
    // no batch norm, no dropout, no skip; positive inputs and weights keep every ReLU open
    let mut n = net(8, 0, Flags::NONE, 0.0, 9);
    for w in n.input.dense.weight.iter_mut() {
        *w = w.abs();
    }
    let x = batch(4, 32, 10).mapv(f64::abs);
    let y = batch(4, 48, 11);
    let report = grad_check(&n, x.view(), y.view(), 1e-5, 0).unwrap();
    assert!(report.max_rel_error < 1e-7, "{report:?}");
}

#[test]
fn zero_eps_is_rejected() {
    let x = batch(4, 32, 1);
    let y = batch(4, 48, 2);
    assert!(grad_check(&net(8, 1, Flags::ALL, 0.0, 1), x.view(), y.view(), 0.0, 0).is_err());
}

#[test]
fn sgd_step_descends_to_first_order() {
    let mut n = net(
        16,
        1,
        Flags {
            batch_norm: false,
            ..Flags::ALL
        },
        0.0,
        12,
    );
    n.arch.flags.max_norm = false;
    let x = batch(1, 32, 13);
    let y = batch(1, 48, 14);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (pred, cache) = n.forward(x.view(), Mode::Train, &mut rng).unwrap();
    let (loss0, grad) = mse_loss(pred.view(), y.view()).unwrap();
    let (grads, _) = n.backward(&cache, grad.view()).unwrap();
    let lr = 1e-6;
    Optimizer::new(OptimizerKind::Sgd, &n).step(&mut n, &grads, lr).unwrap();
    let (loss1, _) = mse_loss(n.predict(x.view()).unwrap().view(), y.view()).unwrap();
    let predicted = -lr * grads.squared_norm();
    let actual = loss1 - loss0;
    assert!(
        ((actual - predicted) / predicted).abs() < 0.05,
        "{actual} vs {predicted}"
    );
}

#[test]
fn input_gradient_matches_finite_differences() {
    let n = net(8, 1, Flags::ALL, 0.0, 15);
    let x = batch(4, 32, 16);
    let y = batch(4, 48, 17);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (pred, cache) = n.forward_frozen(x.view(), Mode::Train, &mut rng).unwrap();
    let (_, g) = mse_loss(pred.view(), y.view()).unwrap();
    let (_, dx) = n.backward(&cache, g.view()).unwrap();
    let loss = |x: &Array2<f64>| {
        let (p, _) = n
            .forward_frozen(x.view(), Mode::Train, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        mse_loss(p.view(), y.view()).unwrap().0
    };
    for idx in [(0, 0), (1, 7), (3, 31), (2, 15)] {
        let mut plus = x.clone();
        plus[idx] += 1e-5;
        let mut minus = x.clone();
        minus[idx] -= 1e-5;
        let numeric = (loss(&plus) - loss(&minus)) / 2e-5;
        assert!(poselift::gradcheck::relative_error(dx[idx], numeric) < 1e-4);
    }
}
