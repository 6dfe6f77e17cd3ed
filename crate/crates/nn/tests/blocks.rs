use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spd_bci_nn::attention::softmax_over_steps;
use spd_bci_nn::gradcheck::{check_input, check_params};
use spd_bci_nn::loss::{binary_cross_entropy, cross_entropy, mean_squared_error};
use spd_bci_nn::norm::dropout;
use spd_bci_nn::{
    Activation, Adam, Attention, AttentionMode, BatchNorm, Dense, Dropout, LossKind, Lstm, Module, OutputActivation,
    OutputHead, Param,
};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn randn(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

fn seq(r: &mut ChaCha8Rng, len: usize, rows: usize, cols: usize) -> Vec<DMatrix<f64>> {
    (0..len).map(|_| randn(r, rows, cols)).collect()
}

/// Linear read-out `Σ w ⊙ y` of a sequence, used as the scalar loss.
fn readout(ys: &[DMatrix<f64>], ws: &[DMatrix<f64>]) -> f64 {
    ys.iter().zip(ws).map(|(y, w)| y.component_mul(w).sum()).sum()
}

fn flatten(xs: &[DMatrix<f64>]) -> Vec<f64> {
    xs.iter().flat_map(|x| x.iter().copied()).collect()
}

fn unflatten(v: &[f64], like: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let mut k = 0;
    like.iter()
        .map(|m| {
            let out = DMatrix::from_column_slice(m.nrows(), m.ncols(), &v[k..k + m.len()]);
            k += m.len();
            out
        })
        .collect()
}

#[test]
fn dense_gradients_for_every_activation() {
    for seed in SEEDS {
        for act in [
            Activation::Identity,
            Activation::Tanh,
            Activation::leaky(),
            Activation::Sigmoid,
            Activation::Softmax,
        ] {
            let mut r = rng(seed);
            let mut layer = Dense::new(&mut r, 5, 4, act);
            layer.b.value = randn(&mut r, 4, 1);
            let x = randn(&mut r, 5, 3);
            let w = randn(&mut r, 4, 3);
            let base = layer.clone();
            layer.forward(&x).unwrap();
            let dx = layer.backward(&w);
            let rep = check_params(&base, &mut layer, |m| m.infer(&x).unwrap().component_mul(&w).sum());
            assert!(rep.max_relative_error < TOL, "{act:?}: {rep:?}");
            let err = check_input(x.as_slice(), dx.as_slice(), |v| {
                base.infer(&DMatrix::from_column_slice(5, 3, v)).unwrap().component_mul(&w).sum()
            });
            assert!(err < TOL, "{act:?} input {err}");
        }
    }
}

#[test]
fn lstm_gradients() {
    for seed in SEEDS {
        let mut r = rng(seed);
        let mut lstm = Lstm::new(&mut r, 3, 4);
        let xs = seq(&mut r, 5, 3, 2);
        let ws = seq(&mut r, 5, 4, 2);
        let base = lstm.clone();
        lstm.forward(&xs).unwrap();
        let dxs = lstm.backward(&ws);
        let rep = check_params(&base, &mut lstm, |m| readout(&m.forward(&xs).unwrap(), &ws));
        assert!(rep.max_relative_error < TOL, "{rep:?}");
        let err = check_input(&flatten(&xs), &flatten(&dxs), |v| {
            readout(&base.clone().forward(&unflatten(v, &xs)).unwrap(), &ws)
        });
        assert!(err < TOL, "input {err}");
    }
}

#[test]
fn lstm_zero_parameters_give_zero_states_and_outputs_are_bounded() {
    let mut r = rng(9);
    let mut lstm = Lstm::new(&mut r, 3, 4);
    let xs = seq(&mut r, 6, 3, 2);
    lstm.w.value.fill(0.0);
    lstm.b.value.fill(0.0);
    assert!(lstm.forward(&xs).unwrap().iter().all(|h| h.iter().all(|&v| v == 0.0)));
    let mut big = Lstm::new(&mut r, 3, 4);
    big.w.value *= 50.0;
    let xs: Vec<DMatrix<f64>> = xs.iter().map(|x| x * 100.0).collect();
    assert!(big.forward(&xs).unwrap().iter().all(|h| h.iter().all(|v| v.abs() < 1.0)));
}

#[test]
fn attention_gradients_in_both_modes() {
    for seed in SEEDS {
        for mode in [AttentionMode::Scalar, AttentionMode::PerComponent] {
            let mut r = rng(seed);
            let mut att = Attention::new(&mut r, 4, mode);
            att.b.value = randn(&mut r, 4, 1);
            let hs = seq(&mut r, 5, 4, 3);
            let w = randn(&mut r, 4, 3);
            let base = att.clone();
            let (_, alpha) = att.forward(&hs).unwrap();
            let total = alpha.iter().fold(DMatrix::zeros(alpha[0].nrows(), 3), |acc, a| acc + a);
            assert!(total.iter().all(|s| (s - 1.0).abs() < 1e-12));
            assert!(alpha.iter().all(|a| a.iter().all(|&v| v >= 0.0)));
            let dhs = att.backward(&w);
            let rep = check_params(&base, &mut att, |m| m.forward(&hs).unwrap().0.component_mul(&w).sum());
            assert!(rep.max_relative_error < TOL, "{mode:?}: {rep:?}");
            let err = check_input(&flatten(&hs), &flatten(&dhs), |v| {
                base.clone().forward(&unflatten(v, &hs)).unwrap().0.component_mul(&w).sum()
            });
            assert!(err < TOL, "{mode:?} input {err}");
        }
    }
}

#[test]
fn attention_trivial_cases() {
    let mut r = rng(3);
    let mut att = Attention::new(&mut r, 3, AttentionMode::Scalar);
    let h = randn(&mut r, 3, 1);
    let (v, a) = att.forward(&[h.clone(), h.clone()]).unwrap();
    assert!((a[0][(0, 0)] - 0.5).abs() < 1e-15 && (a[1][(0, 0)] - 0.5).abs() < 1e-15);
    assert!((v - &h).norm() < 1e-15);
    let (v, a) = att.forward(std::slice::from_ref(&h)).unwrap();
    assert_eq!(a[0][(0, 0)], 1.0);
    assert_eq!(v, h);
    assert!(att.forward(&[]).is_err());
}

#[test]
fn step_softmax_is_shift_invariant() {
    let mut r = rng(4);
    let scores = seq(&mut r, 4, 3, 2);
    let shift = randn(&mut r, 3, 2) * 50.0;
    let shifted: Vec<DMatrix<f64>> = scores.iter().map(|s| s + &shift).collect();
    for (a, b) in softmax_over_steps(&scores).iter().zip(softmax_over_steps(&shifted)) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn batch_norm_gradients_in_train_and_eval() {
    for seed in SEEDS {
        for train in [true, false] {
            let mut r = rng(seed);
            let mut bn = BatchNorm::new(3);
            bn.gamma.value = randn(&mut r, 3, 1);
            bn.beta.value = randn(&mut r, 3, 1);
            bn.running_var = randn(&mut r, 3, 1).map(|v| v.abs() + 0.5);
            let xs = seq(&mut r, 2, 3, 4);
            let ws = seq(&mut r, 2, 3, 4);
            let base = bn.clone();
            bn.forward(&xs, train).unwrap();
            let dxs = bn.backward(&ws);
            let rep = check_params(&base, &mut bn, |m| readout(&m.forward(&xs, train).unwrap(), &ws));
            assert!(rep.max_relative_error < TOL, "{rep:?}");
            let err = check_input(&flatten(&xs), &flatten(&dxs), |v| {
                readout(&base.clone().forward(&unflatten(v, &xs), train).unwrap(), &ws)
            });
            assert!(err < TOL, "train={train} input {err}");
        }
    }
}

#[test]
fn batch_norm_standardizes_and_tracks_running_statistics() {
    let mut r = rng(5);
    let mut bn = BatchNorm::new(2);
    let xs: Vec<DMatrix<f64>> = seq(&mut r, 3, 2, 50).into_iter().map(|x| x * 4.0 + DMatrix::from_element(2, 50, 3.0)).collect();
    let ys = bn.forward(&xs, true).unwrap();
    let all: Vec<f64> = ys.iter().flat_map(|y| y.row(0).iter().copied().collect::<Vec<_>>()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64;
    assert!(mean.abs() < 1e-12);
    assert!((var - 1.0).abs() < 1e-3);
    assert!((bn.running_mean[(0, 0)] - 0.01 * 3.0).abs() < 0.01);
}

#[test]
fn dropout_properties() {
    let x = DVector::from_element(1_000_000, 1.0);
    let mut r = rng(6);
    assert_eq!(dropout(&x, 0.0, &mut r, true).unwrap(), x);
    assert_eq!(dropout(&x, 0.7, &mut r, false).unwrap(), x);
    let y = dropout(&x, 0.5, &mut r, true).unwrap();
    assert!((y.mean() - 1.0).abs() < 0.01);
    assert!(dropout(&x, 1.0, &mut r, true).is_err());
    assert!(Dropout::new(1.0, 0).is_err());

    let mut d = Dropout::new(0.3, 7).unwrap();
    let m = DMatrix::from_element(4, 4, 2.0);
    assert_eq!(d.forward(std::slice::from_ref(&m), false)[0], m);
    let y = d.forward(std::slice::from_ref(&m), true).remove(0);
    let g = d.backward(&[DMatrix::from_element(4, 4, 1.0)]).remove(0);
    assert_eq!(y, g * 2.0);
}

#[test]
fn loss_values() {
    assert_eq!(cross_entropy(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]), 0.0);
    assert!((cross_entropy(&[1.0, 0.0], &[0.0, 1.0]) - 1e-12f64.ln().abs()).abs() < 1e-9);
    assert_eq!(mean_squared_error(&[0.0, 1.0], &[1.0, 0.0]), 1.0);
    assert!((binary_cross_entropy(1.0, 0.5) - std::f64::consts::LN_2).abs() < 1e-15);
    assert!(OutputHead::new(OutputActivation::Softmax, LossKind::MeanSquared).is_err());
}

#[test]
fn head_gradients() {
    let heads = [
        (OutputActivation::Softmax, LossKind::CrossEntropy, 3),
        (OutputActivation::Sigmoid, LossKind::BinaryCrossEntropy, 1),
        (OutputActivation::Sigmoid, LossKind::MeanSquared, 1),
        (OutputActivation::Linear, LossKind::MeanSquared, 1),
    ];
    for seed in SEEDS {
        for (act, loss, units) in heads {
            let head = OutputHead::new(act, loss).unwrap();
            let mut r = rng(seed);
            let z = randn(&mut r, units, 4) * 3.0;
            let target = match loss {
                LossKind::CrossEntropy => DMatrix::from_fn(units, 4, |i, j| f64::from(i == j % units)),
                LossKind::BinaryCrossEntropy => DMatrix::from_fn(1, 4, |_, j| (j % 2) as f64),
                LossKind::MeanSquared => randn(&mut r, 1, 4),
            };
            let (l, g) = head.loss_and_grad(&z, &target).unwrap();
            assert!(l >= 0.0);
            let err = check_input(z.as_slice(), g.as_slice(), |v| {
                head.loss_and_grad(&DMatrix::from_column_slice(units, 4, v), &target).unwrap().0
            });
            assert!(err < TOL, "{act:?}/{loss:?}: {err}");
        }
    }
}

struct Scalar(Param);

impl Module for Scalar {
    fn visit_params(&mut self, _: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f("x", &mut self.0);
    }
}

#[test]
fn adam_first_step_and_zero_gradient() {
    for g in [-3.0, 0.02, 7e3] {
        let mut p = Scalar(Param::new(DMatrix::from_element(1, 1, 1.0)));
        p.0.grad.fill(g);
        let mut adam = Adam::default();
        adam.step(&mut p);
        assert!(((1.0 - p.0.value[(0, 0)]).abs() - 1e-3).abs() < 1e-8);
    }
    let mut p = Scalar(Param::new(DMatrix::from_element(2, 2, 0.5)));
    let mut adam = Adam::default();
    adam.step(&mut p);
    assert_eq!(p.0.value, DMatrix::from_element(2, 2, 0.5));
}

#[test]
fn adam_trace_on_quadratic_matches_scalar_recurrence() {
    // f(x) = (x − 3)², gradient 2(x − 3), ten steps from x = 0.
    let mut p = Scalar(Param::new(DMatrix::from_element(1, 1, 0.0)));
    let mut adam = Adam::new(0.1);
    let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
    for t in 1..=10 {
        p.0.grad.fill(2.0 * (p.0.value[(0, 0)] - 3.0));
        adam.step(&mut p);
        let g = 2.0 * (x - 3.0);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let mhat = m / (1.0 - 0.9f64.powi(t));
        let vhat = v / (1.0 - 0.999f64.powi(t));
        x -= 0.1 * mhat / (vhat.sqrt() + 1e-8);
        assert!((p.0.value[(0, 0)] - x).abs() < 1e-12, "step {t}");
    }
}
