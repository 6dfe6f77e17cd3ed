use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spd_bci_nn::gradcheck::check_params;
use spd_bci_nn::model::metrics::{confusion_matrix, kappa, pcc, rmse};
use spd_bci_nn::model::{
    evaluate, fusion_weights, load_checkpoint, to_checkpoint, train, ArchitectureConfig, ClassificationMetrics,
    Dataset, FusionMode, InputDims, Metrics, Regularizer, SpatioTemporalNet, StreamMode, Targets, TrainConfig,
};
use spd_bci_nn::{AttentionMode, Error, LossKind, Module, OutputActivation, OutputHead};

fn tiny(fusion: FusionMode, streams: StreamMode, regularizer: Regularizer, head: OutputHead, classes: usize) -> ArchitectureConfig {
    ArchitectureConfig {
        lstm_layers: 3,
        lstm_hidden: 8,
        regularizer,
        attention: AttentionMode::Scalar,
        temporal_embedding: 5,
        spatial_hidden: vec![6, 5],
        spatial_dropout: 0.5,
        encoder: vec![3, 1],
        fusion_hidden: 4,
        fusion,
        streams,
        head,
        classes,
    }
}

fn softmax_ce() -> OutputHead {
    OutputHead::new(OutputActivation::Softmax, LossKind::CrossEntropy).unwrap()
}

fn random_data(seed: u64, n: usize, l: usize, dims: InputDims, targets: Targets) -> Dataset {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Dataset {
        temporal: (0..n).map(|_| DMatrix::from_fn(l, dims.features, |_, _| r.random_range(-1.0..1.0))).collect(),
        spatial: (0..n).map(|_| DVector::from_fn(dims.spatial, |_, _| r.random_range(-1.0..1.0))).collect(),
        targets,
    }
}

/// End-to-end gradient check of the total loss on one batch.
fn check_model(cfg: ArchitectureConfig, targets: Targets, seed: u64) -> f64 {
    let dims = InputDims { features: 4, spatial: 6 };
    let n = targets.len();
    let data = random_data(seed + 100, n, 3, dims, targets);
    let mut net = SpatioTemporalNet::new(cfg, dims, seed).unwrap();
    // move every parameter off exact zero so no unit sits on the leaky-ReLU kink
    let mut r = ChaCha8Rng::seed_from_u64(seed + 200);
    net.visit_params("", &mut |_, p| p.value.apply(|v| *v += r.random_range(-0.1..0.1)));
    let rows: Vec<usize> = (0..n).collect();
    let batch = net.batch(&data, &rows);
    let head = net.config().head;
    let target = data.targets.matrix(&head, net.config().output_units(), &rows).unwrap();
    let base = net.clone();
    let z = net.forward(&batch, true).unwrap();
    let (_, dz) = head.loss_and_grad(&z, &target).unwrap();
    net.backward(&dz);
    let report = check_params(&base, &mut net, |m| {
        let z = m.forward(&batch, true).unwrap();
        head.loss_and_grad(&z, &target).unwrap().0
    });
    assert!(report.checked > 100);
    assert!(report.max_relative_error < 1e-4, "{report:?}");
    report.max_relative_error
}

#[test]
fn full_model_gradients_all_fusion_modes() {
    for seed in 0..5 {
        for fusion in [FusionMode::Ours, FusionMode::SoftAttention, FusionMode::Concatenation, FusionMode::IndependentSigmoid] {
            let cfg = tiny(fusion, StreamMode::Fused, Regularizer::BatchNormLeaky, softmax_ce(), 3);
            check_model(cfg, Targets::Classes(vec![0, 1, 2, 1, 0]), seed);
        }
    }
}

#[test]
fn full_model_gradients_with_dropout_heads_and_single_streams() {
    for seed in 0..5 {
        let dropout = Regularizer::Dropout(vec![0.2, 0.1, 0.1]);
        let mut cfg = tiny(FusionMode::Ours, StreamMode::Fused, dropout, softmax_ce(), 4);
        cfg.attention = AttentionMode::PerComponent;
        check_model(cfg, Targets::Classes(vec![0, 1, 2, 3]), seed);

        let bce = OutputHead::new(OutputActivation::Sigmoid, LossKind::BinaryCrossEntropy).unwrap();
        let cfg = tiny(FusionMode::Ours, StreamMode::TemporalOnly, Regularizer::BatchNormLeaky, bce, 2);
        check_model(cfg, Targets::Classes(vec![0, 1, 1, 0]), seed);

        let mse = OutputHead::new(OutputActivation::Sigmoid, LossKind::MeanSquared).unwrap();
        let cfg = tiny(FusionMode::Ours, StreamMode::SpatialOnly, Regularizer::BatchNormLeaky, mse, 1);
        check_model(cfg, Targets::Real(vec![0.1, 0.7, 0.4, 0.9]), seed);
    }
}

#[test]
fn fusion_weight_rules() {
    let (at, a_s, kt, ks) = fusion_weights(FusionMode::Ours, 0.3, 0.3);
    assert_eq!((at, a_s, kt, ks), (0.5, 0.5, 1.5, 1.5));
    let (at, a_s, kt, ks) = fusion_weights(FusionMode::Ours, 800.0, 0.0);
    assert!((at - 1.0).abs() < 1e-15 && a_s < 1e-300);
    assert!((kt - 2.0).abs() < 1e-15 && (ks - 1.0).abs() < 1e-15);
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let (st, ss) = (r.random_range(-10.0..10.0), r.random_range(-10.0..10.0));
        let (at, a_s, kt, ks) = fusion_weights(FusionMode::Ours, st, ss);
        assert!((at + a_s - 1.0).abs() < 1e-12);
        assert!(at > 0.0 && at < 1.0 && kt > 1.0 && kt < 2.0 && ks > 1.0 && ks < 2.0);
        let c = r.random_range(-5.0..5.0);
        let (bt, _, _, _) = fusion_weights(FusionMode::Ours, st + c, ss + c);
        assert!((at - bt).abs() < 1e-12);
    }
    assert_eq!(fusion_weights(FusionMode::SoftAttention, 1.0, 1.0).2, 0.5);
}

#[test]
fn fusion_alpha_sums_to_one_in_the_network() {
    let dims = InputDims { features: 4, spatial: 6 };
    let cfg = tiny(FusionMode::Ours, StreamMode::Fused, Regularizer::BatchNormLeaky, softmax_ce(), 2);
    let mut net = SpatioTemporalNet::new(cfg, dims, 3).unwrap();
    let data = random_data(4, 10, 3, dims, Targets::Classes(vec![0; 10]));
    net.forward(&net.batch(&data, &(0..10).collect::<Vec<_>>()), false).unwrap();
    let alpha = net.fusion_alpha().unwrap();
    for j in 0..10 {
        assert!((alpha[(0, j)] + alpha[(1, j)] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn concatenation_reduces_to_plain_head() {
    let dims = InputDims { features: 4, spatial: 6 };
    let cfg = tiny(FusionMode::Concatenation, StreamMode::Fused, Regularizer::BatchNormLeaky, softmax_ce(), 2);
    let mut net = SpatioTemporalNet::new(cfg, dims, 5).unwrap();
    let mut names = Vec::new();
    net.visit_params("", &mut |n, _| names.push(n.to_string()));
    assert!(names.iter().all(|n| !n.contains("enc")));

    let data = random_data(6, 7, 3, dims, Targets::Classes(vec![0; 7]));
    let batch = net.batch(&data, &(0..7).collect::<Vec<_>>());
    let (e_t, e_s) = net.embeddings(&batch, false).unwrap();
    let (e_t, e_s) = (e_t.unwrap(), e_s.unwrap());
    let joined = DMatrix::from_fn(10, 7, |r, c| if r < 5 { e_t[(r, c)] } else { e_s[(r - 5, c)] });
    let ck = to_checkpoint(&mut net, None);
    let dense = |x: &DMatrix<f64>, name: &str, leaky: bool| {
        let mut z = ck.get(&format!("fusion.{name}.w")).unwrap() * x;
        let b = ck.get(&format!("fusion.{name}.b")).unwrap();
        for mut col in z.column_iter_mut() {
            col += b.column(0);
        }
        if leaky {
            z.apply(|v| if *v < 0.0 { *v *= 0.3 });
        }
        z
    };
    let expected = dense(&dense(&joined, "fc", true), "out", false);
    let z = net.forward(&batch, false).unwrap();
    assert!((z - expected).norm() < 1e-12);
}

#[test]
fn zero_network_gives_zero_embeddings_of_fixed_width() {
    let dims = InputDims { features: 620, spatial: 5880 };
    let cfg = ArchitectureConfig::default();
    let mut net = SpatioTemporalNet::new(cfg, dims, 1).unwrap();
    for l in [7, 15] {
        let data = random_data(2, 2, l, dims, Targets::Classes(vec![0, 1]));
        let batch = net.batch(&data, &[0, 1]);
        let (e_t, e_s) = net.embeddings(&batch, false).unwrap();
        assert_eq!(e_t.unwrap().shape(), (64, 2));
        assert_eq!(e_s.unwrap().shape(), (64, 2));
    }
    net.zero_parameters();
    let data = random_data(3, 2, 15, dims, Targets::Classes(vec![0, 1]));
    let (e_t, e_s) = net.embeddings(&net.batch(&data, &[0, 1]), false).unwrap();
    assert!(e_t.unwrap().iter().all(|&v| v == 0.0));
    assert!(e_s.unwrap().iter().all(|&v| v == 0.0));
}

/// Two classes separated along the first temporal and spatial feature.
fn separable(seed: u64, n: usize) -> Dataset {
    let dims = InputDims { features: 4, spatial: 6 };
    let mut data = random_data(seed, n, 4, dims, Targets::Classes((0..n).map(|i| i % 2).collect()));
    for i in 0..n {
        let shift = if i % 2 == 0 { -2.0 } else { 2.0 };
        data.temporal[i].column_mut(0).add_scalar_mut(shift);
        data.spatial[i][0] += shift;
    }
    data
}

fn small_train(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig { epochs, batch_size: 32, seed, ..TrainConfig::default() }
}

#[test]
fn separable_task_is_learned() {
    let dims = InputDims { features: 4, spatial: 6 };
    let data = separable(11, 128);
    let cfg = tiny(FusionMode::Ours, StreamMode::Fused, Regularizer::BatchNormLeaky, softmax_ce(), 2);
    let mut net = SpatioTemporalNet::new(cfg, dims, 12).unwrap();
    let (log, _) = train(&mut net, &data, &small_train(50, 13)).unwrap();
    assert_eq!(log.epochs.len(), 50);
    let Metrics::Classification(m) = evaluate(&mut net, &data).unwrap() else { panic!() };
    assert!(m.accuracy >= 0.99, "{m:?}");
}

#[test]
fn regression_loss_decreases() {
    let dims = InputDims { features: 4, spatial: 6 };
    let mut data = random_data(21, 96, 4, dims, Targets::Real(vec![]));
    let y: Vec<f64> = data.spatial.iter().map(|s| 0.5 + 0.3 * s[0].tanh()).collect();
    data.targets = Targets::Real(y);
    let mse = OutputHead::new(OutputActivation::Sigmoid, LossKind::MeanSquared).unwrap();
    let mut cfg = tiny(FusionMode::Ours, StreamMode::Fused, Regularizer::BatchNormLeaky, mse, 1);
    cfg.spatial_dropout = 0.0;
    let mut net = SpatioTemporalNet::new(cfg, dims, 22).unwrap();
    let (log, _) = train(&mut net, &data, &small_train(10, 23)).unwrap();
    let rises = log.epochs.windows(2).filter(|w| w[1].loss > w[0].loss).count();
    assert!(rises <= 2, "{:?}", log.epochs);
    assert!(log.epochs[9].loss < log.epochs[0].loss);
    assert!(matches!(evaluate(&mut net, &data).unwrap(), Metrics::Regression(_)));
}

#[test]
fn same_seed_same_trajectory() {
    let dims = InputDims { features: 4, spatial: 6 };
    let data = separable(31, 64);
    let run = || {
        let cfg = tiny(FusionMode::Ours, StreamMode::Fused, Regularizer::Dropout(vec![0.2, 0.1, 0.1]), softmax_ce(), 2);
        let mut net = SpatioTemporalNet::new(cfg, dims, 32).unwrap();
        let (log, adam) = train(&mut net, &data, &small_train(5, 33)).unwrap();
        (log, to_checkpoint(&mut net, Some(&adam)).to_bytes())
    };
    let (a, ca) = run();
    let (b, cb) = run();
    assert_eq!(a, b);
    assert_eq!(ca, cb);
}

#[test]
fn checkpoint_round_trip_reproduces_predictions() {
    let dims = InputDims { features: 4, spatial: 6 };
    let data = separable(41, 40);
    let cfg = tiny(FusionMode::Ours, StreamMode::Fused, Regularizer::BatchNormLeaky, softmax_ce(), 2);
    let mut net = SpatioTemporalNet::new(cfg.clone(), dims, 42).unwrap();
    let (_, adam) = train(&mut net, &data, &small_train(3, 43)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    to_checkpoint(&mut net, Some(&adam)).save(&path).unwrap();

    let mut fresh = SpatioTemporalNet::new(cfg.clone(), dims, 99).unwrap();
    let ck = spd_bci_nn::Checkpoint::load(&path).unwrap();
    let restored = load_checkpoint(&mut fresh, &ck).unwrap().unwrap();
    assert_eq!(restored.t, adam.t);
    assert_eq!(restored.m, adam.m);
    assert_eq!(fresh.predict(&data).unwrap(), net.predict(&data).unwrap());

    let mut other = SpatioTemporalNet::new(cfg, InputDims { features: 5, spatial: 6 }, 1).unwrap();
    assert!(matches!(load_checkpoint(&mut other, &ck), Err(Error::Shape(_))));

    let bytes = std::fs::read(&path).unwrap();
    assert!(matches!(
        spd_bci_nn::Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
        Err(Error::Checkpoint { .. })
    ));
    assert!(matches!(spd_bci_nn::Checkpoint::from_bytes(b"XXXX"), Err(Error::Checkpoint { offset: 0, .. })));
}

#[test]
fn non_finite_loss_aborts_training() {
    let dims = InputDims { features: 4, spatial: 6 };
    let mut data = separable(51, 8);
    data.temporal[3][(0, 0)] = f64::NAN;
    let cfg = tiny(FusionMode::Ours, StreamMode::Fused, Regularizer::Dropout(vec![0.0; 3]), softmax_ce(), 2);
    let mut net = SpatioTemporalNet::new(cfg, dims, 52).unwrap();
    let tc = TrainConfig { standardize: false, ..small_train(2, 53) };
    assert!(matches!(train(&mut net, &data, &tc), Err(Error::Diverged { epoch: 1, .. })));
}

#[test]
fn invalid_configurations_are_rejected() {
    let dims = InputDims { features: 4, spatial: 6 };
    let mut cfg = tiny(FusionMode::Ours, StreamMode::Fused, Regularizer::Dropout(vec![0.2]), softmax_ce(), 2);
    assert!(SpatioTemporalNet::new(cfg.clone(), dims, 0).is_err());
    cfg.regularizer = Regularizer::BatchNormLeaky;
    cfg.encoder = vec![3, 2];
    assert!(SpatioTemporalNet::new(cfg.clone(), dims, 0).is_err());
    cfg.encoder = vec![3, 1];
    cfg.head = OutputHead::new(OutputActivation::Sigmoid, LossKind::BinaryCrossEntropy).unwrap();
    cfg.classes = 4;
    assert!(SpatioTemporalNet::new(cfg, dims, 0).is_err());
}

#[test]
fn kappa_and_regression_metrics() {
    assert!((kappa(0.809, 0.5) - 0.618).abs() < 1e-12);
    let perfect = ClassificationMetrics::from_predictions(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
    assert_eq!((perfect.accuracy, perfect.kappa), (1.0, 1.0));
    assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    assert!((pcc(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(rmse(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
    assert!((pcc(&[0.0, 1.0], &[1.0, 0.0]).unwrap() + 1.0).abs() < 1e-15);
    assert!(matches!(pcc(&[0.0, 1.0], &[0.5, 0.5]), Err(Error::UndefinedMetric(_))));
    assert_eq!(confusion_matrix(&[0, 1, 1], &[1, 1, 0], 2).unwrap(), vec![vec![0, 1], vec![1, 1]]);
}

#[test]
fn kappa_never_exceeds_accuracy() {
    let mut r = ChaCha8Rng::seed_from_u64(61);
    for _ in 0..1000 {
        let k = r.random_range(2..6);
        let confusion: Vec<Vec<usize>> = (0..k).map(|_| (0..k).map(|_| r.random_range(0..20)).collect()).collect();
        let m = ClassificationMetrics::from_confusion(confusion).unwrap();
        assert!(m.kappa <= m.accuracy + 1e-15, "{m:?}");
    }
}
