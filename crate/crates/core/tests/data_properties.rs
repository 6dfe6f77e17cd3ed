use std::f64::consts::PI;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use spd_bci_core::data::synth::{
    rng, synth_band_signals, synth_spd_classes, BandSignalSpec, SynthSpec, Tone,
};
use spd_bci_core::data::{
    decode, encode, ingest_csv, read_segment, to_csv, write_segment, CsvManifest, FileKind, MatrixRecord,
};
use spd_bci_core::features::{de_feature, StftPlan, VarianceEstimator};
use spd_bci_core::signal::{bandpass_filter, BandSpec};
use spd_bci_core::spd::{scm, MeanOptions, Mdrm};
use spd_bci_core::{EegSegment, Error, Label};

fn label_strategy() -> impl Strategy<Value = Label> {
    prop_oneof![
        Just(Label::None),
        (0usize..1000).prop_map(Label::Class),
        (-1e6f64..1e6).prop_map(Label::Real),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segment_round_trip_is_bit_exact(
        n in 1usize..6,
        t in 2usize..40,
        fs in 1.0f64..2000.0,
        label in label_strategy(),
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let x = spd_bci_core::data::synth::gaussian_matrix(&mut r, n, t) * 1e3;
        let seg = EegSegment::new(x, fs, label).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.eegs");
        write_segment(&path, &seg).unwrap();
        let back = read_segment(&path).unwrap();
        prop_assert_eq!(back.fs.to_bits(), seg.fs.to_bits());
        prop_assert_eq!(back.label, seg.label);
        for (a, b) in back.samples.iter().zip(seg.samples.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn feature_records_round_trip(rows in 1usize..5, cols in 1usize..30, label in label_strategy()) {
        let values = DMatrix::from_fn(rows, cols, |i, j| (i * 31 + j) as f64 / 7.0 - 3.0);
        let rec = MatrixRecord { values, fs: 200.0, label };
        for kind in [FileKind::Temporal, FileKind::Spatial] {
            let bytes = encode(kind, &rec);
            prop_assert_eq!(bytes.len(), 40 + rows * cols * 8);
            prop_assert_eq!(decode(kind, &bytes).unwrap(), rec.clone());
        }
    }
}

#[test]
fn kind_mismatch_is_a_format_error() {
    let rec = MatrixRecord { values: DMatrix::zeros(1, 1), fs: 1.0, label: Label::None };
    let bytes = encode(FileKind::Temporal, &rec);
    assert!(matches!(decode(FileKind::Spatial, &bytes), Err(Error::Format { offset: 0, .. })));
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(v))
}

#[test]
fn averaged_scm_approaches_class_covariance() {
    let sigma = [diag(&[2.0, 1.0, 1.0, 1.0]), diag(&[1.0, 1.0, 1.0, 2.0])];
    let segs = synth_spd_classes(&SynthSpec {
        covariances: sigma.to_vec(),
        samples: 200,
        fs: 100.0,
        noise: 0.0,
        per_class: 1000,
        seed: 3,
    })
    .unwrap();
    for (k, s) in sigma.iter().enumerate() {
        let mut acc = DMatrix::zeros(4, 4);
        for seg in segs.iter().filter(|s| s.label == Label::Class(k)) {
            acc += scm(seg).unwrap().matrix();
        }
        acc /= 1000.0;
        assert!((acc - s).norm() / s.norm() < 0.02);
    }

    let long = synth_spd_classes(&SynthSpec {
        covariances: vec![sigma[0].clone()],
        samples: 10_000,
        fs: 100.0,
        noise: 0.0,
        per_class: 1,
        seed: 4,
    })
    .unwrap();
    assert!((scm(&long[0]).unwrap().matrix() - &sigma[0]).norm() < 0.1);
}

#[test]
fn mdrm_separates_spd_clusters() {
    let spec = |per_class, seed| SynthSpec {
        covariances: vec![diag(&[2.0, 1.0, 1.0, 1.0]), diag(&[1.0, 1.0, 1.0, 2.0])],
        samples: 500,
        fs: 100.0,
        noise: 0.0,
        per_class,
        seed,
    };
    let covs = |segs: &[EegSegment]| segs.iter().map(|s| scm(s).unwrap()).collect::<Vec<_>>();
    let labels = |segs: &[EegSegment]| segs.iter().map(|s| s.label.class().unwrap()).collect::<Vec<_>>();
    let train = synth_spd_classes(&spec(50, 5)).unwrap();
    let test = synth_spd_classes(&spec(100, 6)).unwrap();
    let model = Mdrm::fit(&covs(&train), &labels(&train), 2, MeanOptions::default()).unwrap();
    let correct = covs(&test)
        .iter()
        .zip(labels(&test))
        .filter(|(c, y)| model.predict(c).unwrap() == *y)
        .count();
    let acc = correct as f64 / test.len() as f64;
    assert_eq!(test.len(), 200);
    assert!(acc >= 0.90, "MDRM accuracy {acc}");

    let single = Mdrm::fit(&covs(&train[..10]), &vec![0; 10], 1, MeanOptions::default()).unwrap();
    assert!(covs(&test).iter().all(|c| single.predict(c).unwrap() == 0));
}

/// Mean DE over windows of channel 0 in `band`.
fn mean_de(seg: &EegSegment, band: BandSpec, plan: &StftPlan) -> f64 {
    let filtered = bandpass_filter(seg, band).unwrap();
    let de = de_feature(&filtered, &band, plan, VarianceEstimator::Periodogram).unwrap();
    de.column(0).mean()
}

fn band_task(alpha: f64, beta: f64, seed: u64) -> Vec<EegSegment> {
    synth_band_signals(&BandSignalSpec {
        classes: vec![
            vec![Tone { freq_hz: 10.0, amplitude: alpha }],
            vec![Tone { freq_hz: 20.0, amplitude: beta }],
        ],
        channels: 1,
        samples: 800,
        fs: 200.0,
        noise: 0.2,
        per_class: 50,
        seed,
    })
    .unwrap()
}

const ALPHA: BandSpec = BandSpec { low_hz: 8.0, high_hz: 13.0, order: 5 };
const BETA: BandSpec = BandSpec { low_hz: 14.0, high_hz: 30.0, order: 5 };

fn separation_accuracy(segs: &[EegSegment]) -> f64 {
    let plan = StftPlan::new(4.0, 200.0).unwrap();
    let correct = segs
        .iter()
        .filter(|s| {
            let score = mean_de(s, ALPHA, &plan) - mean_de(s, BETA, &plan);
            let predicted = if score > 0.0 { 0 } else { 1 };
            Some(predicted) == s.label.class()
        })
        .count();
    correct as f64 / segs.len() as f64
}

#[test]
fn de_features_separate_band_power_classes() {
    assert!(separation_accuracy(&band_task(2.0, 2.0, 7)) >= 0.95);
}

#[test]
fn zero_amplitudes_give_chance_separation() {
    let acc = separation_accuracy(&band_task(0.0, 0.0, 8));
    assert!((acc - 0.5).abs() <= 0.1, "{acc}");
}

#[test]
fn alpha_de_gap_exceeds_three_standard_deviations() {
    let segs = synth_band_signals(&BandSignalSpec {
        classes: vec![
            vec![Tone { freq_hz: 10.0, amplitude: 2.0 }],
            vec![Tone { freq_hz: 10.0, amplitude: 0.2 }],
        ],
        channels: 1,
        samples: 800,
        fs: 200.0,
        noise: 0.2,
        per_class: 40,
        seed: 9,
    })
    .unwrap();
    let plan = StftPlan::new(4.0, 200.0).unwrap();
    let stats = |k: usize| {
        let v: Vec<f64> = segs
            .iter()
            .filter(|s| s.label == Label::Class(k))
            .map(|s| mean_de(s, ALPHA, &plan))
            .collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        (m, sd)
    };
    let (m0, s0) = stats(0);
    let (m1, s1) = stats(1);
    assert!(m0 - m1 > 3.0 * s0.max(s1));
}

fn write_csv(dir: &std::path::Path, body: &str, manifest: &str) -> (std::path::PathBuf, CsvManifest) {
    let path = dir.join("rec.csv");
    std::fs::write(&path, body).unwrap();
    (path, CsvManifest::parse(manifest).unwrap())
}

fn tone_csv(samples: usize, fs: f64, freq: f64) -> String {
    let data = DMatrix::from_fn(2, samples, |c, t| {
        (2.0 * PI * freq * t as f64 / fs + c as f64).sin()
    });
    let labels: Vec<f64> = (0..samples).map(|t| (t / (samples / 2)) as f64).collect();
    to_csv(&["Cz", "Pz"], &data, Some(&labels))
}

#[test]
fn csv_decimation_preserves_in_band_tone() {
    let dir = tempfile::tempdir().unwrap();
    let (path, manifest) = write_csv(
        dir.path(),
        &tone_csv(4000, 1000.0, 50.0),
        "fs = 1000\nchannels = Cz, Pz\nlabel_column = label\ndecimate = 5\n",
    );
    let segs = ingest_csv(&path, &manifest).unwrap();
    assert_eq!(segs.len(), 1);
    let seg = &segs[0];
    assert_eq!(seg.fs, 200.0);
    assert_eq!(seg.len(), 800);

    // DFT oracle: 50 Hz falls exactly on bin 200 of an 800-point transform.
    let x = seg.channel(0);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    let amplitude = 2.0 * buf[200].norm() / 800.0;
    assert!((amplitude - 1.0).abs() < 0.02, "amplitude {amplitude}");
    let peak = (1..400).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap();
    assert_eq!(peak, 200);
}

#[test]
fn csv_segments_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let (path, manifest) = write_csv(
        dir.path(),
        &tone_csv(1000, 100.0, 5.0),
        "fs = 100\nchannels = Pz, Cz\nlabel_column = label\nsegment_seconds = 2.5\n",
    );
    let segs = ingest_csv(&path, &manifest).unwrap();
    assert_eq!(segs.len(), 4);
    let labels: Vec<_> = segs.iter().map(|s| s.label).collect();
    assert_eq!(labels, [Label::Class(0), Label::Class(0), Label::Class(1), Label::Class(1)]);
    // channel order follows the manifest, not the file
    assert_eq!(segs[0].samples[(0, 0)], 1f64.sin());
    assert_eq!(segs[0].samples[(1, 0)], 0.0);
}

#[test]
fn csv_factor_one_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let body = tone_csv(300, 100.0, 7.0);
    let (path, manifest) = write_csv(dir.path(), &body, "fs = 100\nchannels = Cz, Pz\ndecimate = 1\n");
    let segs = ingest_csv(&path, &manifest).unwrap();
    let expected = DMatrix::from_fn(2, 300, |c, t| (2.0 * PI * 7.0 * t as f64 / 100.0 + c as f64).sin());
    assert_eq!(segs[0].samples, expected);
    assert_eq!(segs[0].label, Label::None);
}

#[test]
fn csv_rejects_ragged_and_non_numeric_rows() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = "fs = 100\nchannels = a, b\n";
    let (path, m) = write_csv(dir.path(), "a,b\n1,2\n3\n5,6\n", manifest);
    assert!(matches!(ingest_csv(&path, &m), Err(Error::Csv { line: 3, .. })));
    let (path, m) = write_csv(dir.path(), "a,b\n1,2\n3,x\n5,6\n", manifest);
    assert!(matches!(ingest_csv(&path, &m), Err(Error::Csv { line: 3, .. })));
    let (path, m) = write_csv(dir.path(), "a,c\n1,2\n", manifest);
    assert!(matches!(ingest_csv(&path, &m), Err(Error::Csv { line: 1, .. })));
}
