//! Library-level pipeline stages shared by the subcommands: preprocessing,
//! per-trial feature extraction, splitting and model fitting.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use spd_bci_core::features::{build_feature_sequence, StftPlan, VarianceEstimator};
use spd_bci_core::signal::{bandpass_filter, minmax_normalize, notch_filter, BandSpec, ConstantChannel, FilterBank};
use spd_bci_core::spd::{scm, ReferencePolicy, SpdMatrix, TangentConfig, TangentFeaturizer};
use spd_bci_core::{EegSegment, Label};
use spd_bci_nn::model::{
    evaluate, train, ArchitectureConfig, Dataset, InputDims, Metrics, SpatioTemporalNet, Targets, TrainConfig, TrainLog,
};
use spd_bci_nn::Adam;

use crate::config::{Profile, Task};
use crate::error::{CliError, CliResult};

/// Broadband band-pass, optional notch, optional per-channel min-max.
pub fn preprocess_segment(segment: &EegSegment, profile: &Profile, normalize: bool) -> CliResult<EegSegment> {
    let (lo, hi) = profile.broadband;
    let mut out = bandpass_filter(segment, BandSpec::new(lo, hi, 5))?;
    if let Some(f0) = profile.notch_hz.filter(|&f| f < segment.fs / 2.0) {
        out = notch_filter(&out, f0)?;
    }
    if normalize {
        out = minmax_normalize(&out, ConstantChannel::Error)?;
    }
    Ok(out)
}

/// Checks a segment against the profile and crops it to `T·fs` samples.
pub fn conform(segment: &EegSegment, profile: &Profile, plan: &StftPlan) -> CliResult<EegSegment> {
    if (segment.fs - profile.fs).abs() > 1e-9 {
        return Err(CliError::Data(format!("sampling rate {} Hz, profile expects {} Hz", segment.fs, profile.fs)));
    }
    if segment.channels() != profile.channels {
        return Err(CliError::Data(format!(
            "{} channels, profile expects {}",
            segment.channels(),
            profile.channels
        )));
    }
    let need = plan.required_samples();
    if segment.len() < need {
        return Err(CliError::Data(format!("{} samples, profile needs {need}", segment.len())));
    }
    let samples = segment.samples.columns(0, need).into_owned();
    Ok(EegSegment::new(samples, segment.fs, segment.label)?)
}

/// Everything the two streams need from one trial before the tangent
/// projection.
#[derive(Debug, Clone)]
pub struct TrialFeatures {
    /// `L × F` DE and log-PSD sequence.
    pub temporal: DMatrix<f64>,
    /// One full-rank covariance per band.
    pub covariances: Vec<SpdMatrix>,
    pub label: Label,
}

/// Filter bank and STFT plan for a profile.
pub struct Extractor {
    pub bank: FilterBank,
    pub plan: StftPlan,
    pub estimator: VarianceEstimator,
}

impl Extractor {
    pub fn new(profile: &Profile, estimator: VarianceEstimator) -> CliResult<Self> {
        Ok(Self {
            bank: FilterBank::new(profile.bands.clone(), profile.fs)?,
            plan: StftPlan::new(profile.segment_seconds, profile.fs)?,
            estimator,
        })
    }

    pub fn extract(&self, segment: &EegSegment) -> CliResult<TrialFeatures> {
        let parts = self.bank.decompose(segment)?;
        let seq = build_feature_sequence(&parts, self.bank.bands(), &self.plan, self.estimator)?;
        let covariances = parts.iter().map(scm).collect::<Result<Vec<_>, _>>()?;
        Ok(TrialFeatures { temporal: seq.values, covariances, label: segment.label })
    }

    /// Parallel over trials; output order follows the input.
    pub fn extract_all(&self, segments: &[EegSegment]) -> CliResult<Vec<TrialFeatures>> {
        segments.par_iter().map(|s| self.extract(s)).collect()
    }
}

/// Shuffled split with a fixed seed. Classes are split separately so both
/// sides keep the class proportions; returned indices are sorted.
pub fn split_indices(labels: &[Label], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut groups: std::collections::BTreeMap<Option<usize>, Vec<usize>> = Default::default();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l.class()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut keep, mut held) = (Vec::new(), Vec::new());
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        let n_held = ((idx.len() as f64 * fraction).round() as usize).min(idx.len().saturating_sub(1));
        held.extend_from_slice(&idx[..n_held]);
        keep.extend_from_slice(&idx[n_held..]);
    }
    keep.sort_unstable();
    held.sort_unstable();
    (keep, held)
}

/// Per-band PCA to `rank` and tangent projection. Training samples use
/// the training references; `others` are projected under `policy`.
pub fn tangent_features(
    train: &[TrialFeatures],
    others: &[&[TrialFeatures]],
    rank: usize,
    config: &TangentConfig,
    policy: ReferencePolicy,
) -> CliResult<(Vec<DVector<f64>>, Vec<Vec<DVector<f64>>>)> {
    let covs = |t: &[TrialFeatures]| t.iter().map(|x| x.covariances.clone()).collect::<Vec<_>>();
    let train_covs = covs(train);
    let featurizer = TangentFeaturizer::fit(&train_covs, TangentConfig { rank, ..config.clone() })?;
    let fitted = featurizer.transform_batch(&train_covs, ReferencePolicy::TrainMean)?;
    let rest = others
        .iter()
        .map(|o| {
            if o.is_empty() {
                Ok(Vec::new())
            } else {
                featurizer.transform_batch(&covs(o), policy)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((fitted, rest))
}

/// Targets matching the profile task.
pub fn targets(labels: &[Label], profile: &Profile) -> CliResult<Targets> {
    match profile.task {
        Task::Classification { classes } => labels
            .iter()
            .map(|l| match l {
                Label::Class(k) if *k < classes => Ok(*k),
                other => Err(CliError::Data(format!("label {other:?} is not a class below {classes}"))),
            })
            .collect::<CliResult<Vec<_>>>()
            .map(Targets::Classes),
        Task::Regression => labels
            .iter()
            .map(|l| match l {
                Label::Real(v) => Ok(*v),
                other => Err(CliError::Data(format!("label {other:?} is not a real target"))),
            })
            .collect::<CliResult<Vec<_>>>()
            .map(Targets::Real),
    }
}

pub fn dataset(temporal: Vec<DMatrix<f64>>, spatial: Vec<DVector<f64>>, labels: &[Label], profile: &Profile) -> CliResult<Dataset> {
    if temporal.is_empty() {
        return Err(CliError::Data("empty dataset".into()));
    }
    Ok(Dataset { temporal, spatial, targets: targets(labels, profile)? })
}

pub fn input_dims(data: &Dataset) -> CliResult<InputDims> {
    let features = data.temporal.first().ok_or_else(|| CliError::Data("empty dataset".into()))?.ncols();
    let spatial = data.spatial.first().map_or(0, |v| v.len());
    Ok(InputDims { features, spatial })
}

pub struct Fitted {
    pub net: SpatioTemporalNet,
    pub log: TrainLog,
    pub adam: Adam,
}

pub fn fit(arch: &ArchitectureConfig, cfg: &TrainConfig, data: &Dataset) -> CliResult<Fitted> {
    let mut net = SpatioTemporalNet::new(arch.clone(), input_dims(data)?, cfg.seed)?;
    let (log, adam) = train(&mut net, data, cfg)?;
    Ok(Fitted { net, log, adam })
}

/// Trains on `train` and scores on `test`.
pub fn fit_and_score(arch: &ArchitectureConfig, cfg: &TrainConfig, train: &Dataset, test: &Dataset) -> CliResult<(Fitted, Metrics)> {
    let mut fitted = fit(arch, cfg, train)?;
    let metrics = evaluate(&mut fitted.net, test)?;
    Ok((fitted, metrics))
}

/// Scalar used to rank models: accuracy, or `−RMSE` for regression.
pub fn score(metrics: &Metrics) -> f64 {
    match metrics {
        Metrics::Classification(c) => c.accuracy,
        Metrics::Regression(r) => -r.rmse,
    }
}

/// Raw trials for the `synth` subcommand, shaped by the profile.
pub fn synthesize(profile: &Profile, spec: &crate::config::SyntheticSection, seed: u64) -> CliResult<Vec<EegSegment>> {
    use spd_bci_core::data::synth::{
        synth_band_signals, synth_complementary, synth_spd_classes, BandSignalSpec, ComplementarySpec, SynthSpec, Tone,
    };
    use crate::config::SynthKind;

    if profile.classes() != 2 || profile.task == Task::Regression {
        return Err(CliError::Config("synthetic generators produce two-class data".into()));
    }
    let samples = (profile.segment_seconds * profile.fs).round() as usize;
    let per_class = spec.trials.div_ceil(2);
    let n = profile.channels;
    let segments = match spec.kind {
        SynthKind::Complementary => synth_complementary(&ComplementarySpec {
            channels: n,
            samples,
            fs: profile.fs,
            tone_hz: spec.tone_hz,
            tone_amplitude: spec.tone_amplitude,
            angle: spec.angle,
            noise: spec.noise,
            trials: spec.trials,
            seed,
        })?
        .into_iter()
        .map(|(s, _)| s)
        .collect(),
        SynthKind::SpdClusters => {
            let mixing = |theta: f64| {
                let (c, s) = (theta.cos(), theta.sin());
                let mut m = DMatrix::identity(n, n);
                for p in (0..n.saturating_sub(1)).step_by(2) {
                    m[(p, p)] = c;
                    m[(p, p + 1)] = s;
                    m[(p + 1, p)] = s;
                    m[(p + 1, p + 1)] = c;
                }
                &m * m.transpose() * spec.noise.powi(2)
            };
            synth_spd_classes(&SynthSpec {
                covariances: vec![mixing(spec.angle), mixing(-spec.angle)],
                samples,
                fs: profile.fs,
                noise: 0.0,
                per_class,
                seed,
            })?
        }
        SynthKind::BandPower => synth_band_signals(&BandSignalSpec {
            classes: [1.0, 2.0]
                .iter()
                .map(|m| vec![Tone { freq_hz: m * spec.tone_hz, amplitude: spec.tone_amplitude }])
                .collect(),
            channels: n,
            samples,
            fs: profile.fs,
            noise: spec.noise,
            per_class,
            seed,
        })?,
    };
    Ok(segments)
}
