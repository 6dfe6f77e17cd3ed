//! Pipeline configuration: a TOML file selecting a dataset profile plus
//! optional overrides. Paths are resolved relative to the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use spd_bci_core::features::VarianceEstimator;
use spd_bci_core::signal::BandSpec;
use spd_bci_core::spd::{FilterScope, ReferencePolicy};
use spd_bci_nn::model::{ArchitectureConfig, FusionMode, Regularizer, StreamMode, TrainConfig};
use spd_bci_nn::{AttentionMode, LossKind, OutputActivation, OutputHead};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileName {
    Seed,
    SeedVig,
    Bci2a,
    Bci2b,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RankMode {
    #[default]
    Fixed,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classification { classes: usize },
    Regression,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Input segment files (`*.eegs`).
    pub raw: PathBuf,
    /// Working directory for every generated artifact.
    pub work: PathBuf,
    /// Metrics JSON; defaults to `<work>/metrics.json`.
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PreprocessSection {
    pub broadband: Option<[f64; 2]>,
    /// `0` disables the notch.
    pub notch_hz: Option<f64>,
    pub normalize: Option<bool>,
    #[serde(default)]
    pub continue_on_error: bool,
    /// Optional CSV recording ingested ahead of the segment files.
    pub csv: Option<PathBuf>,
    pub csv_manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceName {
    TrainMean,
    BatchMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeName {
    PerBand,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorName {
    Periodogram,
    TimeDomain,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FeaturesSection {
    pub rank: Option<usize>,
    #[serde(default)]
    pub rank_mode: RankMode,
    pub reference: Option<ReferenceName>,
    pub filter_scope: Option<ScopeName>,
    pub estimator: Option<EstimatorName>,
    pub ridge: Option<f64>,
    pub test_fraction: Option<f64>,
    pub validation_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    Ours,
    SoftAttention,
    Concatenation,
    IndependentSigmoid,
    TemporalOnly,
    SpatialOnly,
}

impl ProfileName {
    pub fn label(self) -> &'static str {
        match self {
            ProfileName::Seed => "seed",
            ProfileName::SeedVig => "seed-vig",
            ProfileName::Bci2a => "bci2a",
            ProfileName::Bci2b => "bci2b",
            ProfileName::Synthetic => "synthetic",
        }
    }
}

impl VariantName {
    pub const ALL: [VariantName; 6] = [
        VariantName::Ours,
        VariantName::SoftAttention,
        VariantName::Concatenation,
        VariantName::IndependentSigmoid,
        VariantName::TemporalOnly,
        VariantName::SpatialOnly,
    ];

    pub fn label(self) -> &'static str {
        match self {
            VariantName::Ours => "ours",
            VariantName::SoftAttention => "soft-attention",
            VariantName::Concatenation => "concatenation",
            VariantName::IndependentSigmoid => "independent-sigmoid",
            VariantName::TemporalOnly => "temporal-only",
            VariantName::SpatialOnly => "spatial-only",
        }
    }

    pub fn modes(self) -> (FusionMode, StreamMode) {
        match self {
            VariantName::Ours => (FusionMode::Ours, StreamMode::Fused),
            VariantName::SoftAttention => (FusionMode::SoftAttention, StreamMode::Fused),
            VariantName::Concatenation => (FusionMode::Concatenation, StreamMode::Fused),
            VariantName::IndependentSigmoid => (FusionMode::IndependentSigmoid, StreamMode::Fused),
            VariantName::TemporalOnly => (FusionMode::Ours, StreamMode::TemporalOnly),
            VariantName::SpatialOnly => (FusionMode::Ours, StreamMode::SpatialOnly),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionName {
    Scalar,
    PerComponent,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ModelSection {
    pub variant: Option<VariantName>,
    pub attention: Option<AttentionName>,
    pub lstm_layers: Option<usize>,
    pub lstm_hidden: Option<usize>,
    pub dropout: Option<Vec<f64>>,
    pub temporal_embedding: Option<usize>,
    pub spatial_hidden: Option<Vec<usize>>,
    pub spatial_dropout: Option<f64>,
    pub encoder: Option<Vec<usize>>,
    pub fusion_hidden: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct AblateSection {
    pub variants: Option<Vec<VariantName>>,
    /// Train variants whose checkpoint is absent instead of failing.
    pub train_missing: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    #[default]
    Complementary,
    SpdClusters,
    BandPower,
}

/// Generator settings for the `synth` subcommand.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SyntheticSection {
    #[serde(default)]
    pub kind: SynthKind,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_tone_hz")]
    pub tone_hz: f64,
    #[serde(default = "default_tone_amplitude")]
    pub tone_amplitude: f64,
    #[serde(default = "default_angle")]
    pub angle: f64,
}

fn default_trials() -> usize {
    400
}
fn default_noise() -> f64 {
    1.0
}
fn default_tone_hz() -> f64 {
    10.0
}
fn default_tone_amplitude() -> f64 {
    1.0
}
fn default_angle() -> f64 {
    0.4
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            kind: SynthKind::default(),
            trials: default_trials(),
            noise: default_noise(),
            tone_hz: default_tone_hz(),
            tone_amplitude: default_tone_amplitude(),
            angle: default_angle(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub profile: ProfileName,
    pub seed: Option<u64>,
    pub paths: Paths,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub ablate: AblateSection,
    #[serde(default)]
    pub synthetic: SyntheticSection,
}

/// Dataset constants fixed by a profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub name: ProfileName,
    pub fs: f64,
    pub segment_seconds: f64,
    pub channels: usize,
    pub bands: Vec<BandSpec>,
    pub rank: usize,
    pub task: Task,
    pub head: OutputHead,
    pub regularizer: Regularizer,
    pub broadband: (f64, f64),
    pub notch_hz: Option<f64>,
}

fn two_hz_bands() -> Vec<BandSpec> {
    (0..25).map(|k| BandSpec::new(0.5 + 2.0 * k as f64, 2.5 + 2.0 * k as f64, 5)).collect()
}

fn head(activation: OutputActivation, loss: LossKind) -> OutputHead {
    OutputHead { activation, loss }
}

impl Profile {
    pub fn preset(name: ProfileName) -> Self {
        let bn = Regularizer::BatchNormLeaky;
        let ce = head(OutputActivation::Softmax, LossKind::CrossEntropy);
        match name {
            ProfileName::Seed => Profile {
                name,
                fs: 200.0,
                segment_seconds: 8.0,
                channels: 62,
                bands: [(1.0, 3.0), (4.0, 7.0), (8.0, 13.0), (14.0, 30.0), (31.0, 50.0)]
                    .iter()
                    .map(|&(l, h)| BandSpec::new(l, h, 5))
                    .collect(),
                rank: 48,
                task: Task::Classification { classes: 3 },
                head: ce,
                regularizer: bn,
                broadband: (0.5, 70.0),
                notch_hz: Some(50.0),
            },
            ProfileName::SeedVig => Profile {
                name,
                fs: 200.0,
                segment_seconds: 8.0,
                channels: 17,
                bands: two_hz_bands(),
                rank: 11,
                task: Task::Regression,
                head: head(OutputActivation::Sigmoid, LossKind::MeanSquared),
                regularizer: bn,
                broadband: (0.5, 70.0),
                notch_hz: Some(50.0),
            },
            ProfileName::Bci2a => Profile {
                name,
                fs: 250.0,
                segment_seconds: 4.0,
                channels: 22,
                bands: two_hz_bands(),
                rank: 18,
                task: Task::Classification { classes: 4 },
                head: ce,
                regularizer: Regularizer::Dropout(vec![0.2, 0.1, 0.1]),
                broadband: (0.5, 70.0),
                notch_hz: Some(50.0),
            },
            ProfileName::Bci2b => Profile {
                name,
                fs: 250.0,
                segment_seconds: 4.0,
                channels: 3,
                bands: two_hz_bands(),
                rank: 3,
                task: Task::Classification { classes: 2 },
                head: head(OutputActivation::Sigmoid, LossKind::BinaryCrossEntropy),
                regularizer: bn,
                broadband: (0.5, 70.0),
                notch_hz: Some(50.0),
            },
            ProfileName::Synthetic => Profile {
                name,
                fs: 128.0,
                segment_seconds: 4.0,
                channels: 4,
                bands: [(4.0, 8.0), (8.0, 12.0), (12.0, 16.0), (16.0, 24.0)]
                    .iter()
                    .map(|&(l, h)| BandSpec::new(l, h, 5))
                    .collect(),
                rank: 3,
                task: Task::Classification { classes: 2 },
                head: ce,
                regularizer: bn,
                broadband: (0.5, 45.0),
                notch_hz: Some(50.0),
            },
        }
    }

    pub fn classes(&self) -> usize {
        match self.task {
            Task::Classification { classes } => classes,
            Task::Regression => 1,
        }
    }

    /// Temporal features per window, `2·H·N`.
    pub fn feature_width(&self) -> usize {
        2 * self.bands.len() * self.channels
    }

    /// Tangent features per trial, `H·R(R+1)/2`.
    pub fn spatial_width(&self, rank: usize) -> usize {
        self.bands.len() * rank * (rank + 1) / 2
    }

    /// Default architecture: full-size for dataset profiles, reduced for the
    /// synthetic profile.
    pub fn architecture(&self) -> ArchitectureConfig {
        let base = ArchitectureConfig {
            regularizer: self.regularizer.clone(),
            head: self.head,
            classes: self.classes(),
            ..ArchitectureConfig::default()
        };
        if self.name == ProfileName::Synthetic {
            ArchitectureConfig {
                lstm_hidden: 16,
                temporal_embedding: 16,
                spatial_hidden: vec![32, 16],
                spatial_dropout: 0.2,
                encoder: vec![8, 1],
                fusion_hidden: 16,
                ..base
            }
        } else {
            base
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: if self.name == ProfileName::Synthetic { 40 } else { 200 },
            ..TrainConfig::default()
        }
    }
}

/// Fully resolved settings for one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub profile: Profile,
    pub seed: u64,
    pub raw_dir: PathBuf,
    pub work_dir: PathBuf,
    pub metrics_path: PathBuf,
    pub normalize: bool,
    pub continue_on_error: bool,
    pub csv: Option<(PathBuf, PathBuf)>,
    pub rank: usize,
    pub rank_mode: RankMode,
    pub reference: ReferencePolicy,
    pub filter_scope: FilterScope,
    pub estimator: VarianceEstimator,
    pub ridge: Option<f64>,
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub variant: VariantName,
    pub arch: ArchitectureConfig,
    pub train: TrainConfig,
    pub ablate: Vec<VariantName>,
    pub ablate_train_missing: bool,
    pub synthetic: SyntheticSection,
}

fn check(cond: bool, msg: impl Into<String>) -> CliResult<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(msg.into()))
    }
}

impl PipelineConfig {
    pub fn load(path: &Path, seed_override: Option<u64>) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, seed_override).map_err(|e| e.at(path))
    }

    /// Parses configuration text; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path, seed_override: Option<u64>) -> CliResult<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Self::resolve(file, base, seed_override)
    }

    pub fn resolve(file: ConfigFile, base: &Path, seed_override: Option<u64>) -> CliResult<Self> {
        let mut profile = Profile::preset(file.profile);
        let pre = &file.preprocess;
        if let Some([lo, hi]) = pre.broadband {
            profile.broadband = (lo, hi);
        }
        if let Some(f0) = pre.notch_hz {
            profile.notch_hz = (f0 > 0.0).then_some(f0);
        }
        let join = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let work_dir = join(&file.paths.work);
        let metrics_path = file.paths.metrics.as_deref().map(join).unwrap_or_else(|| work_dir.join("metrics.json"));
        let csv = match (&pre.csv, &pre.csv_manifest) {
            (Some(c), Some(m)) => Some((join(c), join(m))),
            (None, None) => None,
            _ => return Err(CliError::Config("preprocess.csv and preprocess.csv-manifest go together".into())),
        };

        let feats = &file.features;
        let rank = feats.rank.unwrap_or(profile.rank);
        check(rank >= 1 && rank <= profile.channels, format!("rank {rank} outside [1, {}]", profile.channels))?;
        if feats.rank_mode == RankMode::Grid {
            check(profile.channels >= 2, "grid search needs at least two channels")?;
        }
        let test_fraction = feats.test_fraction.unwrap_or(0.2);
        let validation_fraction = feats.validation_fraction.unwrap_or(0.1);
        check((0.0..1.0).contains(&test_fraction) && test_fraction > 0.0, "test-fraction must lie in (0, 1)")?;
        check(
            (0.0..1.0).contains(&validation_fraction) && validation_fraction > 0.0,
            "validation-fraction must lie in (0, 1)",
        )?;
        if let Some(r) = feats.ridge {
            check(r > 0.0 && r.is_finite(), "ridge must be positive")?;
        }

        let m = &file.model;
        let variant = m.variant.unwrap_or(VariantName::Ours);
        let mut arch = profile.architecture();
        let (fusion, streams) = variant.modes();
        arch.fusion = fusion;
        arch.streams = streams;
        if let Some(a) = m.attention {
            arch.attention = match a {
                AttentionName::Scalar => AttentionMode::Scalar,
                AttentionName::PerComponent => AttentionMode::PerComponent,
            };
        }
        if let Some(v) = m.lstm_layers {
            arch.lstm_layers = v;
            if let Regularizer::Dropout(rates) = &mut arch.regularizer {
                rates.resize(v, *rates.last().unwrap_or(&0.1));
            }
        }
        if let Some(v) = m.lstm_hidden {
            arch.lstm_hidden = v;
        }
        if let Some(v) = &m.dropout {
            arch.regularizer = Regularizer::Dropout(v.clone());
        }
        if let Some(v) = m.temporal_embedding {
            arch.temporal_embedding = v;
        }
        if let Some(v) = &m.spatial_hidden {
            arch.spatial_hidden = v.clone();
        }
        if let Some(v) = m.spatial_dropout {
            arch.spatial_dropout = v;
        }
        if let Some(v) = &m.encoder {
            arch.encoder = v.clone();
        }
        if let Some(v) = m.fusion_hidden {
            arch.fusion_hidden = v;
        }
        arch.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let seed = seed_override.or(file.seed).unwrap_or(0);
        let mut train = profile.train_config();
        train.seed = seed;
        let t = &file.train;
        if let Some(v) = t.epochs {
            train.epochs = v;
        }
        if let Some(v) = t.batch_size {
            check(v > 0, "batch-size must be positive")?;
            train.batch_size = v;
        }
        if let Some(v) = t.learning_rate {
            check(v > 0.0, "learning-rate must be positive")?;
            train.learning_rate = v;
        }
        if let Some(v) = t.clip_norm {
            check(v > 0.0, "clip-norm must be positive")?;
            train.clip_norm = v;
        }

        let ablate = file.ablate.variants.clone().unwrap_or_else(|| VariantName::ALL.to_vec());
        Ok(Self {
            seed,
            raw_dir: join(&file.paths.raw),
            work_dir,
            metrics_path,
            normalize: pre.normalize.unwrap_or(true),
            continue_on_error: pre.continue_on_error,
            csv,
            rank,
            rank_mode: feats.rank_mode,
            reference: match feats.reference {
                Some(ReferenceName::TrainMean) => ReferencePolicy::TrainMean,
                _ => ReferencePolicy::BatchMean,
            },
            filter_scope: match feats.filter_scope {
                Some(ScopeName::Shared) => FilterScope::Shared,
                _ => FilterScope::PerBand,
            },
            estimator: match feats.estimator {
                Some(EstimatorName::TimeDomain) => VarianceEstimator::TimeDomain,
                _ => VarianceEstimator::Periodogram,
            },
            ridge: feats.ridge,
            test_fraction,
            validation_fraction,
            variant,
            arch,
            train,
            ablate,
            ablate_train_missing: file.ablate.train_missing.unwrap_or(true),
            synthetic: file.synthetic,
            profile,
        })
    }

    pub fn preprocessed_dir(&self) -> PathBuf {
        self.work_dir.join("preprocessed")
    }

    pub fn features_dir(&self) -> PathBuf {
        self.work_dir.join("features")
    }

    pub fn model_path(&self) -> PathBuf {
        self.work_dir.join("model.ckpt")
    }

    pub fn log_path(&self) -> PathBuf {
        self.work_dir.join("train.jsonl")
    }

    pub fn grid_path(&self) -> PathBuf {
        self.work_dir.join("grid.csv")
    }

    pub fn ablation_path(&self) -> PathBuf {
        self.work_dir.join("ablation.csv")
    }

    /// Ranks covered by `features`/`train`: the configured one, or the
    /// whole grid `1..N−1`.
    pub fn ranks(&self) -> Vec<usize> {
        match self.rank_mode {
            RankMode::Fixed => vec![self.rank],
            RankMode::Grid => (1..self.profile.channels).collect(),
        }
    }
}
