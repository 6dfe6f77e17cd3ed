use crate::attention::AttentionMode;
use crate::error::{Error, Result};
use crate::loss::{LossKind, OutputActivation, OutputHead};

/// What follows each LSTM layer of the temporal stream.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    /// One dropout rate per LSTM layer.
    Dropout(Vec<f64>),
    /// Batch normalization followed by leaky-ReLU(0.3).
    BatchNormLeaky,
}

/// How the two stream embeddings are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionMode {
    /// `α = softmax(score_t, score_s)`, each embedding scaled by `1 + α`.
    #[default]
    Ours,
    /// Each embedding scaled by `α` alone.
    SoftAttention,
    /// Plain concatenation; the encoders are unused.
    Concatenation,
    /// Each embedding scaled by `1 + σ(score)` independently.
    IndependentSigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StreamMode {
    #[default]
    Fused,
    TemporalOnly,
    SpatialOnly,
}

impl StreamMode {
    pub fn temporal(self) -> bool {
        self != StreamMode::SpatialOnly
    }

    pub fn spatial(self) -> bool {
        self != StreamMode::TemporalOnly
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureConfig {
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub regularizer: Regularizer,
    pub attention: AttentionMode,
    pub temporal_embedding: usize,
    /// Widths of the spatial FC layers; the last is the embedding size.
    pub spatial_hidden: Vec<usize>,
    pub spatial_dropout: f64,
    /// Widths of each stream encoder; the last must be 1.
    pub encoder: Vec<usize>,
    pub fusion_hidden: usize,
    pub fusion: FusionMode,
    pub streams: StreamMode,
    pub head: OutputHead,
    /// Number of classes; ignored for regression.
    pub classes: usize,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            lstm_layers: 3,
            lstm_hidden: 256,
            regularizer: Regularizer::BatchNormLeaky,
            attention: AttentionMode::Scalar,
            temporal_embedding: 64,
            spatial_hidden: vec![512, 64],
            spatial_dropout: 0.5,
            encoder: vec![32, 1],
            fusion_hidden: 128,
            fusion: FusionMode::Ours,
            streams: StreamMode::Fused,
            head: OutputHead { activation: OutputActivation::Softmax, loss: LossKind::CrossEntropy },
            classes: 2,
        }
    }
}

impl ArchitectureConfig {
    pub fn output_units(&self) -> usize {
        self.head.units(self.classes)
    }

    pub fn spatial_embedding(&self) -> usize {
        self.spatial_hidden.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        OutputHead::new(self.head.activation, self.head.loss)?;
        if self.lstm_layers == 0 || self.lstm_hidden == 0 || self.temporal_embedding == 0 {
            return bad("temporal stream sizes must be positive".into());
        }
        if self.spatial_hidden.is_empty() || self.spatial_hidden.contains(&0) {
            return bad("spatial stream needs at least one positive layer width".into());
        }
        if self.encoder.last() != Some(&1) || self.encoder.contains(&0) {
            return bad("encoder must end in a single unit".into());
        }
        if self.fusion_hidden == 0 {
            return bad("fusion layer width must be positive".into());
        }
        if let Regularizer::Dropout(rates) = &self.regularizer {
            if rates.len() != self.lstm_layers {
                return bad(format!("{} dropout rates for {} LSTM layers", rates.len(), self.lstm_layers));
            }
            if rates.iter().any(|r| !(0.0..1.0).contains(r)) {
                return bad("dropout rates must lie in [0, 1)".into());
            }
        }
        if !(0.0..1.0).contains(&self.spatial_dropout) {
            return bad("spatial dropout must lie in [0, 1)".into());
        }
        match self.head.loss {
            LossKind::CrossEntropy if self.classes < 2 => bad("cross-entropy needs at least two classes".into()),
            LossKind::BinaryCrossEntropy if self.classes != 2 => bad("binary cross-entropy needs exactly two classes".into()),
            _ => Ok(()),
        }
    }
}
