use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ArchitectureConfig, FusionMode, Regularizer};
use super::data::{Batch, Dataset, Standardizer};
use crate::activation::{sigmoid, Activation};
use crate::attention::Attention;
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::lstm::Lstm;
use crate::norm::{BatchNorm, Dropout};
use crate::param::{join, Module, Param};

/// Per-step feature width `F` and spatial vector length `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputDims {
    pub features: usize,
    pub spatial: usize,
}

#[derive(Debug, Clone)]
enum RegLayer {
    Dropout(Dropout),
    Norm { bn: BatchNorm, pre: Vec<DMatrix<f64>>, post: Vec<DMatrix<f64>> },
}

impl RegLayer {
    fn forward(&mut self, xs: &[DMatrix<f64>], train: bool) -> Result<Vec<DMatrix<f64>>> {
        match self {
            RegLayer::Dropout(d) => Ok(d.forward(xs, train)),
            RegLayer::Norm { bn, pre, post } => {
                *pre = bn.forward(xs, train)?;
                let act = Activation::leaky();
                *post = pre.iter().map(|y| act.apply(y)).collect();
                Ok(post.clone())
            }
        }
    }

    fn backward(&mut self, dys: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        match self {
            RegLayer::Dropout(d) => d.backward(dys),
            RegLayer::Norm { bn, pre, post } => {
                let act = Activation::leaky();
                let d: Vec<DMatrix<f64>> =
                    dys.iter().zip(pre.iter().zip(post.iter())).map(|(dy, (z, y))| act.backward(z, y, dy)).collect();
                bn.backward(&d)
            }
        }
    }
}

/// Stacked LSTM → attention pooling → FC embedding.
#[derive(Debug, Clone)]
struct TemporalStream {
    lstms: Vec<Lstm>,
    regs: Vec<RegLayer>,
    attention: Attention,
    fc: Dense,
    last_alpha: Vec<DMatrix<f64>>,
}

impl TemporalStream {
    fn forward(&mut self, xs: &[DMatrix<f64>], train: bool) -> Result<DMatrix<f64>> {
        let mut h = xs.to_vec();
        for (lstm, reg) in self.lstms.iter_mut().zip(&mut self.regs) {
            h = lstm.forward(&h)?;
            h = reg.forward(&h, train)?;
        }
        let (v, alpha) = self.attention.forward(&h)?;
        self.last_alpha = alpha;
        self.fc.forward(&v)
    }

    fn backward(&mut self, de: &DMatrix<f64>) {
        let dv = self.fc.backward(de);
        let mut dh = self.attention.backward(&dv);
        for (lstm, reg) in self.lstms.iter_mut().zip(&mut self.regs).rev() {
            dh = reg.backward(&dh);
            dh = lstm.backward(&dh);
        }
    }
}

impl Module for TemporalStream {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (k, (lstm, reg)) in self.lstms.iter_mut().zip(&mut self.regs).enumerate() {
            lstm.visit_params(&join(prefix, &format!("lstm{k}")), f);
            if let RegLayer::Norm { bn, .. } = reg {
                bn.visit_params(&join(prefix, &format!("bn{k}")), f);
            }
        }
        self.attention.visit_params(&join(prefix, "attention"), f);
        self.fc.visit_params(&join(prefix, "fc"), f);
    }

    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut DMatrix<f64>)) {
        for (k, reg) in self.regs.iter_mut().enumerate() {
            if let RegLayer::Norm { bn, .. } = reg {
                bn.visit_buffers(&join(prefix, &format!("bn{k}")), f);
            }
        }
    }
}

/// FC layers each followed by dropout.
#[derive(Debug, Clone)]
struct SpatialStream {
    fcs: Vec<Dense>,
    drops: Vec<Dropout>,
}

impl SpatialStream {
    fn forward(&mut self, x: &DMatrix<f64>, train: bool) -> Result<DMatrix<f64>> {
        let mut h = x.clone();
        for (fc, drop) in self.fcs.iter_mut().zip(&mut self.drops) {
            h = fc.forward(&h)?;
            h = drop.forward(std::slice::from_ref(&h), train).remove(0);
        }
        Ok(h)
    }

    fn backward(&mut self, de: &DMatrix<f64>) {
        let mut d = de.clone();
        for (fc, drop) in self.fcs.iter_mut().zip(&mut self.drops).rev() {
            d = drop.backward(std::slice::from_ref(&d)).remove(0);
            d = fc.backward(&d);
        }
    }
}

impl Module for SpatialStream {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (k, fc) in self.fcs.iter_mut().enumerate() {
            fc.visit_params(&join(prefix, &format!("fc{k}")), f);
        }
    }
}

/// Fusion weights for one sample from the two encoder scores: returns
/// `(α_t, α_s, scale_t, scale_s)`.
pub fn fusion_weights(mode: FusionMode, score_t: f64, score_s: f64) -> (f64, f64, f64, f64) {
    match mode {
        FusionMode::Ours | FusionMode::SoftAttention => {
            let m = score_t.max(score_s);
            let (et, es) = ((score_t - m).exp(), (score_s - m).exp());
            let (at, a_s) = (et / (et + es), es / (et + es));
            if mode == FusionMode::Ours {
                (at, a_s, 1.0 + at, 1.0 + a_s)
            } else {
                (at, a_s, at, a_s)
            }
        }
        FusionMode::IndependentSigmoid => {
            let (at, a_s) = (sigmoid(score_t), sigmoid(score_s));
            (at, a_s, 1.0 + at, 1.0 + a_s)
        }
        FusionMode::Concatenation => (0.5, 0.5, 1.0, 1.0),
    }
}

#[derive(Debug, Clone)]
struct FusionCache {
    e_t: Option<DMatrix<f64>>,
    e_s: Option<DMatrix<f64>>,
    alpha: DMatrix<f64>,
    scale: DMatrix<f64>,
}

#[derive(Debug, Clone)]
struct FusionHead {
    mode: FusionMode,
    enc_t: Vec<Dense>,
    enc_s: Vec<Dense>,
    fc: Dense,
    out: Dense,
    cache: Option<FusionCache>,
}

fn encode(layers: &mut [Dense], x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut h = x.clone();
    for l in layers {
        h = l.forward(&h)?;
    }
    Ok(h)
}

fn encode_backward(layers: &mut [Dense], d: DMatrix<f64>) -> DMatrix<f64> {
    layers.iter_mut().rev().fold(d, |d, l| l.backward(&d))
}

fn scale_columns(m: &DMatrix<f64>, s: &DMatrix<f64>, row: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] * s[(row, c)])
}

impl FusionHead {
    fn weighted(&self) -> bool {
        self.mode != FusionMode::Concatenation
    }

    fn forward(&mut self, e_t: Option<DMatrix<f64>>, e_s: Option<DMatrix<f64>>) -> Result<DMatrix<f64>> {
        let batch = e_t.as_ref().or(e_s.as_ref()).map_or(0, |e| e.ncols());
        let mut alpha = DMatrix::from_element(2, batch, 0.5);
        let mut scale = DMatrix::from_element(2, batch, 1.0);
        let joined = match (&e_t, &e_s) {
            (Some(t), Some(s)) => {
                if self.weighted() {
                    let st = encode(&mut self.enc_t, t)?;
                    let ss = encode(&mut self.enc_s, s)?;
                    for j in 0..batch {
                        let (at, a_s, kt, ks) = fusion_weights(self.mode, st[(0, j)], ss[(0, j)]);
                        alpha[(0, j)] = at;
                        alpha[(1, j)] = a_s;
                        scale[(0, j)] = kt;
                        scale[(1, j)] = ks;
                    }
                }
                let mut joined = DMatrix::zeros(t.nrows() + s.nrows(), batch);
                joined.rows_mut(0, t.nrows()).copy_from(&scale_columns(t, &scale, 0));
                joined.rows_mut(t.nrows(), s.nrows()).copy_from(&scale_columns(s, &scale, 1));
                joined
            }
            (Some(e), None) | (None, Some(e)) => e.clone(),
            (None, None) => return Err(Error::InvalidParameter("no stream enabled".into())),
        };
        let h = self.fc.forward(&joined)?;
        let z = self.out.forward(&h)?;
        self.cache = Some(FusionCache { e_t, e_s, alpha, scale });
        Ok(z)
    }

    /// Returns `dL/de_t`, `dL/de_s`.
    fn backward(&mut self, dz: &DMatrix<f64>) -> (Option<DMatrix<f64>>, Option<DMatrix<f64>>) {
        let dh = self.out.backward(dz);
        let dj = self.fc.backward(&dh);
        let cache = self.cache.take().expect("backward before forward");
        let (t, s) = match (&cache.e_t, &cache.e_s) {
            (Some(t), Some(s)) => (t, s),
            (Some(_), None) => return (Some(dj), None),
            (None, Some(_)) => return (None, Some(dj)),
            (None, None) => return (None, None),
        };
        let dj_t = dj.rows(0, t.nrows()).into_owned();
        let dj_s = dj.rows(t.nrows(), s.nrows()).into_owned();
        let mut de_t = scale_columns(&dj_t, &cache.scale, 0);
        let mut de_s = scale_columns(&dj_s, &cache.scale, 1);
        if self.weighted() {
            let batch = t.ncols();
            let mut ds_t = DMatrix::zeros(1, batch);
            let mut ds_s = DMatrix::zeros(1, batch);
            for j in 0..batch {
                let dk_t = dj_t.column(j).dot(&t.column(j));
                let dk_s = dj_s.column(j).dot(&s.column(j));
                let (at, a_s) = (cache.alpha[(0, j)], cache.alpha[(1, j)]);
                if self.mode == FusionMode::IndependentSigmoid {
                    ds_t[(0, j)] = dk_t * at * (1.0 - at);
                    ds_s[(0, j)] = dk_s * a_s * (1.0 - a_s);
                } else {
                    let mean = at * dk_t + a_s * dk_s;
                    ds_t[(0, j)] = at * (dk_t - mean);
                    ds_s[(0, j)] = a_s * (dk_s - mean);
                }
            }
            de_t += encode_backward(&mut self.enc_t, ds_t);
            de_s += encode_backward(&mut self.enc_s, ds_s);
        }
        self.cache = Some(cache);
        (Some(de_t), Some(de_s))
    }
}

impl Module for FusionHead {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (k, l) in self.enc_t.iter_mut().enumerate() {
            l.visit_params(&join(prefix, &format!("enc_t{k}")), f);
        }
        for (k, l) in self.enc_s.iter_mut().enumerate() {
            l.visit_params(&join(prefix, &format!("enc_s{k}")), f);
        }
        self.fc.visit_params(&join(prefix, "fc"), f);
        self.out.visit_params(&join(prefix, "out"), f);
    }
}

/// The two-stream network: LSTM-attention over feature sequences, FC layers
/// over tangent vectors, and the fusion head.
#[derive(Debug, Clone)]
pub struct SpatioTemporalNet {
    config: ArchitectureConfig,
    dims: InputDims,
    pub standardizer: Standardizer,
    temporal: Option<TemporalStream>,
    spatial: Option<SpatialStream>,
    head: FusionHead,
}

impl SpatioTemporalNet {
    pub fn new(config: ArchitectureConfig, dims: InputDims, seed: u64) -> Result<Self> {
        config.validate()?;
        if dims.features == 0 && config.streams.temporal() || dims.spatial == 0 && config.streams.spatial() {
            return Err(Error::InvalidParameter(format!("input dimensions {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let leaky = Activation::leaky();
        let temporal = if config.streams.temporal() {
            let mut lstms = Vec::new();
            let mut regs = Vec::new();
            for k in 0..config.lstm_layers {
                let input = if k == 0 { dims.features } else { config.lstm_hidden };
                lstms.push(Lstm::new(&mut rng, input, config.lstm_hidden));
                regs.push(match &config.regularizer {
                    Regularizer::Dropout(rates) => RegLayer::Dropout(Dropout::new(rates[k], rng.random())?),
                    Regularizer::BatchNormLeaky => RegLayer::Norm {
                        bn: BatchNorm::new(config.lstm_hidden),
                        pre: Vec::new(),
                        post: Vec::new(),
                    },
                });
            }
            let attention = Attention::new(&mut rng, config.lstm_hidden, config.attention);
            let fc = Dense::new(&mut rng, config.lstm_hidden, config.temporal_embedding, leaky);
            Some(TemporalStream { lstms, regs, attention, fc, last_alpha: Vec::new() })
        } else {
            None
        };
        let spatial = if config.streams.spatial() {
            let mut fcs = Vec::new();
            let mut drops = Vec::new();
            let mut input = dims.spatial;
            for &w in &config.spatial_hidden {
                fcs.push(Dense::new(&mut rng, input, w, leaky));
                drops.push(Dropout::new(config.spatial_dropout, rng.random())?);
                input = w;
            }
            Some(SpatialStream { fcs, drops })
        } else {
            None
        };
        let encoder = |rng: &mut ChaCha8Rng, input: usize| {
            let mut layers = Vec::new();
            let mut prev = input;
            for (k, &w) in config.encoder.iter().enumerate() {
                let act = if k + 1 == config.encoder.len() { Activation::Identity } else { leaky };
                layers.push(Dense::new(rng, prev, w, act));
                prev = w;
            }
            layers
        };
        let both = temporal.is_some() && spatial.is_some() && config.fusion != FusionMode::Concatenation;
        let enc_t = if both { encoder(&mut rng, config.temporal_embedding) } else { Vec::new() };
        let enc_s = if both { encoder(&mut rng, config.spatial_embedding()) } else { Vec::new() };
        let joined = temporal.as_ref().map_or(0, |_| config.temporal_embedding)
            + spatial.as_ref().map_or(0, |_| config.spatial_embedding());
        let fc = Dense::new(&mut rng, joined, config.fusion_hidden, leaky);
        let out = Dense::new(&mut rng, config.fusion_hidden, config.output_units(), Activation::Identity);
        let head = FusionHead { mode: config.fusion, enc_t, enc_s, fc, out, cache: None };
        Ok(Self {
            standardizer: Standardizer::identity(dims),
            config,
            dims,
            temporal,
            spatial,
            head,
        })
    }

    pub fn config(&self) -> &ArchitectureConfig {
        &self.config
    }

    pub fn dims(&self) -> InputDims {
        self.dims
    }

    /// Sets every trainable parameter to zero.
    pub fn zero_parameters(&mut self) {
        self.visit_params("", &mut |_, p| p.value.fill(0.0));
    }

    /// Stream embeddings `(e_t, e_s)` for a batch.
    pub fn embeddings(&mut self, batch: &Batch, train: bool) -> Result<(Option<DMatrix<f64>>, Option<DMatrix<f64>>)> {
        let e_t = match &mut self.temporal {
            Some(t) => Some(t.forward(&batch.temporal, train)?),
            None => None,
        };
        let e_s = match &mut self.spatial {
            Some(s) => Some(s.forward(&batch.spatial, train)?),
            None => None,
        };
        Ok((e_t, e_s))
    }

    /// Output logits, `units × B`.
    pub fn forward(&mut self, batch: &Batch, train: bool) -> Result<DMatrix<f64>> {
        let (e_t, e_s) = self.embeddings(batch, train)?;
        self.head.forward(e_t, e_s)
    }

    /// Backpropagates `dL/dlogits` from the last forward pass.
    pub fn backward(&mut self, dz: &DMatrix<f64>) {
        let (de_t, de_s) = self.head.backward(dz);
        if let (Some(t), Some(d)) = (&mut self.temporal, de_t) {
            t.backward(&d);
        }
        if let (Some(s), Some(d)) = (&mut self.spatial, de_s) {
            s.backward(&d);
        }
    }

    /// Fusion weights `α` (`2 × B`, temporal row first) of the last forward.
    pub fn fusion_alpha(&self) -> Option<&DMatrix<f64>> {
        self.head.cache.as_ref().map(|c| &c.alpha)
    }

    /// Temporal attention weights of the last forward, one matrix per step.
    pub fn attention_weights(&self) -> Option<&[DMatrix<f64>]> {
        self.temporal.as_ref().map(|t| t.last_alpha.as_slice())
    }

    /// Standardized batch from dataset rows.
    pub fn batch(&self, data: &Dataset, indices: &[usize]) -> Batch {
        data.batch(indices, &self.standardizer)
    }

    /// Outputs after the task activation, `units × n`, evaluation mode.
    pub fn predict(&mut self, data: &Dataset) -> Result<DMatrix<f64>> {
        data.check(self.dims)?;
        let n = data.len();
        let units = self.config.output_units();
        let mut out = DMatrix::zeros(units, n);
        let indices: Vec<usize> = (0..n).collect();
        for chunk in indices.chunks(256) {
            let batch = self.batch(data, chunk);
            let z = self.forward(&batch, false)?;
            let p = self.config.head.predict(&z);
            out.columns_mut(chunk[0], chunk.len()).copy_from(&p);
        }
        Ok(out)
    }
}

impl Module for SpatioTemporalNet {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        if let Some(t) = &mut self.temporal {
            t.visit_params(&join(prefix, "temporal"), f);
        }
        if let Some(s) = &mut self.spatial {
            s.visit_params(&join(prefix, "spatial"), f);
        }
        self.head.visit_params(&join(prefix, "fusion"), f);
    }

    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut DMatrix<f64>)) {
        if let Some(t) = &mut self.temporal {
            t.visit_buffers(&join(prefix, "temporal"), f);
        }
        self.standardizer.visit(&join(prefix, "input"), f);
    }
}
