//! Seeded synthetic datasets for desk-scale verification.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::segment::{EegSegment, Label};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Random SPD matrix `Q diag(λ) Qᵀ` with `ln λ` uniform in `[0, ln cond]`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, cond: f64) -> DMatrix<f64> {
    let q = gaussian_matrix(rng, n, n).qr().q();
    let lambda = DVector::from_fn(n, |_, _| (rng.random::<f64>() * cond.ln()).exp());
    let m = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Random well-conditioned invertible matrix.
pub fn random_invertible<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, n, n) + DMatrix::identity(n, n) * (n as f64).sqrt()
}

/// Classes that differ only in spatial covariance.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    /// One channel covariance per class.
    pub covariances: Vec<DMatrix<f64>>,
    pub samples: usize,
    pub fs: f64,
    /// Standard deviation of additive white noise.
    pub noise: f64,
    pub per_class: usize,
    pub seed: u64,
}

/// `X = A_k G (+ noise)` with `A_k A_kᵀ = Σ_k`; classes interleaved.
pub fn synth_spd_classes(spec: &SynthSpec) -> Result<Vec<EegSegment>> {
    let factors = spec
        .covariances
        .iter()
        .enumerate()
        .map(|(k, c)| {
            c.clone()
                .cholesky()
                .map(|ch| ch.l())
                .ok_or_else(|| Error::InvalidParameter(format!("class {k} covariance is not SPD")))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = factors.first().ok_or(Error::Empty("synthetic spec"))?.nrows();
    if factors.iter().any(|a| a.nrows() != n) {
        return Err(Error::Shape("class covariances differ in size".into()));
    }
    let mut rng = rng(spec.seed);
    let mut out = Vec::with_capacity(spec.per_class * factors.len());
    for _ in 0..spec.per_class {
        for (k, a) in factors.iter().enumerate() {
            let g = gaussian_matrix(&mut rng, n, spec.samples);
            let mut x = a * g;
            if spec.noise > 0.0 {
                x += gaussian_matrix(&mut rng, n, spec.samples) * spec.noise;
            }
            out.push(EegSegment::new(x, spec.fs, Label::Class(k))?);
        }
    }
    Ok(out)
}

/// A sinusoidal component of a class template.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tone {
    pub freq_hz: f64,
    pub amplitude: f64,
}

/// Classes that differ in band power.
#[derive(Debug, Clone)]
pub struct BandSignalSpec {
    /// Tones per class; every channel gets every tone with its own random phase.
    pub classes: Vec<Vec<Tone>>,
    pub channels: usize,
    pub samples: usize,
    pub fs: f64,
    pub noise: f64,
    pub per_class: usize,
    pub seed: u64,
}

pub fn synth_band_signals(spec: &BandSignalSpec) -> Result<Vec<EegSegment>> {
    if spec.classes.iter().flatten().any(|t| t.amplitude < 0.0) {
        return Err(Error::InvalidParameter("negative tone amplitude".into()));
    }
    let mut rng = rng(spec.seed);
    let mut out = Vec::with_capacity(spec.per_class * spec.classes.len());
    for _ in 0..spec.per_class {
        for (k, tones) in spec.classes.iter().enumerate() {
            let mut x = gaussian_matrix(&mut rng, spec.channels, spec.samples) * spec.noise;
            for ch in 0..spec.channels {
                for tone in tones {
                    let phase = rng.random::<f64>() * 2.0 * PI;
                    for t in 0..spec.samples {
                        let w = 2.0 * PI * tone.freq_hz * t as f64 / spec.fs;
                        x[(ch, t)] += tone.amplitude * (w + phase).sin();
                    }
                }
            }
            out.push(EegSegment::new(x, spec.fs, Label::Class(k))?);
        }
    }
    Ok(out)
}

/// Which cue carries the label in a [`synth_complementary`] trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cue {
    Temporal,
    Spatial,
}

/// Two-class task where each trial carries its label in exactly one of two
/// cues, the other being neutral:
///
/// * temporal: a `tone_hz` burst confined to the first (class 0) or second
///   (class 1) half of the trial; neutral is a steady tone of equal energy.
/// * spatial: the white background of each channel pair is mixed by
///   `[[cos θ, sin θ], [sin θ, cos θ]]` with `θ = +angle` (class 0) or
///   `−angle` (class 1), giving positive or negative inter-channel
///   correlation at unchanged expected channel power; neutral is unmixed.
///
/// Per-channel band power sequences never see the spatial cue and
/// whole-trial covariances never see the temporal one.
#[derive(Debug, Clone)]
pub struct ComplementarySpec {
    pub channels: usize,
    pub samples: usize,
    pub fs: f64,
    pub tone_hz: f64,
    pub tone_amplitude: f64,
    pub angle: f64,
    pub noise: f64,
    pub trials: usize,
    pub seed: u64,
}

pub fn synth_complementary(spec: &ComplementarySpec) -> Result<Vec<(EegSegment, Cue)>> {
    if spec.channels < 2 || spec.channels % 2 != 0 {
        return Err(Error::InvalidParameter("channel count must be even".into()));
    }
    let mut rng = rng(spec.seed);
    let half = spec.samples / 2;
    let mut out = Vec::with_capacity(spec.trials);
    for i in 0..spec.trials {
        let class = i % 2;
        let cue = if rng.random::<bool>() { Cue::Temporal } else { Cue::Spatial };
        let mut x = gaussian_matrix(&mut rng, spec.channels, spec.samples) * spec.noise;
        if cue == Cue::Spatial {
            let angle = if class == 0 { spec.angle } else { -spec.angle };
            let (c, s) = (angle.cos(), angle.sin());
            for pair in (0..spec.channels).step_by(2) {
                for t in 0..spec.samples {
                    let (a, b) = (x[(pair, t)], x[(pair + 1, t)]);
                    x[(pair, t)] = c * a + s * b;
                    x[(pair + 1, t)] = s * a + c * b;
                }
            }
        }
        for ch in 0..spec.channels {
            let phase = rng.random::<f64>() * 2.0 * PI;
            for t in 0..spec.samples {
                let envelope = match cue {
                    Cue::Spatial => 1.0,
                    Cue::Temporal => {
                        let first_half = t < half;
                        if first_half == (class == 0) {
                            std::f64::consts::SQRT_2
                        } else {
                            0.0
                        }
                    }
                };
                let w = 2.0 * PI * spec.tone_hz * t as f64 / spec.fs;
                x[(ch, t)] += envelope * spec.tone_amplitude * (w + phase).sin();
            }
        }
        out.push((EegSegment::new(x, spec.fs, Label::Class(class))?, cue));
    }
    Ok(out)
}
