use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Target attached to a segment.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Label {
    #[default]
    None,
    Class(usize),
    Real(f64),
}

impl Label {
    pub fn class(&self) -> Option<usize> {
        match *self {
            Label::Class(k) => Some(k),
            _ => None,
        }
    }

    /// Class index or regression target as a real number.
    pub fn value(&self) -> Option<f64> {
        match *self {
            Label::Class(k) => Some(k as f64),
            Label::Real(v) => Some(v),
            Label::None => None,
        }
    }
}

/// One multichannel EEG trial: `channels × samples` at `fs` Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct EegSegment {
    pub samples: DMatrix<f64>,
    pub fs: f64,
    pub label: Label,
}

impl EegSegment {
    pub fn new(samples: DMatrix<f64>, fs: f64, label: Label) -> Result<Self> {
        if samples.nrows() < 1 {
            return Err(Error::Shape("segment needs at least one channel".into()));
        }
        if samples.ncols() < 2 {
            return Err(Error::Length {
                what: "segment",
                needed: 2,
                actual: samples.ncols(),
            });
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidParameter(format!("sampling rate {fs}")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("segment samples"));
        }
        Ok(Self { samples, fs, label })
    }

    /// Builds a segment from per-channel rows.
    pub fn from_rows(rows: &[Vec<f64>], fs: f64, label: Label) -> Result<Self> {
        let n = rows.len();
        let t = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != t) {
            return Err(Error::Shape("ragged channel rows".into()));
        }
        let samples = DMatrix::from_fn(n, t, |i, j| rows[i][j]);
        Self::new(samples, fs, label)
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.fs
    }

    pub fn channel(&self, i: usize) -> Vec<f64> {
        self.samples.row(i).iter().copied().collect()
    }

    /// Returns a copy with every channel replaced by `f(channel)`.
    pub fn map_channels<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, &[f64]) -> Result<Vec<f64>>,
    {
        let mut out = self.samples.clone();
        for i in 0..self.channels() {
            let row = self.channel(i);
            let y = f(i, &row)?;
            if y.len() != row.len() {
                return Err(Error::Shape("channel transform changed length".into()));
            }
            for (j, v) in y.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(Self {
            samples: out,
            fs: self.fs,
            label: self.label,
        })
    }
}
