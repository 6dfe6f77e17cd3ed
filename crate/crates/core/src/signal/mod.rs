//! Filtering, normalisation and filter-bank decomposition of raw EEG.

mod iir;

pub use iir::{butterworth_bandpass, butterworth_lowpass, notch, Biquad, Sos};

use crate::error::{Error, Result};
use crate::segment::EegSegment;

/// Default notch quality factor.
pub const NOTCH_Q: f64 = 30.0;

/// Relative amplitude the slowest pole must decay to inside the edge padding.
const PAD_DECAY: f64 = 1e-6;

/// One band of a filter bank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
}

impl BandSpec {
    pub fn new(low_hz: f64, high_hz: f64, order: usize) -> Self {
        Self {
            low_hz,
            high_hz,
            order,
        }
    }

    pub fn design(&self, fs: f64) -> Result<Sos> {
        butterworth_bandpass(self.low_hz, self.high_hz, self.order, fs)
    }
}

/// Ordered set of band-pass filters designed for one sampling rate.
#[derive(Debug, Clone)]
pub struct FilterBank {
    bands: Vec<BandSpec>,
    filters: Vec<Sos>,
    fs: f64,
}

impl FilterBank {
    pub fn new(mut bands: Vec<BandSpec>, fs: f64) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::Empty("filter bank"));
        }
        bands.sort_by(|a, b| a.low_hz.total_cmp(&b.low_hz));
        let filters = bands
            .iter()
            .map(|b| b.design(fs))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bands, filters, fs })
    }

    /// Contiguous bands of `width_hz` covering `[start_hz, end_hz]`.
    pub fn uniform(start_hz: f64, end_hz: f64, width_hz: f64, order: usize, fs: f64) -> Result<Self> {
        let count = ((end_hz - start_hz) / width_hz).round() as usize;
        let bands = (0..count)
            .map(|i| {
                let lo = start_hz + i as f64 * width_hz;
                BandSpec::new(lo, lo + width_hz, order)
            })
            .collect();
        Self::new(bands, fs)
    }

    pub fn bands(&self) -> &[BandSpec] {
        &self.bands
    }

    pub fn filters(&self) -> &[Sos] {
        &self.filters
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    /// One zero-phase band-limited copy of `segment` per band.
    pub fn decompose(&self, segment: &EegSegment) -> Result<Vec<EegSegment>> {
        if (segment.fs - self.fs).abs() > 1e-9 {
            return Err(Error::Shape(format!(
                "filter bank designed for {} Hz, segment is {} Hz",
                self.fs, segment.fs
            )));
        }
        self.filters
            .iter()
            .map(|f| apply_zero_phase(f, segment))
            .collect()
    }
}

/// Forward-backward filtering of a single channel with odd-reflection
/// padding at both ends.
///
/// The padding is at least `3 × order` samples and long enough for the
/// slowest pole to decay by 10⁻⁶, capped at `len − 1`.
pub fn filtfilt(sos: &Sos, x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    let min_len = 3 * sos.order;
    if n <= min_len {
        return Err(Error::Length {
            what: "zero-phase filter input",
            needed: min_len + 1,
            actual: n,
        });
    }
    let pad = min_len.max(sos.decay_length(PAD_DECAY)).min(n - 1);

    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|k| 2.0 * x[0] - x[k]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|k| 2.0 * x[n - 1] - x[n - 1 - k]));

    let mut y = sos.filter(&ext);
    y.reverse();
    let mut y = sos.filter(&y);
    y.reverse();
    Ok(y[pad..pad + n].to_vec())
}

pub fn apply_zero_phase(sos: &Sos, segment: &EegSegment) -> Result<EegSegment> {
    segment.map_channels(|_, ch| filtfilt(sos, ch))
}

/// Zero-phase 50 Hz (or `f0_hz`) notch with Q = 30.
pub fn notch_filter(segment: &EegSegment, f0_hz: f64) -> Result<EegSegment> {
    let sos = notch(f0_hz, NOTCH_Q, segment.fs)?;
    apply_zero_phase(&sos, segment)
}

/// Zero-phase Butterworth band-pass over a whole recording.
pub fn bandpass_filter(segment: &EegSegment, band: BandSpec) -> Result<EegSegment> {
    apply_zero_phase(&band.design(segment.fs)?, segment)
}

/// How [`minmax_normalize`] treats a channel whose max equals its min.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstantChannel {
    #[default]
    Error,
    MapToZero,
}

/// Rescales every channel affinely onto `[-1, 1]`.
pub fn minmax_normalize(segment: &EegSegment, constant: ConstantChannel) -> Result<EegSegment> {
    segment.map_channels(|i, ch| {
        let (lo, hi) = ch
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi <= lo {
            return match constant {
                ConstantChannel::Error => Err(Error::DegenerateChannel { channel: i }),
                ConstantChannel::MapToZero => Ok(vec![0.0; ch.len()]),
            };
        }
        let span = hi - lo;
        Ok(ch
            .iter()
            .map(|&v| {
                if v == lo {
                    -1.0
                } else if v == hi {
                    1.0
                } else {
                    2.0 * (v - lo) / span - 1.0
                }
            })
            .collect())
    })
}

/// Integer-factor decimation with a zero-phase anti-aliasing low-pass at
/// 0.8 × the new Nyquist frequency.
pub fn decimate(segment: &EegSegment, factor: usize) -> Result<EegSegment> {
    if factor == 0 {
        return Err(Error::InvalidParameter("decimation factor 0".into()));
    }
    if factor == 1 {
        return Ok(segment.clone());
    }
    let new_fs = segment.fs / factor as f64;
    let lp = butterworth_lowpass(0.8 * new_fs / 2.0, 5, segment.fs)?;
    let filtered = apply_zero_phase(&lp, segment)?;
    let t_out = segment.len() / factor;
    let samples = nalgebra::DMatrix::from_fn(segment.channels(), t_out, |i, j| {
        filtered.samples[(i, j * factor)]
    });
    EegSegment::new(samples, new_fs, segment.label)
}
