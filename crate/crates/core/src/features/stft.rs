use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// 1-second Hann windows with 50 % overlap.
#[derive(Clone)]
pub struct StftPlan {
    pub fs: f64,
    pub window_len: usize,
    pub hop: usize,
    /// Number of windows `L = floor(2T - 1)`.
    pub windows: usize,
    pub hann: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for StftPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StftPlan")
            .field("fs", &self.fs)
            .field("window_len", &self.window_len)
            .field("hop", &self.hop)
            .field("windows", &self.windows)
            .finish()
    }
}

impl StftPlan {
    /// Plan for a segment of `t_seconds` at `fs` Hz.
    pub fn new(t_seconds: f64, fs: f64) -> Result<Self> {
        let window_len = fs.round() as usize;
        if window_len < 2 {
            return Err(Error::InvalidParameter(format!("sampling rate {fs}")));
        }
        if !(t_seconds >= 1.0) {
            return Err(Error::Length {
                what: "STFT segment",
                needed: window_len,
                actual: (t_seconds.max(0.0) * fs).round() as usize,
            });
        }
        let windows = (2.0 * t_seconds - 1.0 + 1e-9).floor() as usize;
        let hop = window_len / 2;
        let hann = hann_periodic(window_len);
        let fft = FftPlanner::new().plan_fft_forward(window_len);
        Ok(Self {
            fs,
            window_len,
            hop,
            windows,
            hann,
            fft,
        })
    }

    /// Plan covering a segment of `samples` samples.
    pub fn for_samples(samples: usize, fs: f64) -> Result<Self> {
        Self::new(samples as f64 / fs, fs)
    }

    /// Samples required to hold every window.
    pub fn required_samples(&self) -> usize {
        self.hop * self.windows.saturating_sub(1) + self.window_len
    }

    /// Frequency spacing of the periodogram bins.
    pub fn bin_hz(&self) -> f64 {
        self.fs / self.window_len as f64
    }

    pub fn frame<'a>(&self, x: &'a [f64], index: usize) -> &'a [f64] {
        let start = index * self.hop;
        &x[start..start + self.window_len]
    }

    /// Hann-windowed one-sided PSD of one frame.
    pub fn periodogram(&self, frame: &[f64]) -> Vec<f64> {
        periodogram_with(&*self.fft, frame, &self.hann, self.fs)
    }
}

/// DFT-even Hann window.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided power spectral density of `frame` tapered by `window`.
///
/// Scaled by `1 / (fs · Σw²)` with interior bins doubled, so that
/// `Σ psd · fs/n` equals the window-energy-compensated mean power.
pub fn periodogram(frame: &[f64], window: &[f64], fs: f64) -> Vec<f64> {
    let fft = FftPlanner::new().plan_fft_forward(frame.len());
    periodogram_with(&*fft, frame, window, fs)
}

fn periodogram_with(fft: &dyn Fft<f64>, frame: &[f64], window: &[f64], fs: f64) -> Vec<f64> {
    assert_eq!(frame.len(), window.len(), "frame/window length mismatch");
    let n = frame.len();
    let mut buf: Vec<Complex64> = frame
        .iter()
        .zip(window)
        .map(|(&x, &w)| Complex64::new(x * w, 0.0))
        .collect();
    fft.process(&mut buf);
    let energy: f64 = window.iter().map(|w| w * w).sum();
    let scale = 1.0 / (fs * energy);
    (0..=n / 2)
        .map(|k| {
            let p = buf[k].norm_sqr() * scale;
            let nyquist_bin = n % 2 == 0 && k == n / 2;
            if k == 0 || nyquist_bin {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}
