//! Per-window spectral features: log band power and differential entropy.

mod stft;

pub use stft::{hann_periodic, periodogram, StftPlan};

use std::f64::consts::{E, PI};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::segment::EegSegment;
use crate::signal::BandSpec;

/// Power floor applied before taking logarithms.
pub const POWER_FLOOR: f64 = 1e-10;

/// Bins of margin around a band when integrating the Hann periodogram
/// (half-width of the Hann main lobe).
const BAND_MARGIN_BINS: f64 = 2.0;

/// `½·ln(2πe)`: differential entropy of a unit-variance Gaussian.
pub fn unit_gaussian_entropy() -> f64 {
    0.5 * (2.0 * PI * E).ln()
}

/// Source of the per-window variance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceEstimator {
    /// In-band power integrated from the Hann periodogram.
    #[default]
    Periodogram,
    /// Sample variance of the raw window.
    TimeDomain,
}

/// Differential entropy of a Gaussian with the given variance.
pub fn differential_entropy(variance: f64) -> f64 {
    0.5 * (2.0 * PI * E * variance.max(POWER_FLOOR)).ln()
}

pub fn log_power(power: f64) -> f64 {
    power.max(POWER_FLOOR).ln()
}

/// In-band power of one PSD estimate.
pub fn integrate_band(psd: &[f64], bin_hz: f64, band: &BandSpec) -> f64 {
    let lo = band.low_hz - BAND_MARGIN_BINS * bin_hz;
    let hi = band.high_hz + BAND_MARGIN_BINS * bin_hz;
    psd.iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = *k as f64 * bin_hz;
            f >= lo && f <= hi
        })
        .map(|(_, p)| p * bin_hz)
        .sum()
}

fn check_plan(segment: &EegSegment, plan: &StftPlan) -> Result<()> {
    if (segment.fs - plan.fs).abs() > 1e-9 {
        return Err(Error::Shape(format!(
            "plan for {} Hz applied to {} Hz segment",
            plan.fs, segment.fs
        )));
    }
    if segment.len() < plan.required_samples() {
        return Err(Error::Length {
            what: "STFT segment",
            needed: plan.required_samples(),
            actual: segment.len(),
        });
    }
    Ok(())
}

/// Per-window, per-channel variance estimates (`L × N`) of a band-limited segment.
pub fn band_power(
    segment: &EegSegment,
    band: &BandSpec,
    plan: &StftPlan,
    estimator: VarianceEstimator,
) -> Result<DMatrix<f64>> {
    check_plan(segment, plan)?;
    let mut out = DMatrix::zeros(plan.windows, segment.channels());
    for ch in 0..segment.channels() {
        let x = segment.channel(ch);
        for w in 0..plan.windows {
            let frame = plan.frame(&x, w);
            out[(w, ch)] = match estimator {
                VarianceEstimator::Periodogram => {
                    integrate_band(&plan.periodogram(frame), plan.bin_hz(), band)
                }
                VarianceEstimator::TimeDomain => sample_variance(frame),
            };
        }
    }
    Ok(out)
}

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Natural log of the in-band power, `L × N`.
pub fn log_psd_feature(
    segment: &EegSegment,
    band: &BandSpec,
    plan: &StftPlan,
) -> Result<DMatrix<f64>> {
    Ok(band_power(segment, band, plan, VarianceEstimator::Periodogram)?.map(log_power))
}

/// Differential entropy `½·ln(2πe·σ̂²)`, `L × N`.
pub fn de_feature(
    segment: &EegSegment,
    band: &BandSpec,
    plan: &StftPlan,
    estimator: VarianceEstimator,
) -> Result<DMatrix<f64>> {
    Ok(band_power(segment, band, plan, estimator)?.map(differential_entropy))
}

/// `L × F` matrix of per-window features, `F = 2·H·N`.
///
/// Column layout: DE for band 1 channels 1..N, band 2 channels 1..N, … band H,
/// then log-PSD in the same band-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub values: DMatrix<f64>,
    pub bands: usize,
    pub channels: usize,
}

impl FeatureSequence {
    pub fn windows(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn de_column(&self, band: usize, channel: usize) -> usize {
        band * self.channels + channel
    }

    pub fn log_psd_column(&self, band: usize, channel: usize) -> usize {
        (self.bands + band) * self.channels + channel
    }
}

/// Assembles DE and log-PSD features for every band of a decomposed segment.
pub fn build_feature_sequence(
    band_segments: &[EegSegment],
    bands: &[BandSpec],
    plan: &StftPlan,
    estimator: VarianceEstimator,
) -> Result<FeatureSequence> {
    if band_segments.len() != bands.len() {
        return Err(Error::Shape(format!(
            "{} band segments for {} bands",
            band_segments.len(),
            bands.len()
        )));
    }
    if bands.is_empty() {
        return Err(Error::Empty("feature sequence"));
    }
    let channels = band_segments[0].channels();
    if band_segments.iter().any(|s| s.channels() != channels) {
        return Err(Error::Shape("band segments disagree on channel count".into()));
    }
    let h = bands.len();
    let mut values = DMatrix::zeros(plan.windows, 2 * h * channels);
    for (b, (seg, band)) in band_segments.iter().zip(bands).enumerate() {
        let power = band_power(seg, band, plan, VarianceEstimator::Periodogram)?;
        let variance = match estimator {
            VarianceEstimator::Periodogram => power.clone(),
            VarianceEstimator::TimeDomain => band_power(seg, band, plan, estimator)?,
        };
        for w in 0..plan.windows {
            for c in 0..channels {
                values[(w, b * channels + c)] = differential_entropy(variance[(w, c)]);
                values[(w, (h + b) * channels + c)] = log_power(power[(w, c)]);
            }
        }
    }
    Ok(FeatureSequence {
        values,
        bands: h,
        channels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::Label;

    #[test]
    fn closed_forms() {
        assert!((unit_gaussian_entropy() - 1.41894).abs() < 1e-5);
        assert!((differential_entropy(1.0) - 1.418_938_533_204_672_7).abs() < 1e-12);
        assert!((differential_entropy(2.0) - 1.76551).abs() < 1e-5);
        assert_eq!(log_power(1.0), 0.0);
        assert!((log_power(E) - 1.0).abs() < 1e-15);
        assert!((log_power(0.0) - (-23.025_850_929_940_457)).abs() < 1e-12);
    }

    #[test]
    fn zero_signal_hits_floor() {
        let seg = EegSegment::new(DMatrix::zeros(2, 400), 100.0, Label::None).unwrap();
        let plan = StftPlan::for_samples(400, 100.0).unwrap();
        let band = BandSpec::new(8.0, 13.0, 5);
        let lp = log_psd_feature(&seg, &band, &plan).unwrap();
        assert_eq!(lp.shape(), (7, 2));
        assert!(lp.iter().all(|&v| (v - POWER_FLOOR.ln()).abs() < 1e-12));
        let de = de_feature(&seg, &band, &plan, VarianceEstimator::TimeDomain).unwrap();
        assert!(de.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn sequence_layout_and_width() {
        let seg = EegSegment::new(DMatrix::from_fn(1, 200, |_, j| (j as f64 * 0.3).sin()), 100.0, Label::None).unwrap();
        let plan = StftPlan::for_samples(200, 100.0).unwrap();
        let band = BandSpec::new(4.0, 8.0, 5);
        let fs = build_feature_sequence(&[seg.clone()], &[band], &plan, VarianceEstimator::Periodogram).unwrap();
        assert_eq!(fs.width(), 2);
        assert_eq!(fs.windows(), 3);
        assert_eq!(fs.de_column(0, 0), 0);
        assert_eq!(fs.log_psd_column(0, 0), 1);

        let err = build_feature_sequence(&[seg], &[band, band], &plan, VarianceEstimator::Periodogram);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn plan_rate_mismatch() {
        let seg = EegSegment::new(DMatrix::zeros(1, 400), 100.0, Label::None).unwrap();
        let plan = StftPlan::new(4.0, 200.0).unwrap();
        assert!(band_power(&seg, &BandSpec::new(8.0, 13.0, 5), &plan, VarianceEstimator::Periodogram).is_err());
    }
}
