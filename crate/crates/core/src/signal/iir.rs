//! Butterworth and notch design as cascaded second-order sections.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// One biquad section `b(z)/a(z)` with `a[0] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = self.b[0] + self.b[1] * z_inv + self.b[2] * z2;
        let den = self.a[0] + self.a[1] * z_inv + self.a[2] * z2;
        num / den
    }

    fn poles(&self) -> Vec<Complex64> {
        // z^2 + a1 z + a2 = 0, or a single pole when a2 == 0
        let (a1, a2) = (self.a[1], self.a[2]);
        if a2 == 0.0 {
            if a1 == 0.0 {
                return vec![];
            }
            return vec![Complex64::new(-a1, 0.0)];
        }
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        vec![(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }
}

/// Cascade of biquads; `order` is the nominal design order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
    pub order: usize,
}

impl Sos {
    /// Causal filtering from zero initial state (transposed direct form II).
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in y.iter_mut() {
                let input = *v;
                let out = s.b[0] * input + z1;
                z1 = s.b[1] * input - s.a[1] * out + z2;
                z2 = s.b[2] * input - s.a[2] * out;
                *v = out;
            }
        }
        y
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, fs: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / fs;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn gain(&self, freq_hz: f64, fs: f64) -> f64 {
        self.response(freq_hz, fs).norm()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(Biquad::poles).collect()
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.max_pole_radius() < 1.0
    }

    /// Samples needed for the slowest pole to decay by `factor`.
    pub fn decay_length(&self, factor: f64) -> usize {
        let r = self.max_pole_radius();
        if r <= 0.0 {
            return self.sections.len() * 2;
        }
        if r >= 1.0 {
            return usize::MAX;
        }
        (factor.ln() / r.ln()).ceil() as usize
    }

    fn scale(&mut self, k: f64) {
        if let Some(first) = self.sections.first_mut() {
            for b in first.b.iter_mut() {
                *b *= k;
            }
        }
    }
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 {
        return Err(Error::InvalidOrder(order));
    }
    Ok(())
}

fn prototype_poles(order: usize) -> Vec<Complex64> {
    (1..=order)
        .map(|k| {
            let theta = PI * (2 * k + order - 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

fn bilinear(s: Complex64, fs2: f64) -> Complex64 {
    (fs2 + s) / (fs2 - s)
}

fn prewarp(freq_hz: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * freq_hz / fs).tan()
}

/// Groups digital poles into conjugate pairs (complex) or real pairs.
fn pair_poles(poles: &[Complex64]) -> Vec<(Complex64, Option<Complex64>)> {
    const IMAG_TOL: f64 = 1e-12;
    let mut complex: Vec<Complex64> = poles
        .iter()
        .copied()
        .filter(|p| p.im > IMAG_TOL)
        .collect();
    let mut real: Vec<f64> = poles
        .iter()
        .filter(|p| p.im.abs() <= IMAG_TOL)
        .map(|p| p.re)
        .collect();
    complex.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    real.sort_by(f64::total_cmp);
    let mut out: Vec<(Complex64, Option<Complex64>)> =
        complex.into_iter().map(|p| (p, Some(p.conj()))).collect();
    let mut it = real.chunks(2);
    for chunk in &mut it {
        let p = Complex64::new(chunk[0], 0.0);
        let q = chunk.get(1).map(|&r| Complex64::new(r, 0.0));
        out.push((p, q));
    }
    out
}

fn denominator(p: Complex64, q: Option<Complex64>) -> [f64; 3] {
    match q {
        Some(q) => [1.0, -(p + q).re, (p * q).re],
        None => [1.0, -p.re, 0.0],
    }
}

/// Digital Butterworth band-pass via analog prototype, LP→BP transform and
/// pre-warped bilinear transform. Unity gain at the centre frequency.
pub fn butterworth_bandpass(low_hz: f64, high_hz: f64, order: usize, fs: f64) -> Result<Sos> {
    check_order(order)?;
    let nyquist = fs / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(Error::InvalidBand {
            low_hz,
            high_hz,
            nyquist_hz: nyquist,
        });
    }
    let fs2 = 2.0 * fs;
    let w1 = prewarp(low_hz, fs);
    let w2 = prewarp(high_hz, fs);
    let bw = w2 - w1;
    let w0 = (w1 * w2).sqrt();

    let mut analog = Vec::with_capacity(2 * order);
    for p in prototype_poles(order) {
        let half = p * (bw / 2.0);
        let root = (half * half - w0 * w0).sqrt();
        analog.push(half + root);
        analog.push(half - root);
    }
    let digital: Vec<Complex64> = analog.iter().map(|&s| bilinear(s, fs2)).collect();

    // every section gets one zero at z = 1 and one at z = -1
    let sections = pair_poles(&digital)
        .into_iter()
        .map(|(p, q)| Biquad {
            b: [1.0, 0.0, -1.0],
            a: denominator(p, q),
        })
        .collect();
    let mut sos = Sos { sections, order };
    let centre_hz = (w0 / fs2).atan() * fs / PI;
    let g = sos.gain(centre_hz, fs);
    sos.scale(1.0 / g);
    Ok(sos)
}

/// Digital Butterworth low-pass, unity DC gain.
pub fn butterworth_lowpass(cutoff_hz: f64, order: usize, fs: f64) -> Result<Sos> {
    check_order(order)?;
    let nyquist = fs / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(Error::InvalidBand {
            low_hz: 0.0,
            high_hz: cutoff_hz,
            nyquist_hz: nyquist,
        });
    }
    let fs2 = 2.0 * fs;
    let wc = prewarp(cutoff_hz, fs);
    let digital: Vec<Complex64> = prototype_poles(order)
        .into_iter()
        .map(|p| bilinear(p * wc, fs2))
        .collect();
    let sections = pair_poles(&digital)
        .into_iter()
        .map(|(p, q)| Biquad {
            b: if q.is_some() {
                [1.0, 2.0, 1.0]
            } else {
                [1.0, 1.0, 0.0]
            },
            a: denominator(p, q),
        })
        .collect();
    let mut sos = Sos { sections, order };
    let g = sos.gain(0.0, fs);
    sos.scale(1.0 / g);
    Ok(sos)
}

/// Second-order IIR notch at `f0_hz` with quality factor `q`
/// (-3 dB bandwidth `f0_hz / q`).
pub fn notch(f0_hz: f64, q: f64, fs: f64) -> Result<Sos> {
    let nyquist = fs / 2.0;
    if !(f0_hz > 0.0 && f0_hz < nyquist) {
        return Err(Error::InvalidBand {
            low_hz: f0_hz,
            high_hz: f0_hz,
            nyquist_hz: nyquist,
        });
    }
    if !(q > 0.0) {
        return Err(Error::InvalidParameter(format!("notch quality factor {q}")));
    }
    let w0 = 2.0 * PI * f0_hz / fs;
    let bw = w0 / q;
    let beta = (bw / 2.0).tan();
    let gain = 1.0 / (1.0 + beta);
    let c = w0.cos();
    Ok(Sos {
        sections: vec![Biquad {
            b: [gain, -2.0 * gain * c, gain],
            a: [1.0, -2.0 * gain * c, 2.0 * gain - 1.0],
        }],
        order: 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandpass_centre_gain_is_unity() {
        let sos = butterworth_bandpass(8.0, 13.0, 5, 200.0).unwrap();
        let centre = (8.0f64 * 13.0).sqrt();
        assert!((sos.gain(centre, 200.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn bandpass_cutoffs_are_minus_3db() {
        let sos = butterworth_bandpass(8.0, 13.0, 5, 200.0).unwrap();
        let half_power = std::f64::consts::FRAC_1_SQRT_2;
        for f in [8.0, 13.0] {
            let g = sos.gain(f, 200.0);
            assert!((g - half_power).abs() / half_power < 0.01, "f={f} gain={g}");
        }
    }

    #[test]
    fn bandpass_rejects_dc() {
        let sos = butterworth_bandpass(8.0, 13.0, 5, 200.0).unwrap();
        assert!(sos.gain(0.0, 200.0).powi(2) < 1e-6);
    }

    #[test]
    fn bandpass_sections_and_stability() {
        let sos = butterworth_bandpass(1.0, 3.0, 5, 200.0).unwrap();
        assert_eq!(sos.sections.len(), 5);
        assert_eq!(sos.poles().len(), 10);
        assert!(sos.is_stable());
    }

    #[test]
    fn invalid_bands_rejected() {
        assert!(matches!(
            butterworth_bandpass(0.0, 10.0, 5, 200.0),
            Err(Error::InvalidBand { .. })
        ));
        assert!(butterworth_bandpass(10.0, 8.0, 5, 200.0).is_err());
        assert!(butterworth_bandpass(10.0, 100.0, 5, 200.0).is_err());
        assert!(matches!(
            butterworth_bandpass(8.0, 13.0, 0, 200.0),
            Err(Error::InvalidOrder(0))
        ));
        assert!(notch(100.0, 30.0, 200.0).is_err());
    }

    #[test]
    fn lowpass_shape() {
        let sos = butterworth_lowpass(20.0, 5, 200.0).unwrap();
        assert!((sos.gain(0.0, 200.0) - 1.0).abs() < 1e-12);
        assert!((sos.gain(20.0, 200.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3);
        assert!(sos.gain(60.0, 200.0) < 1e-3);
        assert_eq!(sos.sections.len(), 3);
    }

    #[test]
    fn notch_response() {
        let sos = notch(50.0, 30.0, 200.0).unwrap();
        assert!(sos.gain(50.0, 200.0) < 1e-12);
        for f in [45.0, 55.0] {
            let db = 20.0 * sos.gain(f, 200.0).log10();
            assert!(db > -3.0, "{f} Hz: {db} dB");
        }
    }
}
