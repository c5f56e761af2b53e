//! Butterworth band-pass design (bilinear transform, pre-warped edges) and
//! second-order-section filtering.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use super::{Recording, TrialMatrix};
use crate::error::{Error, Result};

/// Pass band and per-edge order of a Butterworth band-pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPassSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
}

impl Default for BandPassSpec {
    fn default() -> Self {
        Self {
            low_hz: 8.0,
            high_hz: 30.0,
            order: 3,
        }
    }
}

/// Causal single pass, or forward-backward for zero phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FilterMode {
    #[default]
    Causal,
    ZeroPhase,
}

/// One section `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex<f64>) -> Complex<f64> {
        let z2 = z_inv * z_inv;
        let num = z_inv * self.b[1] + z2 * self.b[2] + self.b[0];
        let den = z_inv * self.a[0] + z2 * self.a[1] + 1.0;
        num / den
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoefficients {
    sections: Vec<Biquad>,
    sample_rate_hz: f64,
}

impl FilterCoefficients {
    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex<f64> {
        let w = 2.0 * PI * freq_hz / self.sample_rate_hz;
        let z_inv = Complex::new(w.cos(), -w.sin());
        self.sections
            .iter()
            .fold(Complex::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm().log10()
    }

    /// Runs the cascade over `x` with zero initial conditions (transposed direct form II).
    pub fn apply(&self, x: &mut [f64]) {
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b[0] * input + z1;
                z1 = s.b[1] * input - s.a[0] * y + z2;
                z2 = s.b[2] * input - s.a[1] * y;
                *v = y;
            }
        }
    }

    fn apply_mode(&self, x: &mut [f64], mode: FilterMode) {
        self.apply(x);
        if mode == FilterMode::ZeroPhase {
            x.reverse();
            self.apply(x);
            x.reverse();
        }
    }
}

/// Designs a digital Butterworth band-pass of `2 * order` poles.
///
/// The analog low-pass prototype is mapped to a band-pass around the pre-warped
/// edges, then through the bilinear transform; gain is unity at the band center.
pub fn design_bandpass(spec: &BandPassSpec, sample_rate_hz: f64) -> Result<FilterCoefficients> {
    let nyquist = sample_rate_hz / 2.0;
    if !(sample_rate_hz > 0.0)
        || !(spec.low_hz > 0.0)
        || !(spec.low_hz < spec.high_hz)
        || !(spec.high_hz < nyquist)
    {
        return Err(Error::InvalidBand(format!(
            "need 0 < {} < {} < {nyquist}",
            spec.low_hz, spec.high_hz
        )));
    }
    if spec.order == 0 {
        return Err(Error::InvalidBand("order must be at least 1".into()));
    }

    let n = spec.order;
    let k = 2.0 * sample_rate_hz;
    let w_lo = k * (PI * spec.low_hz / sample_rate_hz).tan();
    let w_hi = k * (PI * spec.high_hz / sample_rate_hz).tan();
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;

    let mut poles = Vec::with_capacity(2 * n);
    for i in 1..=n {
        let theta = PI * (2 * i + n - 1) as f64 / (2 * n) as f64;
        let p = Complex::from_polar(1.0, theta) * bw;
        let disc = (p * p - 4.0 * w0_sq).sqrt();
        for s in [(p + disc) / 2.0, (p - disc) / 2.0] {
            poles.push((k + s) / (k - s));
        }
    }

    let scale = poles.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let is_real = |z: &Complex<f64>| z.im.abs() <= 1e-12 * scale;
    let mut real: Vec<f64> = poles.iter().filter(|z| is_real(z)).map(|z| z.re).collect();
    real.sort_by(f64::total_cmp);
    let mut complex: Vec<Complex<f64>> = poles
        .iter()
        .filter(|z| !is_real(z) && z.im > 0.0)
        .copied()
        .collect();
    complex.sort_by(|a, b| a.arg().total_cmp(&b.arg()));

    let mut sections: Vec<Biquad> = complex
        .iter()
        .map(|z| Biquad {
            b: [1.0, 0.0, -1.0],
            a: [-2.0 * z.re, z.norm_sqr()],
        })
        .collect();
    for pair in real.chunks(2) {
        let (p1, p2) = (pair[0], pair.get(1).copied().unwrap_or(0.0));
        sections.push(Biquad {
            b: [1.0, 0.0, -1.0],
            a: [-(p1 + p2), p1 * p2],
        });
    }
    debug_assert_eq!(sections.len(), n);

    let mut coeffs = FilterCoefficients {
        sections,
        sample_rate_hz,
    };
    let center_hz = sample_rate_hz / PI * (w0_sq.sqrt() / k).atan();
    let gain = coeffs.response(center_hz).norm();
    let per_section = gain.powf(-1.0 / n as f64);
    for s in &mut coeffs.sections {
        for b in &mut s.b {
            *b *= per_section;
        }
    }
    Ok(coeffs)
}

fn filter_rows(data: &mut DMatrix<f64>, coeffs: &FilterCoefficients, mode: FilterMode) -> Result<()> {
    let mut buf = vec![0.0; data.ncols()];
    for c in 0..data.nrows() {
        for (b, v) in buf.iter_mut().zip(data.row(c).iter()) {
            *b = *v;
        }
        coeffs.apply_mode(&mut buf, mode);
        if buf.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteOutput(c));
        }
        for (t, v) in buf.iter().enumerate() {
            data[(c, t)] = *v;
        }
    }
    Ok(())
}

/// Filters every channel of a continuous recording independently; markers are untouched.
pub fn filter_recording(rec: &Recording, coeffs: &FilterCoefficients, mode: FilterMode) -> Result<Recording> {
    let mut out = rec.clone();
    filter_rows(&mut out.samples, coeffs, mode)?;
    Ok(out)
}

/// Filters one epoch in isolation (each trial restarts from zero state).
pub fn filter_trial(trial: TrialMatrix, coeffs: &FilterCoefficients, mode: FilterMode) -> Result<TrialMatrix> {
    trial.map_data(|mut d| {
        filter_rows(&mut d, coeffs, mode)?;
        Ok(d)
    })
}
