use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::signal::{format, Label, Marker, Recording, Split};

/// Shape of a synthetic two-class recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_channels: usize,
    pub n_trials_per_class: usize,
    /// Variance of the class-specific source relative to the unit background.
    pub separation: f64,
    /// Share of each class marked `train`.
    pub train_fraction: f64,
    pub sample_rate_hz: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_channels: 16,
            n_trials_per_class: 100,
            separation: 1.0,
            train_fraction: 0.5,
            sample_rate_hz: 100,
        }
    }
}

const LEAD_S: f64 = 1.0;
const TRIAL_S: f64 = 4.0;
const ACTIVE_S: f64 = 3.0;

/// Channels on a ring with a Gaussian spatial kernel, so neighbours correlate and
/// the class sources (one slow spatial cosine per class) sit in the smooth part of the graph spectrum.
fn mixing(n: usize) -> DMatrix<f64> {
    let width = (n as f64 / 8.0).max(1.0);
    DMatrix::from_fn(n, n, |i, j| {
        let d = (i as f64 - j as f64).abs();
        let d = d.min(n as f64 - d);
        (-d * d / (2.0 * width * width)).exp()
    })
}

fn class_pattern(n: usize, phase: f64) -> DVector<f64> {
    let v = DVector::from_fn(n, |i, _| (2.0 * std::f64::consts::PI * i as f64 / n as f64 + phase).cos());
    let norm = v.norm();
    v / norm * (n as f64).sqrt()
}

/// Writes `<name>.meta`, `<name>.f32` and `<name>.markers.csv` under `dir` and returns the
/// recording as stored (after the cast to f32). Output bytes depend only on `spec` and `seed`.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64, dir: &Path, name: &str) -> Result<Recording> {
    if !(spec.separation >= 0.0) || !spec.separation.is_finite() {
        return Err(Error::ConfigInvalid(format!("separation {} must be >= 0", spec.separation)));
    }
    if spec.n_channels < 3 || spec.n_trials_per_class < 2 {
        return Err(Error::ConfigInvalid("need at least 3 channels and 2 trials per class".into()));
    }
    if !(0.0..=1.0).contains(&spec.train_fraction) {
        return Err(Error::ConfigInvalid(format!("train fraction {}", spec.train_fraction)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n_channels;
    let k = spec.n_trials_per_class;
    let fs = spec.sample_rate_hz as f64;
    let lead = (LEAD_S * fs).round() as usize;
    let block = (TRIAL_S * fs).round() as usize;
    let active = (ACTIVE_S * fs).round() as usize;
    let total = lead + 2 * k * block + lead;

    let mut labels: Vec<Label> = (0..k).map(|_| Label::Class1).chain((0..k).map(|_| Label::Class2)).collect();
    labels.shuffle(&mut rng);
    let n_train = (spec.train_fraction * k as f64).round() as usize;
    let mut split_order = || {
        let mut s: Vec<Split> = (0..k).map(|i| if i < n_train { Split::Train } else { Split::Test }).collect();
        s.shuffle(&mut rng);
        s
    };
    let splits = [split_order(), split_order()];

    let m = mixing(n);
    let mut samples = DMatrix::zeros(n, total);
    let mut src = DVector::zeros(n);
    for t in 0..total {
        src.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let mut col = &m * &src;
        col.iter_mut().for_each(|v| *v += 0.5 * rng.sample::<f64, _>(StandardNormal));
        samples.set_column(t, &col);
    }

    let amp = spec.separation.sqrt();
    let patterns = [class_pattern(n, 0.0), class_pattern(n, std::f64::consts::FRAC_PI_2)];
    let mut markers = Vec::with_capacity(2 * k);
    let mut seen = [0usize; 2];
    for (i, &label) in labels.iter().enumerate() {
        let c = (label.code() - 1) as usize;
        let cue = lead + i * block;
        for t in cue..cue + active {
            let g: f64 = rng.sample(StandardNormal);
            let mut col = samples.column_mut(t);
            col.axpy(amp * g, &patterns[c], 1.0);
        }
        let split = splits[c][seen[c]];
        seen[c] += 1;
        markers.push(Marker { cue_sample: cue, label, split });
    }

    let samples = samples.map(|v| v as f32 as f64);
    let rec = Recording::new(spec.sample_rate_hz, samples, markers)?;
    format::write_recording(dir, name, &rec)?;
    Ok(rec)
}
