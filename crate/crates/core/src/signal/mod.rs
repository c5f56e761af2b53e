//! Continuous recordings, cue markers, and cue-locked trial epochs.

mod filter;
pub mod format;

pub use filter::{
    design_bandpass, filter_recording, filter_trial, BandPassSpec, Biquad, FilterCoefficients,
    FilterMode,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class label of a trial. `Unlabeled` covers test trials with no published truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Class1,
    Class2,
    Unlabeled,
}

impl Label {
    /// Numeric code used on disk: 1, 2, or 0 for unlabeled.
    pub fn code(self) -> u8 {
        match self {
            Label::Class1 => 1,
            Label::Class2 => 2,
            Label::Unlabeled => 0,
        }
    }

    pub fn from_code(code: u8) -> Option<Label> {
        match code {
            1 => Some(Label::Class1),
            2 => Some(Label::Class2),
            0 => Some(Label::Unlabeled),
            _ => None,
        }
    }

    pub fn is_labeled(self) -> bool {
        self != Label::Unlabeled
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Marker {
    pub cue_sample: usize,
    pub label: Label,
    pub split: Split,
}

/// A continuous multichannel recording, channels along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub sample_rate_hz: u32,
    pub samples: DMatrix<f64>,
    pub markers: Vec<Marker>,
}

impl Recording {
    pub fn new(sample_rate_hz: u32, samples: DMatrix<f64>, markers: Vec<Marker>) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::ConfigInvalid("sample rate must be positive".into()));
        }
        for (k, m) in markers.iter().enumerate() {
            if m.split == Split::Train && !m.label.is_labeled() {
                return Err(Error::ConfigInvalid(format!(
                    "training marker {k} has no class label"
                )));
            }
        }
        Ok(Self {
            sample_rate_hz,
            samples,
            markers,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }
}

/// One trial: an `N x T` block of channels by time, plus its label and origin.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMatrix {
    data: DMatrix<f64>,
    label: Label,
    trial_id: usize,
    split: Split,
}

impl TrialMatrix {
    /// A training-split trial. Entries must be finite.
    pub fn new(data: DMatrix<f64>, label: Label, trial_id: usize) -> Result<Self> {
        Self::with_split(data, label, trial_id, Split::Train)
    }

    pub fn with_split(data: DMatrix<f64>, label: Label, trial_id: usize, split: Split) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "trial {trial_id} contains non-finite samples"
            )));
        }
        Ok(Self {
            data,
            label,
            trial_id,
            split,
        })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn trial_id(&self) -> usize {
        self.trial_id
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    /// Same trial with every sample multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> TrialMatrix {
        TrialMatrix {
            data: &self.data * factor,
            ..self.clone()
        }
    }

    pub(crate) fn map_data(self, f: impl FnOnce(DMatrix<f64>) -> Result<DMatrix<f64>>) -> Result<Self> {
        let data = f(self.data)?;
        Ok(Self { data, ..self })
    }
}

/// Sample offset `round(seconds * fs)`, rounding halves away from zero.
fn to_samples(seconds: f64, fs: u32) -> i64 {
    (seconds * fs as f64).round() as i64
}

/// Cuts one trial per marker over `[cue + offset, cue + offset + length)`.
pub fn epoch_trials(rec: &Recording, offset_s: f64, length_s: f64) -> Result<Vec<TrialMatrix>> {
    if !(offset_s >= 0.0) || !(length_s > 0.0) {
        return Err(Error::ConfigInvalid(format!(
            "epoch window offset {offset_s} s, length {length_s} s"
        )));
    }
    let start_off = to_samples(offset_s, rec.sample_rate_hz);
    let end_off = to_samples(offset_s + length_s, rec.sample_rate_hz);
    if end_off <= start_off {
        return Err(Error::ConfigInvalid("epoch window shorter than one sample".into()));
    }

    rec.markers
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let start = m.cue_sample as i64 + start_off;
            let end = m.cue_sample as i64 + end_off;
            if end > rec.n_samples() as i64 {
                return Err(Error::EpochOutOfBounds(k));
            }
            let (start, len) = (start as usize, (end - start) as usize);
            let data = rec.samples.columns(start, len).into_owned();
            TrialMatrix::with_split(data, m.label, k, m.split)
        })
        .collect()
}
