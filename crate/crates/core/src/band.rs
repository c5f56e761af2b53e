//! Graph-frequency sub-bands and the cross-validated cut-off search.
//!
//! Band indices are 1-based positions in the ascending eigenvalue order and
//! ranges are inclusive, so `[1, 32]` keeps the 32 smoothest components.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, FeatureOptions};
use crate::signal::Label;
use crate::subspace::{self, DiagonalizeOptions, TrialMoments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BandMode {
    All,
    ThirdsLow,
    ThirdsMid,
    ThirdsHigh,
    FixedCutoff,
    SubjectSpecific,
}

/// A resolved, nonempty inclusive index interval within `[1, N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpectralBand {
    pub mode: BandMode,
    pub cutoff: Option<usize>,
    pub lo: usize,
    pub hi: usize,
}

impl SpectralBand {
    pub fn full(n: usize) -> SpectralBand {
        SpectralBand {
            mode: BandMode::All,
            cutoff: None,
            lo: 1,
            hi: n,
        }
    }

    pub fn len(&self) -> usize {
        self.hi + 1 - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn contains(&self, other: &SpectralBand) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

impl fmt::Display for SpectralBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.mode {
            BandMode::All => "all",
            BandMode::ThirdsLow => "lf",
            BandMode::ThirdsMid => "mf",
            BandMode::ThirdsHigh => "hf",
            BandMode::FixedCutoff => "fixed",
            BandMode::SubjectSpecific => "ss",
        };
        write!(f, "{name}[{}..{}]", self.lo, self.hi)
    }
}

/// Resolves a band mode on an `n`-vertex graph.
///
/// Thirds use ceilings: low `[1, ceil(n/3)]`, mid `(ceil(n/3), ceil(2n/3)]`,
/// high `(ceil(2n/3), n]`. Cut-off modes give `[1, cutoff]`.
pub fn resolve_band(mode: BandMode, cutoff: Option<usize>, n: usize) -> Result<SpectralBand> {
    let third = n.div_ceil(3);
    let two_thirds = (2 * n).div_ceil(3);
    let (lo, hi) = match mode {
        BandMode::All => (1, n),
        BandMode::ThirdsLow => (1, third),
        BandMode::ThirdsMid => (third + 1, two_thirds),
        BandMode::ThirdsHigh => (two_thirds + 1, n),
        BandMode::FixedCutoff | BandMode::SubjectSpecific => {
            let k = cutoff.ok_or(Error::BadCutoff { cutoff: 0, n })?;
            if k == 0 || k > n {
                return Err(Error::BadCutoff { cutoff: k, n });
            }
            (1, k)
        }
    };
    if n == 0 || lo > hi {
        return Err(Error::EmptyBand);
    }
    let cutoff = match mode {
        BandMode::FixedCutoff | BandMode::SubjectSpecific => cutoff,
        _ => None,
    };
    Ok(SpectralBand { mode, cutoff, lo, hi })
}

/// A band as requested by a user, before the graph size is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BandRequest {
    All,
    Low,
    Mid,
    High,
    Fixed(usize),
    SubjectSpecific,
}

impl FromStr for BandRequest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" | "af" => BandRequest::All,
            "lf" => BandRequest::Low,
            "mf" => BandRequest::Mid,
            "hf" => BandRequest::High,
            "ss" => BandRequest::SubjectSpecific,
            other => match other.strip_prefix("fixed:") {
                Some(k) => BandRequest::Fixed(k.parse().map_err(|_| {
                    Error::ConfigInvalid(format!("bad cut-off in band {other:?}"))
                })?),
                None => return Err(Error::ConfigInvalid(format!("unknown band {other:?}"))),
            },
        })
    }
}

impl fmt::Display for BandRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandRequest::All => f.write_str("all"),
            BandRequest::Low => f.write_str("lf"),
            BandRequest::Mid => f.write_str("mf"),
            BandRequest::High => f.write_str("hf"),
            BandRequest::Fixed(k) => write!(f, "fixed:{k}"),
            BandRequest::SubjectSpecific => f.write_str("ss"),
        }
    }
}

/// Mean cross-validated accuracy per scanned cut-off.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub accuracies: BTreeMap<usize, f64>,
    pub best_cutoff: usize,
    pub folds: usize,
    pub seed: u64,
}

impl CvReport {
    /// Builds a report, picking the highest accuracy with ties going to the smallest cut-off.
    pub fn from_accuracies(accuracies: BTreeMap<usize, f64>, folds: usize, seed: u64) -> Result<Self> {
        let mut best: Option<(usize, f64)> = None;
        for (&k, &acc) in &accuracies {
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((k, acc));
            }
        }
        let (best_cutoff, _) = best.ok_or(Error::EmptyBand)?;
        Ok(Self {
            accuracies,
            best_cutoff,
            folds,
            seed,
        })
    }

    /// `cutoff,mean_accuracy` rows with a header, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cutoff,mean_accuracy\n");
        for (k, acc) in &self.accuracies {
            out.push_str(&format!("{k},{acc:.6}\n"));
        }
        out
    }
}

/// The subject-specific band `[1, best_cutoff]`.
pub fn select_subject_specific(report: &CvReport) -> SpectralBand {
    SpectralBand {
        mode: BandMode::SubjectSpecific,
        cutoff: Some(report.best_cutoff),
        lo: 1,
        hi: report.best_cutoff,
    }
}

/// Deterministic stratified fold assignment.
///
/// Each class is shuffled by a ChaCha stream seeded from `seed` and dealt
/// round-robin; the second class continues where the first left off so fold
/// sizes stay balanced overall. Returns the fold index of each input.
pub fn assign_folds(labels: &[Label], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![usize::MAX; labels.len()];
    let mut dealt = 0usize;
    for class in [Label::Class1, Label::Class2] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for idx in members {
            out[idx] = dealt % folds;
            dealt += 1;
        }
    }
    out
}

/// Settings shared by every fit inside a cross-validation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub diagonalize: DiagonalizeOptions,
    pub features: FeatureOptions,
    pub margin_cost: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            diagonalize: DiagonalizeOptions::default(),
            features: FeatureOptions::default(),
            margin_cost: 1.0,
        }
    }
}

/// Accuracy on `test` of a model fit on `train`, all restricted to `band`.
fn fold_accuracy(
    train: &[&TrialMoments],
    test: &[&TrialMoments],
    band: &SpectralBand,
    opts: &FitOptions,
) -> Result<f64> {
    let cov = subspace::class_covariances_from_moments(train, band)?;
    let proj = subspace::band_projector(&cov, band, &opts.diagonalize)?;
    let featurize = |m: &TrialMoments| features::features_from_moments(m, &proj, band, &opts.features);
    let train_fv = train.iter().map(|m| featurize(m)).collect::<Result<Vec<_>>>()?;
    let scaler = features::Standardizer::fit_if(opts.features.standardize, &train_fv);
    let train_fv = scaler.apply_all(train_fv);
    let model = features::train_classifier(&train_fv, opts.margin_cost)?;
    let mut correct = 0usize;
    for m in test {
        let fv = scaler.apply(featurize(m)?);
        if features::predict(&model, &fv)? == m.label() {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Cross-validated accuracy for each cut-off in `cutoffs` (inclusive).
///
/// Covariances, projector and classifier are re-fit on the training portion of
/// every fold; the graph spectrum behind `trials` is shared across folds.
pub fn cv_scan(
    trials: &[TrialMoments],
    folds: usize,
    seed: u64,
    cutoffs: std::ops::RangeInclusive<usize>,
    opts: &FitOptions,
) -> Result<CvReport> {
    let labeled: Vec<&TrialMoments> = trials.iter().filter(|m| m.label().is_labeled()).collect();
    let count = |c: Label| labeled.iter().filter(|m| m.label() == c).count();
    if folds < 2
        || folds > labeled.len()
        || count(Label::Class1) < 2
        || count(Label::Class2) < 2
    {
        return Err(Error::TooFewTrials { folds });
    }
    let n = labeled[0].n_vertices();
    if cutoffs.is_empty() || *cutoffs.end() > n || *cutoffs.start() == 0 {
        return Err(Error::BadCutoff {
            cutoff: *cutoffs.end(),
            n,
        });
    }

    let labels: Vec<Label> = labeled.iter().map(|m| m.label()).collect();
    let assignment = assign_folds(&labels, folds, seed);
    let split = |f: usize| {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (m, &a) in labeled.iter().zip(&assignment) {
            if a == f {
                test.push(*m);
            } else {
                train.push(*m);
            }
        }
        (train, test)
    };
    let partitions: Vec<_> = (0..folds).map(split).collect();

    let results: Vec<(usize, f64)> = cutoffs
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| {
            let band = resolve_band(BandMode::FixedCutoff, Some(k), n)?;
            let mut sum = 0.0;
            for (f, (train, test)) in partitions.iter().enumerate() {
                sum += fold_accuracy(train, test, &band, opts).map_err(|e| Error::Fold {
                    cutoff: k,
                    fold: f,
                    source: Box::new(e),
                })?;
            }
            Ok((k, sum / folds as f64))
        })
        .collect::<Result<_>>()?;

    CvReport::from_accuracies(results.into_iter().collect(), folds, seed)
}
