//! End-to-end experiments: load, filter, epoch, build the subject graph, fit on
//! the training split, and score the test split.

mod synth;
mod table;

pub use synth::{generate_synthetic, SynthSpec};
pub use table::{run_table, sample_std, TableCell, TableResult};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::band::{cv_scan, resolve_band, select_subject_specific, BandMode, BandRequest, CvReport, FitOptions, SpectralBand};
use crate::error::{Error, Result};
use crate::features::{self, FeatureOptions, LinearModel, Standardizer};
use crate::graph::{build_graph, spectrum, ConnectivityGraph, GraphSpectrum};
use crate::signal::{
    design_bandpass, epoch_trials, filter_recording, filter_trial, format, BandPassSpec, FilterMode, Label,
    Split, TrialMatrix,
};
use crate::subspace::{
    band_projector, class_covariances, normalize_trial, truncate_band, DiagonalizeOptions, DiscriminativeProjector,
    SpectralTrial, TrialMoments,
};

/// Whether the band-pass runs over the continuous recording or each epoch separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FilterScope {
    #[default]
    Recording,
    Epoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data_dir: PathBuf,
    pub subject: String,
    pub band: BandRequest,
    pub rows_per_end: usize,
    pub margin_cost: f64,
    pub folds: usize,
    pub seed: u64,
    pub filter: BandPassSpec,
    pub filter_mode: FilterMode,
    pub filter_scope: FilterScope,
    pub epoch_offset_s: f64,
    pub epoch_length_s: f64,
    pub log_features: bool,
    pub standardize: bool,
    pub rank_tol: f64,
    pub allow_rank_reduction: bool,
}

impl ExperimentConfig {
    pub fn new(data_dir: impl Into<PathBuf>, subject: impl Into<String>) -> Self {
        Self {
            data_dir: data_dir.into(),
            subject: subject.into(),
            band: BandRequest::Fixed(32),
            rows_per_end: 1,
            margin_cost: 1.0,
            folds: 10,
            seed: 42,
            filter: BandPassSpec::default(),
            filter_mode: FilterMode::Causal,
            filter_scope: FilterScope::Recording,
            epoch_offset_s: 0.5,
            epoch_length_s: 2.0,
            log_features: false,
            standardize: false,
            rank_tol: 1e-10,
            allow_rank_reduction: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.subject.is_empty() {
            return bad("subject name is empty".into());
        }
        if self.rows_per_end == 0 {
            return bad("rows_per_end must be at least 1".into());
        }
        if !(self.margin_cost > 0.0) || !self.margin_cost.is_finite() {
            return bad(format!("margin cost {} must be positive", self.margin_cost));
        }
        if self.folds < 2 {
            return bad(format!("folds {} must be at least 2", self.folds));
        }
        if !(self.rank_tol >= 0.0) {
            return bad(format!("rank_tol {}", self.rank_tol));
        }
        if !(self.epoch_offset_s >= 0.0) || !(self.epoch_length_s > 0.0) {
            return bad("epoch window must have offset >= 0 and positive length".into());
        }
        Ok(())
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            diagonalize: DiagonalizeOptions {
                rank_tol: self.rank_tol,
                allow_rank_reduction: self.allow_rank_reduction,
            },
            features: FeatureOptions {
                rows_per_end: self.rows_per_end,
                log_features: self.log_features,
                standardize: self.standardize,
            },
            margin_cost: self.margin_cost,
        }
    }

    /// SHA-256 over the canonical JSON encoding of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// A subject's trials after filtering and epoching, plus the graph built from its training split.
#[derive(Debug, Clone)]
pub struct PreparedSubject {
    pub subject: String,
    pub graph: ConnectivityGraph,
    pub spectrum: GraphSpectrum,
    pub train: Vec<SpectralTrial>,
    pub test: Vec<SpectralTrial>,
}

/// Loads the recording, band-passes it, and cuts trials.
pub fn load_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialMatrix>> {
    let rec = format::read_recording(&cfg.data_dir, &cfg.subject).map_err(|e| e.in_stage("load"))?;
    let coeffs = design_bandpass(&cfg.filter, rec.sample_rate_hz as f64).map_err(|e| e.in_stage("filter"))?;
    match cfg.filter_scope {
        FilterScope::Recording => {
            let rec = filter_recording(&rec, &coeffs, cfg.filter_mode).map_err(|e| e.in_stage("filter"))?;
            epoch_trials(&rec, cfg.epoch_offset_s, cfg.epoch_length_s).map_err(|e| e.in_stage("epoch"))
        }
        FilterScope::Epoch => epoch_trials(&rec, cfg.epoch_offset_s, cfg.epoch_length_s)
            .map_err(|e| e.in_stage("epoch"))?
            .into_iter()
            .map(|t| filter_trial(t, &coeffs, cfg.filter_mode))
            .collect::<Result<_>>()
            .map_err(|e| e.in_stage("filter")),
    }
}

/// Builds the graph from the training trials only and moves every trial to the spectral domain.
pub fn prepare_trials(subject: &str, trials: &[TrialMatrix]) -> Result<PreparedSubject> {
    let train: Vec<TrialMatrix> = trials.iter().filter(|t| t.split() == Split::Train).cloned().collect();
    let graph = build_graph(&train).map_err(|e| e.in_stage("graph"))?;
    prepare_with_graph(subject, graph, trials)
}

/// Like [`prepare_trials`] but with a graph supplied by the caller.
pub fn prepare_with_graph(subject: &str, graph: ConnectivityGraph, trials: &[TrialMatrix]) -> Result<PreparedSubject> {
    let spectrum = spectrum(&graph).map_err(|e| e.in_stage("spectrum"))?;
    let normalize = |split: Split| {
        trials
            .iter()
            .filter(|t| t.split() == split)
            .map(|t| normalize_trial(t, &spectrum))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("normalize"))
    };
    let train = normalize(Split::Train)?;
    let test = normalize(Split::Test)?;
    Ok(PreparedSubject {
        subject: subject.to_string(),
        graph,
        spectrum,
        train,
        test,
    })
}

pub fn prepare_subject(cfg: &ExperimentConfig) -> Result<PreparedSubject> {
    let trials = load_trials(cfg)?;
    prepare_trials(&cfg.subject, &trials)
}

/// Everything learned from a training split for one band.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub band: SpectralBand,
    pub projector: DiscriminativeProjector,
    pub standardizer: Standardizer,
    pub classifier: LinearModel,
    pub features: FeatureOptions,
}

impl FittedModel {
    pub fn predict(&self, st: &SpectralTrial) -> Result<Label> {
        let cut = truncate_band(st, &self.band)?;
        let fv = features::extract_features(&cut, &self.projector, &self.features)?;
        features::predict(&self.classifier, &self.standardizer.apply(fv))
    }

    /// Projector rows with `theta1`, then the classifier, as text.
    pub fn export(&self) -> String {
        let mut out = format!("band,{},{}\n", self.band.lo, self.band.hi);
        out.push_str(&self.projector.to_csv());
        out.push_str(&self.classifier.to_text());
        out
    }
}

/// Fits projector and classifier on the labeled trials of `train`, restricted to `band`.
pub fn fit(train: &[SpectralTrial], band: &SpectralBand, opts: &FitOptions) -> Result<FittedModel> {
    let cut: Vec<SpectralTrial> = train
        .iter()
        .filter(|t| t.label().is_labeled())
        .map(|t| truncate_band(t, band))
        .collect::<Result<_>>()?;
    let cov = class_covariances(&cut).map_err(|e| e.in_stage("covariance"))?;
    let projector = band_projector(&cov, band, &opts.diagonalize).map_err(|e| e.in_stage("projector"))?;
    let fvs = cut
        .iter()
        .map(|t| features::extract_features(t, &projector, &opts.features))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("features"))?;
    let standardizer = Standardizer::fit_if(opts.features.standardize, &fvs);
    let fvs = standardizer.apply_all(fvs);
    let classifier = features::train_classifier(&fvs, opts.margin_cost).map_err(|e| e.in_stage("classifier"))?;
    Ok(FittedModel {
        band: *band,
        projector,
        standardizer,
        classifier,
        features: opts.features,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub trial_id: usize,
    pub true_label: Label,
    pub predicted: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub subject: String,
    pub band: SpectralBand,
    pub train_accuracy: f64,
    /// `None` when no test trial carries a label.
    pub test_accuracy: Option<f64>,
    pub per_trial: Vec<TrialOutcome>,
    pub config_hash: String,
    pub model: FittedModel,
    pub cv_report: Option<CvReport>,
}

impl ExperimentResult {
    /// Per-test-trial rows: `trial_id,true_label,predicted`.
    pub fn trials_csv(&self) -> String {
        let mut out = String::from("trial_id,true_label,predicted\n");
        for o in &self.per_trial {
            out.push_str(&format!("{},{},{}\n", o.trial_id, o.true_label.code(), o.predicted.code()));
        }
        out
    }

    /// `key,value` summary rows.
    pub fn summary_csv(&self) -> String {
        let test = self.test_accuracy.map_or("NA".to_string(), |a| format!("{a:.4}"));
        format!(
            "key,value\nsubject,{}\nband,{}\nband_lo,{}\nband_hi,{}\ntrain_accuracy,{:.4}\ntest_accuracy,{}\nconfig_hash,{}\n",
            self.subject, self.band, self.band.lo, self.band.hi, self.train_accuracy, test, self.config_hash
        )
    }
}

/// Fraction of labeled outcomes predicted correctly; `None` if there are none.
pub fn accuracy(outcomes: &[TrialOutcome]) -> Option<f64> {
    let labeled: Vec<_> = outcomes.iter().filter(|o| o.true_label.is_labeled()).collect();
    if labeled.is_empty() {
        return None;
    }
    let correct = labeled.iter().filter(|o| o.true_label == o.predicted).count();
    Some(correct as f64 / labeled.len() as f64)
}

/// Resolves `request` on a prepared subject; subject-specific bands run the CV scan over `[2, N]`.
pub fn resolve_request(
    prepared: &PreparedSubject,
    request: BandRequest,
    cfg: &ExperimentConfig,
) -> Result<(SpectralBand, Option<CvReport>)> {
    let n = prepared.spectrum.n_vertices();
    let band = match request {
        BandRequest::All => resolve_band(BandMode::All, None, n),
        BandRequest::Low => resolve_band(BandMode::ThirdsLow, None, n),
        BandRequest::Mid => resolve_band(BandMode::ThirdsMid, None, n),
        BandRequest::High => resolve_band(BandMode::ThirdsHigh, None, n),
        BandRequest::Fixed(k) => resolve_band(BandMode::FixedCutoff, Some(k), n),
        BandRequest::SubjectSpecific => {
            let report = scan_prepared(prepared, cfg)?;
            return Ok((select_subject_specific(&report), Some(report)));
        }
    }
    .map_err(|e| e.in_stage("band"))?;
    Ok((band, None))
}

/// CV accuracy curve over cut-offs `[2, N]` on the training split.
pub fn scan_prepared(prepared: &PreparedSubject, cfg: &ExperimentConfig) -> Result<CvReport> {
    let n = prepared.spectrum.n_vertices();
    let moments = prepared
        .train
        .iter()
        .map(TrialMoments::from_trial)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("scan"))?;
    cv_scan(&moments, cfg.folds, cfg.seed, 2..=n, &cfg.fit_options()).map_err(|e| e.in_stage("scan"))
}

/// Fits on the training split for `request` and scores both splits.
pub fn evaluate(prepared: &PreparedSubject, request: BandRequest, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let (band, cv_report) = resolve_request(prepared, request, cfg)?;
    let model = fit(&prepared.train, &band, &cfg.fit_options())?;
    let outcomes = |trials: &[SpectralTrial]| {
        trials
            .iter()
            .map(|t| {
                Ok(TrialOutcome {
                    trial_id: t.trial_id(),
                    true_label: t.label(),
                    predicted: model.predict(t)?,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("predict"))
    };
    let train_outcomes = outcomes(&prepared.train)?;
    let per_trial = outcomes(&prepared.test)?;
    Ok(ExperimentResult {
        subject: prepared.subject.clone(),
        band,
        train_accuracy: accuracy(&train_outcomes).unwrap_or(f64::NAN),
        test_accuracy: accuracy(&per_trial),
        per_trial,
        config_hash: cfg.hash(),
        model,
        cv_report,
    })
}

/// Load, preprocess, fit and evaluate one subject as configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let prepared = prepare_subject(cfg)?;
    evaluate(&prepared, cfg.band, cfg)
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Sibling path with `suffix` inserted before the extension: `out.csv` -> `out.summary.csv`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{suffix}"),
    };
    path.with_file_name(name)
}

/// Adjacency as CSV: one row per vertex, comma-separated, no header.
pub fn adjacency_csv(graph: &ConnectivityGraph) -> String {
    matrix_csv(graph.adjacency())
}

/// Eigenvalues, one per line.
pub fn eigenvalues_csv(spectrum: &GraphSpectrum) -> String {
    spectrum.eigenvalues().iter().map(|v| format!("{v}\n")).collect()
}

fn matrix_csv(m: &nalgebra::DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
