//! Graph-spectral discriminative-subspace classification of two-class multichannel trials.
//!
//! Trials are filtered, epoched and moved into the graph Fourier domain of a
//! correlation graph built from the training data. Class covariances in a chosen
//! spectral band are simultaneously diagonalized and the variances along the most
//! discriminative directions feed a linear max-margin classifier.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod band;
pub mod error;
pub mod features;
pub mod graph;
pub mod pipeline;
pub mod signal;
pub mod subspace;

pub use band::{BandMode, BandRequest, CvReport, SpectralBand};
pub use error::{Error, ErrorKind, Result};
pub use features::{FeatureOptions, FeatureVector, LinearModel};
pub use graph::{ConnectivityGraph, GraphSpectrum};
pub use pipeline::{ExperimentConfig, ExperimentResult, FilterScope};
pub use signal::{BandPassSpec, FilterMode, Label, Marker, Recording, Split, TrialMatrix};
pub use subspace::{ClassCovariancePair, DiagonalizeOptions, DiscriminativeProjector, SpectralTrial, TrialMoments};
