//! Variance features on the discriminative rows and the linear classifier.

mod svm;

pub use svm::{predict, train_classifier, LinearModel};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::band::SpectralBand;
use crate::error::{Error, Result};
use crate::signal::Label;
use crate::subspace::{DiscriminativeProjector, SpectralTrial, TrialMoments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureOptions {
    /// Rows taken from each end of the projector.
    pub rows_per_end: usize,
    /// Natural log of each variance.
    pub log_features: bool,
    /// Zero-mean, unit-variance scaling fit on the training features.
    pub standardize: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self {
            rows_per_end: 1,
            log_features: false,
            standardize: false,
        }
    }
}

/// Per-trial features: variances of the first `m` then the last `m` projected rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: DVector<f64>,
    pub label: Label,
}

/// First `m` and last `m` rows; the two ends overlap when `2m > dim`.
fn selected_rows(dim: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > dim {
        return Err(Error::DimensionMismatch {
            expected: m.max(1),
            got: dim,
        });
    }
    Ok((0..m).chain(dim - m..dim).collect())
}

fn finish(values: Vec<f64>, label: Label, opts: &FeatureOptions) -> FeatureVector {
    let values = if opts.log_features {
        values.into_iter().map(f64::ln).collect()
    } else {
        values
    };
    FeatureVector {
        values: DVector::from_vec(values),
        label,
    }
}

/// Sample variance (denominator `T - 1`) of the selected rows of `P_hat F`.
pub fn extract_features(
    st: &SpectralTrial,
    proj: &DiscriminativeProjector,
    opts: &FeatureOptions,
) -> Result<FeatureVector> {
    let rows = selected_rows(proj.dim(), opts.rows_per_end)?;
    let z = proj.project(st.coeffs())?;
    let t = z.ncols();
    if t < 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: t });
    }
    let values = rows
        .iter()
        .map(|&r| {
            let row = z.row(r);
            let mean = row.mean();
            row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t - 1) as f64
        })
        .collect();
    Ok(finish(values, st.label(), opts))
}

/// Same features as [`extract_features`] via `p C p^T` on cached row covariances.
pub fn features_from_moments(
    m: &TrialMoments,
    proj: &DiscriminativeProjector,
    band: &SpectralBand,
    opts: &FeatureOptions,
) -> Result<FeatureVector> {
    if proj.input_dim() != band.len() || band.hi > m.n_vertices() {
        return Err(Error::DimensionMismatch {
            expected: proj.input_dim(),
            got: band.len(),
        });
    }
    let rows = selected_rows(proj.dim(), opts.rows_per_end)?;
    let cov = m.band_row_cov(band);
    let values = rows
        .iter()
        .map(|&r| {
            let p = proj.p_hat.row(r);
            (p * &cov * p.transpose())[(0, 0)].max(0.0)
        })
        .collect();
    Ok(finish(values, m.label(), opts))
}

/// Per-feature affine scaling fit on training data; identity when disabled.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    shift: Option<(DVector<f64>, DVector<f64>)>,
}

impl Standardizer {
    pub fn identity() -> Self {
        Self { shift: None }
    }

    pub fn fit_if(enabled: bool, train: &[FeatureVector]) -> Self {
        if !enabled || train.is_empty() {
            return Self::identity();
        }
        let d = train[0].values.len();
        let n = train.len() as f64;
        let mut mean = DVector::zeros(d);
        for fv in train {
            mean += &fv.values;
        }
        mean /= n;
        let mut var = DVector::zeros(d);
        for fv in train {
            let c = &fv.values - &mean;
            var += c.component_mul(&c);
        }
        let sd = var.map(|v: f64| {
            let s = (v / n).sqrt();
            if s > 0.0 && s.is_finite() {
                s
            } else {
                1.0
            }
        });
        Self {
            shift: Some((mean, sd)),
        }
    }

    pub fn apply(&self, mut fv: FeatureVector) -> FeatureVector {
        if let Some((mean, sd)) = &self.shift {
            fv.values = (&fv.values - mean).component_div(sd);
        }
        fv
    }

    pub fn apply_all(&self, fvs: Vec<FeatureVector>) -> Vec<FeatureVector> {
        fvs.into_iter().map(|f| self.apply(f)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subspace::{
        band_projector, class_covariances, normalize_trial, truncate_band, DiagonalizeOptions,
    };
    use crate::graph::{spectrum, ConnectivityGraph};
    use crate::signal::TrialMatrix;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn identity_projector(n: usize) -> DiscriminativeProjector {
        DiscriminativeProjector {
            p_hat: DMatrix::identity(n, n),
            theta1: DVector::from_element(n, 0.5),
            whitener: DMatrix::identity(n, n),
            rotation: DMatrix::identity(n, n),
            discarded: vec![],
        }
    }

    fn hand_trial() -> (SpectralTrial, DiscriminativeProjector) {
        // Builds a SpectralTrial through the public path: a 2-vertex graph whose
        // second GFT row alternates and first row is zero.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let s = spectrum(&ConnectivityGraph::from_adjacency(a).unwrap()).unwrap();
        let u2 = s.eigenvectors().column(1).into_owned();
        let cols: Vec<_> = [1.0, -1.0, 1.0, -1.0].iter().map(|&x| &u2 * x).collect();
        let t = TrialMatrix::new(DMatrix::from_columns(&cols), Label::Class1, 0).unwrap();
        (normalize_trial(&t, &s).unwrap(), identity_projector(2))
    }

    #[test]
    fn alternating_row_variance() {
        let (st, proj) = hand_trial();
        let fv = extract_features(&st, &proj, &FeatureOptions::default()).unwrap();
        // first row constant 0, last row (1,-1,1,-1): variance 4/3
        assert!(fv.values[0].abs() < 1e-15);
        assert!((fv.values[1] - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(fv.label, Label::Class1);

        let logs = FeatureOptions { log_features: true, ..Default::default() };
        let fv = extract_features(&st, &proj, &logs).unwrap();
        assert!((fv.values[1] - (4.0f64 / 3.0).ln()).abs() < 1e-12);

        let overlap = FeatureOptions { rows_per_end: 2, ..Default::default() };
        let fv = extract_features(&st, &proj, &overlap).unwrap();
        assert_eq!(fv.values.len(), 4);
        assert_eq!(fv.values[0], fv.values[2]);
        assert_eq!(fv.values[1], fv.values[3]);

        let too_many = FeatureOptions { rows_per_end: 3, ..Default::default() };
        assert!(matches!(
            extract_features(&st, &proj, &too_many),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    struct Fixture {
        trials: Vec<SpectralTrial>,
        proj: DiscriminativeProjector,
        band: SpectralBand,
    }

    /// Class 1 draws extra energy along eigenvector 3, class 2 along eigenvector 6.
    fn planted(seed: u64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let w = rng.random_range(0.1..1.0);
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
        let s = spectrum(&ConnectivityGraph::from_adjacency(a).unwrap()).unwrap();
        let u = s.eigenvectors().clone();
        let band = SpectralBand::full(n);
        let trials: Vec<SpectralTrial> = (0..40)
            .map(|i| {
                let (label, k) = if i % 2 == 0 { (Label::Class1, 2) } else { (Label::Class2, 5) };
                let data = DMatrix::from_fn(n, 60, |_, _| rng.sample::<f64, _>(StandardNormal));
                let boost = DMatrix::from_fn(1, 60, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
                let data = data + u.column(k) * boost;
                let t = TrialMatrix::new(data, label, i).unwrap();
                truncate_band(&normalize_trial(&t, &s).unwrap(), &band).unwrap()
            })
            .collect();
        let cov = class_covariances(&trials).unwrap();
        let proj = band_projector(&cov, &band, &DiagonalizeOptions::default()).unwrap();
        Fixture { trials, proj, band }
    }

    #[test]
    fn class_one_dominates_first_feature() {
        let f = planted(1);
        let opts = FeatureOptions::default();
        let mut wins = 0;
        for st in f.trials.iter().filter(|t| t.label() == Label::Class1) {
            let fv = extract_features(st, &f.proj, &opts).unwrap();
            if fv.values[0] > fv.values[1] {
                wins += 1;
            }
        }
        assert!(wins >= 18, "{wins}/20");
    }

    #[test]
    fn moment_route_matches_direct_route() {
        let f = planted(2);
        for m in [1, 2, 3] {
            let opts = FeatureOptions { rows_per_end: m, ..Default::default() };
            for st in &f.trials {
                let direct = extract_features(st, &f.proj, &opts).unwrap();
                let cached =
                    features_from_moments(&TrialMoments::from_trial(st).unwrap(), &f.proj, &f.band, &opts).unwrap();
                assert_eq!(direct.values.len(), 2 * m);
                let scale = direct.values.amax().max(1e-300);
                assert!((&direct.values - &cached.values).amax() / scale < 1e-10);
            }
        }
    }

    #[test]
    fn sign_flips_of_projector_rows_do_not_matter() {
        let f = planted(3);
        let mut flipped = f.proj.clone();
        for i in (0..flipped.dim()).step_by(2) {
            flipped.p_hat.row_mut(i).neg_mut();
        }
        let opts = FeatureOptions { rows_per_end: 2, ..Default::default() };
        for st in &f.trials {
            let a = extract_features(st, &f.proj, &opts).unwrap();
            let b = extract_features(st, &flipped, &opts).unwrap();
            assert!((&a.values - &b.values).amax() <= 1e-12 * a.values.amax());
        }
    }

    #[test]
    fn standardizer_centers_training_features() {
        let fvs: Vec<FeatureVector> = [1.0, 2.0, 3.0, 6.0]
            .iter()
            .map(|&v| FeatureVector { values: DVector::from_vec(vec![v, 5.0]), label: Label::Class1 })
            .collect();
        let s = Standardizer::fit_if(true, &fvs);
        let out = s.apply_all(fvs.clone());
        let mean: f64 = out.iter().map(|f| f.values[0]).sum::<f64>() / 4.0;
        let var: f64 = out.iter().map(|f| f.values[0].powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        // constant feature only shifts
        assert!(out.iter().all(|f| f.values[1] == 0.0));
        assert_eq!(Standardizer::fit_if(false, &fvs).apply(fvs[0].clone()), fvs[0]);
    }
}
