//! Discriminative subspace of the graph spectral domain.
//!
//! Every time sample of a trial is treated as a graph signal, stripped of its
//! component along the first Laplacian eigenvector, scaled to unit norm, and
//! transformed to the graph Fourier domain. Per class, the trace-normalized
//! second-moment matrices of those coefficient blocks are averaged into `S1`
//! and `S2`. The projector `P_hat` whitens `S1 + S2` and then rotates onto the
//! eigenvectors of the whitened `S1`, so that
//!
//! ```text
//! P_hat S1 P_hat^T = diag(theta1)      P_hat S2 P_hat^T = diag(1 - theta1)
//! ```
//!
//! with `theta1` descending: the first row of `P_hat` carries the most class-1
//! energy and the last row the most class-2 energy.

use nalgebra::{DMatrix, DVector};

use crate::band::SpectralBand;
use crate::error::{Error, Result};
use crate::graph::{canonical_sign, GraphSpectrum};
use crate::signal::{Label, TrialMatrix};

const DEGENERATE_NORM: f64 = 1e-12;
const TRACE_FLOOR: f64 = 1e-14;

/// Graph Fourier coefficients of a de-meaned, column-normalized trial.
///
/// Row `i` holds the coefficient of eigenvector `band.lo + i` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTrial {
    coeffs: DMatrix<f64>,
    label: Label,
    trial_id: usize,
    band: SpectralBand,
    n_vertices: usize,
}

impl SpectralTrial {
    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn trial_id(&self) -> usize {
        self.trial_id
    }

    pub fn band(&self) -> &SpectralBand {
        &self.band
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }
}

/// Removes the `u1` component of every column, normalizes it, and applies the GFT.
pub fn normalize_trial(trial: &TrialMatrix, spectrum: &GraphSpectrum) -> Result<SpectralTrial> {
    let n = spectrum.n_vertices();
    if trial.n_channels() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: trial.n_channels(),
        });
    }
    let u1 = spectrum.eigenvectors().column(0);
    let mut tilde = trial.data().clone();
    for (t, mut col) in tilde.column_iter_mut().enumerate() {
        let along = u1.dot(&col);
        col.axpy(-along, &u1, 1.0);
        let norm = col.norm();
        if !(norm >= DEGENERATE_NORM) {
            return Err(Error::DegenerateColumn(t));
        }
        col /= norm;
    }
    Ok(SpectralTrial {
        coeffs: spectrum.gft_columns(&tilde)?,
        label: trial.label(),
        trial_id: trial.trial_id(),
        band: SpectralBand::full(n),
        n_vertices: n,
    })
}

/// Keeps the rows whose eigenvalue index falls in `band`; no renormalization.
pub fn truncate_band(st: &SpectralTrial, band: &SpectralBand) -> Result<SpectralTrial> {
    if band.is_empty() {
        return Err(Error::EmptyBand);
    }
    if !st.band.contains(band) {
        return Err(Error::BadCutoff {
            cutoff: band.hi,
            n: st.band.hi,
        });
    }
    let start = band.lo - st.band.lo;
    Ok(SpectralTrial {
        coeffs: st.coeffs.rows(start, band.len()).into_owned(),
        band: *band,
        ..st.clone()
    })
}

/// Mean trace-normalized class matrices `S1`, `S2` and the trial counts behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCovariancePair {
    pub s1: DMatrix<f64>,
    pub s2: DMatrix<f64>,
    pub k1: usize,
    pub k2: usize,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

struct Accumulator {
    sums: [DMatrix<f64>; 2],
    counts: [usize; 2],
}

impl Accumulator {
    fn new(dim: usize) -> Self {
        Self {
            sums: [DMatrix::zeros(dim, dim), DMatrix::zeros(dim, dim)],
            counts: [0, 0],
        }
    }

    fn add(&mut self, label: Label, trial_id: usize, gram: DMatrix<f64>) -> Result<()> {
        let slot = match label {
            Label::Class1 => 0,
            Label::Class2 => 1,
            Label::Unlabeled => return Ok(()),
        };
        let tr = gram.trace();
        if !(tr >= TRACE_FLOOR) {
            return Err(Error::TraceUnderflow(trial_id));
        }
        self.sums[slot] += gram / tr;
        self.counts[slot] += 1;
        Ok(())
    }

    fn finish(self) -> Result<ClassCovariancePair> {
        let [s1, s2] = self.sums;
        let [k1, k2] = self.counts;
        if k1 == 0 {
            return Err(Error::MissingClass(1));
        }
        if k2 == 0 {
            return Err(Error::MissingClass(2));
        }
        let (mut s1, mut s2) = (s1 / k1 as f64, s2 / k2 as f64);
        symmetrize(&mut s1);
        symmetrize(&mut s2);
        Ok(ClassCovariancePair { s1, s2, k1, k2 })
    }
}

/// Averages `F F^T / tr(F F^T)` over the labeled trials of each class.
/// Unlabeled trials are ignored.
pub fn class_covariances(trials: &[SpectralTrial]) -> Result<ClassCovariancePair> {
    let band = trials.first().ok_or(Error::MissingClass(1))?.band;
    let mut acc = Accumulator::new(band.len());
    for st in trials {
        if st.band != band {
            return Err(Error::DimensionMismatch {
                expected: band.len(),
                got: st.band.len(),
            });
        }
        acc.add(st.label, st.trial_id, &st.coeffs * st.coeffs.transpose())?;
    }
    acc.finish()
}

/// Per-trial second moments of the full-band coefficients, cached so any
/// contiguous band can be sliced out without touching the samples again.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMoments {
    /// `F F^T` over the full spectrum.
    gram: DMatrix<f64>,
    /// Row covariance of `F` (rows de-meaned over time, denominator `T - 1`).
    row_cov: DMatrix<f64>,
    label: Label,
    trial_id: usize,
}

impl TrialMoments {
    /// Requires a full-band spectral trial with at least two samples.
    pub fn from_trial(st: &SpectralTrial) -> Result<Self> {
        if st.band != SpectralBand::full(st.n_vertices) {
            return Err(Error::DimensionMismatch {
                expected: st.n_vertices,
                got: st.band.len(),
            });
        }
        let t = st.coeffs.ncols();
        if t < 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: t });
        }
        let gram = &st.coeffs * st.coeffs.transpose();
        let mean = st.coeffs.column_mean();
        let mut centered = st.coeffs.clone();
        for mut col in centered.column_iter_mut() {
            col -= &mean;
        }
        let mut row_cov = &centered * centered.transpose() / (t - 1) as f64;
        symmetrize(&mut row_cov);
        Ok(Self {
            gram,
            row_cov,
            label: st.label,
            trial_id: st.trial_id,
        })
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn trial_id(&self) -> usize {
        self.trial_id
    }

    pub fn n_vertices(&self) -> usize {
        self.gram.nrows()
    }

    pub(crate) fn band_row_cov(&self, band: &SpectralBand) -> DMatrix<f64> {
        self.row_cov
            .view((band.lo - 1, band.lo - 1), (band.len(), band.len()))
            .into_owned()
    }

    fn band_gram(&self, band: &SpectralBand) -> DMatrix<f64> {
        self.gram
            .view((band.lo - 1, band.lo - 1), (band.len(), band.len()))
            .into_owned()
    }
}

/// Same result as [`class_covariances`] on band-truncated trials, computed from cached moments.
pub fn class_covariances_from_moments(
    moments: &[&TrialMoments],
    band: &SpectralBand,
) -> Result<ClassCovariancePair> {
    let n = moments.first().ok_or(Error::MissingClass(1))?.n_vertices();
    if band.is_empty() || band.hi > n {
        return Err(Error::BadCutoff { cutoff: band.hi, n });
    }
    let mut acc = Accumulator::new(band.len());
    for m in moments {
        if m.n_vertices() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.n_vertices(),
            });
        }
        acc.add(m.label, m.trial_id, m.band_gram(band))?;
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagonalizeOptions {
    /// Eigenvalues of `S1 + S2` below `rank_tol * max eigenvalue` count as deficient.
    pub rank_tol: f64,
    /// Drop deficient directions instead of failing.
    pub allow_rank_reduction: bool,
}

impl Default for DiagonalizeOptions {
    fn default() -> Self {
        Self {
            rank_tol: 1e-10,
            allow_rank_reduction: false,
        }
    }
}

/// The simultaneous-diagonalization transform and its intermediate factors.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminativeProjector {
    /// `r x n`; row `i` pairs with `theta1[i]`.
    pub p_hat: DMatrix<f64>,
    /// Eigenvalues of the whitened `S1`, descending, clamped to `[0, 1]`.
    pub theta1: DVector<f64>,
    /// `n x r` whitener `Phi Theta^{-1/2}` of `S1 + S2`.
    pub whitener: DMatrix<f64>,
    /// `r x r` orthonormal eigenvectors of the whitened `S1`, columns in `theta1` order.
    pub rotation: DMatrix<f64>,
    /// Dropped directions: ascending-eigenvalue indices of `S1 + S2`, offset by
    /// one after a leading 0 when [`band_projector`] removed the first-eigenvector row.
    pub discarded: Vec<usize>,
}

impl DiscriminativeProjector {
    pub fn dim(&self) -> usize {
        self.p_hat.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.p_hat.ncols()
    }

    /// `P_hat F` for a band-matched coefficient block.
    pub fn project(&self, coeffs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if coeffs.nrows() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: coeffs.nrows(),
            });
        }
        Ok(&self.p_hat * coeffs)
    }

    /// `p_hat` and `theta1` as CSV: one row of `p_hat` per line followed by its
    /// `theta1` value in the last column, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (i, row) in self.p_hat.row_iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push_str(&format!(",{}\n", self.theta1[i]));
        }
        out
    }
}

/// Finds `P_hat` with `P_hat S1 P_hat^T` and `P_hat S2 P_hat^T` both diagonal.
///
/// `S1 + S2` is whitened by its eigendecomposition `Phi Theta Phi^T`, the
/// whitened `S1` is eigendecomposed as `Psi Theta1 Psi^T`, columns of `Psi` are
/// ordered by descending `Theta1` (ties keep solver order), and
/// `P_hat = Psi^T Theta^{-1/2} Phi^T`. Each row of `P_hat` is sign-normalized
/// so its largest-magnitude entry is nonnegative.
pub fn simultaneous_diagonalize(
    cov: &ClassCovariancePair,
    opts: &DiagonalizeOptions,
) -> Result<DiscriminativeProjector> {
    let n = cov.s1.nrows();
    if cov.s2.nrows() != n || cov.s1.ncols() != n || cov.s2.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cov.s2.nrows(),
        });
    }
    let mut sum = &cov.s1 + &cov.s2;
    symmetrize(&mut sum);
    let (theta, phi) = crate::graph::sorted_symmetric_eigen(&sum)?;
    let largest = theta.max();
    let floor = opts.rank_tol * largest;
    let discarded: Vec<usize> = (0..n).filter(|&i| !(theta[i] > floor && theta[i] > 0.0)).collect();
    if !discarded.is_empty() && (!opts.allow_rank_reduction || discarded.len() == n) {
        return Err(Error::RankDeficient(discarded));
    }
    let kept: Vec<usize> = (0..n).filter(|i| !discarded.contains(i)).collect();
    let r = kept.len();

    let whitener = DMatrix::from_fn(n, r, |row, c| phi[(row, kept[c])] / theta[kept[c]].sqrt());
    let mut whitened = whitener.transpose() * &cov.s1 * &whitener;
    symmetrize(&mut whitened);

    let eig = whitened
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or(Error::EigenFailure)?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let mut order: Vec<usize> = (0..r).collect();
    // Stable sort: equal eigenvalues keep the solver's index order.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let theta1 = DVector::from_iterator(r, order.iter().map(|&k| eig.eigenvalues[k].clamp(0.0, 1.0)));
    let mut rotation = DMatrix::from_fn(r, r, |row, c| eig.eigenvectors[(row, order[c])]);

    let mut p_hat = rotation.transpose() * whitener.transpose();
    for i in 0..r {
        if canonical_sign(p_hat.row_mut(i).iter_mut()) {
            rotation.column_mut(i).neg_mut();
        }
    }

    Ok(DiscriminativeProjector {
        p_hat,
        theta1,
        whitener,
        rotation,
        discarded,
    })
}

/// Projector for covariances restricted to `band`.
///
/// When the band includes eigenvector 1, its coefficient row is identically
/// zero after de-meaning, so that coordinate is dropped before
/// diagonalization and re-inserted as a zero column of `p_hat`. Any further
/// rank loss is handled by `opts` as in [`simultaneous_diagonalize`].
pub fn band_projector(
    cov: &ClassCovariancePair,
    band: &SpectralBand,
    opts: &DiagonalizeOptions,
) -> Result<DiscriminativeProjector> {
    let n = cov.s1.nrows();
    if n != band.len() {
        return Err(Error::DimensionMismatch {
            expected: band.len(),
            got: n,
        });
    }
    if band.lo != 1 {
        return simultaneous_diagonalize(cov, opts);
    }
    if n < 2 {
        return Err(Error::RankDeficient(vec![0]));
    }
    let inner = ClassCovariancePair {
        s1: cov.s1.view((1, 1), (n - 1, n - 1)).into_owned(),
        s2: cov.s2.view((1, 1), (n - 1, n - 1)).into_owned(),
        k1: cov.k1,
        k2: cov.k2,
    };
    let p = simultaneous_diagonalize(&inner, opts).map_err(|e| match e {
        Error::RankDeficient(idx) => Error::RankDeficient(idx.into_iter().map(|i| i + 1).collect()),
        other => other,
    })?;
    let r = p.dim();
    let mut p_hat = DMatrix::zeros(r, n);
    p_hat.view_mut((0, 1), (r, n - 1)).copy_from(&p.p_hat);
    let mut whitener = DMatrix::zeros(n, r);
    whitener.view_mut((1, 0), (n - 1, r)).copy_from(&p.whitener);
    let mut discarded = vec![0];
    discarded.extend(p.discarded.iter().map(|i| i + 1));
    Ok(DiscriminativeProjector {
        p_hat,
        whitener,
        discarded,
        ..p
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::{resolve_band, BandMode};
    use crate::graph::{spectrum, ConnectivityGraph};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spectrum(rng: &mut impl Rng, n: usize) -> GraphSpectrum {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let w = rng.random_range(0.05..1.0);
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
        spectrum(&ConnectivityGraph::from_adjacency(a).unwrap()).unwrap()
    }

    fn random_trial(rng: &mut impl Rng, n: usize, t: usize, label: Label, id: usize) -> TrialMatrix {
        let data = DMatrix::from_fn(n, t, |_, _| rng.random::<f64>() - 0.5);
        TrialMatrix::new(data, label, id).unwrap()
    }

    #[test]
    fn eigenvector_column_maps_to_basis_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_spectrum(&mut rng, 6);
        let u2 = s.eigenvectors().column(1).into_owned();
        let trial = TrialMatrix::new(DMatrix::from_columns(&[u2.clone(), u2 * 3.0]), Label::Class1, 0).unwrap();
        let st = normalize_trial(&trial, &s).unwrap();
        for t in 0..2 {
            for k in 0..6 {
                let want = if k == 1 { 1.0 } else { 0.0 };
                assert!((st.coeffs()[(k, t)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn first_eigenvector_column_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_spectrum(&mut rng, 5);
        let mut data = DMatrix::from_fn(5, 3, |_, _| rng.random::<f64>());
        data.set_column(2, &s.eigenvectors().column(0));
        let trial = TrialMatrix::new(data, Label::Class1, 0).unwrap();
        assert!(matches!(normalize_trial(&trial, &s), Err(Error::DegenerateColumn(2))));
    }

    #[test]
    fn normalized_columns_unit_norm_and_no_dc() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_spectrum(&mut rng, 12);
        let st = normalize_trial(&random_trial(&mut rng, 12, 40, Label::Class2, 9), &s).unwrap();
        for col in st.coeffs().column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-12);
            assert!(col[0].abs() < 1e-12);
        }
        assert_eq!(st.trial_id(), 9);
        assert_eq!(st.label(), Label::Class2);
    }

    #[test]
    fn truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_spectrum(&mut rng, 9);
        let st = normalize_trial(&random_trial(&mut rng, 9, 5, Label::Class1, 0), &s).unwrap();
        assert_eq!(truncate_band(&st, &SpectralBand::full(9)).unwrap(), st);
        let mid = resolve_band(BandMode::ThirdsMid, None, 9).unwrap();
        let tm = truncate_band(&st, &mid).unwrap();
        assert_eq!(tm.coeffs().nrows(), 3);
        assert_eq!(tm.coeffs().row(0), st.coeffs().row(3));
        let inner = SpectralBand { lo: 5, hi: 5, ..mid };
        assert_eq!(truncate_band(&tm, &inner).unwrap().coeffs().row(0), st.coeffs().row(4));
        let low = resolve_band(BandMode::FixedCutoff, Some(2), 9).unwrap();
        assert!(truncate_band(&tm, &low).is_err());
    }

    #[test]
    fn rank_one_class_matrices() {
        let band = SpectralBand::full(3);
        let mk = |row: usize, label| {
            let mut c = DMatrix::zeros(3, 4);
            c.row_mut(row).copy_from_slice(&[1.0, -2.0, 0.5, 3.0]);
            SpectralTrial { coeffs: c, label, trial_id: row, band, n_vertices: 3 }
        };
        let trials = vec![mk(0, Label::Class1), mk(2, Label::Class2)];
        let cov = class_covariances(&trials).unwrap();
        let mut e0 = DMatrix::zeros(3, 3);
        e0[(0, 0)] = 1.0;
        let mut e2 = DMatrix::zeros(3, 3);
        e2[(2, 2)] = 1.0;
        assert!((&cov.s1 - e0).abs().max() < 1e-15);
        assert!((&cov.s2 - e2).abs().max() < 1e-15);
        assert_eq!((cov.k1, cov.k2), (1, 1));

        let doubled: Vec<_> = trials.iter().chain(trials.iter()).cloned().collect();
        let cov2 = class_covariances(&doubled).unwrap();
        assert!((&cov2.s1 - &cov.s1).abs().max() < 1e-15);

        assert!(matches!(class_covariances(&trials[..1]), Err(Error::MissingClass(2))));
        let zero = SpectralTrial { coeffs: DMatrix::zeros(3, 4), ..trials[0].clone() };
        assert!(matches!(
            class_covariances(&[zero, trials[1].clone()]),
            Err(Error::TraceUnderflow(0))
        ));
    }

    fn spectral_set(rng: &mut ChaCha8Rng, n: usize, per_class: usize) -> (GraphSpectrum, Vec<SpectralTrial>) {
        let s = random_spectrum(rng, n);
        let trials = (0..2 * per_class)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Class1 } else { Label::Class2 };
                normalize_trial(&random_trial(rng, n, 30, label, i), &s).unwrap()
            })
            .collect();
        (s, trials)
    }

    #[test]
    fn covariances_have_unit_trace_and_ignore_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, trials) = spectral_set(&mut rng, 10, 6);
        let cov = class_covariances(&trials).unwrap();
        assert!((cov.s1.trace() - 1.0).abs() < 1e-10);
        assert!((cov.s2.trace() - 1.0).abs() < 1e-10);
        let mut rev = trials.clone();
        rev.reverse();
        let cov_rev = class_covariances(&rev).unwrap();
        assert!((&cov.s1 - &cov_rev.s1).abs().max() < 1e-12);
        assert!((&cov.s2 - &cov_rev.s2).abs().max() < 1e-12);
    }

    #[test]
    fn moments_route_matches_direct_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (_, trials) = spectral_set(&mut rng, 11, 5);
        let moments: Vec<TrialMoments> = trials.iter().map(|t| TrialMoments::from_trial(t).unwrap()).collect();
        let refs: Vec<&TrialMoments> = moments.iter().collect();
        for k in [2, 5, 11] {
            let band = resolve_band(BandMode::FixedCutoff, Some(k), 11).unwrap();
            let cut: Vec<_> = trials.iter().map(|t| truncate_band(t, &band).unwrap()).collect();
            let direct = class_covariances(&cut).unwrap();
            let cached = class_covariances_from_moments(&refs, &band).unwrap();
            assert!((&direct.s1 - &cached.s1).abs().max() < 1e-14);
            assert!((&direct.s2 - &cached.s2).abs().max() < 1e-14);
        }
    }

    #[test]
    fn hand_computed_diagonal_pair() {
        let cov = ClassCovariancePair {
            s1: DMatrix::from_diagonal(&DVector::from_vec(vec![0.7, 0.3])),
            s2: DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.7])),
            k1: 1,
            k2: 1,
        };
        let p = simultaneous_diagonalize(&cov, &DiagonalizeOptions::default()).unwrap();
        assert!((p.theta1[0] - 0.7).abs() < 1e-12);
        assert!((p.theta1[1] - 0.3).abs() < 1e-12);
        // S1 + S2 = I, so P_hat is a signed permutation putting the 0.7 axis first.
        assert!((p.p_hat.abs() - DMatrix::identity(2, 2)).abs().max() < 1e-12);
        assert!((p.p_hat[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_classes_give_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (_, trials) = spectral_set(&mut rng, 6, 4);
        let cov = class_covariances(&trials).unwrap();
        let same = ClassCovariancePair { s2: cov.s1.clone(), ..cov };
        let p = band_projector(&same, &SpectralBand::full(6), &DiagonalizeOptions::default()).unwrap();
        assert_eq!(p.dim(), 5);
        for v in p.theta1.iter() {
            assert!((v - 0.5).abs() < 1e-10);
        }
    }

    fn check_diagonalizes(cov: &ClassCovariancePair, p: &DiscriminativeProjector) {
        let d1 = &p.p_hat * &cov.s1 * p.p_hat.transpose();
        let d2 = &p.p_hat * &cov.s2 * p.p_hat.transpose();
        for i in 0..p.dim() {
            for j in 0..p.dim() {
                if i != j {
                    assert!(d1[(i, j)].abs() <= 1e-8 && d2[(i, j)].abs() <= 1e-8);
                }
            }
            assert!((d1[(i, i)] + d2[(i, i)] - 1.0).abs() <= 1e-8);
            assert!((d1[(i, i)] - p.theta1[i]).abs() <= 1e-8);
        }
        for w in p.theta1.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
        // rotation stays consistent with p_hat
        let recomposed = p.rotation.transpose() * p.whitener.transpose();
        assert!((recomposed - &p.p_hat).abs().max() < 1e-12);
    }

    #[test]
    fn projector_invariants_on_real_trials() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (_, trials) = spectral_set(&mut rng, 8, 10);
        let band = resolve_band(BandMode::All, None, 8).unwrap();
        let cut: Vec<_> = trials.iter().map(|t| truncate_band(t, &band).unwrap()).collect();
        // Full band: the u1 row is identically ~0, so S1 + S2 is singular.
        let cov = class_covariances(&cut).unwrap();
        match simultaneous_diagonalize(&cov, &DiagonalizeOptions::default()) {
            Err(Error::RankDeficient(idx)) => assert_eq!(idx, vec![0]),
            other => panic!("expected RankDeficient, got {other:?}"),
        }
        let opts = DiagonalizeOptions { allow_rank_reduction: true, ..Default::default() };
        let p = simultaneous_diagonalize(&cov, &opts).unwrap();
        assert_eq!(p.dim(), 7);
        check_diagonalizes(&cov, &p);

        let p = band_projector(&cov, &band, &DiagonalizeOptions::default()).unwrap();
        assert_eq!(p.dim(), 7);
        assert_eq!(p.discarded, vec![0]);
        assert!(p.p_hat.column(0).iter().all(|&v| v == 0.0));
        assert_eq!(p.input_dim(), 8);
        check_diagonalizes(&cov, &p);

        let band = SpectralBand { lo: 2, hi: 8, ..band };
        let cut: Vec<_> = trials.iter().map(|t| truncate_band(t, &band).unwrap()).collect();
        let cov = class_covariances(&cut).unwrap();
        let p = simultaneous_diagonalize(&cov, &DiagonalizeOptions::default()).unwrap();
        check_diagonalizes(&cov, &p);
        assert!(p.discarded.is_empty());
    }

    #[test]
    fn scale_invariance_through_projector() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 7;
        let s = random_spectrum(&mut rng, n);
        let raw: Vec<TrialMatrix> = (0..12)
            .map(|i| random_trial(&mut rng, n, 25, if i < 6 { Label::Class1 } else { Label::Class2 }, i))
            .collect();
        let band = SpectralBand { lo: 2, hi: n, ..SpectralBand::full(n) };
        let fit = |trials: &[TrialMatrix]| {
            let st: Vec<_> = trials
                .iter()
                .map(|t| truncate_band(&normalize_trial(t, &s).unwrap(), &band).unwrap())
                .collect();
            let cov = class_covariances(&st).unwrap();
            (st, simultaneous_diagonalize(&cov, &DiagonalizeOptions::default()).unwrap())
        };
        let (st_a, p_a) = fit(&raw);
        let scaled: Vec<_> = raw.iter().map(|t| t.scaled(if t.label() == Label::Class1 { 3.7 } else { 0.2 })).collect();
        let (st_b, p_b) = fit(&scaled);
        for (a, b) in st_a.iter().zip(&st_b) {
            assert!((a.coeffs() - b.coeffs()).abs().max() < 1e-10);
        }
        assert!((&p_a.p_hat - &p_b.p_hat).abs().max() < 1e-10 * p_a.p_hat.abs().max());
    }

    #[test]
    fn projector_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (_, trials) = spectral_set(&mut rng, 9, 5);
        let band = SpectralBand { lo: 2, hi: 9, ..SpectralBand::full(9) };
        let cut: Vec<_> = trials.iter().map(|t| truncate_band(t, &band).unwrap()).collect();
        let cov = class_covariances(&cut).unwrap();
        let a = simultaneous_diagonalize(&cov, &DiagonalizeOptions::default()).unwrap();
        let b = simultaneous_diagonalize(&cov, &DiagonalizeOptions::default()).unwrap();
        assert_eq!(a, b);
        for row in a.p_hat.row_iter() {
            let (mut best, mut idx) = (-1.0, 0);
            for (j, v) in row.iter().enumerate() {
                if v.abs() > best {
                    best = v.abs();
                    idx = j;
                }
            }
            assert!(row[idx] >= 0.0);
        }
        let csv = a.to_csv();
        assert_eq!(csv.lines().count(), 8);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 9);
    }
}
