//! Connectivity graphs over channels and their normalized-Laplacian Fourier basis.
//!
//! Edge weights are absolute Pearson correlations between channel time series,
//! estimated over the temporal concatenation of a set of trials. The graph
//! Fourier transform projects a vertex-domain signal onto the eigenvectors of
//! `L = I - D^{-1/2} A D^{-1/2}`, ordered by ascending eigenvalue.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::signal::TrialMatrix;

const SYMMETRY_TOL: f64 = 1e-12;
const MIN_DEGREE: f64 = 1e-12;

/// Dense undirected graph with weights in `[0, 1]` and its normalized Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityGraph {
    adjacency: DMatrix<f64>,
    degrees: DVector<f64>,
    laplacian: DMatrix<f64>,
}

impl ConnectivityGraph {
    /// Validates `adjacency` and derives degrees and the normalized Laplacian.
    pub fn from_adjacency(adjacency: DMatrix<f64>) -> Result<Self> {
        let n = adjacency.nrows();
        if n == 0 {
            return Err(Error::NoTrials);
        }
        if adjacency.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: adjacency.ncols(),
            });
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::ConfigInvalid(format!(
                    "adjacency diagonal entry {i} is nonzero"
                )));
            }
            for j in 0..n {
                let w = adjacency[(i, j)];
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::ConfigInvalid(format!(
                        "adjacency weight ({i}, {j}) = {w} outside [0, 1]"
                    )));
                }
                if (w - adjacency[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::ConfigInvalid(format!(
                        "adjacency is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }

        let degrees = DVector::from_iterator(n, adjacency.row_iter().map(|r| r.sum()));
        if let Some(i) = degrees.iter().position(|&d| d < MIN_DEGREE) {
            return Err(Error::ZeroDegree(i));
        }
        let inv_sqrt = degrees.map(|d| 1.0 / d.sqrt());

        let mut laplacian = DMatrix::zeros(n, n);
        for i in 0..n {
            laplacian[(i, i)] = 1.0 - adjacency[(i, i)] * inv_sqrt[i] * inv_sqrt[i];
            for j in (i + 1)..n {
                let v = -adjacency[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
                laplacian[(i, j)] = v;
                laplacian[(j, i)] = v;
            }
        }

        Ok(Self {
            adjacency,
            degrees,
            laplacian,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn degrees(&self) -> &DVector<f64> {
        &self.degrees
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }
}

/// Builds the absolute-Pearson connectivity graph from the concatenation of `trials`.
pub fn build_graph(trials: &[TrialMatrix]) -> Result<ConnectivityGraph> {
    let first = trials.first().ok_or(Error::NoTrials)?;
    let n = first.n_channels();
    for t in trials {
        if t.n_channels() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: t.n_channels(),
            });
        }
    }

    let total: usize = trials.iter().map(|t| t.n_samples()).sum();
    if total == 0 {
        return Err(Error::NoTrials);
    }

    let mut mean = DVector::<f64>::zeros(n);
    for t in trials {
        for col in t.data().column_iter() {
            mean += col;
        }
    }
    mean /= total as f64;

    // Raw energy per channel, used to decide what "constant" means.
    let mut energy = DVector::<f64>::zeros(n);
    let mut scatter = DMatrix::<f64>::zeros(n, n);
    for t in trials {
        let mut centered = t.data().clone();
        for mut col in centered.column_iter_mut() {
            col -= &mean;
        }
        scatter.gemm(1.0, &centered, &centered.transpose(), 1.0);
        for (c, row) in t.data().row_iter().enumerate() {
            energy[c] += row.norm_squared();
        }
    }

    for i in 0..n {
        if scatter[(i, i)] <= 1e-24 * energy[i] || scatter[(i, i)] <= 0.0 {
            return Err(Error::ZeroVarianceChannel(i));
        }
    }

    let sd = DVector::from_iterator(n, (0..n).map(|i| scatter[(i, i)].sqrt()));
    let mut adjacency = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let w = (scatter[(j, i)] / (sd[i] * sd[j])).abs().min(1.0);
            adjacency[(i, j)] = w;
            adjacency[(j, i)] = w;
        }
    }
    ConnectivityGraph::from_adjacency(adjacency)
}

/// Eigendecomposition `L = U diag(lambda) U^T` with ascending eigenvalues.
///
/// Each eigenvector is sign-normalized so that its largest-magnitude entry
/// (lowest index on ties) is nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpectrum {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

/// Flips `v` in place so its largest-magnitude entry is nonnegative; returns whether it flipped.
pub(crate) fn canonical_sign<'a, I>(v: I) -> bool
where
    I: IntoIterator<Item = &'a mut f64>,
{
    let mut entries: Vec<&mut f64> = v.into_iter().collect();
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, x) in entries.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if !entries.is_empty() && *entries[best] < 0.0 {
        for x in entries.iter_mut() {
            **x = -**x;
        }
        return true;
    }
    false
}

/// Symmetric eigendecomposition sorted ascending, columns as eigenvectors.
pub(crate) fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let eig = m
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or(Error::EigenFailure)?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Computes the graph Fourier basis of `graph`.
pub fn spectrum(graph: &ConnectivityGraph) -> Result<GraphSpectrum> {
    let (eigenvalues, mut eigenvectors) = sorted_symmetric_eigen(graph.laplacian())?;
    for mut col in eigenvectors.column_iter_mut() {
        canonical_sign(col.iter_mut());
    }
    Ok(GraphSpectrum {
        eigenvalues,
        eigenvectors,
    })
}

impl GraphSpectrum {
    pub fn n_vertices(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors, one per column, in eigenvalue order.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_vertices() {
            return Err(Error::DimensionMismatch {
                expected: self.n_vertices(),
                got: len,
            });
        }
        Ok(())
    }

    /// Forward transform `U^T f`.
    pub fn gft(&self, signal: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(signal.len())?;
        Ok(self.eigenvectors.tr_mul(signal))
    }

    /// Inverse transform `U c`.
    pub fn igft(&self, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(coeffs.len())?;
        Ok(&self.eigenvectors * coeffs)
    }

    /// Forward transform applied to every column of an `N x T` block.
    pub fn gft_columns(&self, signals: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_len(signals.nrows())?;
        Ok(self.eigenvectors.tr_mul(signals))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{Label, TrialMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trial(rows: Vec<Vec<f64>>) -> TrialMatrix {
        let n = rows.len();
        let t = rows[0].len();
        let data = DMatrix::from_fn(n, t, |r, c| rows[r][c]);
        TrialMatrix::new(data, Label::Class1, 0).unwrap()
    }

    #[test]
    fn perfectly_correlated_pair() {
        let f1: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let f2: Vec<f64> = f1.iter().map(|x| 2.0 * x).collect();
        let g = build_graph(&[trial(vec![f1, f2])]).unwrap();
        assert!((g.adjacency()[(0, 1)] - 1.0).abs() < 1e-12);
        assert_eq!(g.adjacency()[(0, 0)], 0.0);
        assert_eq!(g.adjacency()[(1, 1)], 0.0);
    }

    #[test]
    fn anticorrelated_weight_is_absolute() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f1: Vec<f64> = (0..200).map(|_| rng.random::<f64>() - 0.5).collect();
        let f2: Vec<f64> = (0..200).map(|_| rng.random::<f64>() - 0.5).collect();
        let f3: Vec<f64> = f1.iter().map(|x| -x).collect();
        let g = build_graph(&[trial(vec![f1, f2, f3])]).unwrap();
        assert!((g.adjacency()[(0, 2)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_channels_nearly_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f1: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>() - 0.5).collect();
        let f2: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>() - 0.5).collect();
        // Sample-correlation oracle computed directly.
        let m1 = f1.iter().sum::<f64>() / f1.len() as f64;
        let m2 = f2.iter().sum::<f64>() / f2.len() as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (a, b) in f1.iter().zip(&f2) {
            sxy += (a - m1) * (b - m2);
            sxx += (a - m1) * (a - m1);
            syy += (b - m2) * (b - m2);
        }
        let oracle = (sxy / (sxx * syy).sqrt()).abs();
        let g = build_graph(&[trial(vec![f1, f2])]).unwrap();
        assert!(g.adjacency()[(0, 1)] <= 0.1);
        assert!((g.adjacency()[(0, 1)] - oracle).abs() < 1e-12);
    }

    #[test]
    fn concatenates_trials() {
        let a = trial(vec![vec![1.0, 2.0, 3.0], vec![1.0, 3.0, 2.0]]);
        let b = trial(vec![vec![4.0, 5.0], vec![6.0, 4.0]]);
        let joined = trial(vec![
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![1.0, 3.0, 2.0, 6.0, 4.0],
        ]);
        let g1 = build_graph(&[a, b]).unwrap();
        let g2 = build_graph(&[joined]).unwrap();
        assert!((g1.adjacency() - g2.adjacency()).abs().max() < 1e-14);
    }

    #[test]
    fn constant_channel_rejected() {
        let t = trial(vec![vec![1.0, 2.0, 0.5], vec![3.0, 3.0, 3.0]]);
        assert!(matches!(build_graph(&[t]), Err(Error::ZeroVarianceChannel(1))));
    }

    #[test]
    fn channel_count_mismatch_rejected() {
        let a = trial(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        let b = trial(vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![0.0, 1.0]]);
        assert!(matches!(
            build_graph(&[a, b]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(build_graph(&[]), Err(Error::NoTrials)));
    }

    #[test]
    fn isolated_vertex_rejected() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            ConnectivityGraph::from_adjacency(a),
            Err(Error::ZeroDegree(2))
        ));
    }

    #[test]
    fn two_vertex_spectrum() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let s = spectrum(&ConnectivityGraph::from_adjacency(a).unwrap()).unwrap();
        assert!(s.eigenvalues()[0].abs() < 1e-12);
        assert!((s.eigenvalues()[1] - 2.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let u = s.eigenvectors();
        assert!((u[(0, 0)] - h).abs() < 1e-12 && (u[(1, 0)] - h).abs() < 1e-12);
        // (1, -1)/sqrt2: tie on magnitude, first entry wins and is made nonnegative.
        assert!((u[(0, 1)] - h).abs() < 1e-12 && (u[(1, 1)] + h).abs() < 1e-12);

        let fhat = s.gft(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!((fhat[0] - h).abs() < 1e-12 && (fhat[1] - h).abs() < 1e-12);
    }

    #[test]
    fn complete_graph_k3() {
        let a = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 });
        let s = spectrum(&ConnectivityGraph::from_adjacency(a).unwrap()).unwrap();
        let ev = s.eigenvalues();
        assert!(ev[0].abs() < 1e-12);
        assert!((ev[1] - 1.5).abs() < 1e-12);
        assert!((ev[2] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn gft_of_eigenvector_is_basis_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_adjacency(&mut rng, 7);
        let s = spectrum(&ConnectivityGraph::from_adjacency(a).unwrap()).unwrap();
        let u3 = s.eigenvectors().column(2).into_owned();
        let c = s.gft(&u3).unwrap();
        for (k, v) in c.iter().enumerate() {
            let want = if k == 2 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12);
        }
        let mut e = DVector::zeros(7);
        e[4] = 1.0;
        let back = s.igft(&e).unwrap();
        assert!((back - s.eigenvectors().column(4)).abs().max() < 1e-15);
        assert_eq!(s.igft(&DVector::zeros(7)).unwrap(), DVector::zeros(7));
        assert!(matches!(
            s.gft(&DVector::zeros(6)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spectrum_is_bit_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = ConnectivityGraph::from_adjacency(random_adjacency(&mut rng, 20)).unwrap();
        let a = spectrum(&g).unwrap();
        let b = spectrum(&g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn build_graph_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..64).map(|_| rng.random::<f64>()).collect())
            .collect();
        let perm = [3usize, 0, 4, 1, 2];
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| rows[p].clone()).collect();
        let g = build_graph(&[trial(rows)]).unwrap();
        let gp = build_graph(&[trial(permuted)]).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((gp.adjacency()[(i, j)] - g.adjacency()[(perm[i], perm[j])]).abs() < 1e-14);
            }
        }
    }

    pub(crate) fn random_adjacency(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let w = rng.random_range(0.01..1.0);
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
        a
    }
}
