//! Soft-margin linear SVM trained by sequential minimal optimization.
//!
//! Solves the dual of `min 1/2 |w|^2 + C sum_i max(0, 1 - y_i (w.x_i + b))`
//! with second-order working-set selection. Class 1 maps to `y = +1`.

use nalgebra::DVector;

use super::FeatureVector;
use crate::error::{Error, Result};
use crate::signal::Label;

/// Maximal KKT violation accepted at convergence.
const KKT_TOL: f64 = 1e-10;
/// Relative duality gap the final solution must reach.
const GAP_TOL: f64 = 1e-6;
const MAX_ITER: usize = 1_000_000;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: DVector<f64>,
    pub bias: f64,
    pub margin_cost: f64,
}

impl LinearModel {
    pub fn decision(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(self.weights.dot(x) + self.bias)
    }

    /// Dimension, weights, bias and `C`, one decimal per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.weights.len());
        for w in self.weights.iter() {
            out.push_str(&format!("{w}\n"));
        }
        out.push_str(&format!("{}\n{}\n", self.bias, self.margin_cost));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::BadModel(m.to_string());
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let dim: usize = lines
            .next()
            .ok_or_else(|| bad("empty"))?
            .parse()
            .map_err(|_| bad("dimension is not an integer"))?;
        let nums: Vec<f64> = lines
            .map(|l| l.parse::<f64>().map_err(|_| bad("non-numeric line")))
            .collect::<Result<_>>()?;
        if nums.len() != dim + 2 {
            return Err(bad("line count does not match dimension"));
        }
        if !(nums[dim + 1] > 0.0) {
            return Err(bad("margin cost must be positive"));
        }
        Ok(Self {
            weights: DVector::from_column_slice(&nums[..dim]),
            bias: nums[dim],
            margin_cost: nums[dim + 1],
        })
    }
}

fn sign_of(label: Label) -> Option<f64> {
    match label {
        Label::Class1 => Some(1.0),
        Label::Class2 => Some(-1.0),
        Label::Unlabeled => None,
    }
}

/// Label for `fv`: class 1 when `w.x + b >= 0`, class 2 otherwise.
pub fn predict(model: &LinearModel, fv: &FeatureVector) -> Result<Label> {
    let d = model.decision(&fv.values)?;
    Ok(if d >= 0.0 { Label::Class1 } else { Label::Class2 })
}

/// Trains on the labeled vectors in `features` (unlabeled ones are skipped).
pub fn train_classifier(features: &[FeatureVector], margin_cost: f64) -> Result<LinearModel> {
    if !(margin_cost > 0.0) || !margin_cost.is_finite() {
        return Err(Error::ConfigInvalid(format!("margin cost {margin_cost}")));
    }
    let mut xs: Vec<&DVector<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (i, fv) in features.iter().enumerate() {
        if fv.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature(i));
        }
        if let Some(y) = sign_of(fv.label) {
            xs.push(&fv.values);
            ys.push(y);
        }
    }
    if !ys.contains(&1.0) || !ys.contains(&-1.0) {
        return Err(Error::SingleClassInput);
    }
    let d = xs[0].len();
    if let Some(x) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }

    let sol = Smo::new(&xs, &ys, margin_cost).solve()?;
    Ok(LinearModel {
        weights: sol.w,
        bias: sol.b,
        margin_cost,
    })
}

struct Solution {
    w: DVector<f64>,
    b: f64,
}

struct Smo<'a> {
    x: &'a [&'a DVector<f64>],
    y: &'a [f64],
    c: f64,
    alpha: Vec<f64>,
    /// Gradient of `1/2 a^T Q a - e^T a`.
    grad: Vec<f64>,
    diag: Vec<f64>,
}

impl<'a> Smo<'a> {
    fn new(x: &'a [&'a DVector<f64>], y: &'a [f64], c: f64) -> Self {
        let n = y.len();
        Self {
            x,
            y,
            c,
            alpha: vec![0.0; n],
            grad: vec![-1.0; n],
            diag: x.iter().map(|v| v.dot(v)).collect(),
        }
    }

    fn q(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.y[j] * self.x[i].dot(self.x[j])
    }

    fn in_up(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] < self.c) || (self.y[t] < 0.0 && self.alpha[t] > 0.0)
    }

    fn in_low(&self, t: usize) -> bool {
        (self.y[t] < 0.0 && self.alpha[t] < self.c) || (self.y[t] > 0.0 && self.alpha[t] > 0.0)
    }

    /// Second-order working set; `None` once the KKT violation is below tolerance.
    fn select(&self) -> Option<(usize, usize)> {
        let n = self.y.len();
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..n {
            if self.in_up(t) {
                let v = -self.y[t] * self.grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !self.in_low(t) {
                continue;
            }
            let v = -self.y[t] * self.grad[t];
            gmin = gmin.min(v);
            if i == usize::MAX {
                continue;
            }
            let b = gmax - v;
            if b > 0.0 {
                let mut a = self.diag[i] + self.diag[t] - 2.0 * self.y[i] * self.y[t] * self.q(i, t);
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax - gmin < KKT_TOL || i == usize::MAX || j == usize::MAX {
            None
        } else {
            Some((i, j))
        }
    }

    fn step(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let qij = self.q(i, j);
        let (ai, aj) = if self.y[i] != self.y[j] {
            let quad = (self.diag[i] + self.diag[j] + 2.0 * qij).max(TAU);
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = old_i - old_j;
            let (mut ai, mut aj) = (old_i + delta, old_j + delta);
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
            (ai, aj)
        } else {
            let quad = (self.diag[i] + self.diag[j] - 2.0 * qij).max(TAU);
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = old_i + old_j;
            let (mut ai, mut aj) = (old_i - delta, old_j + delta);
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
            (ai, aj)
        };
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..self.y.len() {
            self.grad[t] += self.q(t, i) * di + self.q(t, j) * dj;
        }
    }

    /// Bias from the KKT conditions: mean over free vectors, else the midpoint of the feasible interval.
    fn bias(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut sum, mut free) = (0.0, 0usize);
        for t in 0..self.y.len() {
            let yg = self.y[t] * self.grad[t];
            if self.alpha[t] >= self.c {
                if self.y[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.alpha[t] <= 0.0 {
                if self.y[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
        -rho
    }

    fn solve(mut self) -> Result<Solution> {
        let mut iter = 0;
        while let Some((i, j)) = self.select() {
            if iter >= MAX_ITER {
                return Err(Error::TrainingDidNotConverge(MAX_ITER));
            }
            self.step(i, j);
            iter += 1;
        }

        let d = self.x[0].len();
        let mut w = DVector::zeros(d);
        for (t, x) in self.x.iter().enumerate() {
            if self.alpha[t] != 0.0 {
                w.axpy(self.alpha[t] * self.y[t], x, 1.0);
            }
        }
        let b = self.bias();

        let ww = w.norm_squared();
        let hinge: f64 = self
            .x
            .iter()
            .zip(self.y)
            .map(|(x, y)| (1.0 - y * (w.dot(x) + b)).max(0.0))
            .sum();
        let primal = 0.5 * ww + self.c * hinge;
        let dual = self.alpha.iter().sum::<f64>() - 0.5 * ww;
        if (primal - dual) > GAP_TOL * primal.abs().max(1.0) {
            return Err(Error::TrainingDidNotConverge(iter));
        }
        Ok(Solution { w, b })
    }
}
