//! Quadratic-logit missingness mechanism
//! `logit rho(y) = b0 + b1 y + b2 y^2`, fixed per sample.

use serde::{Deserialize, Serialize};

use crate::dist::{ln_logistic, logistic, logit};
use crate::error::{Error, Result};
use crate::model::ExpressionDataset;

/// Coefficients of one sample's missingness logit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticLogit {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
}

impl QuadraticLogit {
    pub fn new(b0: f64, b1: f64, b2: f64) -> Self {
        QuadraticLogit { b0, b1, b2 }
    }

    #[inline]
    pub fn logit(&self, y: f64) -> f64 {
        self.b0 + y * (self.b1 + y * self.b2)
    }

    #[inline]
    pub fn rho(&self, y: f64) -> f64 {
        logistic(self.logit(y))
    }

    #[inline]
    pub fn ln_rho(&self, y: f64) -> f64 {
        ln_logistic(self.logit(y))
    }

    /// Location of the logit's extremum, `-b1 / (2 b2)`; `None` unless concave.
    pub fn vertex(&self) -> Option<f64> {
        (self.b2 < 0.0).then(|| -self.b1 / (2.0 * self.b2))
    }
}

/// Per-sample missingness coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessCoefficients(pub Vec<QuadraticLogit>);

impl MissingnessCoefficients {
    pub fn sample(&self, i: usize) -> &QuadraticLogit {
        &self.0[i]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Missingness probability of `y` in sample `i`.
pub fn rho(y: f64, beta: &MissingnessCoefficients, i: usize) -> f64 {
    beta.sample(i).rho(y)
}

/// Quadratic logit passing through three `(y, rho)` anchors.
pub fn solve_beta(anchors: [(f64, f64); 3]) -> Result<QuadraticLogit> {
    for &(y, p) in &anchors {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(p));
        }
        if !y.is_finite() {
            return Err(Error::InvalidInput(format!("anchor y = {y}")));
        }
    }
    let [(y1, p1), (y2, p2), (y3, p3)] = anchors;
    if y1 == y2 || y1 == y3 || y2 == y3 {
        return Err(Error::SingularSystem);
    }
    let (l1, l2, l3) = (logit(p1), logit(p2), logit(p3));
    // Newton divided differences of the interpolating quadratic.
    let d12 = (l2 - l1) / (y2 - y1);
    let d23 = (l3 - l2) / (y3 - y2);
    let b2 = (d23 - d12) / (y3 - y1);
    let b1 = d12 - b2 * (y1 + y2);
    let b0 = l1 - b1 * y1 - b2 * y1 * y1;
    if !(b0.is_finite() && b1.is_finite() && b2.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(QuadraticLogit { b0, b1, b2 })
}

/// Quantile levels and target probabilities for the empirical solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSpec {
    pub q: [f64; 3],
    pub rho: [f64; 3],
}

impl Default for QuantileSpec {
    fn default() -> Self {
        QuantileSpec {
            q: [0.0, 0.25, 0.5],
            rho: [0.05, 0.80, 0.05],
        }
    }
}

impl QuantileSpec {
    /// Mechanism "I" of the sensitivity study.
    pub fn mechanism_i() -> Self {
        QuantileSpec {
            q: [0.0, 0.20, 0.40],
            ..Default::default()
        }
    }

    /// Mechanism "II" of the sensitivity study.
    pub fn mechanism_ii() -> Self {
        QuantileSpec {
            q: [0.0, 0.15, 0.30],
            ..Default::default()
        }
    }
}

/// Linear interpolation between order statistics of sorted `xs` at level `q`.
pub fn quantile_sorted(xs: &[f64], q: f64) -> f64 {
    debug_assert!(!xs.is_empty());
    let h = q.clamp(0.0, 1.0) * (xs.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

/// Anchors at quantiles of the negative observed values of sample `i`.
pub fn empirical_beta(
    data: &ExpressionDataset,
    i: usize,
    spec: &QuantileSpec,
) -> Result<QuadraticLogit> {
    let s = &data.samples[i];
    let mut neg: Vec<f64> = s
        .y
        .iter()
        .zip(s.observed.iter())
        .filter(|(&v, &o)| o && v < 0.0)
        .map(|(&v, _)| v)
        .collect();
    neg.sort_by(|a, b| a.total_cmp(b));
    let mut distinct = neg.clone();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InsufficientData {
            sample: i,
            found: distinct.len(),
        });
    }
    let ys = spec.q.map(|q| quantile_sorted(&neg, q));
    solve_beta([
        (ys[0], spec.rho[0]),
        (ys[1], spec.rho[1]),
        (ys[2], spec.rho[2]),
    ])
}

/// Empirical coefficients for every sample.
pub fn empirical_betas(data: &ExpressionDataset, spec: &QuantileSpec) -> Result<MissingnessCoefficients> {
    (0..data.n_samples())
        .map(|i| empirical_beta(data, i, spec))
        .collect::<Result<Vec<_>>>()
        .map(MissingnessCoefficients)
}
