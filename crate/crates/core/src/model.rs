//! Domain types shared by every part of the model: datasets, hyperparameters,
//! the sampler state, and the mixture densities built from them.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::dist::{logsumexp, normal_ln_pdf};
use crate::error::{Error, Result};

/// Raw positive intensities for one sample, with per-marker cutoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    /// `N x J`; entries where `observed` is false are ignored.
    pub values: Array2<f64>,
    pub observed: Array2<bool>,
    pub cutoffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub markers: Vec<String>,
    pub samples: Vec<RawSample>,
}

/// Log-ratio expressions for one sample. Missing entries hold NaN in `y`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleData {
    pub y: Array2<f64>,
    pub observed: Array2<bool>,
}

/// Equality ignores whatever is stored at missing entries.
impl PartialEq for SampleData {
    fn eq(&self, other: &Self) -> bool {
        self.observed == other.observed
            && self
                .y
                .iter()
                .zip(other.y.iter())
                .zip(self.observed.iter())
                .all(|((a, b), &o)| !o || a == b)
    }
}

impl SampleData {
    pub fn new(y: Array2<f64>, observed: Array2<bool>) -> Result<Self> {
        if y.dim() != observed.dim() {
            return Err(Error::InvalidInput("y and mask shapes differ".into()));
        }
        let mut y = y;
        for ((n, j), v) in y.indexed_iter_mut() {
            if observed[[n, j]] {
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "non-finite observed value at cell {n}, marker {j}"
                    )));
                }
            } else {
                *v = f64::NAN;
            }
        }
        Ok(SampleData { y, observed })
    }

    pub fn n_cells(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_missing(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionDataset {
    pub markers: Vec<String>,
    pub samples: Vec<SampleData>,
}

impl ExpressionDataset {
    pub fn new(markers: Vec<String>, samples: Vec<SampleData>) -> Result<Self> {
        let d = ExpressionDataset { markers, samples };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.markers.len();
        if j == 0 {
            return Err(Error::InvalidInput("dataset has no markers".into()));
        }
        if self.samples.is_empty() {
            return Err(Error::InvalidInput("dataset has no samples".into()));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.y.ncols() != j || s.observed.ncols() != j {
                return Err(Error::InvalidInput(format!(
                    "sample {i} has {} markers, expected {j}",
                    s.y.ncols()
                )));
            }
            if s.n_cells() == 0 {
                return Err(Error::InvalidInput(format!("sample {i} has no cells")));
            }
            if s.y.dim() != s.observed.dim() {
                return Err(Error::InvalidInput(format!("sample {i}: mask shape differs")));
            }
            for ((n, m), v) in s.y.indexed_iter() {
                if s.observed[[n, m]] && !v.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "sample {i}: non-finite observed value at cell {n}, marker {m}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn n_markers(&self) -> usize {
        self.markers.len()
    }

    pub fn n_cells(&self) -> Vec<usize> {
        self.samples.iter().map(SampleData::n_cells).collect()
    }
}

/// `y = ln(raw / cutoff)` on every observed entry.
pub fn transform(raw: &RawDataset) -> Result<ExpressionDataset> {
    let j = raw.markers.len();
    let mut samples = Vec::with_capacity(raw.samples.len());
    for (i, s) in raw.samples.iter().enumerate() {
        if s.cutoffs.len() != j {
            return Err(Error::InvalidInput(format!(
                "sample {i} has {} cutoffs, expected {j}",
                s.cutoffs.len()
            )));
        }
        for (m, &c) in s.cutoffs.iter().enumerate() {
            if !(c > 0.0) {
                return Err(Error::NonPositiveCutoff {
                    sample: i,
                    marker: m,
                    value: c,
                });
            }
        }
        let mut y = Array2::from_elem(s.values.dim(), f64::NAN);
        for ((n, m), &v) in s.values.indexed_iter() {
            if !s.observed[[n, m]] {
                continue;
            }
            if !(v > 0.0) {
                return Err(Error::NonPositive {
                    sample: i,
                    cell: n,
                    marker: m,
                    value: v,
                });
            }
            y[[n, m]] = (v / s.cutoffs[m]).ln();
        }
        samples.push(SampleData::new(y, s.observed.clone())?);
    }
    ExpressionDataset::new(raw.markers.clone(), samples)
}

/// What `preprocess` removed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PreprocessReport {
    pub dropped_markers: Vec<String>,
    /// Per sample, original indices of removed cells.
    pub dropped_cells: Vec<Vec<usize>>,
}

/// Marker and cell filtering applied before fitting.
///
/// A marker is dropped when, in every sample, more than `pos_frac` of its
/// cells are positive, or more than `miss_frac` are missing or negative.
/// Afterwards any cell with an observed value below `floor` is dropped.
pub fn preprocess(
    data: &ExpressionDataset,
    pos_frac: f64,
    miss_frac: f64,
    floor: f64,
) -> Result<(ExpressionDataset, PreprocessReport)> {
    if !(pos_frac > 0.0 && pos_frac <= 1.0 && miss_frac > 0.0 && miss_frac <= 1.0) {
        return Err(Error::InvalidInput(
            "pos_frac and miss_frac must lie in (0, 1]".into(),
        ));
    }
    let jn = data.n_markers();
    let mut keep = vec![true; jn];
    for (j, keep_j) in keep.iter_mut().enumerate() {
        let mut all_pos = true;
        let mut all_neg = true;
        for s in &data.samples {
            let n = s.n_cells() as f64;
            let col_y = s.y.column(j);
            let col_m = s.observed.column(j);
            let pos = col_y
                .iter()
                .zip(col_m.iter())
                .filter(|(&v, &o)| o && v > 0.0)
                .count() as f64;
            let neg_or_missing = col_y
                .iter()
                .zip(col_m.iter())
                .filter(|(&v, &o)| !o || v < 0.0)
                .count() as f64;
            all_pos &= pos / n > pos_frac;
            all_neg &= neg_or_missing / n > miss_frac;
        }
        if all_pos || all_neg {
            *keep_j = false;
        }
    }
    let kept: Vec<usize> = (0..jn).filter(|&j| keep[j]).collect();
    if kept.is_empty() {
        return Err(Error::EmptyModel);
    }
    let mut report = PreprocessReport {
        dropped_markers: (0..jn)
            .filter(|&j| !keep[j])
            .map(|j| data.markers[j].clone())
            .collect(),
        dropped_cells: Vec::new(),
    };
    let mut samples = Vec::with_capacity(data.n_samples());
    for s in &data.samples {
        let mut rows = Vec::new();
        let mut dropped = Vec::new();
        for n in 0..s.n_cells() {
            let below = kept
                .iter()
                .any(|&j| s.observed[[n, j]] && s.y[[n, j]] < floor);
            if below {
                dropped.push(n);
            } else {
                rows.push(n);
            }
        }
        if rows.is_empty() {
            return Err(Error::InvalidInput(
                "preprocessing removed every cell of a sample".into(),
            ));
        }
        let y = Array2::from_shape_fn((rows.len(), kept.len()), |(r, c)| s.y[[rows[r], kept[c]]]);
        let o = Array2::from_shape_fn((rows.len(), kept.len()), |(r, c)| {
            s.observed[[rows[r], kept[c]]]
        });
        samples.push(SampleData { y, observed: o });
        report.dropped_cells.push(dropped);
    }
    let markers = kept.iter().map(|&j| data.markers[j].clone()).collect();
    Ok((ExpressionDataset::new(markers, samples)?, report))
}

/// Fixed prior constants. Defaults follow the simulation study settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub k: usize,
    pub l0: usize,
    pub l1: usize,
    pub a_alpha: f64,
    pub b_alpha: f64,
    pub psi0: f64,
    pub tau2_0: f64,
    pub psi1: f64,
    pub tau2_1: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_eta0: f64,
    pub a_eta1: f64,
    pub d_w: f64,
    pub a_eps: f64,
    pub b_eps: f64,
    pub s2_eps: f64,
}

impl Hyperparams {
    pub fn new(k: usize) -> Self {
        Hyperparams {
            k,
            l0: 5,
            l1: 5,
            a_alpha: 0.1,
            b_alpha: 0.1,
            psi0: 1.0,
            tau2_0: 1.0,
            psi1: 1.0,
            tau2_1: 1.0,
            a_sigma: 3.0,
            b_sigma: 2.0,
            a_eta0: 1.0,
            a_eta1: 1.0,
            d_w: 1.0,
            a_eps: 1.0,
            b_eps: 99.0,
            s2_eps: 10.0,
        }
    }

    pub fn l(&self, z: bool) -> usize {
        if z {
            self.l1
        } else {
            self.l0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.l0 == 0 || self.l1 == 0 {
            return Err(Error::InvalidInput("K, L0 and L1 must be positive".into()));
        }
        if self.l0 > u8::MAX as usize || self.l1 > u8::MAX as usize {
            return Err(Error::InvalidInput("L0 and L1 must be at most 255".into()));
        }
        let scalars = [
            ("a_alpha", self.a_alpha),
            ("b_alpha", self.b_alpha),
            ("psi0", self.psi0),
            ("tau2_0", self.tau2_0),
            ("psi1", self.psi1),
            ("tau2_1", self.tau2_1),
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a_eta0", self.a_eta0),
            ("a_eta1", self.a_eta1),
            ("d_w", self.d_w),
            ("a_eps", self.a_eps),
            ("b_eps", self.b_eps),
            ("s2_eps", self.s2_eps),
        ];
        for (name, v) in scalars {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Cumulative locations `mu*_z` from stored positive increments.
///
/// Non-expressed locations are negated so that `0 > mu*_{0,1} > mu*_{0,2} > ...`.
pub fn mu_star(delta: &[f64], z: bool) -> Vec<f64> {
    let sign = if z { 1.0 } else { -1.0 };
    let mut acc = 0.0;
    delta
        .iter()
        .map(|d| {
            acc += d;
            sign * acc
        })
        .collect()
}

/// Full parameter vector of the sampler, including completed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    /// `J x K` feature allocation.
    pub z: Array2<bool>,
    pub v: Vec<f64>,
    pub alpha: f64,
    /// `I x K`, rows on the simplex.
    pub w: Array2<f64>,
    pub eps: Vec<f64>,
    /// Per sample, `0` = noisy cell, `1..=K` = subpopulation.
    pub lambda: Vec<Vec<usize>>,
    /// Per sample `N x J`, zero-based mixture component (meaningful when `lambda > 0`).
    pub gamma: Vec<Array2<u8>>,
    /// Positive increments; locations are `-cumsum(delta0)`.
    pub delta0: Vec<f64>,
    /// Positive increments; locations are `cumsum(delta1)`.
    pub delta1: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// `I x J x L0`
    pub eta0: Array3<f64>,
    /// `I x J x L1`
    pub eta1: Array3<f64>,
    /// Per sample `N x J` completed data: observed values plus current imputations.
    pub y: Vec<Array2<f64>>,
}

impl ModelState {
    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    pub fn j(&self) -> usize {
        self.z.nrows()
    }

    pub fn mu_star0(&self) -> Vec<f64> {
        mu_star(&self.delta0, false)
    }

    pub fn mu_star1(&self) -> Vec<f64> {
        mu_star(&self.delta1, true)
    }

    pub fn eta(&self, z: bool) -> &Array3<f64> {
        if z {
            &self.eta1
        } else {
            &self.eta0
        }
    }

    pub fn delta(&self, z: bool) -> &[f64] {
        if z {
            &self.delta1
        } else {
            &self.delta0
        }
    }

    /// Mean of `y[i, n, j]` implied by `(lambda, Z, gamma, delta)`; 0 for noisy cells.
    pub fn mu(&self, i: usize, n: usize, j: usize) -> f64 {
        let lam = self.lambda[i][n];
        if lam == 0 {
            return 0.0;
        }
        let z = self.z[[j, lam - 1]];
        let g = self.gamma[i][[n, j]] as usize;
        let d = self.delta(z);
        let s: f64 = d[..=g].iter().sum();
        if z {
            s
        } else {
            -s
        }
    }

    /// Checks every structural invariant of the state against `hyper` and `data`.
    pub fn validate(&self, hyper: &Hyperparams, data: &ExpressionDataset) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidState(m));
        let (jn, kn, inn) = (data.n_markers(), hyper.k, data.n_samples());
        if self.z.dim() != (jn, kn) {
            return bad(format!("Z has shape {:?}", self.z.dim()));
        }
        if self.v.len() != kn || self.v.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return bad("v must hold K values in (0,1)".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha = {}", self.alpha));
        }
        if self.w.dim() != (inn, kn) {
            return bad("w shape".into());
        }
        for row in self.w.rows() {
            let s: f64 = row.sum();
            if (s - 1.0).abs() > 1e-10 || row.iter().any(|&x| !(x >= 0.0)) {
                return bad(format!("w row sums to {s}"));
            }
        }
        if self.eps.len() != inn || self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return bad("eps must hold I values in (0,1)".into());
        }
        if self.delta0.len() != hyper.l0 || self.delta1.len() != hyper.l1 {
            return bad("delta lengths".into());
        }
        if self
            .delta0
            .iter()
            .chain(self.delta1.iter())
            .any(|&d| !(d > 0.0 && d.is_finite()))
        {
            return bad("delta must be positive".into());
        }
        if self.sigma2.len() != inn || self.sigma2.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("sigma2 must be positive".into());
        }
        for (eta, l) in [(&self.eta0, hyper.l0), (&self.eta1, hyper.l1)] {
            if eta.dim() != (inn, jn, l) {
                return bad(format!("eta shape {:?}", eta.dim()));
            }
            for i in 0..inn {
                for j in 0..jn {
                    let s: f64 = (0..l).map(|x| eta[[i, j, x]]).sum();
                    if (s - 1.0).abs() > 1e-10 {
                        return bad(format!("eta row ({i},{j}) sums to {s}"));
                    }
                }
            }
        }
        if self.lambda.len() != inn || self.gamma.len() != inn || self.y.len() != inn {
            return bad("per-sample vectors".into());
        }
        for (i, s) in data.samples.iter().enumerate() {
            let nn = s.n_cells();
            if self.lambda[i].len() != nn || self.gamma[i].dim() != (nn, jn) {
                return bad(format!("sample {i} cell counts"));
            }
            if self.y[i].dim() != (nn, jn) {
                return bad(format!("sample {i} y shape"));
            }
            for n in 0..nn {
                let lam = self.lambda[i][n];
                if lam > kn {
                    return bad(format!("lambda[{i}][{n}] = {lam}"));
                }
                for j in 0..jn {
                    let yv = self.y[i][[n, j]];
                    if !yv.is_finite() {
                        return bad(format!("y[{i}][{n},{j}] not finite"));
                    }
                    if s.observed[[n, j]] && yv != s.y[[n, j]] {
                        return bad(format!("observed y[{i}][{n},{j}] was modified"));
                    }
                    if lam > 0 {
                        let l = hyper.l(self.z[[j, lam - 1]]);
                        if self.gamma[i][[n, j]] as usize >= l {
                            return bad(format!("gamma[{i}][{n},{j}] out of range"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// `ln sum_l eta^z_{i,j,l} N(y | mu*_{z,l}, sigma2_i)`.
pub fn ln_mixture_density(
    y: f64,
    z: bool,
    i: usize,
    j: usize,
    state: &ModelState,
    mu_star: &[f64],
) -> f64 {
    let eta = state.eta(z);
    let s2 = state.sigma2[i];
    let mut buf = [0.0f64; 32];
    let l = mu_star.len();
    if l <= buf.len() {
        for (x, b) in buf[..l].iter_mut().enumerate() {
            *b = eta[[i, j, x]].ln() + normal_ln_pdf(y, mu_star[x], s2);
        }
        logsumexp(&buf[..l])
    } else {
        let terms: Vec<f64> = (0..l)
            .map(|x| eta[[i, j, x]].ln() + normal_ln_pdf(y, mu_star[x], s2))
            .collect();
        logsumexp(&terms)
    }
}

/// Density of `y` under the z-mixture of sample `i`, marker `j`.
pub fn mixture_density(
    y: f64,
    z: bool,
    i: usize,
    j: usize,
    state: &ModelState,
    _hyper: &Hyperparams,
) -> f64 {
    let ms = if z { state.mu_star1() } else { state.mu_star0() };
    ln_mixture_density(y, z, i, j, state, &ms).exp()
}

/// Density of `y` for a noisy cell, `N(y | 0, s2_eps)`.
pub fn noisy_density(y: f64, hyper: &Hyperparams) -> f64 {
    normal_ln_pdf(y, 0.0, hyper.s2_eps).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn one_sample_raw(values: Array2<f64>, observed: Array2<bool>, cutoffs: Vec<f64>) -> RawDataset {
        let j = values.ncols();
        RawDataset {
            markers: (0..j).map(|m| format!("m{m}")).collect(),
            samples: vec![RawSample {
                values,
                observed,
                cutoffs,
            }],
        }
    }

    #[test]
    fn transform_ratio_one_is_zero() {
        let raw = one_sample_raw(array![[3.0, std::f64::consts::E * 2.0]], array![[true, true]], vec![3.0, 2.0]);
        let d = transform(&raw).unwrap();
        assert_eq!(d.samples[0].y[[0, 0]], 0.0);
        assert!((d.samples[0].y[[0, 1]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn transform_round_trip_oracle() {
        let raw = one_sample_raw(array![[2.0]], array![[true]], vec![4.0]);
        let d = transform(&raw).unwrap();
        let y = d.samples[0].y[[0, 0]];
        assert!((y + std::f64::consts::LN_2).abs() < 1e-15);
        assert!((y.exp() * 4.0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn transform_marks_missing() {
        let raw = one_sample_raw(array![[2.0, -1.0]], array![[true, false]], vec![1.0, 1.0]);
        let d = transform(&raw).unwrap();
        assert!(!d.samples[0].observed[[0, 1]]);
        assert!(d.samples[0].y[[0, 1]].is_nan());
    }

    #[test]
    fn transform_rejects_nonpositive() {
        let raw = one_sample_raw(array![[1.0, 0.0]], array![[true, true]], vec![1.0, 1.0]);
        match transform(&raw) {
            Err(Error::NonPositive { cell: 0, marker: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        let raw = one_sample_raw(array![[1.0, 1.0]], array![[true, true]], vec![1.0, -2.0]);
        assert!(matches!(transform(&raw), Err(Error::NonPositiveCutoff { marker: 1, .. })));
    }

    fn ds(y: Array2<f64>) -> ExpressionDataset {
        let o = y.mapv(|v| !v.is_nan());
        let j = y.ncols();
        ExpressionDataset::new(
            (0..j).map(|m| format!("m{m}")).collect(),
            vec![SampleData::new(y, o).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn preprocess_drops_always_positive_marker() {
        let d = ds(array![[1.0, -1.0], [2.0, 1.0], [0.5, -2.0]]);
        let (out, rep) = preprocess(&d, 0.9, 1.0, f64::NEG_INFINITY).unwrap();
        assert_eq!(out.markers, vec!["m1".to_string()]);
        assert_eq!(rep.dropped_markers, vec!["m0".to_string()]);
    }

    #[test]
    fn preprocess_drops_cells_below_floor() {
        let d = ds(array![[-7.0, 1.0], [-1.0, -1.0], [1.0, f64::NAN]]);
        let (out, rep) = preprocess(&d, 1.0, 1.0, -6.0).unwrap();
        assert_eq!(out.samples[0].n_cells(), 2);
        assert_eq!(rep.dropped_cells[0], vec![0]);
    }

    #[test]
    fn preprocess_vacuous_thresholds_keep_everything() {
        let d = ds(array![[-7.0, 1.0], [-1.0, -1.0], [1.0, f64::NAN]]);
        let (out, rep) = preprocess(&d, 1.0, 1.0, f64::NEG_INFINITY).unwrap();
        assert_eq!(out, d);
        assert!(rep.dropped_markers.is_empty());
    }

    #[test]
    fn preprocess_all_markers_dropped_is_error() {
        let d = ds(array![[1.0], [2.0]]);
        assert!(matches!(
            preprocess(&d, 0.5, 1.0, f64::NEG_INFINITY),
            Err(Error::EmptyModel)
        ));
    }

    #[test]
    fn mu_star_ordering() {
        let m0 = mu_star(&[0.5, 1.0, 2.0], false);
        assert_eq!(m0, vec![-0.5, -1.5, -3.5]);
        let m1 = mu_star(&[0.5, 1.0], true);
        assert_eq!(m1, vec![0.5, 1.5]);
    }
}
