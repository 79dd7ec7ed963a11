//! Synthetic datasets with known ground truth.

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::dist::{ln_logistic, sample_dirichlet, stream_rng};
use crate::error::{Error, Result};
use crate::model::{ExpressionDataset, SampleData};

/// Abundances of the first simulation study, `[sample][subpopulation]`.
pub const SIM1_W: [[f64; 5]; 3] = [
    [0.068, 0.163, 0.351, 0.297, 0.118],
    [0.194, 0.282, 0.066, 0.257, 0.199],
    [0.112, 0.141, 0.224, 0.119, 0.402],
];

/// Abundances of the larger simulation study, `[subpopulation][sample]` as tabulated.
pub const SIM2_W: [[f64; 3]; 10] = [
    [0.136, 0.160, 0.033],
    [0.132, 0.021, 0.128],
    [0.111, 0.037, 0.257],
    [0.157, 0.084, 0.110],
    [0.044, 0.183, 0.049],
    [0.046, 0.111, 0.142],
    [0.215, 0.045, 0.142],
    [0.072, 0.109, 0.001],
    [0.018, 0.109, 0.099],
    [0.065, 0.135, 0.035],
];

/// Generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub n_cells: Vec<usize>,
    pub n_markers: usize,
    pub k: usize,
    pub z_prob: f64,
    pub eps: f64,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    /// One per sample.
    pub sigma2: Vec<f64>,
    pub noisy_var: f64,
    /// Upper bound factor on the per-(i,j) missing proportion.
    pub max_missing: f64,
    /// Missingness weight is `1 / (1 + exp(miss_a + miss_b * y))`.
    pub miss_a: f64,
    pub miss_b: f64,
    /// Fixed abundances `[sample][k]` (rows renormalised); random when `None`.
    pub w: Option<Array2<f64>>,
    /// Fixed feature allocation `J x K`; random when `None`.
    pub z: Option<Array2<bool>>,
}

impl SimulationSpec {
    /// First simulation study: I = 3, J = 20, K = 5, N = (4000, 500, 1000).
    pub fn simulation1() -> Self {
        SimulationSpec {
            n_cells: vec![4000, 500, 1000],
            n_markers: 20,
            k: 5,
            z_prob: 0.6,
            eps: 0.05,
            mu0: vec![-1.0, -2.3, -3.5],
            mu1: vec![1.0, 2.0, 3.0],
            sigma2: vec![0.2, 0.1, 0.3],
            noisy_var: 9.0,
            max_missing: 0.7,
            miss_a: 9.2,
            miss_b: 2.3,
            w: None,
            z: None,
        }
    }

    /// Same design at N = (1000, 500, 500).
    pub fn desk() -> Self {
        SimulationSpec {
            n_cells: vec![1000, 500, 500],
            ..Self::simulation1()
        }
    }

    /// Larger study: K = 10, N = (40000, 5000, 10000).
    pub fn simulation2() -> Self {
        SimulationSpec {
            n_cells: vec![40000, 5000, 10000],
            k: 10,
            ..Self::simulation1()
        }
    }

    /// Uses the tabulated abundances of the first study.
    pub fn with_sim1_w(mut self) -> Self {
        self.w = Some(Array2::from_shape_fn((3, 5), |(i, k)| SIM1_W[i][k]));
        self
    }

    /// Uses the tabulated abundances of the larger study.
    pub fn with_sim2_w(mut self) -> Self {
        self.w = Some(Array2::from_shape_fn((3, 10), |(i, k)| SIM2_W[k][i]));
        self
    }

    pub fn n_samples(&self) -> usize {
        self.n_cells.len()
    }

    fn validate(&self) -> Result<()> {
        let inn = self.n_samples();
        if inn == 0 || self.n_markers == 0 || self.k == 0 || self.n_cells.contains(&0) {
            return Err(Error::InvalidInput("empty simulation dimensions".into()));
        }
        if self.sigma2.len() != inn {
            return Err(Error::InvalidInput("need one sigma2 per sample".into()));
        }
        if self.mu0.is_empty() || self.mu1.is_empty() {
            return Err(Error::InvalidInput("mixture locations must be nonempty".into()));
        }
        if let Some(w) = &self.w {
            if w.dim() != (inn, self.k) {
                return Err(Error::InvalidInput("fixed w has the wrong shape".into()));
            }
        }
        if let Some(z) = &self.z {
            if z.dim() != (self.n_markers, self.k) {
                return Err(Error::InvalidInput("fixed Z has the wrong shape".into()));
            }
        }
        Ok(())
    }
}

/// Ground truth behind a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub z: Array2<bool>,
    pub w: Array2<f64>,
    pub eps: Vec<f64>,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// `I x J x L0`
    pub eta0: Array3<f64>,
    /// `I x J x L1`
    pub eta1: Array3<f64>,
    pub lambda: Vec<Vec<usize>>,
    /// `I x J` proportion of cells made missing.
    pub missing_prop: Array2<f64>,
    pub n_cells: Vec<usize>,
    pub noisy_var: f64,
}

fn permuted_dirichlet<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let mut a: Vec<f64> = (1..=k).map(|x| x as f64).collect();
    a.shuffle(rng);
    sample_dirichlet(&a, rng)
}

/// Bernoulli feature allocation redrawn until no row or column is all zero.
pub fn sample_z_no_empty<R: Rng + ?Sized>(j: usize, k: usize, p: f64, rng: &mut R) -> Array2<bool> {
    loop {
        let z = Array2::from_shape_fn((j, k), |_| rng.random::<f64>() < p);
        let rows_ok = z.rows().into_iter().all(|r| r.iter().any(|&x| x));
        let cols_ok = z.columns().into_iter().all(|c| c.iter().any(|&x| x));
        if rows_ok && cols_ok {
            return z;
        }
    }
}

/// Draws `Z`, `w`, `eta` and fixes the remaining constants. `lambda` and the
/// missing proportions are filled by the later generation steps.
pub fn gen_truth<R: Rng + ?Sized>(spec: &SimulationSpec, rng: &mut R) -> Result<SimulationTruth> {
    spec.validate()?;
    let (inn, jn, kn) = (spec.n_samples(), spec.n_markers, spec.k);
    let z = match &spec.z {
        Some(z) => z.clone(),
        None => sample_z_no_empty(jn, kn, spec.z_prob, rng),
    };
    let w = match &spec.w {
        Some(w) => {
            let mut w = w.clone();
            for mut row in w.rows_mut() {
                let s = row.sum();
                row.mapv_inplace(|x| x / s);
            }
            w
        }
        None => {
            let mut w = Array2::zeros((inn, kn));
            for i in 0..inn {
                for (k, x) in permuted_dirichlet(kn, rng).into_iter().enumerate() {
                    w[[i, k]] = x;
                }
            }
            w
        }
    };
    let (l0, l1) = (spec.mu0.len(), spec.mu1.len());
    let mut eta0 = Array3::zeros((inn, jn, l0));
    let mut eta1 = Array3::zeros((inn, jn, l1));
    for i in 0..inn {
        for j in 0..jn {
            for (x, p) in permuted_dirichlet(l0, rng).into_iter().enumerate() {
                eta0[[i, j, x]] = p;
            }
            for (x, p) in permuted_dirichlet(l1, rng).into_iter().enumerate() {
                eta1[[i, j, x]] = p;
            }
        }
    }
    Ok(SimulationTruth {
        z,
        w,
        eps: vec![spec.eps; inn],
        mu0: spec.mu0.clone(),
        mu1: spec.mu1.clone(),
        sigma2: spec.sigma2.clone(),
        eta0,
        eta1,
        lambda: vec![Vec::new(); inn],
        missing_prop: Array2::zeros((inn, jn)),
        n_cells: spec.n_cells.clone(),
        noisy_var: spec.noisy_var,
    })
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (x, &p) in weights.iter().enumerate() {
        acc += p;
        if u < acc {
            return x;
        }
    }
    weights.len() - 1
}

/// Draws `lambda^TR` and fully observed expressions. Sets `truth.lambda`.
pub fn gen_expressions<R: Rng + ?Sized>(truth: &mut SimulationTruth, rng: &mut R) -> Result<ExpressionDataset> {
    let inn = truth.n_cells.len();
    let jn = truth.z.nrows();
    let key: u64 = rng.random();
    let noisy = Normal::new(0.0, truth.noisy_var.sqrt())
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut samples = Vec::with_capacity(inn);
    for i in 0..inn {
        let mut r = stream_rng(key, &[i as u64]);
        let nn = truth.n_cells[i];
        let sd = truth.sigma2[i].sqrt();
        let w: Vec<f64> = truth.w.row(i).to_vec();
        let mut lambda = Vec::with_capacity(nn);
        let mut y = Array2::<f64>::zeros((nn, jn));
        for n in 0..nn {
            let lam = if r.random::<f64>() < truth.eps[i] {
                0
            } else {
                pick(&w, r.random()) + 1
            };
            lambda.push(lam);
            for j in 0..jn {
                y[[n, j]] = if lam == 0 {
                    noisy.sample(&mut r)
                } else {
                    let (eta, mu) = if truth.z[[j, lam - 1]] {
                        (&truth.eta1, &truth.mu1)
                    } else {
                        (&truth.eta0, &truth.mu0)
                    };
                    let comp: Vec<f64> = (0..mu.len()).map(|x| eta[[i, j, x]]).collect();
                    let l = pick(&comp, r.random());
                    mu[l] + sd * crate::dist::sample_std_normal(&mut r)
                };
            }
        }
        truth.lambda[i] = lambda;
        let observed = Array2::from_elem((nn, jn), true);
        samples.push(SampleData::new(y, observed)?);
    }
    let markers = (1..=jn).map(|j| format!("marker{j}")).collect();
    ExpressionDataset::new(markers, samples)
}

/// Indices of the `m` items chosen by weighted sampling without replacement
/// with log-weights `ln_w` (exponential-sort method: keep the `m` smallest
/// `E / w`, `E ~ Exp(1)`).
pub fn weighted_sample_without_replacement<R: Rng + ?Sized>(ln_w: &[f64], m: usize, rng: &mut R) -> Vec<usize> {
    let mut keys: Vec<(f64, usize)> = ln_w
        .iter()
        .enumerate()
        .map(|(n, &lw)| {
            let e: f64 = Exp1.sample(rng);
            (e.ln() - lw, n)
        })
        .collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keys.truncate(m);
    let mut out: Vec<usize> = keys.into_iter().map(|(_, n)| n).collect();
    out.sort_unstable();
    out
}

/// Draws the per-(i,j) missing proportions and the cells that go missing.
/// Lower expression means a larger chance of being missing. Sets
/// `truth.missing_prop` and returns the observation masks.
pub fn gen_missingness<R: Rng + ?Sized>(
    truth: &mut SimulationTruth,
    data: &ExpressionDataset,
    max_missing: f64,
    miss_a: f64,
    miss_b: f64,
    rng: &mut R,
) -> Vec<Array2<bool>> {
    let (inn, jn, kn) = (data.n_samples(), data.n_markers(), truth.z.ncols());
    let key: u64 = rng.random();
    let mut masks = Vec::with_capacity(inn);
    for i in 0..inn {
        let mut r = stream_rng(key, &[i as u64]);
        let s = &data.samples[i];
        let nn = s.n_cells();
        let mut mask = Array2::from_elem((nn, jn), true);
        for j in 0..jn {
            let upper: f64 = max_missing
                * (0..kn)
                    .map(|k| truth.w[[i, k]] * if truth.z[[j, k]] { 0.0 } else { 1.0 })
                    .sum::<f64>();
            let p = if upper > 0.0 { r.random::<f64>() * upper } else { 0.0 };
            truth.missing_prop[[i, j]] = p;
            let m = (p * nn as f64).floor() as usize;
            if m == 0 {
                continue;
            }
            let ln_w: Vec<f64> = (0..nn)
                .map(|n| ln_logistic(-(miss_a + miss_b * s.y[[n, j]])))
                .collect();
            for n in weighted_sample_without_replacement(&ln_w, m, &mut r) {
                mask[[n, j]] = false;
            }
        }
        masks.push(mask);
    }
    masks
}

/// Full pipeline: truth, expressions, missingness.
pub fn simulate<R: Rng + ?Sized>(spec: &SimulationSpec, rng: &mut R) -> Result<(ExpressionDataset, SimulationTruth)> {
    let mut truth = gen_truth(spec, rng)?;
    let complete = gen_expressions(&mut truth, rng)?;
    let masks = gen_missingness(&mut truth, &complete, spec.max_missing, spec.miss_a, spec.miss_b, rng);
    let samples = complete
        .samples
        .into_iter()
        .zip(masks)
        .map(|(s, m)| SampleData::new(s.y, m))
        .collect::<Result<Vec<_>>>()?;
    Ok((ExpressionDataset::new(complete.markers, samples)?, truth))
}

/// The larger study with its tabulated abundances.
pub fn gen_simulation2<R: Rng + ?Sized>(rng: &mut R) -> Result<(ExpressionDataset, SimulationTruth)> {
    simulate(&SimulationSpec::simulation2().with_sim2_w(), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constants_of_first_study() {
        let s = SimulationSpec::simulation1();
        assert_eq!(s.n_cells, vec![4000, 500, 1000]);
        assert_eq!((s.n_markers, s.k, s.n_samples()), (20, 5, 3));
        let t = gen_truth(&s, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(t.mu0, vec![-1.0, -2.3, -3.5]);
        assert_eq!(t.mu1, vec![1.0, 2.0, 3.0]);
        assert_eq!(t.sigma2, vec![0.2, 0.1, 0.3]);
        assert_eq!(t.eps, vec![0.05; 3]);
        for row in t.w.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn second_study_table() {
        assert_eq!(SIM2_W[0], [0.136, 0.160, 0.033]);
        let s = SimulationSpec::simulation2().with_sim2_w();
        assert_eq!(s.k, 10);
        assert_eq!(s.n_cells, vec![40000, 5000, 10000]);
        let t = gen_truth(&s, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for row in t.w.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn z_has_no_empty_rows_or_columns() {
        for seed in 0..10_000u64 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let z = sample_z_no_empty(20, 5, 0.6, &mut r);
            assert!(z.rows().into_iter().all(|row| row.iter().any(|&x| x)));
            assert!(z.columns().into_iter().all(|c| c.iter().any(|&x| x)));
        }
    }

    #[test]
    fn all_noisy_has_variance_nine() {
        let mut spec = SimulationSpec::simulation1();
        spec.n_cells = vec![20_000];
        spec.sigma2 = vec![0.2];
        spec.eps = 1.0;
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let mut t = gen_truth(&spec, &mut r).unwrap();
        let d = gen_expressions(&mut t, &mut r).unwrap();
        let y = &d.samples[0].y;
        let n = y.len() as f64;
        let mean = y.sum() / n;
        let var = y.mapv(|v| (v - mean) * (v - mean)).sum() / (n - 1.0);
        // sd of the sample variance of N(0,9) with n = 400k is ~0.02
        assert!((var - 9.0).abs() < 0.1, "{var}");
        assert!(t.lambda[0].iter().all(|&l| l == 0));
    }

    #[test]
    fn noiseless_single_component() {
        let mut spec = SimulationSpec::simulation1();
        spec.n_cells = vec![50];
        spec.sigma2 = vec![0.0];
        spec.eps = 0.0;
        spec.mu0 = vec![-2.0];
        spec.mu1 = vec![1.5];
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let mut t = gen_truth(&spec, &mut r).unwrap();
        let d = gen_expressions(&mut t, &mut r).unwrap();
        for (n, &l) in t.lambda[0].iter().enumerate() {
            for j in 0..20 {
                let want = if t.z[[j, l - 1]] { 1.5 } else { -2.0 };
                assert_eq!(d.samples[0].y[[n, j]], want);
            }
        }
    }

    #[test]
    fn missing_counts_are_exact_and_bounded() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let (d, t) = simulate(&SimulationSpec::desk(), &mut r).unwrap();
        for (i, s) in d.samples.iter().enumerate() {
            for j in 0..d.n_markers() {
                let miss = s.observed.column(j).iter().filter(|&&o| !o).count();
                let p = t.missing_prop[[i, j]];
                assert_eq!(miss, (p * s.n_cells() as f64).floor() as usize);
                assert!(p <= 0.7);
                let all_expressed = (0..t.z.ncols()).all(|k| t.z[[j, k]]);
                if all_expressed {
                    assert_eq!(p, 0.0);
                }
            }
        }
    }

    #[test]
    fn weighted_sampling_prefers_heavy_items() {
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let ln_w = [0.0, -50.0, 0.0, -50.0];
        for _ in 0..100 {
            assert_eq!(weighted_sample_without_replacement(&ln_w, 2, &mut r), vec![0, 2]);
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let a = simulate(&SimulationSpec::desk(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = simulate(&SimulationSpec::desk(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.1, b.1);
        for (x, y) in a.0.samples.iter().zip(b.0.samples.iter()) {
            assert_eq!(x.observed, y.observed);
            let same = x
                .y
                .iter()
                .zip(y.y.iter())
                .all(|(p, q)| p.to_bits() == q.to_bits());
            assert!(same);
        }
    }
}
