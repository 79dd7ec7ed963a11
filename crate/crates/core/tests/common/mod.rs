//! Shared fixtures and an independent joint log posterior built from statrs
//! densities. Nothing here calls into the crate's own density code.

#![allow(dead_code)]

pub mod conditionals;

use cytofam::missingness::{MissingnessCoefficients, QuadraticLogit};
use cytofam::model::{ExpressionDataset, Hyperparams, ModelState, SampleData};
use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist};
use statrs::distribution::{Beta, Continuous, Gamma, InverseGamma, Normal};
use statrs::function::gamma::ln_gamma;

pub fn ln_normal(y: f64, mean: f64, var: f64) -> f64 {
    Normal::new(mean, var.sqrt()).unwrap().ln_pdf(y)
}

pub fn ln_beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    Beta::new(a, b).unwrap().ln_pdf(x)
}

pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, rate).unwrap().ln_pdf(x)
}

/// Inverse gamma with density proportional to `x^(-a-1) exp(-b/x)`.
pub fn ln_inv_gamma_pdf(x: f64, a: f64, b: f64) -> f64 {
    InverseGamma::new(a, b).unwrap().ln_pdf(x)
}

pub fn ln_dirichlet_pdf(x: &[f64], a: &[f64]) -> f64 {
    let sa: f64 = a.iter().sum();
    let mut s = ln_gamma(sa);
    for (&xi, &ai) in x.iter().zip(a) {
        s += (ai - 1.0) * xi.ln() - ln_gamma(ai);
    }
    s
}

pub fn oracle_mu_star(delta: &[f64], positive: bool) -> Vec<f64> {
    let mut out = Vec::new();
    let mut acc = 0.0;
    for d in delta {
        acc += d;
        out.push(if positive { acc } else { -acc });
    }
    out
}

fn ln_rho(b: &QuadraticLogit, y: f64) -> f64 {
    let x = b.b0 + b.b1 * y + b.b2 * y * y;
    -(1.0 + (-x).exp()).ln()
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Prior terms shared by both forms of the joint.
fn ln_prior(s: &ModelState, h: &Hyperparams) -> f64 {
    let kf = h.k as f64;
    let mut lp = ln_gamma_pdf(s.alpha, h.a_alpha, h.b_alpha);
    for k in 0..h.k {
        lp += ln_beta_pdf(s.v[k], s.alpha / kf, 1.0);
        for j in 0..s.z.nrows() {
            lp += if s.z[[j, k]] { s.v[k].ln() } else { (1.0 - s.v[k]).ln() };
        }
    }
    for i in 0..s.w.nrows() {
        lp += ln_dirichlet_pdf(&s.w.row(i).to_vec(), &vec![h.d_w / kf; h.k]);
        lp += ln_beta_pdf(s.eps[i], h.a_eps, h.b_eps);
        lp += ln_inv_gamma_pdf(s.sigma2[i], h.a_sigma, h.b_sigma);
        for j in 0..s.z.nrows() {
            lp += ln_dirichlet_pdf(&s.eta0.slice(ndarray::s![i, j, ..]).to_vec(), &vec![h.a_eta0 / h.l0 as f64; h.l0]);
            lp += ln_dirichlet_pdf(&s.eta1.slice(ndarray::s![i, j, ..]).to_vec(), &vec![h.a_eta1 / h.l1 as f64; h.l1]);
        }
    }
    // truncation constants do not depend on the state
    for &d in &s.delta0 {
        lp += ln_normal(d, h.psi0, h.tau2_0);
    }
    for &d in &s.delta1 {
        lp += ln_normal(d, h.psi1, h.tau2_1);
    }
    lp
}

fn ln_missing(s: &ModelState, data: &ExpressionDataset, beta: &MissingnessCoefficients) -> f64 {
    let mut lp = 0.0;
    for (i, smp) in data.samples.iter().enumerate() {
        for ((n, j), &o) in smp.observed.indexed_iter() {
            if !o {
                lp += ln_rho(&beta.0[i], s.y[i][[n, j]]);
            }
        }
    }
    lp
}

/// Joint log posterior with the mixture components `gamma` summed out.
pub fn joint_marginal(s: &ModelState, data: &ExpressionDataset, h: &Hyperparams, beta: &MissingnessCoefficients) -> f64 {
    let ms = [oracle_mu_star(&s.delta0, false), oracle_mu_star(&s.delta1, true)];
    let mut lp = ln_prior(s, h) + ln_missing(s, data, beta);
    for (i, lam) in s.lambda.iter().enumerate() {
        for (n, &l) in lam.iter().enumerate() {
            if l == 0 {
                lp += s.eps[i].ln();
                for j in 0..s.z.nrows() {
                    lp += ln_normal(s.y[i][[n, j]], 0.0, h.s2_eps);
                }
            } else {
                lp += (1.0 - s.eps[i]).ln() + s.w[[i, l - 1]].ln();
                for j in 0..s.z.nrows() {
                    let z = s.z[[j, l - 1]];
                    let eta = if z { &s.eta1 } else { &s.eta0 };
                    let terms: Vec<f64> = ms[z as usize]
                        .iter()
                        .enumerate()
                        .map(|(c, &m)| eta[[i, j, c]].ln() + ln_normal(s.y[i][[n, j]], m, s.sigma2[i]))
                        .collect();
                    lp += logsumexp(&terms);
                }
            }
        }
    }
    lp
}

/// Joint log posterior including the component indicators `gamma`.
pub fn joint_augmented(s: &ModelState, data: &ExpressionDataset, h: &Hyperparams, beta: &MissingnessCoefficients) -> f64 {
    let ms = [oracle_mu_star(&s.delta0, false), oracle_mu_star(&s.delta1, true)];
    let mut lp = ln_prior(s, h) + ln_missing(s, data, beta);
    for (i, lam) in s.lambda.iter().enumerate() {
        for (n, &l) in lam.iter().enumerate() {
            if l == 0 {
                lp += s.eps[i].ln();
                for j in 0..s.z.nrows() {
                    lp += ln_normal(s.y[i][[n, j]], 0.0, h.s2_eps);
                }
            } else {
                lp += (1.0 - s.eps[i]).ln() + s.w[[i, l - 1]].ln();
                for j in 0..s.z.nrows() {
                    let z = s.z[[j, l - 1]];
                    let g = s.gamma[i][[n, j]] as usize;
                    let eta = if z { &s.eta1 } else { &s.eta0 };
                    lp += eta[[i, j, g]].ln() + ln_normal(s.y[i][[n, j]], ms[z as usize][g], s.sigma2[i]);
                }
            }
        }
    }
    lp
}

pub fn small_hyper() -> Hyperparams {
    let mut h = Hyperparams::new(3);
    h.l0 = 2;
    h.l1 = 3;
    h.a_alpha = 2.0;
    h.b_alpha = 1.5;
    h.b_eps = 9.0;
    h
}

/// Small dataset with a few missing entries.
pub fn toy_data<R: Rng>(n_cells: &[usize], j: usize, rng: &mut R) -> ExpressionDataset {
    let samples = n_cells
        .iter()
        .map(|&n| {
            let y = Array2::from_shape_fn((n, j), |_| rng.random_range(-4.0..3.0));
            let mut observed = Array2::from_elem((n, j), true);
            for ((_, _), o) in observed.indexed_iter_mut() {
                if rng.random::<f64>() < 0.25 {
                    *o = false;
                }
            }
            let y = Array2::from_shape_fn((n, j), |(a, b)| if observed[[a, b]] { y[[a, b]] } else { f64::NAN });
            SampleData::new(y, observed).unwrap()
        })
        .collect();
    let markers = (0..j).map(|x| format!("m{x}")).collect();
    ExpressionDataset::new(markers, samples).unwrap()
}

pub fn toy_beta(inn: usize) -> MissingnessCoefficients {
    MissingnessCoefficients(vec![QuadraticLogit::new(-14.378494381978888, -7.4928582170377505, -0.8879152578157641); inn])
}

fn dirichlet<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let g: Vec<f64> = (0..k).map(|_| GammaDist::new(1.5, 1.0).unwrap().sample(rng) + 1e-3).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|x| x / s).collect()
}

/// A random valid state, not drawn from the prior.
pub fn random_state<R: Rng>(data: &ExpressionDataset, h: &Hyperparams, rng: &mut R) -> ModelState {
    let (inn, jn, kn) = (data.n_samples(), data.n_markers(), h.k);
    let mut w = Array2::zeros((inn, kn));
    let mut eta0 = Array3::zeros((inn, jn, h.l0));
    let mut eta1 = Array3::zeros((inn, jn, h.l1));
    for i in 0..inn {
        for (k, x) in dirichlet(kn, rng).into_iter().enumerate() {
            w[[i, k]] = x;
        }
        for j in 0..jn {
            for (l, x) in dirichlet(h.l0, rng).into_iter().enumerate() {
                eta0[[i, j, l]] = x;
            }
            for (l, x) in dirichlet(h.l1, rng).into_iter().enumerate() {
                eta1[[i, j, l]] = x;
            }
        }
    }
    let lambda: Vec<Vec<usize>> = data
        .samples
        .iter()
        .map(|s| (0..s.n_cells()).map(|_| rng.random_range(0..=kn)).collect())
        .collect();
    let gamma = data
        .samples
        .iter()
        .map(|s| {
            Array2::from_shape_fn((s.n_cells(), jn), |_| rng.random_range(0..h.l0.min(h.l1)) as u8)
        })
        .collect();
    let y = data
        .samples
        .iter()
        .map(|s| {
            Array2::from_shape_fn(s.y.dim(), |(n, j)| {
                if s.observed[[n, j]] {
                    s.y[[n, j]]
                } else {
                    rng.random_range(-5.0..-0.5)
                }
            })
        })
        .collect();
    ModelState {
        z: Array2::from_shape_fn((jn, kn), |_| rng.random_bool(0.5)),
        v: (0..kn).map(|_| rng.random_range(0.05..0.95)).collect(),
        alpha: rng.random_range(0.2..4.0),
        w,
        eps: (0..inn).map(|_| rng.random_range(0.01..0.3)).collect(),
        lambda,
        gamma,
        delta0: (0..h.l0).map(|_| rng.random_range(0.1..2.0)).collect(),
        delta1: (0..h.l1).map(|_| rng.random_range(0.1..2.0)).collect(),
        sigma2: (0..inn).map(|_| rng.random_range(0.1..1.5)).collect(),
        eta0,
        eta1,
        y,
    }
}

pub mod traces {
    use super::*;
    use cytofam::mcmc::{ChainConfig, Draw, PosteriorTrace};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Three cells in one sample, two markers, one missing entry, `b` draws.
    /// Cell 1 is noisy in the first draw.
    pub fn toy_trace(b: usize) -> (ExpressionDataset, PosteriorTrace) {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let y = ndarray::array![[-1.2, 0.4], [f64::NAN, 1.7], [-2.5, -0.3]];
        let observed = ndarray::array![[true, true], [false, true], [true, true]];
        let data = ExpressionDataset::new(vec!["a".into(), "b".into()], vec![SampleData::new(y, observed).unwrap()]).unwrap();
        let mut h = Hyperparams::new(2);
        h.l0 = 2;
        h.l1 = 2;
        let beta = toy_beta(1);
        let mut draws = Vec::new();
        for d in 0..b {
            let mut s = random_state(&data, &h, &mut rng);
            s.lambda[0] = vec![if d == 0 { 0 } else { 1 }, 2, 1];
            s.y[0][[1, 0]] = -2.0 - 0.7 * d as f64;
            draws.push(Draw::from_state(&s, &data, d + 1, 0.0));
        }
        let trace = PosteriorTrace {
            hyper: h,
            beta,
            config: ChainConfig::default(),
            draws,
            loglik: Vec::new(),
            acceptance_rate: 0.0,
        };
        (data, trace)
    }

    /// Per-cell `ln f(m, y | theta_b)` computed entry by entry.
    pub fn oracle_cell_loglik(data: &ExpressionDataset, t: &PosteriorTrace, b: usize) -> Vec<f64> {
        let d = &t.draws[b];
        let s = d.to_state(data);
        let ms = [oracle_mu_star(&d.delta0, false), oracle_mu_star(&d.delta1, true)];
        let smp = &data.samples[0];
        (0..smp.n_cells())
            .map(|n| {
                let lam = d.lambda[0][n];
                let mut ll = 0.0;
                for j in 0..data.n_markers() {
                    let y = s.y[0][[n, j]];
                    if !smp.observed[[n, j]] {
                        ll += ln_rho(&t.beta.0[0], y);
                    }
                    ll += if lam == 0 {
                        ln_normal(y, 0.0, t.hyper.s2_eps)
                    } else {
                        let z = d.z[[j, lam - 1]];
                        ln_normal(y, ms[z as usize][d.gamma[0][[n, j]] as usize], d.sigma2[0])
                    };
                }
                ll
            })
            .collect()
    }

    /// LPML by the harmonic-mean definition in plain arithmetic.
    pub fn oracle_lpml(data: &ExpressionDataset, t: &PosteriorTrace) -> f64 {
        let bn = t.draws.len();
        let per: Vec<Vec<f64>> = (0..bn).map(|b| oracle_cell_loglik(data, t, b)).collect();
        (0..per[0].len())
            .map(|n| {
                let inv: f64 = (0..bn).map(|b| 1.0 / per[b][n].exp()).sum::<f64>() / bn as f64;
                (1.0 / inv).ln()
            })
            .sum()
    }

    /// `(Dbar, D(theta-bar))`.
    pub fn oracle_dic(data: &ExpressionDataset, t: &PosteriorTrace) -> (f64, f64) {
        let bn = t.draws.len() as f64;
        let dbar = (0..t.draws.len())
            .map(|b| -2.0 * oracle_cell_loglik(data, t, b).iter().sum::<f64>())
            .sum::<f64>()
            / bn;
        let smp = &data.samples[0];
        let mut dmean = 0.0;
        for n in 0..smp.n_cells() {
            let var: f64 = t
                .draws
                .iter()
                .map(|d| if d.lambda[0][n] == 0 { t.hyper.s2_eps } else { d.sigma2[0] })
                .sum::<f64>()
                / bn;
            for j in 0..data.n_markers() {
                let mut mu = 0.0;
                let mut y = 0.0;
                for d in &t.draws {
                    let s = d.to_state(data);
                    y += s.y[0][[n, j]];
                    let lam = d.lambda[0][n];
                    if lam > 0 {
                        let z = d.z[[j, lam - 1]];
                        let ms = oracle_mu_star(if z { &d.delta1 } else { &d.delta0 }, z);
                        mu += ms[d.gamma[0][[n, j]] as usize];
                    }
                }
                let (mu, y) = (mu / bn, y / bn);
                let mut ll = ln_normal(y, mu, var);
                if !smp.observed[[n, j]] {
                    ll += ln_rho(&t.beta.0[0], y);
                }
                dmean += -2.0 * ll;
            }
        }
        (dbar, dmean)
    }

    /// Random trace of `b` draws for SALSO checks.
    pub fn random_trace(b: usize, seed: u64) -> PosteriorTrace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (inn, jn, kn) = (rng.random_range(1..4), rng.random_range(2..6), rng.random_range(1..5));
        let h = Hyperparams::new(kn);
        let data = toy_data(&vec![3; inn], jn, &mut rng);
        let mut draws = Vec::new();
        for d in 0..b {
            let mut s = random_state(&data, &h, &mut rng);
            // repeat some draws so ties occur
            if d > 0 && rng.random_bool(0.2) {
                let prev: &Draw = &draws[rng.random_range(0..d)];
                s.z = prev.z.clone();
                s.w = prev.w.clone();
            }
            draws.push(Draw::from_state(&s, &data, d, 0.0));
        }
        PosteriorTrace {
            hyper: h,
            beta: toy_beta(inn),
            config: ChainConfig::default(),
            draws,
            loglik: Vec::new(),
            acceptance_rate: 0.0,
        }
    }

    /// Exhaustive SALSO selection with explicit loops.
    pub fn brute_force_salso(t: &PosteriorTrace) -> Vec<usize> {
        let d0 = &t.draws[0];
        let (inn, jn, kn) = (d0.w.nrows(), d0.z.nrows(), d0.z.ncols());
        let alloc = |d: &Draw, i: usize, p: usize, q: usize| -> f64 {
            (0..kn).filter(|&k| d.z[[p, k]] && d.z[[q, k]]).map(|k| d.w[[i, k]]).sum()
        };
        (0..inn)
            .map(|i| {
                let mut mean = vec![vec![0.0; jn]; jn];
                for d in &t.draws {
                    for p in 0..jn {
                        for q in 0..jn {
                            mean[p][q] += alloc(d, i, p, q);
                        }
                    }
                }
                for row in mean.iter_mut() {
                    for x in row.iter_mut() {
                        *x /= t.draws.len() as f64;
                    }
                }
                let mut best = (f64::INFINITY, 0);
                for (b, d) in t.draws.iter().enumerate() {
                    let mut o = 0.0;
                    for p in 0..jn {
                        for q in 0..jn {
                            o += (alloc(d, i, p, q) - mean[p][q]).powi(2);
                        }
                    }
                    if o < best.0 {
                        best = (o, b);
                    }
                }
                best.1
            })
            .collect()
    }
}
