use std::time::Instant;

use log::{debug, info};
use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::normal_ln_pdf;
use crate::error::{Error, Result};
use crate::missingness::MissingnessCoefficients;
use crate::model::{mu_star, ExpressionDataset, Hyperparams, ModelState};

use super::init::init_state;
use super::updates::*;
use super::ChainConfig;

/// One retained posterior draw.
///
/// Keeps everything the point estimate and the fit metrics need; the means
/// `mu_{i,n,j}` are reconstructed from `(lambda, Z, gamma, delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    pub z: Array2<bool>,
    pub v: Vec<f64>,
    pub alpha: f64,
    pub w: Array2<f64>,
    pub eps: Vec<f64>,
    pub lambda: Vec<Vec<usize>>,
    pub gamma: Vec<Array2<u8>>,
    pub delta0: Vec<f64>,
    pub delta1: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub eta0: Array3<f64>,
    pub eta1: Array3<f64>,
    /// Per sample, imputed values of the missing entries in row-major order.
    pub y_missing: Vec<Vec<f64>>,
    pub loglik: f64,
}

impl Draw {
    pub fn from_state(state: &ModelState, data: &ExpressionDataset, iteration: usize, loglik: f64) -> Self {
        let y_missing = data
            .samples
            .iter()
            .zip(state.y.iter())
            .map(|(s, y)| {
                y.iter()
                    .zip(s.observed.iter())
                    .filter(|(_, &o)| !o)
                    .map(|(&v, _)| v)
                    .collect()
            })
            .collect();
        Draw {
            iteration,
            z: state.z.clone(),
            v: state.v.clone(),
            alpha: state.alpha,
            w: state.w.clone(),
            eps: state.eps.clone(),
            lambda: state.lambda.clone(),
            gamma: state.gamma.clone(),
            delta0: state.delta0.clone(),
            delta1: state.delta1.clone(),
            sigma2: state.sigma2.clone(),
            eta0: state.eta0.clone(),
            eta1: state.eta1.clone(),
            y_missing,
            loglik,
        }
    }

    /// Rebuilds a full state from the draw and the observed data.
    pub fn to_state(&self, data: &ExpressionDataset) -> ModelState {
        let y = data
            .samples
            .iter()
            .zip(self.y_missing.iter())
            .map(|(s, miss)| {
                let mut y = s.y.clone();
                let mut it = miss.iter();
                for (v, &o) in y.iter_mut().zip(s.observed.iter()) {
                    if !o {
                        *v = *it.next().expect("missing count mismatch");
                    }
                }
                y
            })
            .collect();
        ModelState {
            z: self.z.clone(),
            v: self.v.clone(),
            alpha: self.alpha,
            w: self.w.clone(),
            eps: self.eps.clone(),
            lambda: self.lambda.clone(),
            gamma: self.gamma.clone(),
            delta0: self.delta0.clone(),
            delta1: self.delta1.clone(),
            sigma2: self.sigma2.clone(),
            eta0: self.eta0.clone(),
            eta1: self.eta1.clone(),
            y,
        }
    }

    pub fn mu_star(&self) -> [Vec<f64>; 2] {
        [mu_star(&self.delta0, false), mu_star(&self.delta1, true)]
    }

    /// Walks the cells of sample `i`, yielding the completed row together with
    /// the mean and variance the model assigns to each of its entries.
    pub fn for_each_cell<F>(&self, data: &ExpressionDataset, hyper: &Hyperparams, i: usize, mut f: F)
    where
        F: FnMut(usize, &[f64], &[f64], f64),
    {
        let s = &data.samples[i];
        let jn = data.n_markers();
        let ms = self.mu_star();
        let mut miss = self.y_missing[i].iter();
        let mut yrow = vec![0.0; jn];
        let mut murow = vec![0.0; jn];
        for n in 0..s.n_cells() {
            let lam = self.lambda[i][n];
            for j in 0..jn {
                yrow[j] = if s.observed[[n, j]] {
                    s.y[[n, j]]
                } else {
                    *miss.next().expect("missing count mismatch")
                };
                murow[j] = if lam == 0 {
                    0.0
                } else {
                    let z = self.z[[j, lam - 1]];
                    ms[z as usize][self.gamma[i][[n, j]] as usize]
                };
            }
            let var = if lam == 0 { hyper.s2_eps } else { self.sigma2[i] };
            f(n, &yrow, &murow, var);
        }
    }
}

/// Retained draws of one chain plus the inputs needed to interpret them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTrace {
    pub hyper: Hyperparams,
    pub beta: MissingnessCoefficients,
    pub config: ChainConfig,
    pub draws: Vec<Draw>,
    /// Complete-data log-likelihood after every iteration, burn-in included.
    pub loglik: Vec<f64>,
    /// Metropolis acceptance rate of the missing-value updates.
    pub acceptance_rate: f64,
}

impl PosteriorTrace {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// Complete-data log-likelihood `sum ln[rho^(1-m) N(y | mu, s2)]` of a state.
pub fn complete_loglik(
    state: &ModelState,
    data: &ExpressionDataset,
    hyper: &Hyperparams,
    beta: &MissingnessCoefficients,
) -> f64 {
    let ms = [state.mu_star0(), state.mu_star1()];
    let mut total = 0.0;
    for (i, s) in data.samples.iter().enumerate() {
        let b = beta.sample(i);
        for n in 0..s.n_cells() {
            let lam = state.lambda[i][n];
            for j in 0..state.j() {
                let y = state.y[i][[n, j]];
                if !s.observed[[n, j]] {
                    total += b.ln_rho(y);
                }
                total += if lam == 0 {
                    normal_ln_pdf(y, 0.0, hyper.s2_eps)
                } else {
                    let z = state.z[[j, lam - 1]];
                    let mu = ms[z as usize][state.gamma[i][[n, j]] as usize];
                    normal_ln_pdf(y, mu, state.sigma2[i])
                };
            }
        }
    }
    total
}

/// One full sweep in the fixed scan order
/// `y, gamma, delta, sigma2, eta, v, Z, alpha, lambda, w, eps`.
/// Returns the number of accepted missing-value proposals.
pub fn sweep<R: rand::Rng + ?Sized>(
    state: &mut ModelState,
    data: &ExpressionDataset,
    hyper: &Hyperparams,
    beta: &MissingnessCoefficients,
    config: &ChainConfig,
    rng: &mut R,
) -> Result<usize> {
    let fx = &config.fixed;
    let mut accepted = 0;
    if !fx.y {
        accepted = impute_missing_y(state, hyper, data, beta, config.proposal_sd, rng);
    }
    if !fx.gamma {
        update_gamma(state, rng);
    }
    if !fx.delta {
        update_delta(state, hyper, rng);
    }
    if !fx.sigma2 {
        update_sigma2(state, hyper, rng);
    }
    if !fx.eta {
        update_eta(state, hyper, rng);
    }
    if !fx.v {
        update_v(state, hyper, rng);
    }
    let table = (!fx.z || !fx.lambda).then(|| MixtureTable::compute(state));
    if !fx.z {
        update_z_with(state, table.as_ref().unwrap(), rng);
    }
    if !fx.alpha {
        update_alpha(state, hyper, rng)?;
    }
    if !fx.lambda {
        update_lambda_with(state, hyper, table.as_ref().unwrap(), rng);
    }
    if !fx.w {
        update_w(state, hyper, rng);
    }
    if !fx.eps {
        update_epsilon(state, hyper, rng);
    }
    Ok(accepted)
}

/// Initialises from `config.seed` and runs the chain.
pub fn run_chain(
    data: &ExpressionDataset,
    hyper: &Hyperparams,
    beta: &MissingnessCoefficients,
    config: &ChainConfig,
) -> Result<PosteriorTrace> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let state = init_state(data, hyper, beta, &mut rng)?;
    run_chain_from(state, data, hyper, beta, config, &mut rng)
}

/// Runs the chain from a given starting state.
pub fn run_chain_from(
    mut state: ModelState,
    data: &ExpressionDataset,
    hyper: &Hyperparams,
    beta: &MissingnessCoefficients,
    config: &ChainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PosteriorTrace> {
    config.validate()?;
    hyper.validate()?;
    if beta.len() != data.n_samples() {
        return Err(Error::InvalidInput(format!(
            "{} missingness coefficient sets for {} samples",
            beta.len(),
            data.n_samples()
        )));
    }
    state.validate(hyper, data)?;
    let n_missing: usize = data.samples.iter().map(|s| s.n_missing()).sum();
    let mut accepted = 0usize;
    let mut loglik = Vec::with_capacity(config.iterations);
    let mut draws = Vec::new();
    let t0 = Instant::now();
    for it in 1..=config.iterations {
        accepted += sweep(&mut state, data, hyper, beta, config, rng)?;
        let ll = complete_loglik(&state, data, hyper, beta);
        if !ll.is_finite() {
            return Err(Error::NonFinite { iteration: it });
        }
        loglik.push(ll);
        if config.keeps(it) {
            draws.push(Draw::from_state(&state, data, it, ll));
        }
        if it % 500 == 0 {
            debug!("iteration {it}: loglik {ll:.3}, {:.1?}", t0.elapsed());
        }
    }
    info!(
        "K={} chain finished: {} iterations, {} draws, {:.1?}",
        hyper.k,
        config.iterations,
        draws.len(),
        t0.elapsed()
    );
    let proposals = n_missing * config.iterations;
    Ok(PosteriorTrace {
        hyper: hyper.clone(),
        beta: beta.clone(),
        config: config.clone(),
        draws,
        loglik,
        acceptance_rate: if proposals > 0 && !config.fixed.y {
            accepted as f64 / proposals as f64
        } else {
            0.0
        },
    })
}
