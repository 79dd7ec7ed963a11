//! Full-conditional updates.
//!
//! Each block exposes its conditional (distribution parameters or log-weights)
//! separately from the draw, so the conditionals can be checked against the
//! joint posterior without going through the random number generator.
//!
//! Per-cell work (lambda, gamma, missing y) draws one key from the caller's
//! generator and derives an independent stream per cell from it, so the
//! result does not depend on how the cells are scheduled across threads.

use ndarray::{Array2, Array3};
use rand::Rng;
use rayon::prelude::*;

use crate::dist::{logsumexp, 
    clamp_open_unit, normal_ln_pdf, sample_beta, sample_dirichlet, sample_gamma,
    sample_inv_gamma, sample_log_categorical, sample_std_normal, sample_truncnorm_pos,
    stream_rng,
};
use crate::error::{Error, Result};
use crate::missingness::MissingnessCoefficients;
use crate::model::{ln_mixture_density, ExpressionDataset, Hyperparams, ModelState};

const PAR_MIN_CELLS: usize = 256;

/// Per-(i, j, z) constants of the mixture terms, `ln eta + ln N` normaliser,
/// so a term costs one subtraction and a square instead of two logarithms.
pub struct MixtureConsts {
    ms: [Vec<f64>; 2],
    /// `I x J x L_z`
    c: [Array3<f64>; 2],
    /// `1 / (2 sigma2_i)`
    h: Vec<f64>,
}

impl MixtureConsts {
    pub fn new(state: &ModelState) -> Self {
        let ms = [state.mu_star0(), state.mu_star1()];
        let norm: Vec<f64> = state
            .sigma2
            .iter()
            .map(|&s2| -0.5 * (crate::dist::LN_2PI + s2.ln()))
            .collect();
        let c = [false, true].map(|z| {
            let mut c = state.eta(z).mapv(f64::ln);
            for ((i, _, _), x) in c.indexed_iter_mut() {
                *x += norm[i];
            }
            c
        });
        let h = state.sigma2.iter().map(|&s2| 0.5 / s2).collect();
        MixtureConsts { ms, c, h }
    }

    /// Log-weights of the mixture components at `y`.
    #[inline]
    pub fn terms_into(&self, i: usize, j: usize, z: bool, y: f64, out: &mut Vec<f64>) {
        let h = self.h[i];
        let c = self.c[z as usize].slice(ndarray::s![i, j, ..]);
        out.clear();
        out.extend(
            self.ms[z as usize]
                .iter()
                .zip(c.iter())
                .map(|(&m, &c)| c - h * (y - m) * (y - m)),
        );
    }

    #[inline]
    pub fn ln_density(&self, i: usize, j: usize, z: bool, y: f64, buf: &mut Vec<f64>) -> f64 {
        self.terms_into(i, j, z, y, buf);
        logsumexp(buf)
    }
}

/// `ln F^z_{i,j}(y_{i,n,j})` for both `z`, per sample as an `N x J x 2` array.
pub struct MixtureTable {
    ln_f: Vec<Array3<f64>>,
    consts: MixtureConsts,
}

impl MixtureTable {
    pub fn compute(state: &ModelState) -> Self {
        let consts = MixtureConsts::new(state);
        let jn = state.j();
        let ln_f = state
            .y
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let nn = y.nrows();
                let mut t = Array3::<f64>::zeros((nn, jn, 2));
                t.outer_iter_mut()
                    .into_par_iter()
                    .with_min_len(PAR_MIN_CELLS)
                    .enumerate()
                    .for_each_init(Vec::new, |buf, (n, mut row)| {
                        for j in 0..jn {
                            let yv = y[[n, j]];
                            row[[j, 0]] = consts.ln_density(i, j, false, yv, buf);
                            row[[j, 1]] = consts.ln_density(i, j, true, yv, buf);
                        }
                    });
                t
            })
            .collect();
        MixtureTable { ln_f, consts }
    }

    #[inline]
    pub fn get(&self, i: usize, n: usize, j: usize, z: bool) -> f64 {
        self.ln_f[i][[n, j, z as usize]]
    }
}

// ---------------------------------------------------------------- v

/// Beta parameters of `v_k | rest`.
pub fn v_conditional(state: &ModelState, hyper: &Hyperparams, k: usize) -> (f64, f64) {
    let jn = state.j() as f64;
    let s = state.z.column(k).iter().filter(|&&z| z).count() as f64;
    (state.alpha / hyper.k as f64 + s, jn + 1.0 - s)
}

pub fn update_v<R: Rng + ?Sized>(state: &mut ModelState, hyper: &Hyperparams, rng: &mut R) {
    for k in 0..hyper.k {
        let (a, b) = v_conditional(state, hyper, k);
        state.v[k] = sample_beta(a, b, rng);
    }
}

// ---------------------------------------------------------------- Z

/// `ln P(z_jk = 1 | rest) - ln P(z_jk = 0 | rest)`, computed directly.
pub fn z_log_odds(state: &ModelState, j: usize, k: usize) -> f64 {
    let ms = [state.mu_star0(), state.mu_star1()];
    let mut acc = state.v[k].ln() - (1.0 - state.v[k]).ln();
    for (i, lam) in state.lambda.iter().enumerate() {
        for (n, &l) in lam.iter().enumerate() {
            if l == k + 1 {
                let y = state.y[i][[n, j]];
                acc += ln_mixture_density(y, true, i, j, state, &ms[1])
                    - ln_mixture_density(y, false, i, j, state, &ms[0]);
            }
        }
    }
    acc
}

fn z_log_odds_all(state: &ModelState, table: &MixtureTable) -> Array2<f64> {
    let (jn, kn) = state.z.dim();
    let mut odds = Array2::from_shape_fn((jn, kn), |(_, k)| {
        state.v[k].ln() - (1.0 - state.v[k]).ln()
    });
    for (i, lam) in state.lambda.iter().enumerate() {
        for (n, &l) in lam.iter().enumerate() {
            if l == 0 {
                continue;
            }
            for j in 0..jn {
                odds[[j, l - 1]] += table.get(i, n, j, true) - table.get(i, n, j, false);
            }
        }
    }
    odds
}

pub fn update_z_with<R: Rng + ?Sized>(state: &mut ModelState, table: &MixtureTable, rng: &mut R) {
    let odds = z_log_odds_all(state, table);
    for ((j, k), &o) in odds.indexed_iter() {
        let u: f64 = rng.random();
        state.z[[j, k]] = u < crate::dist::logistic(o);
    }
}

pub fn update_z<R: Rng + ?Sized>(state: &mut ModelState, rng: &mut R) {
    let table = MixtureTable::compute(state);
    update_z_with(state, &table, rng);
}

// ---------------------------------------------------------------- alpha

/// Shape and rate of `alpha | rest`.
pub fn alpha_conditional(state: &ModelState, hyper: &Hyperparams) -> Result<(f64, f64)> {
    let mut sum_ln_v = 0.0;
    for &v in &state.v {
        if !(v > 0.0) {
            return Err(Error::InvalidState(format!("v = {v}, log diverges")));
        }
        sum_ln_v += v.ln();
    }
    let kf = hyper.k as f64;
    Ok((hyper.a_alpha + kf, hyper.b_alpha - sum_ln_v / kf))
}

pub fn update_alpha<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<()> {
    let (shape, rate) = alpha_conditional(state, hyper)?;
    state.alpha = sample_gamma(shape, rate, rng);
    Ok(())
}

// ---------------------------------------------------------------- lambda

fn lambda_log_weights_from(
    state: &ModelState,
    hyper: &Hyperparams,
    i: usize,
    n: usize,
    lnf: impl Fn(usize, bool) -> f64,
    out: &mut Vec<f64>,
) {
    let jn = state.j();
    let y = state.y[i].row(n);
    let eps = state.eps[i];
    out.clear();
    let noisy: f64 = y.iter().map(|&v| normal_ln_pdf(v, 0.0, hyper.s2_eps)).sum();
    out.push(eps.ln() + noisy);
    let ln_not_noisy = (1.0 - eps).ln();
    for k in 0..hyper.k {
        let mut s = ln_not_noisy + state.w[[i, k]].ln();
        for j in 0..jn {
            s += lnf(j, state.z[[j, k]]);
        }
        out.push(s);
    }
}

/// Unnormalised log-probabilities of `lambda_{i,n} = 0..=K`.
pub fn lambda_log_weights(state: &ModelState, hyper: &Hyperparams, i: usize, n: usize) -> Vec<f64> {
    let ms = [state.mu_star0(), state.mu_star1()];
    let y = state.y[i].row(n);
    let mut out = Vec::with_capacity(hyper.k + 1);
    lambda_log_weights_from(
        state,
        hyper,
        i,
        n,
        |j, z| ln_mixture_density(y[j], z, i, j, state, &ms[z as usize]),
        &mut out,
    );
    out
}

/// Draws `lambda_{i,n}` with the mixture components marginalised, then
/// `gamma_{i,n,.}` from its conditional given the new label. Together this is
/// an exact draw of the block `(lambda_{i,n}, gamma_{i,n,.})`, which keeps the
/// component indicators consistent with the labels after every sweep.
pub fn update_lambda_with<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &Hyperparams,
    table: &MixtureTable,
    rng: &mut R,
) {
    let key: u64 = rng.random();
    let jn = state.j();
    let mut lambdas = std::mem::take(&mut state.lambda);
    let mut gammas = std::mem::take(&mut state.gamma);
    {
        let st: &ModelState = state;
        for (i, (lam, gam)) in lambdas.iter_mut().zip(gammas.iter_mut()).enumerate() {
            lam.par_iter_mut()
                .zip(gam.outer_iter_mut().into_par_iter())
                .with_min_len(PAR_MIN_CELLS)
                .enumerate()
                .for_each_init(
                    || (Vec::with_capacity(hyper.k + 1), Vec::new()),
                    |(buf, gbuf), (n, (l, mut grow))| {
                        let mut r = stream_rng(key, &[i as u64, n as u64]);
                        lambda_log_weights_from(st, hyper, i, n, |j, z| table.get(i, n, j, z), buf);
                        *l = sample_log_categorical(buf, &mut r);
                        if *l > 0 {
                            for j in 0..jn {
                                let z = st.z[[j, *l - 1]];
                                table.consts.terms_into(i, j, z, st.y[i][[n, j]], gbuf);
                                grow[j] = sample_log_categorical(gbuf, &mut r) as u8;
                            }
                        }
                    },
                );
        }
    }
    state.lambda = lambdas;
    state.gamma = gammas;
}

pub fn update_lambda<R: Rng + ?Sized>(state: &mut ModelState, hyper: &Hyperparams, rng: &mut R) {
    let table = MixtureTable::compute(state);
    update_lambda_with(state, hyper, &table, rng);
}

// ---------------------------------------------------------------- w

/// Dirichlet parameters of `w_i | rest`.
pub fn w_conditional(state: &ModelState, hyper: &Hyperparams, i: usize) -> Vec<f64> {
    let mut a = vec![hyper.d_w / hyper.k as f64; hyper.k];
    for &l in &state.lambda[i] {
        if l > 0 {
            a[l - 1] += 1.0;
        }
    }
    a
}

pub fn update_w<R: Rng + ?Sized>(state: &mut ModelState, hyper: &Hyperparams, rng: &mut R) {
    for i in 0..state.w.nrows() {
        let a = w_conditional(state, hyper, i);
        let draw = sample_dirichlet(&a, rng);
        for (k, x) in draw.into_iter().enumerate() {
            state.w[[i, k]] = x;
        }
    }
}

// ---------------------------------------------------------------- gamma

/// Unnormalised log-probabilities of `gamma_{i,n,j} = 0..L_z` (requires `lambda > 0`).
pub fn gamma_log_weights(state: &ModelState, i: usize, n: usize, j: usize) -> Vec<f64> {
    let lam = state.lambda[i][n];
    assert!(lam > 0, "gamma is only defined for non-noisy cells");
    let z = state.z[[j, lam - 1]];
    let mut out = Vec::new();
    MixtureConsts::new(state).terms_into(i, j, z, state.y[i][[n, j]], &mut out);
    out
}

pub fn update_gamma<R: Rng + ?Sized>(state: &mut ModelState, rng: &mut R) {
    let key: u64 = rng.random();
    let consts = MixtureConsts::new(state);
    let jn = state.j();
    let mut gammas = std::mem::take(&mut state.gamma);
    {
        let st: &ModelState = state;
        for (i, gam) in gammas.iter_mut().enumerate() {
            gam.outer_iter_mut()
                .into_par_iter()
                .with_min_len(PAR_MIN_CELLS)
                .enumerate()
                .for_each_init(Vec::new, |buf, (n, mut grow)| {
                    let lam = st.lambda[i][n];
                    if lam == 0 {
                        return;
                    }
                    let mut r = stream_rng(key, &[i as u64, n as u64]);
                    for j in 0..jn {
                        let z = st.z[[j, lam - 1]];
                        consts.terms_into(i, j, z, st.y[i][[n, j]], buf);
                        grow[j] = sample_log_categorical(buf, &mut r) as u8;
                    }
                });
        }
    }
    state.gamma = gammas;
}

// ---------------------------------------------------------------- delta

/// Per-sample sufficient statistics for the `delta_z` updates:
/// counts and sums of `+-y` by component level.
struct DeltaStats {
    count: Vec<Vec<f64>>,
    sum: Vec<Vec<f64>>,
}

impl DeltaStats {
    fn new(state: &ModelState, z: bool, l: usize) -> Self {
        let inn = state.y.len();
        let mut count = vec![vec![0.0; l]; inn];
        let mut sum = vec![vec![0.0; l]; inn];
        let sign = if z { 1.0 } else { -1.0 };
        for i in 0..inn {
            for (n, &lam) in state.lambda[i].iter().enumerate() {
                if lam == 0 {
                    continue;
                }
                for j in 0..state.j() {
                    if state.z[[j, lam - 1]] == z {
                        let g = state.gamma[i][[n, j]] as usize;
                        count[i][g] += 1.0;
                        sum[i][g] += sign * state.y[i][[n, j]];
                    }
                }
            }
        }
        DeltaStats { count, sum }
    }

    /// Mean and variance of the (untruncated) normal kernel for level `l`.
    fn conditional(&self, delta: &[f64], l: usize, psi: f64, tau2: f64, sigma2: &[f64]) -> (f64, f64) {
        let cum: Vec<f64> = delta
            .iter()
            .scan(0.0, |a, d| {
                *a += d;
                Some(*a)
            })
            .collect();
        let mut prec = 0.0;
        let mut lin = 0.0;
        for (i, s2) in sigma2.iter().enumerate() {
            for g in l..delta.len() {
                let c = self.count[i][g];
                if c == 0.0 {
                    continue;
                }
                // residual sum of y - sum_{r<=g, r!=l} delta_r over entries at level g
                let partial = cum[g] - delta[l];
                prec += c / s2;
                lin += (self.sum[i][g] - c * partial) / s2;
            }
        }
        let denom = 1.0 + tau2 * prec;
        ((psi + tau2 * lin) / denom, tau2 / denom)
    }
}

/// Mean and variance of the truncated-normal conditional of `delta_{z,l}`.
pub fn delta_conditional(state: &ModelState, hyper: &Hyperparams, z: bool, l: usize) -> (f64, f64) {
    let stats = DeltaStats::new(state, z, hyper.l(z));
    let (psi, tau2) = if z {
        (hyper.psi1, hyper.tau2_1)
    } else {
        (hyper.psi0, hyper.tau2_0)
    };
    stats.conditional(state.delta(z), l, psi, tau2, &state.sigma2)
}

pub fn update_delta<R: Rng + ?Sized>(state: &mut ModelState, hyper: &Hyperparams, rng: &mut R) {
    for z in [false, true] {
        let stats = DeltaStats::new(state, z, hyper.l(z));
        let (psi, tau2) = if z {
            (hyper.psi1, hyper.tau2_1)
        } else {
            (hyper.psi0, hyper.tau2_0)
        };
        for l in 0..hyper.l(z) {
            let (m, v) = stats.conditional(state.delta(z), l, psi, tau2, &state.sigma2);
            let d = sample_truncnorm_pos(m, v, rng);
            if z {
                state.delta1[l] = d;
            } else {
                state.delta0[l] = d;
            }
        }
    }
}

// ---------------------------------------------------------------- sigma2

/// Shape and scale of the inverse-gamma conditional of `sigma2_i`.
pub fn sigma2_conditional(state: &ModelState, hyper: &Hyperparams, i: usize) -> (f64, f64) {
    let ms = [state.mu_star0(), state.mu_star1()];
    let mut r = 0usize;
    let mut ss = 0.0;
    for (n, &lam) in state.lambda[i].iter().enumerate() {
        if lam == 0 {
            continue;
        }
        for j in 0..state.j() {
            let z = state.z[[j, lam - 1]];
            let mu = ms[z as usize][state.gamma[i][[n, j]] as usize];
            let d = state.y[i][[n, j]] - mu;
            ss += d * d;
            r += 1;
        }
    }
    (hyper.a_sigma + r as f64 / 2.0, hyper.b_sigma + ss / 2.0)
}

pub fn update_sigma2<R: Rng + ?Sized>(state: &mut ModelState, hyper: &Hyperparams, rng: &mut R) {
    for i in 0..state.sigma2.len() {
        let (a, b) = sigma2_conditional(state, hyper, i);
        state.sigma2[i] = sample_inv_gamma(a, b, rng);
    }
}

// ---------------------------------------------------------------- eta

fn eta_counts(state: &ModelState, hyper: &Hyperparams, z: bool) -> Array3<f64> {
    let (inn, jn) = (state.y.len(), state.j());
    let mut c = Array3::<f64>::zeros((inn, jn, hyper.l(z)));
    for i in 0..inn {
        for (n, &lam) in state.lambda[i].iter().enumerate() {
            if lam == 0 {
                continue;
            }
            for j in 0..jn {
                if state.z[[j, lam - 1]] == z {
                    c[[i, j, state.gamma[i][[n, j]] as usize]] += 1.0;
                }
            }
        }
    }
    c
}

/// Dirichlet parameters of `eta^z_{i,j} | rest` (prior concentration `a/L` per component).
pub fn eta_conditional(state: &ModelState, hyper: &Hyperparams, z: bool, i: usize, j: usize) -> Vec<f64> {
    let (a, l) = if z {
        (hyper.a_eta1, hyper.l1)
    } else {
        (hyper.a_eta0, hyper.l0)
    };
    let mut out = vec![a / l as f64; l];
    for (n, &lam) in state.lambda[i].iter().enumerate() {
        if lam > 0 && state.z[[j, lam - 1]] == z {
            out[state.gamma[i][[n, j]] as usize] += 1.0;
        }
    }
    out
}

pub fn update_eta<R: Rng + ?Sized>(state: &mut ModelState, hyper: &Hyperparams, rng: &mut R) {
    for z in [false, true] {
        let counts = eta_counts(state, hyper, z);
        let (a, l) = if z {
            (hyper.a_eta1, hyper.l1)
        } else {
            (hyper.a_eta0, hyper.l0)
        };
        let prior = a / l as f64;
        let (inn, jn, _) = counts.dim();
        let eta = if z { &mut state.eta1 } else { &mut state.eta0 };
        for i in 0..inn {
            for j in 0..jn {
                let alphas: Vec<f64> = (0..l).map(|x| prior + counts[[i, j, x]]).collect();
                for (x, p) in sample_dirichlet(&alphas, rng).into_iter().enumerate() {
                    eta[[i, j, x]] = p;
                }
            }
        }
    }
}

// ---------------------------------------------------------------- epsilon

/// Beta parameters of `eps_i | rest`.
pub fn epsilon_conditional(state: &ModelState, hyper: &Hyperparams, i: usize) -> (f64, f64) {
    let n0 = state.lambda[i].iter().filter(|&&l| l == 0).count() as f64;
    let n1 = state.lambda[i].len() as f64 - n0;
    (hyper.a_eps + n0, hyper.b_eps + n1)
}

pub fn update_epsilon<R: Rng + ?Sized>(state: &mut ModelState, hyper: &Hyperparams, rng: &mut R) {
    for i in 0..state.eps.len() {
        let (a, b) = epsilon_conditional(state, hyper, i);
        state.eps[i] = clamp_open_unit(sample_beta(a, b, rng));
    }
}

// ---------------------------------------------------------------- missing y

fn missing_y_ln_target_with(
    state: &ModelState,
    hyper: &Hyperparams,
    beta: &MissingnessCoefficients,
    ms: &[Vec<f64>; 2],
    i: usize,
    n: usize,
    j: usize,
    y: f64,
) -> f64 {
    let lam = state.lambda[i][n];
    let lik = if lam == 0 {
        normal_ln_pdf(y, 0.0, hyper.s2_eps)
    } else {
        let z = state.z[[j, lam - 1]];
        ln_mixture_density(y, z, i, j, state, &ms[z as usize])
    };
    beta.sample(i).ln_rho(y) + lik
}

/// Unnormalised log full conditional of a missing `y_{i,n,j}` evaluated at `y`:
/// `ln rho_i(y)` plus the mixture (or noisy-cell) log-density.
pub fn missing_y_ln_target(
    state: &ModelState,
    hyper: &Hyperparams,
    beta: &MissingnessCoefficients,
    i: usize,
    n: usize,
    j: usize,
    y: f64,
) -> f64 {
    let ms = [state.mu_star0(), state.mu_star1()];
    missing_y_ln_target_with(state, hyper, beta, &ms, i, n, j, y)
}

/// Log Metropolis acceptance ratio for moving a missing entry from `from` to `to`.
pub fn missing_y_log_accept(
    state: &ModelState,
    hyper: &Hyperparams,
    beta: &MissingnessCoefficients,
    i: usize,
    n: usize,
    j: usize,
    from: f64,
    to: f64,
) -> f64 {
    if from == to {
        return 0.0;
    }
    missing_y_ln_target(state, hyper, beta, i, n, j, to)
        - missing_y_ln_target(state, hyper, beta, i, n, j, from)
}

/// One random-walk Metropolis step for every missing entry. Returns the
/// number of accepted proposals.
pub fn impute_missing_y<R: Rng + ?Sized>(
    state: &mut ModelState,
    hyper: &Hyperparams,
    data: &ExpressionDataset,
    beta: &MissingnessCoefficients,
    proposal_sd: f64,
    rng: &mut R,
) -> usize {
    let key: u64 = rng.random();
    let ms = [state.mu_star0(), state.mu_star1()];
    let jn = state.j();
    let mut ys = std::mem::take(&mut state.y);
    let mut accepted = 0;
    {
        let st: &ModelState = state;
        for (i, (y, s)) in ys.iter_mut().zip(data.samples.iter()).enumerate() {
            accepted += y
                .outer_iter_mut()
                .into_par_iter()
                .zip(s.observed.outer_iter().into_par_iter())
                .with_min_len(PAR_MIN_CELLS)
                .enumerate()
                .map(|(n, (mut yrow, orow))| {
                    if orow.iter().all(|&o| o) {
                        return 0;
                    }
                    let mut r = stream_rng(key, &[i as u64, n as u64]);
                    let mut acc = 0;
                    for j in 0..jn {
                        if orow[j] {
                            continue;
                        }
                        let cur = yrow[j];
                        let prop = cur + proposal_sd * sample_std_normal(&mut r);
                        let lr = missing_y_ln_target_with(st, hyper, beta, &ms, i, n, j, prop)
                            - missing_y_ln_target_with(st, hyper, beta, &ms, i, n, j, cur);
                        let u: f64 = r.random();
                        if lr >= 0.0 || u.ln() < lr {
                            yrow[j] = prop;
                            acc += 1;
                        }
                    }
                    acc
                })
                .sum::<usize>();
        }
    }
    state.y = ys;
    accepted
}
