//! Scalar density helpers and the handful of samplers the Gibbs kernels need.
//!
//! Gamma-based draws (Beta, Dirichlet) are generated in log space so that the
//! small concentrations used by the priors (e.g. `d/K`, `a_eta/L`) never
//! produce a zero component from underflow before normalisation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// log N(x | mean, var)
#[inline]
pub fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln()) - 0.5 * d * d / var
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 / (1 + exp(-x))) without overflow.
#[inline]
pub fn ln_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalises log-weights in place into probabilities.
pub fn normalize_log_weights(ws: &mut [f64]) {
    let lse = logsumexp(ws);
    for w in ws.iter_mut() {
        *w = (*w - lse).exp();
    }
}

/// Draws an index with probability proportional to `exp(log_weights)`.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let m = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_weights.iter().map(|w| (w - m).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (k, w) in log_weights.iter().enumerate() {
        let p = (w - m).exp();
        if p > 0.0 {
            last = k;
            if u < p {
                return k;
            }
            u -= p;
        }
    }
    last
}

/// Log of a Gamma(shape, 1) variate.
pub fn ln_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).unwrap().sample(rng);
        g.ln()
    } else {
        // G(a) = G(a + 1) * U^(1/a)
        let g: f64 = Gamma::new(shape + 1.0, 1.0).unwrap().sample(rng);
        let u: f64 = rng.random::<f64>();
        g.ln() + u.max(f64::MIN_POSITIVE).ln() / shape
    }
}

/// Gamma with shape/rate parameterisation.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0 / rate).unwrap().sample(rng);
    g.max(f64::MIN_POSITIVE)
}

/// Inverse-gamma with shape/scale parameterisation (mean scale / (shape - 1)).
pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0 / scale).unwrap().sample(rng);
    1.0 / g.max(f64::MIN_POSITIVE)
}

/// Beta draw kept strictly inside (0, 1).
pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let la = ln_gamma_variate(a, rng);
    let lb = ln_gamma_variate(b, rng);
    let lse = logsumexp(&[la, lb]);
    clamp_open_unit((la - lse).exp())
}

pub fn clamp_open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn sample_dirichlet<R: Rng + ?Sized>(alphas: &[f64], rng: &mut R) -> Vec<f64> {
    let mut logs: Vec<f64> = alphas.iter().map(|&a| ln_gamma_variate(a, rng)).collect();
    normalize_log_weights(&mut logs);
    logs
}

/// Normal(mean, var) truncated to (0, inf).
///
/// Plain rejection when the truncation point is near or below the mean,
/// otherwise Robert's exponential-proposal rejection sampler.
pub fn sample_truncnorm_pos<R: Rng + ?Sized>(mean: f64, var: f64, rng: &mut R) -> f64 {
    let sd = var.sqrt();
    let a = -mean / sd;
    let z = if a < 0.45 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z > a {
                break z;
            }
        }
    } else {
        let rate = 0.5 * (a + (a * a + 4.0).sqrt());
        loop {
            let e: f64 = Exp1.sample(rng);
            let z = a + e / rate;
            let u: f64 = rng.random();
            if u.ln() <= -0.5 * (z - rate) * (z - rate) {
                break z;
            }
        }
    };
    (mean + sd * z).max(f64::MIN_POSITIVE)
}

pub fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent stream for one unit of work, keyed by `(seed, parts...)`.
///
/// Draws depend only on the key, never on scheduling, so data-parallel loops
/// stay bit-reproducible for any thread count.
pub fn stream_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    ChaCha8Rng::seed_from_u64(h)
}
