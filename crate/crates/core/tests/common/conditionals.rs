//! Compares each full conditional the sampler uses against ratios of the
//! oracle joint posterior at random pairs of states that differ in one block.

use cytofam::mcmc::*;
use cytofam::model::ModelState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

pub const BLOCKS: [&str; 11] = [
    "y", "gamma", "delta", "sigma2", "eta", "v", "Z", "alpha", "lambda", "w", "eps",
];

fn random_simplex<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let g: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|x| x / s).collect()
}

/// Returns `(implemented log ratio, oracle log ratio)` for one random pair.
pub fn one_pair(block: &str, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = small_hyper();
    let data = toy_data(&[6, 4], 4, &mut rng);
    let beta = toy_beta(2);
    let mut s = random_state(&data, &h, &mut rng);
    // every sample gets at least one non-noisy cell
    for lam in s.lambda.iter_mut() {
        if lam[0] == 0 {
            lam[0] = 1;
        }
    }
    let inn = data.n_samples();
    let jn = data.n_markers();
    let augmented = matches!(block, "gamma" | "delta" | "sigma2" | "eta");
    let joint = |st: &ModelState| {
        if augmented {
            joint_augmented(st, &data, &h, &beta)
        } else {
            joint_marginal(st, &data, &h, &beta)
        }
    };
    let mut t = s.clone();
    let implemented = match block {
        "y" => {
            let miss: Vec<(usize, usize, usize)> = data
                .samples
                .iter()
                .enumerate()
                .flat_map(|(i, smp)| {
                    smp.observed
                        .indexed_iter()
                        .filter(|(_, &o)| !o)
                        .map(move |((n, j), _)| (i, n, j))
                        .collect::<Vec<_>>()
                })
                .collect();
            assert!(!miss.is_empty(), "toy data has no missing entries");
            let (i, n, j) = miss[rng.random_range(0..miss.len())];
            let to = rng.random_range(-6.0..1.0);
            t.y[i][[n, j]] = to;
            missing_y_log_accept(&s, &h, &beta, i, n, j, s.y[i][[n, j]], to)
        }
        "gamma" => {
            let i = rng.random_range(0..inn);
            let n = (0..s.lambda[i].len()).find(|&n| s.lambda[i][n] > 0).unwrap();
            let j = rng.random_range(0..jn);
            let z = s.z[[j, s.lambda[i][n] - 1]];
            let g2 = rng.random_range(0..h.l(z));
            t.gamma[i][[n, j]] = g2 as u8;
            let lw = gamma_log_weights(&s, i, n, j);
            lw[g2] - lw[s.gamma[i][[n, j]] as usize]
        }
        "delta" => {
            let z = rng.random_bool(0.5);
            let l = rng.random_range(0..h.l(z));
            let d2 = rng.random_range(0.05..2.5);
            let (m, v) = delta_conditional(&s, &h, z, l);
            let d1 = if z { s.delta1[l] } else { s.delta0[l] };
            if z {
                t.delta1[l] = d2;
            } else {
                t.delta0[l] = d2;
            }
            ln_normal(d2, m, v) - ln_normal(d1, m, v)
        }
        "sigma2" => {
            let i = rng.random_range(0..inn);
            let x = rng.random_range(0.1..2.0);
            let (a, b) = sigma2_conditional(&s, &h, i);
            t.sigma2[i] = x;
            ln_inv_gamma_pdf(x, a, b) - ln_inv_gamma_pdf(s.sigma2[i], a, b)
        }
        "eta" => {
            let z = rng.random_bool(0.5);
            let (i, j) = (rng.random_range(0..inn), rng.random_range(0..jn));
            let a = eta_conditional(&s, &h, z, i, j);
            let new = random_simplex(h.l(z), &mut rng);
            let (old, arr) = if z { (&s.eta1, &mut t.eta1) } else { (&s.eta0, &mut t.eta0) };
            let old: Vec<f64> = (0..h.l(z)).map(|l| old[[i, j, l]]).collect();
            for (l, &x) in new.iter().enumerate() {
                arr[[i, j, l]] = x;
            }
            ln_dirichlet_pdf(&new, &a) - ln_dirichlet_pdf(&old, &a)
        }
        "v" => {
            let k = rng.random_range(0..h.k);
            let x = rng.random_range(0.05..0.95);
            let (a, b) = v_conditional(&s, &h, k);
            t.v[k] = x;
            ln_beta_pdf(x, a, b) - ln_beta_pdf(s.v[k], a, b)
        }
        "Z" => {
            let (j, k) = (rng.random_range(0..jn), rng.random_range(0..h.k));
            // Z changes which mixture a component index refers to; keep gamma
            // valid for both so the marginal joint is well defined.
            t.z[[j, k]] = !s.z[[j, k]];
            let o = z_log_odds(&s, j, k);
            if t.z[[j, k]] {
                o
            } else {
                -o
            }
        }
        "alpha" => {
            let x = rng.random_range(0.2..4.0);
            let (a, b) = alpha_conditional(&s, &h).unwrap();
            t.alpha = x;
            ln_gamma_pdf(x, a, b) - ln_gamma_pdf(s.alpha, a, b)
        }
        "lambda" => {
            let i = rng.random_range(0..inn);
            let n = rng.random_range(0..s.lambda[i].len());
            let l2 = rng.random_range(0..=h.k);
            t.lambda[i][n] = l2;
            let lw = lambda_log_weights(&s, &h, i, n);
            lw[l2] - lw[s.lambda[i][n]]
        }
        "w" => {
            let i = rng.random_range(0..inn);
            let a = w_conditional(&s, &h, i);
            let new = random_simplex(h.k, &mut rng);
            for (k, &x) in new.iter().enumerate() {
                t.w[[i, k]] = x;
            }
            ln_dirichlet_pdf(&new, &a) - ln_dirichlet_pdf(&s.w.row(i).to_vec(), &a)
        }
        "eps" => {
            let i = rng.random_range(0..inn);
            let x = rng.random_range(0.01..0.5);
            let (a, b) = epsilon_conditional(&s, &h, i);
            t.eps[i] = x;
            ln_beta_pdf(x, a, b) - ln_beta_pdf(s.eps[i], a, b)
        }
        other => panic!("unknown block {other}"),
    };
    s.validate(&h, &data).unwrap();
    t.validate(&h, &data).unwrap();
    (implemented, joint(&t) - joint(&s))
}

/// Largest absolute discrepancy over `pairs` random pairs.
pub fn max_discrepancy(block: &str, pairs: u64) -> f64 {
    (0..pairs)
        .map(|p| {
            let (a, b) = one_pair(block, 1000 * p + block.len() as u64);
            assert!(a.is_finite() && b.is_finite(), "{block}: non-finite ratio {a} vs {b}");
            (a - b).abs()
        })
        .fold(0.0, f64::max)
}
