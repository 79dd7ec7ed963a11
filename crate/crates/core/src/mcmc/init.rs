//! Chain initialisation: k-means on the pooled cells, thresholded cluster
//! means for `Z`, prior draws for the continuous parameters.

use ndarray::{Array2, Array3, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::dist::{
    clamp_open_unit, sample_beta, sample_dirichlet, sample_gamma, sample_inv_gamma,
    sample_truncnorm_pos,
};
use crate::error::Result;
use crate::missingness::MissingnessCoefficients;
use crate::model::{ExpressionDataset, Hyperparams, ModelState};

use super::updates::update_gamma;

pub const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITER: usize = 100;

/// Result of Lloyd's algorithm.
#[derive(Debug, Clone)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    pub sse: f64,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_once<R: Rng + ?Sized>(points: &Array2<f64>, k: usize, rng: &mut R) -> KMeans {
    let (n, d) = points.dim();
    let mut centers = Array2::<f64>::zeros((k, d));
    // k-means++ seeding
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&points.row(first));
    let mut dist: Vec<f64> = (0..n)
        .map(|p| sq_dist(points.row(p), centers.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (p, &dv) in dist.iter().enumerate() {
                if u < dv {
                    idx = p;
                    break;
                }
                u -= dv;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&points.row(pick));
        for (p, dv) in dist.iter_mut().enumerate() {
            *dv = dv.min(sq_dist(points.row(p), centers.row(c)));
        }
    }

    let mut labels = vec![0usize; n];
    let mut sse = f64::INFINITY;
    for it in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        let mut new_sse = 0.0;
        for p in 0..n {
            let (best, bd) = (0..k)
                .map(|c| (c, sq_dist(points.row(p), centers.row(c))))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            if labels[p] != best {
                labels[p] = best;
                changed = true;
            }
            new_sse += bd;
        }
        sse = new_sse;
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for p in 0..n {
            let mut row = sums.row_mut(labels[p]);
            row += &points.row(p);
            counts[labels[p]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let m = &sums.row(c) / counts[c] as f64;
                centers.row_mut(c).assign(&m);
            }
        }
        if !changed && it > 0 {
            break;
        }
    }
    KMeans {
        labels,
        centers,
        sse,
    }
}

/// Best of `restarts` k-means++ runs by within-cluster sum of squares.
pub fn kmeans<R: Rng + ?Sized>(points: &Array2<f64>, k: usize, restarts: usize, rng: &mut R) -> KMeans {
    assert!(k >= 1 && points.nrows() >= k);
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let km = kmeans_once(points, k, rng);
        if best.as_ref().is_none_or(|b| km.sse < b.sse) {
            best = Some(km);
        }
    }
    best.unwrap()
}

/// Starting value for missing entries of one sample: the vertex of the
/// missingness quadratic when it is concave, otherwise the smallest observed
/// value of the sample.
pub fn missing_start(data: &ExpressionDataset, beta: &MissingnessCoefficients, i: usize) -> f64 {
    if let Some(v) = beta.sample(i).vertex() {
        return v;
    }
    let s = &data.samples[i];
    s.y.iter()
        .zip(s.observed.iter())
        .filter(|(_, &o)| o)
        .map(|(&v, _)| v)
        .fold(f64::INFINITY, f64::min)
        .min(0.0)
}

/// Every parameter drawn from its prior; `lambda` uniform over `1..=K`.
/// Missing entries are filled as in [`init_state`].
pub fn prior_state<R: Rng + ?Sized>(
    data: &ExpressionDataset,
    hyper: &Hyperparams,
    beta: &MissingnessCoefficients,
    rng: &mut R,
) -> ModelState {
    let (inn, jn, kn) = (data.n_samples(), data.n_markers(), hyper.k);
    let alpha = sample_gamma(hyper.a_alpha, hyper.b_alpha, rng);
    let v: Vec<f64> = (0..kn)
        .map(|_| sample_beta(alpha / kn as f64, 1.0, rng))
        .collect();
    let z = Array2::from_shape_fn((jn, kn), |(_, k)| rng.random::<f64>() < v[k]);
    let mut w = Array2::<f64>::zeros((inn, kn));
    for i in 0..inn {
        let d = sample_dirichlet(&vec![hyper.d_w / kn as f64; kn], rng);
        for k in 0..kn {
            w[[i, k]] = d[k];
        }
    }
    let lambda = data
        .samples
        .iter()
        .map(|s| (0..s.n_cells()).map(|_| rng.random_range(1..=kn)).collect())
        .collect();
    let mut st = continuous_from_prior(data, hyper, beta, z, v, alpha, w, lambda, rng);
    update_gamma(&mut st, rng);
    st
}

#[allow(clippy::too_many_arguments)]
fn continuous_from_prior<R: Rng + ?Sized>(
    data: &ExpressionDataset,
    hyper: &Hyperparams,
    beta: &MissingnessCoefficients,
    z: Array2<bool>,
    v: Vec<f64>,
    alpha: f64,
    w: Array2<f64>,
    lambda: Vec<Vec<usize>>,
    rng: &mut R,
) -> ModelState {
    let (inn, jn) = (data.n_samples(), data.n_markers());
    let eps = (0..inn)
        .map(|_| clamp_open_unit(sample_beta(hyper.a_eps, hyper.b_eps, rng)))
        .collect();
    let delta0 = (0..hyper.l0)
        .map(|_| sample_truncnorm_pos(hyper.psi0, hyper.tau2_0, rng))
        .collect();
    let delta1 = (0..hyper.l1)
        .map(|_| sample_truncnorm_pos(hyper.psi1, hyper.tau2_1, rng))
        .collect();
    let sigma2 = (0..inn)
        .map(|_| sample_inv_gamma(hyper.a_sigma, hyper.b_sigma, rng))
        .collect();
    let mut eta0 = Array3::<f64>::zeros((inn, jn, hyper.l0));
    let mut eta1 = Array3::<f64>::zeros((inn, jn, hyper.l1));
    for (eta, a, l) in [
        (&mut eta0, hyper.a_eta0, hyper.l0),
        (&mut eta1, hyper.a_eta1, hyper.l1),
    ] {
        for i in 0..inn {
            for j in 0..jn {
                let d = sample_dirichlet(&vec![a / l as f64; l], rng);
                for (x, p) in d.into_iter().enumerate() {
                    eta[[i, j, x]] = p;
                }
            }
        }
    }
    let y = data
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let start = missing_start(data, beta, i);
            let mut y = s.y.clone();
            for (yv, &o) in y.iter_mut().zip(s.observed.iter()) {
                if !o {
                    *yv = start;
                }
            }
            y
        })
        .collect::<Vec<_>>();
    let gamma = data
        .samples
        .iter()
        .map(|s| Array2::<u8>::zeros((s.n_cells(), jn)))
        .collect();
    ModelState {
        z,
        v,
        alpha,
        w,
        eps,
        lambda,
        gamma,
        delta0,
        delta1,
        sigma2,
        eta0,
        eta1,
        y,
    }
}

/// Initial state for a chain.
///
/// Missing values start at the vertex of each sample's missingness quadratic.
/// Cells of all samples are pooled and clustered by k-means into `K` groups;
/// the labels give `lambda`, thresholding each cluster's mean expression at
/// zero gives `Z`, and per-sample cluster frequencies give `w`. A sample with
/// fewer than `K` cells gets uniformly random labels instead. Remaining
/// parameters are drawn from their priors and `gamma` from its conditional.
pub fn init_state<R: Rng + ?Sized>(
    data: &ExpressionDataset,
    hyper: &Hyperparams,
    beta: &MissingnessCoefficients,
    rng: &mut R,
) -> Result<ModelState> {
    hyper.validate()?;
    data.validate()?;
    let (inn, jn, kn) = (data.n_samples(), data.n_markers(), hyper.k);
    let alpha = sample_gamma(hyper.a_alpha, hyper.b_alpha, rng);
    let v: Vec<f64> = (0..kn)
        .map(|_| sample_beta(alpha / kn as f64, 1.0, rng))
        .collect();

    let mut st = continuous_from_prior(
        data,
        hyper,
        beta,
        Array2::from_elem((jn, kn), false),
        v,
        alpha,
        Array2::from_elem((inn, kn), 1.0 / kn as f64),
        data.samples.iter().map(|s| vec![1; s.n_cells()]).collect(),
        rng,
    );

    let pooled_from: Vec<usize> = (0..inn).filter(|&i| data.samples[i].n_cells() >= kn).collect();
    let total: usize = pooled_from.iter().map(|&i| data.samples[i].n_cells()).sum();
    let mut means = Array2::<f64>::zeros((kn, jn));
    let mut have_means = false;
    if total >= kn {
        let mut points = Array2::<f64>::zeros((total, jn));
        let mut r = 0;
        for &i in &pooled_from {
            for row in st.y[i].rows() {
                points.row_mut(r).assign(&row);
                r += 1;
            }
        }
        let km = kmeans(&points, kn, KMEANS_RESTARTS, rng);
        let mut r = 0;
        for &i in &pooled_from {
            for n in 0..data.samples[i].n_cells() {
                st.lambda[i][n] = km.labels[r] + 1;
                r += 1;
            }
        }
        means = km.centers;
        have_means = true;
    }
    for i in 0..inn {
        if !pooled_from.contains(&i) {
            let mut labels: Vec<usize> = (0..data.samples[i].n_cells())
                .map(|n| n % kn + 1)
                .collect();
            labels.shuffle(rng);
            st.lambda[i] = labels;
        }
    }
    if !have_means {
        let mut counts = vec![0usize; kn];
        for i in 0..inn {
            for (n, &l) in st.lambda[i].iter().enumerate() {
                let mut row = means.row_mut(l - 1);
                row += &st.y[i].row(n);
                counts[l - 1] += 1;
            }
        }
        for k in 0..kn {
            if counts[k] > 0 {
                means.row_mut(k).mapv_inplace(|x| x / counts[k] as f64);
            }
        }
    }
    for j in 0..jn {
        for k in 0..kn {
            st.z[[j, k]] = means[[k, j]] > 0.0;
        }
    }
    let dk = hyper.d_w / kn as f64;
    for i in 0..inn {
        let nn = st.lambda[i].len() as f64;
        let mut counts = vec![0.0; kn];
        for &l in &st.lambda[i] {
            counts[l - 1] += 1.0;
        }
        for k in 0..kn {
            st.w[[i, k]] = (counts[k] + dk) / (nn + hyper.d_w);
        }
        let s: f64 = st.w.row(i).sum();
        st.w.row_mut(i).mapv_inplace(|x| x / s);
    }
    update_gamma(&mut st, rng);
    Ok(st)
}
