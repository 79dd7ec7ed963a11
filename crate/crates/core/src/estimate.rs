//! Per-sample point estimates of `(Z, w_i, lambda_i)` chosen among the
//! posterior draws by least-squares distance of weighted pairwise allocation
//! matrices.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::PosteriorTrace;

/// `A[j, j'] = sum_k w_k 1(z_jk = 1) 1(z_j'k = 1)`.
pub fn pairwise_allocation(z: &Array2<bool>, w: &[f64]) -> Array2<f64> {
    let (jn, kn) = z.dim();
    assert_eq!(kn, w.len());
    let mut a = Array2::<f64>::zeros((jn, jn));
    for k in 0..kn {
        let active: Vec<usize> = (0..jn).filter(|&j| z[[j, k]]).collect();
        for &p in &active {
            for &q in &active {
                a[[p, q]] += w[k];
            }
        }
    }
    a
}

/// Posterior mean of the pairwise allocation matrix, one per sample.
pub fn mean_allocation(trace: &PosteriorTrace) -> Result<Vec<Array2<f64>>> {
    let first = trace.draws.first().ok_or(Error::EmptyTrace)?;
    let (inn, jn) = (first.w.nrows(), first.z.nrows());
    let b = trace.draws.len() as f64;
    Ok((0..inn)
        .map(|i| {
            let mut acc = Array2::<f64>::zeros((jn, jn));
            for d in &trace.draws {
                acc += &pairwise_allocation(&d.z, &d.w.row(i).to_vec());
            }
            acc / b
        })
        .collect())
}

/// Point estimate for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEstimate {
    pub sample: usize,
    /// Index into `trace.draws` of the selected draw.
    pub draw: usize,
    pub objective: f64,
    pub z: Array2<bool>,
    pub w: Vec<f64>,
    pub lambda: Vec<usize>,
}

fn sq_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Objective `sum (A^(b) - Abar)^2` of every draw for sample `i`.
pub fn salso_objectives(trace: &PosteriorTrace, mean: &Array2<f64>, i: usize) -> Vec<f64> {
    trace
        .draws
        .par_iter()
        .map(|d| sq_distance(&pairwise_allocation(&d.z, &d.w.row(i).to_vec()), mean))
        .collect()
}

/// For each sample, the draw minimising the squared distance to the mean
/// allocation matrix. Ties go to the earliest draw.
pub fn salso_select(trace: &PosteriorTrace) -> Result<Vec<SampleEstimate>> {
    let means = mean_allocation(trace)?;
    Ok(means
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let obj = salso_objectives(trace, m, i);
            let mut best = 0;
            for (b, &o) in obj.iter().enumerate() {
                if o < obj[best] {
                    best = b;
                }
            }
            let d = &trace.draws[best];
            SampleEstimate {
                sample: i,
                draw: best,
                objective: obj[best],
                z: d.z.clone(),
                w: d.w.row(i).to_vec(),
                lambda: d.lambda[i].clone(),
            }
        })
        .collect())
}

/// Columns with weight at least `min_weight`, weights left as they are.
/// Returns the reduced `Z`, weights, and original column indices.
pub fn filter_columns(z: &Array2<bool>, w: &[f64], min_weight: f64) -> (Array2<bool>, Vec<f64>, Vec<usize>) {
    let keep: Vec<usize> = (0..w.len()).filter(|&k| w[k] >= min_weight).collect();
    let zr = Array2::from_shape_fn((z.nrows(), keep.len()), |(j, c)| z[[j, keep[c]]]);
    let wr = keep.iter().map(|&k| w[k]).collect();
    (zr, wr, keep)
}
