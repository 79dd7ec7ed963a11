//! Fit metrics used to choose the number of subpopulations: LPML from
//! conditional predictive ordinates, DIC, and a count of negligible
//! subpopulations.

use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::normal_ln_pdf;
use crate::error::{Error, Result};
use crate::estimate::salso_select;
use crate::mcmc::{Draw, PosteriorTrace};
use crate::missingness::MissingnessCoefficients;
use crate::model::{ExpressionDataset, Hyperparams};

pub const DEFAULT_NEGLIGIBLE_WEIGHT: f64 = 0.01;

/// `ln f(m_{i,n}, y_{i,n} | theta^(b))` for every cell of sample `i`, with
/// the constant `(1 - rho)^m` factor of observed entries dropped.
pub fn cell_logliks(
    draw: &Draw,
    data: &ExpressionDataset,
    hyper: &Hyperparams,
    beta: &MissingnessCoefficients,
    i: usize,
) -> Vec<f64> {
    let s = &data.samples[i];
    let b = beta.sample(i);
    let mut out = vec![0.0; s.n_cells()];
    draw.for_each_cell(data, hyper, i, |n, y, mu, var| {
        let mut ll = 0.0;
        for j in 0..y.len() {
            if !s.observed[[n, j]] {
                ll += b.ln_rho(y[j]);
            }
            ll += normal_ln_pdf(y[j], mu[j], var);
        }
        out[n] = ll;
    });
    out
}

/// Running log-sum-exp.
#[derive(Clone, Copy)]
struct Lse {
    max: f64,
    sum: f64,
}

impl Lse {
    const EMPTY: Lse = Lse {
        max: f64::NEG_INFINITY,
        sum: 0.0,
    };

    fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x == f64::INFINITY || self.max == f64::INFINITY {
            self.max = f64::INFINITY;
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY || self.max == f64::INFINITY {
            self.max
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Log conditional predictive ordinate of every cell, per sample.
pub fn log_cpo(trace: &PosteriorTrace, data: &ExpressionDataset) -> Result<Vec<Vec<f64>>> {
    if trace.draws.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let ln_b = (trace.draws.len() as f64).ln();
    let mut out = Vec::with_capacity(data.n_samples());
    for i in 0..data.n_samples() {
        let nn = data.samples[i].n_cells();
        let acc = trace
            .draws
            .par_iter()
            .fold(
                || vec![Lse::EMPTY; nn],
                |mut acc, d| {
                    for (a, ll) in acc.iter_mut().zip(cell_logliks(d, data, &trace.hyper, &trace.beta, i)) {
                        a.push(-ll);
                    }
                    acc
                },
            )
            .reduce(
                || vec![Lse::EMPTY; nn],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        if y.max == f64::NEG_INFINITY {
                            continue;
                        }
                        if y.max == f64::INFINITY {
                            x.max = f64::INFINITY;
                            continue;
                        }
                        x.push(y.max + y.sum.ln());
                    }
                    a
                },
            );
        let mut cpo = Vec::with_capacity(nn);
        for (n, a) in acc.iter().enumerate() {
            let v = ln_b - a.value();
            if v == f64::NEG_INFINITY || v.is_nan() {
                return Err(Error::ZeroLikelihood { sample: i, cell: n });
            }
            cpo.push(v);
        }
        out.push(cpo);
    }
    Ok(out)
}

/// Log pseudo marginal likelihood, `sum_{i,n} ln CPO_{i,n}`.
pub fn lpml(trace: &PosteriorTrace, data: &ExpressionDataset) -> Result<f64> {
    Ok(log_cpo(trace, data)?.iter().flatten().sum())
}

/// Deviance summaries. `p_d = dbar - d_at_mean` is the statistic used for
/// selecting K; `dic = dbar + p_d` is the conventional criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DicReport {
    pub dbar: f64,
    pub d_at_mean: f64,
    pub p_d: f64,
    pub dic: f64,
}

/// DIC with `theta-bar` made of the posterior means of `mu_{i,n,j}`, of each
/// cell's variance, and of the missing `y`.
pub fn dic(trace: &PosteriorTrace, data: &ExpressionDataset) -> Result<DicReport> {
    if trace.draws.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let hyper = &trace.hyper;
    let beta = &trace.beta;
    let bf = trace.draws.len() as f64;
    let jn = data.n_markers();
    let mut dbar = 0.0;
    let mut d_at_mean = 0.0;
    for i in 0..data.n_samples() {
        let s = &data.samples[i];
        let nn = s.n_cells();
        let zero = || (Array2::<f64>::zeros((nn, jn)), Array2::<f64>::zeros((nn, jn)), vec![0.0; nn], 0.0);
        let (mu_sum, y_sum, var_sum, dev) = trace
            .draws
            .par_iter()
            .fold(zero, |(mut mu_s, mut y_s, mut v_s, mut dev), d| {
                let b = beta.sample(i);
                d.for_each_cell(data, hyper, i, |n, y, mu, var| {
                    let mut ll = 0.0;
                    for j in 0..jn {
                        if !s.observed[[n, j]] {
                            ll += b.ln_rho(y[j]);
                        }
                        ll += normal_ln_pdf(y[j], mu[j], var);
                        mu_s[[n, j]] += mu[j];
                        y_s[[n, j]] += y[j];
                    }
                    v_s[n] += var;
                    dev += -2.0 * ll;
                });
                (mu_s, y_s, v_s, dev)
            })
            .reduce(zero, |a, b| {
                (a.0 + b.0, a.1 + b.1, a.2.iter().zip(b.2).map(|(x, y)| x + y).collect(), a.3 + b.3)
            });
        dbar += dev / bf;
        let b = beta.sample(i);
        for n in 0..nn {
            let var = var_sum[n] / bf;
            for j in 0..jn {
                let y = if s.observed[[n, j]] {
                    s.y[[n, j]]
                } else {
                    y_sum[[n, j]] / bf
                };
                let mut ll = normal_ln_pdf(y, mu_sum[[n, j]] / bf, var);
                if !s.observed[[n, j]] {
                    ll += b.ln_rho(y);
                }
                d_at_mean += -2.0 * ll;
            }
        }
    }
    if !dbar.is_finite() || !d_at_mean.is_finite() {
        return Err(Error::InvalidState("non-finite deviance".into()));
    }
    let p_d = dbar - d_at_mean;
    Ok(DicReport {
        dbar,
        d_at_mean,
        p_d,
        dic: dbar + p_d,
    })
}

/// Counts of subpopulations with weight below the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// `sum_{i,k} 1(w^(b)_{i,k} < threshold)` for each draw.
    pub per_draw: Vec<usize>,
    /// The same count on the per-sample point estimates.
    pub estimate: usize,
}

pub fn count_negligible(w: &[f64], threshold: f64) -> usize {
    w.iter().filter(|&&x| x < threshold).count()
}

pub fn calibration_metric(trace: &PosteriorTrace, threshold: f64) -> Result<Calibration> {
    let est = salso_select(trace)?;
    let per_draw = trace
        .draws
        .iter()
        .map(|d| d.w.iter().filter(|&&x| x < threshold).count())
        .collect();
    let estimate = est.iter().map(|e| count_negligible(&e.w, threshold)).sum();
    Ok(Calibration { per_draw, estimate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KGridRow {
    pub k: usize,
    pub lpml: f64,
    pub dic: DicReport,
    pub negligible: usize,
}

/// One row per fitted K, ascending.
pub fn k_grid_report<'a, I>(fits: I, data: &ExpressionDataset, threshold: f64) -> Result<Vec<KGridRow>>
where
    I: IntoIterator<Item = &'a PosteriorTrace>,
{
    let mut rows = Vec::new();
    for t in fits {
        rows.push(KGridRow {
            k: t.hyper.k,
            lpml: lpml(t, data)?,
            dic: dic(t, data)?,
            negligible: calibration_metric(t, threshold)?.estimate,
        });
    }
    rows.sort_by_key(|r| r.k);
    Ok(rows)
}

pub fn report_csv(rows: &[KGridRow]) -> String {
    let mut s = String::from("K,LPML,DIC_pD,DIC,Dbar,D_at_mean,negligible\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.k, r.lpml, r.dic.p_d, r.dic.dic, r.dic.dbar, r.dic.d_at_mean, r.negligible
        );
    }
    s
}

pub fn report_table(rows: &[KGridRow]) -> String {
    let mut s = format!(
        "{:>4} {:>16} {:>14} {:>16} {:>10}\n",
        "K", "LPML", "DIC (p_D)", "DIC (2Dbar-D)", "negligible"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>4} {:>16.3} {:>14.3} {:>16.3} {:>10}",
            r.k, r.lpml, r.dic.p_d, r.dic.dic, r.negligible
        );
    }
    s
}
