//! Gibbs / Metropolis-within-Gibbs sampler for the feature allocation model.

mod chain;
mod init;
mod updates;

pub use chain::{complete_loglik, run_chain, run_chain_from, sweep, Draw, PosteriorTrace};
pub use init::{init_state, kmeans, missing_start, prior_state, KMeans, KMEANS_RESTARTS};
pub use updates::*;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Blocks held fixed during a run (debugging and tests).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedParams {
    pub y: bool,
    pub gamma: bool,
    pub delta: bool,
    pub sigma2: bool,
    pub eta: bool,
    pub v: bool,
    pub z: bool,
    pub alpha: bool,
    pub lambda: bool,
    pub w: bool,
    pub eps: bool,
}

impl FixedParams {
    pub const NAMES: [&'static str; 11] = [
        "y", "gamma", "delta", "sigma2", "eta", "v", "z", "alpha", "lambda", "w", "eps",
    ];

    /// Parses a comma-separated list of block names.
    pub fn parse(s: &str) -> Result<Self> {
        let mut f = FixedParams::default();
        for name in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            *f.flag_mut(name)
                .ok_or_else(|| Error::InvalidInput(format!("unknown parameter block '{name}'")))? = true;
        }
        Ok(f)
    }

    fn flag_mut(&mut self, name: &str) -> Option<&mut bool> {
        Some(match name {
            "y" => &mut self.y,
            "gamma" => &mut self.gamma,
            "delta" => &mut self.delta,
            "sigma2" => &mut self.sigma2,
            "eta" => &mut self.eta,
            "v" => &mut self.v,
            "z" | "Z" => &mut self.z,
            "alpha" => &mut self.alpha,
            "lambda" => &mut self.lambda,
            "w" => &mut self.w,
            "eps" | "epsilon" => &mut self.eps,
            _ => return None,
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        let flags = [
            self.y, self.gamma, self.delta, self.sigma2, self.eta, self.v, self.z, self.alpha,
            self.lambda, self.w, self.eps,
        ];
        Self::NAMES
            .iter()
            .zip(flags)
            .filter(|(_, f)| *f)
            .map(|(n, _)| *n)
            .collect()
    }

    /// Everything fixed except the named block.
    pub fn only(name: &str) -> Result<Self> {
        let mut f = FixedParams {
            y: true,
            gamma: true,
            delta: true,
            sigma2: true,
            eta: true,
            v: true,
            z: true,
            alpha: true,
            lambda: true,
            w: true,
            eps: true,
        };
        *f.flag_mut(name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown parameter block '{name}'")))? = false;
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Total iterations including burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Standard deviation of the random-walk proposal for missing values.
    pub proposal_sd: f64,
    pub fixed: FixedParams,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 16_000,
            burn_in: 10_000,
            thin: 2,
            seed: 0,
            proposal_sd: 0.5,
            fixed: FixedParams::default(),
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidInput(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidInput("thinning stride must be at least 1".into()));
        }
        if !(self.proposal_sd > 0.0 && self.proposal_sd.is_finite()) {
            return Err(Error::InvalidInput("proposal sd must be positive".into()));
        }
        Ok(())
    }

    /// Whether iteration `it` (1-based) is retained.
    pub fn keeps(&self, it: usize) -> bool {
        it > self.burn_in && (it - self.burn_in).is_multiple_of(self.thin)
    }

    pub fn n_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}
