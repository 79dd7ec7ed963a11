//! Run configuration in a flat `key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma
//! separated. Every key can also be given on the command line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mcmc::{ChainConfig, FixedParams};
use crate::missingness::{empirical_betas, solve_beta, MissingnessCoefficients, QuadraticLogit, QuantileSpec};
use crate::model::{ExpressionDataset, Hyperparams};

#[derive(Debug, Clone, PartialEq)]
pub enum MissingnessSpec {
    /// Anchors placed at empirical quantiles of each sample's negative values.
    Quantile(QuantileSpec),
    /// The same three `(y, rho)` anchors for every sample.
    Anchors([(f64, f64); 3]),
    /// Explicit coefficients, one triple per sample.
    Beta(Vec<QuadraticLogit>),
}

impl MissingnessSpec {
    pub fn resolve(&self, data: &ExpressionDataset) -> Result<MissingnessCoefficients> {
        match self {
            MissingnessSpec::Quantile(q) => empirical_betas(data, q),
            MissingnessSpec::Anchors(a) => {
                let b = solve_beta(*a)?;
                Ok(MissingnessCoefficients(vec![b; data.n_samples()]))
            }
            MissingnessSpec::Beta(b) => {
                if b.len() != data.n_samples() {
                    return Err(Error::InvalidInput(format!(
                        "{} coefficient triples for {} samples",
                        b.len(),
                        data.n_samples()
                    )));
                }
                Ok(MissingnessCoefficients(b.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Vec<PathBuf>,
    pub cutoffs: Option<PathBuf>,
    pub k_grid: Vec<usize>,
    pub hyper_overrides: Vec<(String, f64)>,
    pub chain: ChainConfig,
    pub missingness: MissingnessSpec,
    pub pos_frac: f64,
    pub miss_frac: f64,
    pub floor: f64,
    pub negligible: f64,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: Vec::new(),
            cutoffs: None,
            k_grid: vec![5],
            hyper_overrides: Vec::new(),
            chain: ChainConfig::default(),
            missingness: MissingnessSpec::Quantile(QuantileSpec::default()),
            pos_frac: 1.0,
            miss_frac: 1.0,
            floor: f64::NEG_INFINITY,
            negligible: 0.01,
            output: PathBuf::from("out"),
        }
    }
}

const HYPER_KEYS: [&str; 16] = [
    "l0", "l1", "a_alpha", "b_alpha", "psi0", "tau2_0", "psi1", "tau2_1", "a_sigma", "b_sigma", "a_eta0",
    "a_eta1", "d_w", "a_eps", "b_eps", "s2_eps",
];

fn triple(v: &str, sep: char) -> Result<[f64; 3]> {
    let xs: Vec<f64> = v
        .split(sep)
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidInput(format!("'{v}' is not a list of numbers")))?;
    <[f64; 3]>::try_from(xs).map_err(|_| Error::InvalidInput(format!("'{v}' needs exactly three numbers")))
}

fn one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidInput(format!("bad value '{v}' for {key}")))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one key. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "data" => {
                self.data = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "cutoffs" => self.cutoffs = (!v.is_empty()).then(|| PathBuf::from(v)),
            "k" => self.k_grid = vec![one(key, v)?],
            "k_grid" => {
                self.k_grid = if let Some((a, b)) = v.split_once("..") {
                    let (a, b): (usize, usize) = (one(key, a.trim())?, one(key, b.trim())?);
                    (a..=b).collect()
                } else {
                    v.split(',').map(|t| one(key, t.trim())).collect::<Result<_>>()?
                }
            }
            "iterations" => self.chain.iterations = one(key, v)?,
            "burn_in" => self.chain.burn_in = one(key, v)?,
            "thin" => self.chain.thin = one(key, v)?,
            "seed" => self.chain.seed = one(key, v)?,
            "proposal_sd" => self.chain.proposal_sd = one(key, v)?,
            "fixed" => self.chain.fixed = FixedParams::parse(v)?,
            "missingness" => {
                self.missingness = match v {
                    "quantile" | "mm0" => MissingnessSpec::Quantile(QuantileSpec::default()),
                    "mm1" => MissingnessSpec::Quantile(QuantileSpec::mechanism_i()),
                    "mm2" => MissingnessSpec::Quantile(QuantileSpec::mechanism_ii()),
                    _ => return Err(Error::InvalidInput(format!("unknown missingness '{v}'"))),
                }
            }
            "quantile_q" | "quantile_rho" => {
                let mut q = match &self.missingness {
                    MissingnessSpec::Quantile(q) => *q,
                    _ => QuantileSpec::default(),
                };
                let t = triple(v, ',')?;
                if key == "quantile_q" {
                    q.q = t;
                } else {
                    q.rho = t;
                }
                self.missingness = MissingnessSpec::Quantile(q);
            }
            "anchors" => {
                let pts: Vec<[f64; 2]> = v
                    .split(',')
                    .map(|p| {
                        let (a, b) = p
                            .split_once(':')
                            .ok_or_else(|| Error::InvalidInput(format!("anchor '{p}' is not y:rho")))?;
                        Ok([one::<f64>(key, a.trim())?, one::<f64>(key, b.trim())?])
                    })
                    .collect::<Result<_>>()?;
                if pts.len() != 3 {
                    return Err(Error::InvalidInput("anchors needs exactly three y:rho pairs".into()));
                }
                self.missingness =
                    MissingnessSpec::Anchors([(pts[0][0], pts[0][1]), (pts[1][0], pts[1][1]), (pts[2][0], pts[2][1])]);
            }
            "beta" => {
                let b = v
                    .split(';')
                    .map(|t| triple(t, ':').map(|[b0, b1, b2]| QuadraticLogit::new(b0, b1, b2)))
                    .collect::<Result<_>>()?;
                self.missingness = MissingnessSpec::Beta(b);
            }
            "pos_frac" => self.pos_frac = one(key, v)?,
            "miss_frac" => self.miss_frac = one(key, v)?,
            "floor" => self.floor = one(key, v)?,
            "negligible" => self.negligible = one(key, v)?,
            "output" => self.output = PathBuf::from(v),
            k if HYPER_KEYS.contains(&k) => {
                let x: f64 = one(key, v)?;
                self.hyper_overrides.retain(|(n, _)| n != k);
                self.hyper_overrides.push((k.to_string(), x));
            }
            _ => return Err(Error::InvalidInput(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a `key=value` assignment.
    pub fn assign(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("'{kv}' is not key=value")))?;
        self.set(k.trim(), v)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut c = RunConfig::default();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            c.assign(line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: ln + 1,
                msg: match e {
                    Error::InvalidInput(m) => m,
                    other => other.to_string(),
                },
            })?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: format!("cannot read: {e}"),
        })?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_grid.is_empty() {
            return Err(Error::InvalidInput("K grid is empty".into()));
        }
        if self.k_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("K grid must be strictly increasing".into()));
        }
        if self.k_grid[0] == 0 {
            return Err(Error::InvalidInput("K must be positive".into()));
        }
        self.chain.validate()?;
        for k in &self.k_grid {
            self.hyper(*k)?.validate()?;
        }
        Ok(())
    }

    /// Hyperparameters for a given K with the overrides applied.
    pub fn hyper(&self, k: usize) -> Result<Hyperparams> {
        let mut h = Hyperparams::new(k);
        for (name, v) in &self.hyper_overrides {
            let v = *v;
            let count = || -> Result<usize> {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::InvalidInput(format!("{name} must be a positive integer")))
                }
            };
            match name.as_str() {
                "l0" => h.l0 = count()?,
                "l1" => h.l1 = count()?,
                "a_alpha" => h.a_alpha = v,
                "b_alpha" => h.b_alpha = v,
                "psi0" => h.psi0 = v,
                "tau2_0" => h.tau2_0 = v,
                "psi1" => h.psi1 = v,
                "tau2_1" => h.tau2_1 = v,
                "a_sigma" => h.a_sigma = v,
                "b_sigma" => h.b_sigma = v,
                "a_eta0" => h.a_eta0 = v,
                "a_eta1" => h.a_eta1 = v,
                "d_w" => h.d_w = v,
                "a_eps" => h.a_eps = v,
                "b_eps" => h.b_eps = v,
                "s2_eps" => h.s2_eps = v,
                _ => unreachable!("keys are checked on assignment"),
            }
        }
        Ok(h)
    }

    /// The configuration as text that parses back to the same value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let paths: Vec<String> = self.data.iter().map(|p| p.display().to_string()).collect();
        let _ = writeln!(s, "data = {}", paths.join(","));
        if let Some(c) = &self.cutoffs {
            let _ = writeln!(s, "cutoffs = {}", c.display());
        }
        let _ = writeln!(s, "k_grid = {}", join(&self.k_grid));
        let _ = writeln!(s, "iterations = {}", self.chain.iterations);
        let _ = writeln!(s, "burn_in = {}", self.chain.burn_in);
        let _ = writeln!(s, "thin = {}", self.chain.thin);
        let _ = writeln!(s, "seed = {}", self.chain.seed);
        let _ = writeln!(s, "proposal_sd = {}", self.chain.proposal_sd);
        let fixed = self.chain.fixed.names();
        if !fixed.is_empty() {
            let _ = writeln!(s, "fixed = {}", fixed.join(","));
        }
        match &self.missingness {
            MissingnessSpec::Quantile(q) => {
                let _ = writeln!(s, "quantile_q = {}", join(&q.q));
                let _ = writeln!(s, "quantile_rho = {}", join(&q.rho));
            }
            MissingnessSpec::Anchors(a) => {
                let pts: Vec<String> = a.iter().map(|(y, r)| format!("{y}:{r}")).collect();
                let _ = writeln!(s, "anchors = {}", pts.join(","));
            }
            MissingnessSpec::Beta(b) => {
                let t: Vec<String> = b.iter().map(|b| format!("{}:{}:{}", b.b0, b.b1, b.b2)).collect();
                let _ = writeln!(s, "beta = {}", t.join(";"));
            }
        }
        let _ = writeln!(s, "pos_frac = {}", self.pos_frac);
        let _ = writeln!(s, "miss_frac = {}", self.miss_frac);
        let _ = writeln!(s, "floor = {}", self.floor);
        let _ = writeln!(s, "negligible = {}", self.negligible);
        for (k, v) in &self.hyper_overrides {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "output = {}", self.output.display());
        s
    }
}
