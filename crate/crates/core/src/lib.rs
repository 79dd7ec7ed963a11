//! Bayesian feature allocation model for multi-sample cytometry data with
//! non-ignorable missing values.

pub mod cli;
pub mod compare;
pub mod config;
pub mod dist;
pub mod error;
pub mod estimate;
pub mod io;
pub mod mcmc;
pub mod missingness;
pub mod model;
pub mod selection;
pub mod simulate;
pub mod svg;

pub use error::{Error, Result};
pub use mcmc::{run_chain, ChainConfig, Draw, FixedParams, PosteriorTrace};
pub use missingness::{MissingnessCoefficients, QuadraticLogit, QuantileSpec};
pub use model::{ExpressionDataset, Hyperparams, ModelState, RawDataset, SampleData};
