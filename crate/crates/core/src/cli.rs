//! Command-line front end and the pipelines behind each subcommand.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimate::{salso_select, SampleEstimate};
use crate::io::{self, FitOutput, Manifest};
use crate::mcmc::run_chain;
use crate::model::{preprocess, ExpressionDataset};
use crate::selection::{k_grid_report, report_csv, report_table, KGridRow};
use crate::simulate::{simulate, SimulationSpec, SimulationTruth};
use crate::svg;

#[derive(Parser, Debug)]
#[command(name = "cytofam", version, about = "Bayesian feature allocation model for cytometry data")]
pub struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a simulated dataset with its ground truth.
    Simulate(SimulateArgs),
    /// Fit the model for one K.
    Fit(RunArgs),
    /// Fit every K of a grid and compare them.
    SelectK(RunArgs),
    /// Point estimates and figures from a saved trace.
    Estimate(EstimateArgs),
    /// Fit metrics of one or more saved traces.
    Report(ReportArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Design {
    /// N = (4000, 500, 1000), K = 5
    Sim1,
    /// N = (1000, 500, 500), K = 5
    Desk,
    /// N = (40000, 5000, 10000), K = 10
    Sim2,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "sim1")]
    pub design: Design,
    /// Use the tabulated abundances instead of random ones.
    #[arg(long)]
    pub tabulated_w: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sim")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// Configuration file with key = value lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra key=value settings, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Sample CSV files, one per sample.
    #[arg(long = "data", num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub cutoffs: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// K values, e.g. "2..8" or "3,5,7".
    #[arg(long)]
    pub k_grid: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Trace file written by `fit`.
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub min_weight: f64,
    /// Output directory; defaults to the trace's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long = "trace", num_args = 1.., required = true)]
    pub traces: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub negligible: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            c.assign(kv)?;
        }
        if !self.data.is_empty() {
            c.data = self.data.clone();
        }
        if let Some(p) = &self.cutoffs {
            c.cutoffs = Some(p.clone());
        }
        if let Some(k) = self.k {
            c.k_grid = vec![k];
        }
        if let Some(g) = &self.k_grid {
            c.set("k_grid", g)?;
        }
        if let Some(v) = self.iterations {
            c.chain.iterations = v;
        }
        if let Some(v) = self.burn_in {
            c.chain.burn_in = v;
        }
        if let Some(v) = self.thin {
            c.chain.thin = v;
        }
        if let Some(v) = self.seed {
            c.chain.seed = v;
        }
        if let Some(v) = &self.out {
            c.output = v.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

/// Loads and preprocesses the data named in the configuration.
pub fn load_data(config: &RunConfig) -> Result<ExpressionDataset> {
    if config.data.is_empty() {
        return Err(Error::InvalidInput("no data files configured".into()));
    }
    let raw = io::load_csv(&config.data, config.cutoffs.as_deref())?;
    let (data, report) = preprocess(&raw, config.pos_frac, config.miss_frac, config.floor)?;
    if !report.dropped_markers.is_empty() {
        info!("dropped markers: {}", report.dropped_markers.join(", "));
    }
    let cells: usize = report.dropped_cells.iter().map(Vec::len).sum();
    if cells > 0 {
        info!("dropped {cells} cells below the expression floor");
    }
    Ok(data)
}

/// Fits one K on already loaded data.
pub fn fit_one(config: &RunConfig, data: &ExpressionDataset, k: usize) -> Result<FitOutput> {
    let hyper = config.hyper(k)?;
    let beta = config.missingness.resolve(data)?;
    let trace = run_chain(data, &hyper, &beta, &config.chain)?;
    Ok(FitOutput {
        data: data.clone(),
        trace,
    })
}

fn write_fit(dir: &Path, config: &RunConfig, fit: &FitOutput, command: &str, secs: f64) -> Result<()> {
    fs::create_dir_all(dir)?;
    io::save_fit(&dir.join("trace.bin"), fit)?;
    io::write_trace_csv(dir, &fit.trace)?;
    let mut beta = String::from("sample,b0,b1,b2\n");
    for (i, b) in fit.trace.beta.0.iter().enumerate() {
        beta.push_str(&format!("{},{},{},{}\n", i + 1, b.b0, b.b1, b.b2));
    }
    fs::write(dir.join("beta.csv"), beta)?;
    let mut echo = config.clone();
    echo.k_grid = vec![fit.trace.hyper.k];
    fs::write(dir.join("config.txt"), echo.to_text())?;
    io::write_manifest(
        &dir.join("manifest.json"),
        &Manifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.chain.seed,
            config: echo.to_text(),
            wall_time_secs: secs,
            n_draws: fit.trace.len(),
            acceptance_rate: fit.trace.acceptance_rate,
        },
    )
}

pub fn cmd_fit(config: &RunConfig) -> Result<FitOutput> {
    if config.k_grid.len() != 1 {
        return Err(Error::InvalidInput("fit takes a single K; use select-k for a grid".into()));
    }
    let t0 = Instant::now();
    let data = load_data(config)?;
    let fit = fit_one(config, &data, config.k_grid[0])?;
    write_fit(&config.output, config, &fit, "fit", t0.elapsed().as_secs_f64())?;
    println!(
        "K={} draws={} acceptance={:.3} -> {}",
        fit.trace.hyper.k,
        fit.trace.len(),
        fit.trace.acceptance_rate,
        config.output.display()
    );
    Ok(fit)
}

fn write_report(dir: &Path, rows: &[KGridRow]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("selection.csv"), report_csv(rows))?;
    fs::write(dir.join("selection.txt"), report_table(rows))?;
    let ks: Vec<f64> = rows.iter().map(|r| r.k as f64).collect();
    let lp: Vec<f64> = rows.iter().map(|r| r.lpml).collect();
    let dic: Vec<f64> = rows.iter().map(|r| r.dic.p_d).collect();
    let neg: Vec<f64> = rows.iter().map(|r| r.negligible as f64).collect();
    fs::write(dir.join("lpml.svg"), svg::line_plot_svg(&ks, &lp, "LPML", "K", "LPML"))?;
    fs::write(dir.join("dic.svg"), svg::line_plot_svg(&ks, &dic, "DIC", "K", "DIC"))?;
    fs::write(
        dir.join("calibration.svg"),
        svg::line_plot_svg(&neg, &lp, "LPML against negligible subpopulations", "negligible count", "LPML"),
    )?;
    Ok(())
}

pub fn cmd_select_k(config: &RunConfig) -> Result<Vec<KGridRow>> {
    let data = load_data(config)?;
    let fits: Vec<FitOutput> = config
        .k_grid
        .par_iter()
        .map(|&k| {
            let t0 = Instant::now();
            let fit = fit_one(config, &data, k)?;
            write_fit(
                &config.output.join(format!("k{k}")),
                config,
                &fit,
                "select-k",
                t0.elapsed().as_secs_f64(),
            )?;
            Ok(fit)
        })
        .collect::<Result<_>>()?;
    let rows = k_grid_report(fits.iter().map(|f| &f.trace), &data, config.negligible)?;
    write_report(&config.output, &rows)?;
    print!("{}", report_table(&rows));
    Ok(rows)
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<Vec<SampleEstimate>> {
    let fit = io::load_fit(&args.trace)?;
    let dir = match &args.out {
        Some(d) => d.clone(),
        None => args.trace.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let est = salso_select(&fit.trace)?;
    io::write_estimates(&dir, &fit.data.markers, &est)?;
    for e in &est {
        let s = &fit.data.samples[e.sample];
        let title = format!("sample {}", e.sample + 1);
        fs::write(
            dir.join(format!("heatmap_{}.svg", e.sample + 1)),
            svg::heatmap_svg(&fit.data.markers, &s.y, &s.observed, &e.lambda, &e.w, &title),
        )?;
        fs::write(
            dir.join(format!("z_hat_{}.svg", e.sample + 1)),
            svg::zgrid_svg(&fit.data.markers, &e.z, &e.w, args.min_weight, &title),
        )?;
        let kept = e.w.iter().filter(|&&w| w >= args.min_weight).count();
        println!(
            "sample {}: draw {} of {}, {} subpopulations above {}",
            e.sample + 1,
            e.draw,
            fit.trace.len(),
            kept,
            args.min_weight
        );
    }
    Ok(est)
}

pub fn cmd_report(args: &ReportArgs) -> Result<Vec<KGridRow>> {
    let fits: Vec<FitOutput> = args.traces.iter().map(|p| io::load_fit(p)).collect::<Result<_>>()?;
    let data = &fits[0].data;
    if fits.iter().any(|f| &f.data != data) {
        return Err(Error::InvalidInput("traces were fitted to different data".into()));
    }
    let rows = k_grid_report(fits.iter().map(|f| &f.trace), data, args.negligible)?;
    if let Some(d) = &args.out {
        write_report(d, &rows)?;
    }
    print!("{}", report_table(&rows));
    Ok(rows)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(ExpressionDataset, SimulationTruth)> {
    let mut spec = match args.design {
        Design::Sim1 => SimulationSpec::simulation1(),
        Design::Desk => SimulationSpec::desk(),
        Design::Sim2 => SimulationSpec::simulation2(),
    };
    if args.tabulated_w {
        spec = match args.design {
            Design::Sim2 => spec.with_sim2_w(),
            _ => spec.with_sim1_w(),
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (data, truth) = simulate(&spec, &mut rng)?;
    let paths = io::write_csv(&args.out, "sample_", &data)?;
    io::write_truth(&args.out, &data.markers, &truth)?;
    println!(
        "{} samples, {} markers, cells {:?}, K = {}",
        data.n_samples(),
        data.n_markers(),
        data.n_cells(),
        spec.k
    );
    for (i, s) in data.samples.iter().enumerate() {
        let frac = s.n_missing() as f64 / (s.n_cells() * data.n_markers()) as f64;
        println!("  {}: missing fraction {:.3}", paths[i].display(), frac);
    }
    Ok((data, truth))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a).map(|_| ()),
        Command::Fit(a) => cmd_fit(&a.to_config()?).map(|_| ()),
        Command::SelectK(a) => cmd_select_k(&a.to_config()?).map(|_| ()),
        Command::Estimate(a) => cmd_estimate(&a).map(|_| ()),
        Command::Report(a) => cmd_report(&a).map(|_| ()),
    }
}
