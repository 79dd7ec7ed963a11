//! File formats.
//!
//! Expression data: one CSV per sample, header row of marker names, one row
//! per cell, an empty field marks a missing value. Cutoffs: a CSV with the
//! same header and one row per sample. Traces are stored with bincode next to
//! columnar CSV summaries.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::SampleEstimate;
use crate::mcmc::PosteriorTrace;
use crate::model::{transform, ExpressionDataset, RawDataset, RawSample, SampleData};
use crate::simulate::SimulationTruth;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Header and rows of a numeric CSV with optional empty fields.
struct NumericCsv {
    header: Vec<String>,
    values: Array2<f64>,
    observed: Array2<bool>,
}

fn parse_number(tok: &str) -> Option<f64> {
    let v: f64 = tok.parse().ok()?;
    v.is_finite().then_some(v)
}

fn read_numeric_csv(path: &Path, allow_missing: bool) -> Result<NumericCsv> {
    let bytes = fs::read(path).map_err(|e| parse_err(path, 0, format!("cannot open: {e}")))?;
    // csv positions point at skipped blank lines, so count from the first real byte
    let line_at = |byte: u64| {
        let start = (byte as usize).min(bytes.len());
        let first = bytes[start..]
            .iter()
            .position(|&c| c != b'\n' && c != b'\r')
            .map_or(bytes.len(), |o| start + o);
        1 + bytes[..first].iter().filter(|&&c| c == b'\n').count()
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(None)
        .from_reader(bytes.as_slice());
    let mut records = rdr.records();
    let header: Vec<String> = match records.next() {
        None => return Err(parse_err(path, 1, "empty file, expected a header row")),
        Some(Err(e)) => return Err(csv_error(path, e)),
        Some(Ok(r)) => r.iter().map(|s| s.trim().to_string()).collect(),
    };
    for (j, h) in header.iter().enumerate() {
        if h.is_empty() {
            return Err(parse_err(path, 1, format!("empty marker name in column {}", j + 1)));
        }
        if header[..j].contains(h) {
            return Err(parse_err(path, 1, format!("duplicate marker name '{h}'")));
        }
        if parse_number(h).is_some() {
            return Err(parse_err(path, 1, format!("header field '{h}' looks numeric; a header row is required")));
        }
    }
    let jn = header.len();
    let mut vals = Vec::new();
    let mut obs = Vec::new();
    let mut rows = 0;
    for rec in records {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| line_at(p.byte()));
        // a lone empty field is a missing value when there is one marker
        if jn > 1 && rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != jn {
            return Err(parse_err(path, line, format!("expected {jn} fields, found {}", rec.len())));
        }
        for (j, tok) in rec.iter().enumerate() {
            let tok = tok.trim();
            if tok.is_empty() {
                if !allow_missing {
                    return Err(parse_err(path, line, format!("missing value in column '{}'", header[j])));
                }
                vals.push(f64::NAN);
                obs.push(false);
            } else {
                let v = parse_number(tok).ok_or_else(|| {
                    parse_err(path, line, format!("'{tok}' in column '{}' is not a finite number", header[j]))
                })?;
                vals.push(v);
                obs.push(true);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(path, 2, "no data rows"));
    }
    Ok(NumericCsv {
        header,
        values: Array2::from_shape_vec((rows, jn), vals).expect("row lengths checked"),
        observed: Array2::from_shape_vec((rows, jn), obs).expect("row lengths checked"),
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_err(path, line, e.to_string())
}

fn check_header(path: &Path, header: &[String], expected: &[String]) -> Result<()> {
    if header != expected {
        return Err(parse_err(
            path,
            1,
            format!("header [{}] differs from [{}]", header.join(","), expected.join(",")),
        ));
    }
    Ok(())
}

/// Raw intensities together with a cutoff file.
pub fn load_raw_csv<P: AsRef<Path>>(paths: &[P], cutoffs: &Path) -> Result<RawDataset> {
    if paths.is_empty() {
        return Err(Error::InvalidInput("no sample files given".into()));
    }
    let cut = read_numeric_csv(cutoffs, false)?;
    if cut.values.nrows() != paths.len() {
        return Err(parse_err(
            cutoffs,
            cut.values.nrows() + 1,
            format!("{} cutoff rows for {} samples", cut.values.nrows(), paths.len()),
        ));
    }
    let mut samples = Vec::with_capacity(paths.len());
    for (i, p) in paths.iter().enumerate() {
        let p = p.as_ref();
        let c = read_numeric_csv(p, true)?;
        check_header(p, &c.header, &cut.header)?;
        samples.push(RawSample {
            values: c.values,
            observed: c.observed,
            cutoffs: cut.values.row(i).to_vec(),
        });
    }
    Ok(RawDataset {
        markers: cut.header,
        samples,
    })
}

/// Loads one CSV per sample. With cutoffs the values are raw intensities and
/// get log-ratio transformed; without, they are taken as already transformed.
pub fn load_csv<P: AsRef<Path>>(paths: &[P], cutoffs: Option<&Path>) -> Result<ExpressionDataset> {
    if let Some(c) = cutoffs {
        return transform(&load_raw_csv(paths, c)?);
    }
    if paths.is_empty() {
        return Err(Error::InvalidInput("no sample files given".into()));
    }
    let mut markers: Option<Vec<String>> = None;
    let mut samples = Vec::with_capacity(paths.len());
    for p in paths {
        let p = p.as_ref();
        let c = read_numeric_csv(p, true)?;
        match &markers {
            Some(m) => check_header(p, &c.header, m)?,
            None => markers = Some(c.header.clone()),
        }
        samples.push(SampleData::new(c.values, c.observed)?);
    }
    ExpressionDataset::new(markers.expect("at least one sample"), samples)
}

fn fmt_f64(v: f64) -> String {
    // Display of f64 is the shortest string that parses back to the same value.
    format!("{v}")
}

/// Writes one sample in the layout `load_csv` reads.
pub fn write_sample_csv(path: &Path, markers: &[String], sample: &SampleData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", markers.join(","))?;
    for n in 0..sample.n_cells() {
        let row: Vec<String> = (0..markers.len())
            .map(|j| {
                if sample.observed[[n, j]] {
                    fmt_f64(sample.y[[n, j]])
                } else {
                    String::new()
                }
            })
            .collect();
        if row.len() == 1 && row[0].is_empty() {
            writeln!(w, "\"\"")?;
        } else {
            writeln!(w, "{}", row.join(","))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes every sample as `<prefix><i>.csv` (1-based) and returns the paths.
pub fn write_csv(dir: &Path, prefix: &str, data: &ExpressionDataset) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for (i, s) in data.samples.iter().enumerate() {
        let p = dir.join(format!("{prefix}{}.csv", i + 1));
        write_sample_csv(&p, &data.markers, s)?;
        out.push(p);
    }
    Ok(out)
}

fn write_text(path: &Path, s: &str) -> Result<()> {
    fs::write(path, s)?;
    Ok(())
}

/// `J x K` binary matrix with marker names as row labels.
pub fn z_csv(markers: &[String], z: &Array2<bool>) -> String {
    let mut s = String::from("marker");
    for k in 0..z.ncols() {
        s.push_str(&format!(",k{}", k + 1));
    }
    s.push('\n');
    for (j, m) in markers.iter().enumerate() {
        s.push_str(m);
        for k in 0..z.ncols() {
            s.push_str(if z[[j, k]] { ",1" } else { ",0" });
        }
        s.push('\n');
    }
    s
}

/// `I x K` weights with one row per sample.
pub fn w_csv(w: &Array2<f64>) -> String {
    let mut s = String::from("sample");
    for k in 0..w.ncols() {
        s.push_str(&format!(",k{}", k + 1));
    }
    s.push('\n');
    for (i, row) in w.outer_iter().enumerate() {
        s.push_str(&(i + 1).to_string());
        for v in row {
            s.push(',');
            s.push_str(&fmt_f64(*v));
        }
        s.push('\n');
    }
    s
}

fn labels_csv(lambda: &[usize]) -> String {
    let mut s = String::from("lambda\n");
    for l in lambda {
        s.push_str(&l.to_string());
        s.push('\n');
    }
    s
}

/// Writes `truth_z.csv`, `truth_w.csv`, `truth_lambda_<i>.csv` and
/// `truth.json`.
pub fn write_truth(dir: &Path, markers: &[String], truth: &SimulationTruth) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_text(&dir.join("truth_z.csv"), &z_csv(markers, &truth.z))?;
    write_text(&dir.join("truth_w.csv"), &w_csv(&truth.w))?;
    for (i, l) in truth.lambda.iter().enumerate() {
        write_text(&dir.join(format!("truth_lambda_{}.csv", i + 1)), &labels_csv(l))?;
    }
    let json = serde_json::to_string_pretty(truth).map_err(|e| Error::Serialize(e.to_string()))?;
    write_text(&dir.join("truth.json"), &json)
}

pub fn read_truth(path: &Path) -> Result<SimulationTruth> {
    let s = fs::read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| Error::Serialize(e.to_string()))
}

/// Everything a fit produces that later commands need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub data: ExpressionDataset,
    pub trace: PosteriorTrace,
}

const TRACE_MAGIC: &[u8; 8] = b"CYTOFAM1";

pub fn save_fit(path: &Path, fit: &FitOutput) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(TRACE_MAGIC)?;
    bincode::serialize_into(&mut w, fit).map_err(|e| Error::Serialize(e.to_string()))?;
    w.flush()?;
    Ok(())
}

pub fn load_fit(path: &Path) -> Result<FitOutput> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    std::io::Read::read_exact(&mut r, &mut magic)?;
    if &magic != TRACE_MAGIC {
        return Err(Error::Serialize(format!("{} is not a trace file", path.display())));
    }
    bincode::deserialize_from(r).map_err(|e| Error::Serialize(e.to_string()))
}

/// Columnar summary of the trace: one row per retained draw with scalar
/// parameters, then one row per iteration of the complete-data log-likelihood.
pub fn write_trace_csv(dir: &Path, trace: &PosteriorTrace) -> Result<()> {
    let mut s = String::from("iteration,loglik,alpha");
    let inn = trace.draws.first().map_or(0, |d| d.w.nrows());
    for i in 0..inn {
        s.push_str(&format!(",eps_{0},sigma2_{0}", i + 1));
    }
    s.push('\n');
    for d in &trace.draws {
        s.push_str(&format!("{},{},{}", d.iteration, fmt_f64(d.loglik), fmt_f64(d.alpha)));
        for i in 0..inn {
            s.push_str(&format!(",{},{}", fmt_f64(d.eps[i]), fmt_f64(d.sigma2[i])));
        }
        s.push('\n');
    }
    write_text(&dir.join("draws.csv"), &s)?;
    let mut s = String::from("iteration,loglik\n");
    for (it, ll) in trace.loglik.iter().enumerate() {
        s.push_str(&format!("{},{}\n", it + 1, fmt_f64(*ll)));
    }
    write_text(&dir.join("loglik.csv"), &s)
}

/// Writes `z_hat_<i>.csv`, `lambda_hat_<i>.csv` and `w_hat.csv`.
pub fn write_estimates(dir: &Path, markers: &[String], est: &[SampleEstimate]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for e in est {
        write_text(&dir.join(format!("z_hat_{}.csv", e.sample + 1)), &z_csv(markers, &e.z))?;
        write_text(&dir.join(format!("lambda_hat_{}.csv", e.sample + 1)), &labels_csv(&e.lambda))?;
    }
    let k = est.first().map_or(0, |e| e.w.len());
    let w = Array2::from_shape_fn((est.len(), k), |(i, c)| est[i].w[c]);
    write_text(&dir.join("w_hat.csv"), &w_csv(&w))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// The effective configuration in key=value form.
    pub config: String,
    pub wall_time_secs: f64,
    pub n_draws: usize,
    pub acceptance_rate: f64,
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    let json = serde_json::to_string_pretty(m).map_err(|e| Error::Serialize(e.to_string()))?;
    write_text(path, &json)
}
