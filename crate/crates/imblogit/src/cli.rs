//! Command-line driver: load datasets and model specs, run fits, limit
//! computations, simulations, and sample-size plans, and emit human
//! summaries plus machine-readable CSV/JSON reports.
//!
//! Exit codes: 0 success, 2 parse/config error, 3 numerical failure
//! (separation, degenerate covariance, unreachable minority mean),
//! 4 overflow. Every failure prints one line of the form
//! `error[E_CODE]: message` to stderr.

mod io;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::asymptotics::{
    compute_covariance, confidence_interval, plan_sample_size, sigma_1d_gaussian, solve_beta_star,
    LimitError, LimitInference, SampleSizePlan, SolveOptions,
};
use crate::distributions::{surrounds_check, MajorityModel, MinoritySample, ModelError};
use crate::logistic::{fit, FitError, FitOptions, FitResult, LogisticData};
use crate::montecarlo::{run_experiment, McConfig, McError, McReport};
use crate::numerics::{normal_cdf, normal_quantile, Rng, SpdMatrix};

use io::{fmt_g17, fmt_g6, Json};

/// Default direction count for the surrounds diagnostic.
const SURROUNDS_DIRECTIONS: usize = 256;
/// Epsilon used when estimating the surrounds margin.
const SURROUNDS_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ErrorClass {
    Parse,
    Numeric,
    Overflow,
    Io,
}

/// CLI failure with a machine-parsable class and a single-line message.
#[derive(Debug, Clone)]
pub struct CliError {
    class: ErrorClass,
    message: String,
}

impl CliError {
    fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        Self {
            class,
            message: message.into(),
        }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new(ErrorClass::Parse, message)
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self::new(ErrorClass::Numeric, message)
    }

    pub fn overflow(message: impl Into<String>) -> Self {
        Self::new(ErrorClass::Overflow, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(ErrorClass::Io, message)
    }

    pub fn code(&self) -> &'static str {
        match self.class {
            ErrorClass::Parse => "E_PARSE",
            ErrorClass::Numeric => "E_NUMERIC",
            ErrorClass::Overflow => "E_OVERFLOW",
            ErrorClass::Io => "E_IO",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            ErrorClass::Parse | ErrorClass::Io => 2,
            ErrorClass::Numeric => 3,
            ErrorClass::Overflow => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // Single line, machine-parsable prefix.
        let flat = self.message.replace('\n', "; ");
        write!(f, "error[{}]: {}", self.code(), flat)
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::SeparationSuspected { .. } => CliError::numeric(format!(
                "{e}; hint: add overlapping majority data or reduce the feature spread"
            )),
            FitError::MaxIterations { .. } => CliError::numeric(e.to_string()),
            FitError::InvalidData(_) => CliError::parse(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::MomentOverflow => CliError::overflow(e.to_string()),
            _ => CliError::parse(e.to_string()),
        }
    }
}

impl From<LimitError> for CliError {
    fn from(e: LimitError) -> Self {
        match e {
            LimitError::Moment(ModelError::MomentOverflow) => CliError::overflow(e.to_string()),
            _ => CliError::numeric(e.to_string()),
        }
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        match e {
            McError::LimitSolveFailed(inner) => inner.into(),
            McError::InvalidConfig(_) => CliError::parse(e.to_string()),
            McError::EmptyInput => CliError::numeric(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "imblogit",
    version,
    about = "Limit slopes, sandwich covariance, confidence intervals, and Monte Carlo \
             validation for logistic regression under extreme class imbalance"
)]
struct Cli {
    #[command(subcommand)]
    command: CommandKind,
}

#[derive(Subcommand)]
enum CommandKind {
    /// Fit the logistic maximizer on a labelled dataset.
    Fit(RawOpts),
    /// Compute the limit slope, covariance, and confidence intervals.
    Limit(RawOpts),
    /// Run the Monte Carlo experiment and write ECDF/summary files.
    Simulate(RawOpts),
    /// Estimate confidence-interval coverage by replication.
    Coverage(RawOpts),
    /// Majority sample size needed for a target slope accuracy.
    Plan(RawOpts),
}

#[derive(Args, Debug, Default, Clone)]
struct RawOpts {
    /// Flat key=value config file; command-line flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Majority model kind: gaussian, empirical, or density.
    #[arg(long)]
    model: Option<String>,
    /// Gaussian mean, comma-separated for d >= 2.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Gaussian standard deviation (1D).
    #[arg(long)]
    sigma: Option<f64>,
    /// Gaussian covariance rows, e.g. "2,0.5;0.5,1".
    #[arg(long, allow_hyphen_values = true)]
    cov: Option<String>,
    /// Minority mean; as a single point it also serves as the minority
    /// sample when no file is given.
    #[arg(long, allow_hyphen_values = true)]
    xbar: Option<String>,
    /// CSV of minority points, one per line.
    #[arg(long)]
    minority_file: Option<PathBuf>,
    /// Input data: labelled dataset (fit, empirical models) or x,density
    /// table (density models).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Majority sizes, e.g. "100,200,500,1000,5000".
    #[arg(long)]
    n_grid: Option<String>,
    /// Monte Carlo replicates per majority size.
    #[arg(long)]
    replicates: Option<usize>,
    /// Master seed for the replicate streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Interval miss probability theta (level = 1 - theta).
    #[arg(long)]
    theta: Option<f64>,
    /// Target slope accuracy for planning.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Output file (reports) or directory (simulate).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Also export one sampled dataset (simulate only).
    #[arg(long)]
    export_sample: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Options after merging flags with the config file.
#[derive(Debug, Clone)]
struct Resolved {
    model: Option<String>,
    mu: Option<Vec<f64>>,
    sigma: Option<f64>,
    cov: Option<SpdMatrix>,
    xbar: Option<Vec<f64>>,
    minority_file: Option<PathBuf>,
    data: Option<PathBuf>,
    n_grid: Option<Vec<usize>>,
    replicates: Option<usize>,
    seed: Option<u64>,
    theta: f64,
    epsilon: Option<f64>,
    out: Option<PathBuf>,
    format: OutputFormat,
    export_sample: Option<PathBuf>,
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e
                .to_string()
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim()
                .to_string();
            let msg = first.strip_prefix("error: ").unwrap_or(&first);
            eprintln!("error[E_PARSE]: {msg}");
            return 2;
        }
    };
    let outcome = match cli.command {
        CommandKind::Fit(raw) => resolve(raw).and_then(|ctx| cmd_fit(&ctx)),
        CommandKind::Limit(raw) => resolve(raw).and_then(|ctx| cmd_limit(&ctx)),
        CommandKind::Simulate(raw) => resolve(raw).and_then(|ctx| cmd_simulate(&ctx)),
        CommandKind::Coverage(raw) => resolve(raw).and_then(|ctx| cmd_coverage(&ctx)),
        CommandKind::Plan(raw) => resolve(raw).and_then(|ctx| cmd_plan(&ctx)),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn resolve(raw: RawOpts) -> Result<Resolved, CliError> {
    let config = match &raw.config {
        Some(path) => io::read_config(path)?,
        None => HashMap::new(),
    };
    let get = |key: &str| config.get(key).map(String::as_str);

    let merged_string = |flag: &Option<String>, key: &str| -> Option<String> {
        flag.clone().or_else(|| get(key).map(str::to_string))
    };
    let merged_path = |flag: &Option<PathBuf>, key: &str| -> Option<PathBuf> {
        flag.clone().or_else(|| get(key).map(PathBuf::from))
    };

    let parse_f64 = |key: &str, s: &str| -> Result<f64, CliError> {
        s.trim()
            .parse()
            .map_err(|_| CliError::parse(format!("{key}: '{s}' is not a number")))
    };

    let sigma = match raw.sigma {
        Some(v) => Some(v),
        None => get("sigma").map(|s| parse_f64("sigma", s)).transpose()?,
    };
    let replicates = match raw.replicates {
        Some(v) => Some(v),
        None => get("replicates")
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::parse(format!("replicates: '{s}' is not an integer")))
            })
            .transpose()?,
    };
    let seed = match raw.seed {
        Some(v) => Some(v),
        None => get("seed")
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::parse(format!("seed: '{s}' is not an integer")))
            })
            .transpose()?,
    };
    let theta = match raw.theta {
        Some(v) => v,
        None => match get("theta") {
            Some(s) => parse_f64("theta", s)?,
            None => 0.05,
        },
    };
    if !(theta > 0.0 && theta < 1.0) {
        return Err(CliError::parse(format!(
            "theta must lie strictly inside (0, 1), got {theta}"
        )));
    }
    let epsilon = match raw.epsilon {
        Some(v) => Some(v),
        None => get("epsilon").map(|s| parse_f64("epsilon", s)).transpose()?,
    };

    let mu = merged_string(&raw.mu, "mu")
        .map(|s| parse_vector("mu", &s))
        .transpose()?;
    let xbar = merged_string(&raw.xbar, "xbar")
        .map(|s| parse_vector("xbar", &s))
        .transpose()?;
    let cov = merged_string(&raw.cov, "cov")
        .map(|s| parse_matrix("cov", &s))
        .transpose()?;
    let n_grid = merged_string(&raw.n_grid, "n-grid")
        .map(|s| parse_usize_list("n-grid", &s))
        .transpose()?;
    let format = match merged_string(&raw.format, "format").as_deref() {
        None => OutputFormat::Csv,
        Some("csv") => OutputFormat::Csv,
        Some("json") => OutputFormat::Json,
        Some(other) => {
            return Err(CliError::parse(format!(
                "format must be 'csv' or 'json', got '{other}'"
            )))
        }
    };

    Ok(Resolved {
        model: merged_string(&raw.model, "model"),
        mu,
        sigma,
        cov,
        xbar,
        minority_file: merged_path(&raw.minority_file, "minority-file"),
        data: merged_path(&raw.data, "data"),
        n_grid,
        replicates,
        seed,
        theta,
        epsilon,
        out: merged_path(&raw.out, "out"),
        format,
        export_sample: merged_path(&raw.export_sample, "export-sample"),
    })
}

fn parse_vector(key: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|f| {
            f.trim()
                .parse()
                .map_err(|_| CliError::parse(format!("{key}: '{f}' is not a number")))
        })
        .collect()
}

fn parse_matrix(key: &str, text: &str) -> Result<SpdMatrix, CliError> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|row| parse_vector(key, row))
        .collect::<Result<_, _>>()?;
    SpdMatrix::from_rows(&rows)
        .map_err(|e| CliError::parse(format!("{key}: not a valid symmetric matrix: {e}")))
}

fn parse_usize_list(key: &str, text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|f| {
            f.trim()
                .parse()
                .map_err(|_| CliError::parse(format!("{key}: '{f}' is not a positive integer")))
        })
        .collect()
}

/// Builds the majority model from the resolved options. For empirical
/// models the labelled input's minority rows are returned as well.
fn build_model(ctx: &Resolved) -> Result<(MajorityModel, Vec<Vec<f64>>), CliError> {
    let kind = ctx.model.as_deref().unwrap_or("gaussian");
    match kind {
        "gaussian" => {
            if let Some(cov) = &ctx.cov {
                let mean = ctx.mu.clone().unwrap_or_else(|| vec![0.0; cov.dim()]);
                Ok((MajorityModel::gaussian(mean, cov.clone())?, Vec::new()))
            } else {
                let mu = match &ctx.mu {
                    Some(v) if v.len() == 1 => v[0],
                    Some(_) => {
                        return Err(CliError::parse(
                            "a multivariate gaussian model needs --cov",
                        ))
                    }
                    None => 0.0,
                };
                let sigma = ctx.sigma.unwrap_or(1.0);
                Ok((MajorityModel::gaussian_1d(mu, sigma)?, Vec::new()))
            }
        }
        "empirical" => {
            let path = ctx.data.as_ref().ok_or_else(|| {
                CliError::parse("--model empirical needs --data with a labelled dataset")
            })?;
            let ds = io::read_dataset(path)?;
            if ds.majority.is_empty() {
                return Err(CliError::parse(format!(
                    "{}: no majority (y=0) rows to build an empirical model from",
                    path.display()
                )));
            }
            Ok((MajorityModel::empirical(ds.majority)?, ds.minority))
        }
        "density" => {
            let path = ctx.data.as_ref().ok_or_else(|| {
                CliError::parse("--model density needs --data with an x,density table")
            })?;
            let table = io::read_density_table(path)?;
            let support = (table[0].0, table[table.len() - 1].0);
            let pdf = move |x: f64| interpolate_density(&table, x);
            Ok((MajorityModel::density_1d(pdf, support)?, Vec::new()))
        }
        other => Err(CliError::parse(format!(
            "unknown model kind '{other}' (expected gaussian, empirical, or density)"
        ))),
    }
}

fn interpolate_density(table: &[(f64, f64)], x: f64) -> f64 {
    let n = table.len();
    if x < table[0].0 || x > table[n - 1].0 {
        return 0.0;
    }
    let idx = table.partition_point(|&(t, _)| t <= x);
    if idx == 0 {
        return table[0].1;
    }
    if idx >= n {
        return table[n - 1].1;
    }
    let (x0, d0) = table[idx - 1];
    let (x1, d1) = table[idx];
    if x1 <= x0 {
        return d0;
    }
    d0 + (x - x0) / (x1 - x0) * (d1 - d0)
}

/// Resolves the minority sample: an explicit file wins, then a single point
/// at `--xbar`, then the dataset's y=1 rows.
fn build_minority(
    ctx: &Resolved,
    from_data: Vec<Vec<f64>>,
    dim: usize,
) -> Result<MinoritySample, CliError> {
    let points = if let Some(path) = &ctx.minority_file {
        io::read_points(path)?
    } else if let Some(xbar) = &ctx.xbar {
        vec![xbar.clone()]
    } else if !from_data.is_empty() {
        from_data
    } else {
        return Err(CliError::parse(
            "no minority specification: pass --minority-file, --xbar, or a dataset with y=1 rows",
        ));
    };
    if points.first().map(Vec::len) != Some(dim) {
        return Err(CliError::parse(format!(
            "minority dimension {} does not match the model dimension {dim}",
            points.first().map_or(0, Vec::len)
        )));
    }
    Ok(MinoritySample::new(points)?)
}

/// The minority mean for limit computations: `--xbar` wins, otherwise the
/// mean of the resolved minority sample.
fn resolve_xbar(ctx: &Resolved, from_data: &[Vec<f64>], dim: usize) -> Result<Vec<f64>, CliError> {
    if let Some(xbar) = &ctx.xbar {
        if xbar.len() != dim {
            return Err(CliError::parse(format!(
                "xbar has dimension {}, the model has {dim}",
                xbar.len()
            )));
        }
        return Ok(xbar.clone());
    }
    if let Some(path) = &ctx.minority_file {
        let sample = MinoritySample::new(io::read_points(path)?)?;
        return Ok(sample.mean().to_vec());
    }
    if !from_data.is_empty() {
        let sample = MinoritySample::new(from_data.to_vec())?;
        return Ok(sample.mean().to_vec());
    }
    Err(CliError::parse(
        "no minority mean: pass --xbar, --minority-file, or a dataset with y=1 rows",
    ))
}

fn warn_if_not_surrounded(model: &MajorityModel, xbar: &[f64]) {
    let report = surrounds_check(model, xbar, SURROUNDS_EPSILON, SURROUNDS_DIRECTIONS);
    if !report.satisfied {
        eprintln!(
            "warning: the model places no mass beyond the minority mean along ({}); \
             the limit slope may not exist",
            join_g6(&report.worst_direction)
        );
    }
}

fn join_g6(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_g6(v)).collect::<Vec<_>>().join(", ")
}

fn out_with_extension(path: &Path, format: OutputFormat) -> PathBuf {
    if path.extension().is_some() {
        path.to_path_buf()
    } else {
        path.with_extension(format.extension())
    }
}

// ---------------------------------------------------------------------------
// fit

fn cmd_fit(ctx: &Resolved) -> Result<(), CliError> {
    let path = ctx
        .data
        .as_ref()
        .ok_or_else(|| CliError::parse("fit needs --data with a labelled dataset"))?;
    let ds = io::read_dataset(path)?;
    if ds.majority.is_empty() || ds.minority.is_empty() {
        return Err(CliError::parse(format!(
            "{}: both classes must be present (got {} majority, {} minority rows)",
            path.display(),
            ds.majority.len(),
            ds.minority.len()
        )));
    }
    let minority = MinoritySample::new(ds.minority)?;
    let data = LogisticData::new(ds.majority, minority)?;
    let result = fit(&data, FitOptions::default())?;

    println!(
        "fit: N = {}, n = {}, d = {}",
        result.majority_count,
        result.minority_count,
        data.dim()
    );
    println!("alpha: {}", fmt_g6(result.alpha));
    println!("beta: {}", join_g6(&result.beta));
    println!(
        "grad_norm: {}, iterations: {}, converged: {}",
        fmt_g6(result.grad_norm),
        result.iterations,
        result.converged
    );

    if let Some(out) = &ctx.out {
        let doc = fit_report(&result);
        write_report(&doc, out, ctx.format)?;
    }
    Ok(())
}

fn fit_report(result: &FitResult) -> Json {
    Json::Obj(vec![
        ("alpha", Json::Num(result.alpha)),
        ("beta", Json::num_array(&result.beta)),
        ("iterations", Json::UInt(result.iterations as u64)),
        ("grad_norm", Json::Num(result.grad_norm)),
        ("converged", Json::Bool(result.converged)),
        ("majority_count", Json::UInt(result.majority_count as u64)),
        ("minority_count", Json::UInt(result.minority_count as u64)),
    ])
}

// ---------------------------------------------------------------------------
// limit

fn cmd_limit(ctx: &Resolved) -> Result<(), CliError> {
    let (model, data_minority) = build_model(ctx)?;
    let xbar = resolve_xbar(ctx, &data_minority, model.dim())?;
    warn_if_not_surrounded(&model, &xbar);

    let beta_star = solve_beta_star(&model, &xbar, SolveOptions::default())?;
    let inference = compute_covariance(&model, &xbar, &beta_star)?;

    println!("beta_star: {}", join_g6(&inference.beta_star));
    if inference.dim() == 1 {
        println!("sigma: {}", fmt_g6(inference.sigma_scalar()));
    } else {
        println!("sigma:");
        for row in inference.sigma.rows() {
            println!("  {}", join_g6(&row));
        }
    }
    let grid = ctx.n_grid.clone().unwrap_or_default();
    for &n in &grid {
        let ci = confidence_interval(&inference, n, ctx.theta);
        println!(
            "ci (level {}): N = {}, half-widths: {}",
            fmt_g6(1.0 - ctx.theta),
            n,
            join_g6(&ci.half_widths())
        );
    }

    if let Some(out) = &ctx.out {
        let doc = limit_report(&inference, &grid, ctx.theta);
        write_report(&doc, out, ctx.format)?;
    }
    Ok(())
}

fn limit_report(inference: &LimitInference, grid: &[usize], theta: f64) -> Json {
    let ci_entries: Vec<Json> = grid
        .iter()
        .map(|&n| {
            let ci = confidence_interval(inference, n, theta);
            Json::Obj(vec![
                ("majority_count", Json::UInt(n as u64)),
                ("half_widths", Json::num_array(&ci.half_widths())),
                ("lower", Json::num_array(&ci.lower)),
                ("upper", Json::num_array(&ci.upper)),
            ])
        })
        .collect();
    Json::Obj(vec![
        ("beta_star", Json::num_array(&inference.beta_star)),
        ("xbar", Json::num_array(&inference.xbar)),
        ("sigma", Json::matrix(&inference.sigma.rows())),
        ("h", Json::matrix(&inference.h.rows())),
        ("v", Json::matrix(&inference.v.rows())),
        ("theta", Json::Num(theta)),
        ("ci", Json::Arr(ci_entries)),
    ])
}

// ---------------------------------------------------------------------------
// simulate and coverage

fn simulation_config(ctx: &Resolved, default_grid: &[usize], default_reps: usize) -> Result<McConfig, CliError> {
    let (model, data_minority) = build_model(ctx)?;
    let minority = build_minority(ctx, data_minority, model.dim())?;
    warn_if_not_surrounded(&model, minority.mean());
    Ok(McConfig {
        model,
        minority,
        n_grid: ctx.n_grid.clone().unwrap_or_else(|| default_grid.to_vec()),
        replicates: ctx.replicates.unwrap_or(default_reps),
        seed: ctx.seed.unwrap_or(0),
        theta: ctx.theta,
    })
}

fn cmd_simulate(ctx: &Resolved) -> Result<(), CliError> {
    let out_dir = ctx
        .out
        .as_ref()
        .ok_or_else(|| CliError::parse("simulate needs --out <directory> for its files"))?;
    let config = simulation_config(ctx, &[100, 200, 500, 1000, 5000], 100)?;
    let report = run_experiment(&config)?;

    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", out_dir.display())))?;

    for rec in &report.per_n {
        let table = ecdf_table(&report, rec.majority_count);
        io::write_file(&out_dir.join(format!("ecdf_n{}.csv", rec.majority_count)), &table)?;
    }

    let summary = summary_doc(&report);
    write_report(&summary, &out_dir.join("summary"), ctx.format)?;
    let limit = limit_report(&report.inference, &config.n_grid, config.theta);
    write_report(&limit, &out_dir.join("limit"), ctx.format)?;

    if let Some(sample_path) = &ctx.export_sample {
        let mut rng = Rng::new(config.seed, 0);
        let majority = config.model.sample(config.n_grid[0], &mut rng);
        io::write_dataset(
            sample_path,
            &majority,
            config.minority.points(),
            config.model.dim(),
        )?;
    }

    for rec in &report.per_n {
        println!(
            "N = {:>6}: ks = {}, coverage = {}, mean N e^alpha = {}, failures = {}",
            rec.majority_count,
            fmt_g6(rec.ks),
            fmt_g6(rec.coverage),
            fmt_g6(rec.mean_alpha_decay),
            rec.failures
        );
    }
    println!("wrote {} ECDF tables to {}", report.per_n.len(), out_dir.display());
    Ok(())
}

/// Plot-ready ECDF rows: sorted standardized deviations (whitened and
/// pooled beyond 1D), their empirical CDF, and the limit CDF.
fn ecdf_table(report: &McReport, n_major: usize) -> String {
    use crate::montecarlo::ecdf;
    let rec = report
        .per_n
        .iter()
        .find(|r| r.majority_count == n_major)
        .expect("record exists for every grid entry");
    let dim = report.inference.dim();
    let mut rows = String::from("value,ecdf,theoretical_cdf\n");
    let values: Vec<f64> = if dim == 1 {
        rec.standardized.iter().map(|v| v[0]).collect()
    } else {
        rec.standardized
            .iter()
            .flat_map(|dev| report.inference.chol_a.solve_lower(dev))
            .collect()
    };
    if values.is_empty() {
        return rows;
    }
    let sigma = if dim == 1 {
        report.inference.sigma_scalar().sqrt()
    } else {
        1.0
    };
    let e = ecdf(&values).expect("nonempty");
    for &v in e.sorted_values() {
        let theory = normal_cdf(v / sigma);
        rows.push_str(&format!(
            "{},{},{}\n",
            fmt_g17(v),
            fmt_g17(e.eval(v)),
            fmt_g17(theory)
        ));
    }
    rows
}

fn summary_doc(report: &McReport) -> Json {
    let rows: Vec<Json> = report
        .per_n
        .iter()
        .map(|rec| {
            Json::Obj(vec![
                ("majority_count", Json::UInt(rec.majority_count as u64)),
                ("ks", Json::Num(rec.ks)),
                ("coverage", Json::Num(rec.coverage)),
                ("mean_alpha_decay", Json::Num(rec.mean_alpha_decay)),
                ("failures", Json::UInt(rec.failures as u64)),
                (
                    "converged",
                    Json::UInt(rec.beta_draws.len() as u64),
                ),
            ])
        })
        .collect();
    Json::Obj(vec![
        ("seed", Json::UInt(report.seed)),
        ("replicates", Json::UInt(report.replicates as u64)),
        ("theta", Json::Num(report.theta)),
        ("per_n", Json::Arr(rows)),
    ])
}

fn cmd_coverage(ctx: &Resolved) -> Result<(), CliError> {
    let config = simulation_config(ctx, &[5000], 200)?;
    let report = run_experiment(&config)?;

    let mut rows = Vec::new();
    for rec in &report.per_n {
        let ci = confidence_interval(&report.inference, rec.majority_count, config.theta);
        println!(
            "N = {:>6}: coverage = {} over {} converged replicates ({} failures)",
            rec.majority_count,
            fmt_g6(rec.coverage),
            rec.beta_draws.len(),
            rec.failures
        );
        rows.push(Json::Obj(vec![
            ("majority_count", Json::UInt(rec.majority_count as u64)),
            ("coverage", Json::Num(rec.coverage)),
            ("converged", Json::UInt(rec.beta_draws.len() as u64)),
            ("failures", Json::UInt(rec.failures as u64)),
            ("lower", Json::num_array(&ci.lower)),
            ("upper", Json::num_array(&ci.upper)),
        ]));
    }

    if let Some(out) = &ctx.out {
        let doc = Json::Obj(vec![
            ("level", Json::Num(1.0 - config.theta)),
            ("beta_star", Json::num_array(&report.inference.beta_star)),
            ("per_n", Json::Arr(rows)),
        ]);
        write_report(&doc, out, ctx.format)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// plan

fn cmd_plan(ctx: &Resolved) -> Result<(), CliError> {
    let mu = match &ctx.mu {
        Some(v) if v.len() == 1 => v[0],
        Some(_) => return Err(CliError::parse("plan is one-dimensional; --mu must be scalar")),
        None => 0.0,
    };
    let sigma = ctx.sigma.unwrap_or(1.0);
    if sigma <= 0.0 {
        return Err(CliError::parse(format!("sigma must be positive, got {sigma}")));
    }
    let xbar = match &ctx.xbar {
        Some(v) if v.len() == 1 => v[0],
        Some(_) => return Err(CliError::parse("plan is one-dimensional; --xbar must be scalar")),
        None => return Err(CliError::parse("plan needs --xbar")),
    };
    let epsilon = ctx
        .epsilon
        .ok_or_else(|| CliError::parse("plan needs --epsilon"))?;
    if epsilon <= 0.0 {
        return Err(CliError::parse(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }

    let z = (xbar - mu) / sigma;
    let sigma_limit = sigma_1d_gaussian(xbar, mu, sigma);
    let plan = plan_sample_size(xbar, mu, sigma, epsilon);

    println!("z-score: {}", fmt_g6(z));
    println!("limit variance: {}", fmt_g6(sigma_limit));
    match plan {
        SampleSizePlan::Samples(n) => {
            let zq = normal_quantile(1.0 - ctx.theta / 2.0).expect("theta validated");
            let half_width = sigma_limit.sqrt() * zq / (n as f64).sqrt();
            println!("required majority size: {n}");
            println!(
                "implied {}-level half-width at that size: {}",
                fmt_g6(1.0 - ctx.theta),
                fmt_g6(half_width)
            );
            if z.abs() >= 2.5 {
                println!(
                    "note: the requirement grows as exp(2 z^2)/epsilon^2; beyond |z| ~ 2.5 it \
                     outpaces rough orders-of-magnitude estimates quickly"
                );
            }
            if let Some(out) = &ctx.out {
                let doc = Json::Obj(vec![
                    ("z", Json::Num(z)),
                    ("epsilon", Json::Num(epsilon)),
                    ("theta", Json::Num(ctx.theta)),
                    ("limit_variance", Json::Num(sigma_limit)),
                    ("required_majority_count", Json::UInt(n)),
                    ("overflow", Json::Bool(false)),
                    ("half_width_at_required", Json::Num(half_width)),
                ]);
                write_report(&doc, out, ctx.format)?;
            }
            Ok(())
        }
        SampleSizePlan::Overflow => {
            println!("required majority size: overflow (exceeds 2^63 - 1)");
            if let Some(out) = &ctx.out {
                let doc = Json::Obj(vec![
                    ("z", Json::Num(z)),
                    ("epsilon", Json::Num(epsilon)),
                    ("theta", Json::Num(ctx.theta)),
                    ("limit_variance", Json::Num(sigma_limit)),
                    ("overflow", Json::Bool(true)),
                ]);
                write_report(&doc, out, ctx.format)?;
            }
            Err(CliError::overflow(format!(
                "required majority size exceeds 2^63 - 1 at z = {}",
                fmt_g6(z)
            )))
        }
    }
}

// ---------------------------------------------------------------------------
// report rendering

/// Writes `doc` as JSON or as flattened `key,value` CSV rows. Both formats
/// are generated from the same tree, so their numeric content is identical.
fn write_report(doc: &Json, path: &Path, format: OutputFormat) -> Result<(), CliError> {
    let target = out_with_extension(path, format);
    let contents = match format {
        OutputFormat::Json => doc.render(),
        OutputFormat::Csv => {
            let mut rows = String::from("key,value\n");
            flatten_json(doc, String::new(), &mut rows);
            rows
        }
    };
    io::write_file(&target, &contents)
}

fn flatten_json(doc: &Json, prefix: String, rows: &mut String) {
    match doc {
        Json::Obj(fields) => {
            for (key, value) in fields {
                let child = if prefix.is_empty() {
                    (*key).to_string()
                } else {
                    format!("{prefix}_{key}")
                };
                flatten_json(value, child, rows);
            }
        }
        Json::Arr(items) => {
            for (i, item) in items.iter().enumerate() {
                flatten_json(item, format!("{prefix}_{}", i + 1), rows);
            }
        }
        Json::Bool(b) => rows.push_str(&format!("{prefix},{b}\n")),
        Json::UInt(v) => rows.push_str(&format!("{prefix},{v}\n")),
        Json::Num(v) => rows.push_str(&format!("{prefix},{}\n", fmt_g17(*v))),
    }
}
