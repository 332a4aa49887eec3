//! Command-line surface: argument types and the command implementations.
//!
//! Every command writes CSV artifacts plus a `manifest.json` recording the
//! exact configuration and the crate version. Outputs carry no timestamps,
//! so a command rerun with the same arguments and seed writes identical
//! data files (timing columns in `bench` and `evaluate` tables are the one
//! exception).

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use glmmselect::data::{load_csv, write_csv, CsvSchema, Family};
use glmmselect::error::{Error, Result};
use glmmselect::evaluate::{
    run_experiment, tune, ExperimentCell, ExperimentConfig, ExperimentResult, Method,
};
use glmmselect::path::{
    fit_path, write_coefficients_csv, write_path_csv, PathConfig, PathEntry, PathResult,
};
use glmmselect::sim::{generate_study, generate_synthetic, write_truth_csv, SimConfig};

#[derive(Parser)]
#[command(
    name = "glmmselect",
    version,
    about = "Joint selection of fixed and random effects in mixed models over a regularization path"
)]
pub struct Cli {
    /// Worker threads; GLMMSELECT_THREADS is the fallback, then all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Fit a regularization path; tune on a validation set when given one
    Fit(FitArgs),
    /// Fit a regularization path and write it without tuning
    Path(PathArgs),
    /// Generate synthetic clustered data with a sparse ground truth
    Simulate(SimulateArgs),
    /// Run a synthetic experiment grid and summarize the metrics
    Evaluate(EvaluateArgs),
    /// Time full-path fits over a grid of problem sizes
    Bench(BenchArgs),
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    #[default]
    Gaussian,
    Bernoulli,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::Gaussian => Family::Gaussian,
            FamilyArg::Bernoulli => Family::Bernoulli,
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    #[default]
    Cd,
    CdLs,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Cd => Method::Cd,
            MethodArg::CdLs => Method::CdLs,
        }
    }
}

#[derive(Args, Serialize)]
pub struct FitArgs {
    /// Long-format CSV: one row per observation.
    #[arg(long)]
    pub data: PathBuf,
    /// Column holding the cluster id.
    #[arg(long)]
    pub cluster: String,
    /// Column holding the response.
    #[arg(long)]
    pub response: String,
    #[arg(long, value_enum, default_value_t)]
    pub family: FamilyArg,
    /// Number of alpha grid points: alpha = i/N for i = 1..N.
    #[arg(long, default_value_t = 10)]
    pub alpha_grid: usize,
    /// Ladder length per alpha.
    #[arg(long, default_value_t = 100)]
    pub n_lambda: usize,
    /// Refine every fit with swap moves.
    #[arg(long)]
    pub local_search: bool,
    /// Validation CSV with the same schema; enables tuning.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Report coefficients on the original predictor scale.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub raw_scale: bool,
}

#[derive(Args, Serialize)]
pub struct PathArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub cluster: String,
    #[arg(long)]
    pub response: String,
    #[arg(long, value_enum, default_value_t)]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 10)]
    pub alpha_grid: usize,
    #[arg(long, default_value_t = 100)]
    pub n_lambda: usize,
    #[arg(long)]
    pub local_search: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub raw_scale: bool,
}

#[derive(Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, required_unless_present = "config")]
    pub p: Option<usize>,
    /// Total observations, spread over ceil(n/10) clusters.
    #[arg(long = "n", required_unless_present = "config")]
    pub n_total: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    pub s_fixed: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    pub s_random: Option<usize>,
    /// Autoregressive predictor correlation.
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, value_enum, default_value_t)]
    pub family: FamilyArg,
    #[arg(long, required_unless_present = "config")]
    pub seed: Option<u64>,
    /// TOML file holding the whole generator config instead of flags.
    #[arg(
        long,
        conflicts_with_all = ["p", "n_total", "s_fixed", "s_random", "seed"]
    )]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct EvaluateArgs {
    /// Grid of total sample sizes.
    #[arg(long = "n", value_delimiter = ',', default_value = "1000")]
    pub n_total: Vec<usize>,
    /// Grid of predictor counts.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub p: Vec<usize>,
    /// Grid of predictor correlations.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub rho: Vec<f64>,
    #[arg(long, value_enum, default_value_t)]
    pub family: FamilyArg,
    /// Methods to compare.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "cd")]
    pub method: Vec<MethodArg>,
    #[arg(long, default_value_t = 20)]
    pub replicates: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub s_fixed: usize,
    #[arg(long, default_value_t = 3)]
    pub s_random: usize,
    #[arg(long, default_value_t = 100)]
    pub n_lambda: usize,
    #[arg(long, default_value_t = 10)]
    pub alpha_grid: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct BenchArgs {
    #[arg(long = "n", value_delimiter = ',', default_value = "100")]
    pub n_total: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2000")]
    pub p: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "cd,cd_ls")]
    pub method: Vec<MethodArg>,
    /// Timed fits per cell; the table reports mean and standard error.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 5)]
    pub s_fixed: usize,
    #[arg(long, default_value_t = 3)]
    pub s_random: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub n_lambda: usize,
    #[arg(long, default_value_t = 10)]
    pub alpha_grid: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Path(args) => cmd_path(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("GLMMSELECT_THREADS") {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                Error::InvalidConfig(format!(
                    "GLMMSELECT_THREADS must be a positive integer, got '{v}'"
                ))
            })?),
            Err(_) => None,
        },
    };
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err(Error::InvalidConfig("threads must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("thread pool setup failed: {e}")))?;
    Ok(())
}

/// Evenly spaced alpha grid i/N for i = 1..N; N = 10 gives 0.1, ..., 1.0.
fn alpha_grid(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidConfig("alpha-grid must be positive".into()));
    }
    Ok((1..=n).map(|i| i as f64 / n as f64).collect())
}

fn write_manifest(dir: &Path, command: &str, config: serde_json::Value) -> Result<()> {
    let manifest = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidConfig(format!("manifest serialization: {e}")))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn write_scales_csv(dir: &Path, scales: &Array1<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("scales.csv"))?;
    w.write_record(["predictor", "scale"])?;
    for (k, s) in scales.iter().enumerate() {
        w.write_record([format!("x{}", k + 1), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Load, standardize, fit, and write the path artifacts shared by `fit`
/// and `path`. Returns what the tuning step needs.
#[allow(clippy::too_many_arguments)]
fn fit_and_write_path(
    data: &PathBuf,
    cluster: &str,
    response: &str,
    family: Family,
    n_alpha: usize,
    n_lambda: usize,
    local_search: bool,
    raw_scale: bool,
    out: &Path,
) -> Result<(PathResult, Array1<f64>, CsvSchema)> {
    let schema = CsvSchema {
        cluster: cluster.to_string(),
        response: response.to_string(),
        predictors: None,
    };
    let train = load_csv(data, &schema, family)?.standardize()?;
    let scales = train.scales.clone();
    let cfg = PathConfig {
        n_lambda,
        alphas: alpha_grid(n_alpha)?,
        use_local_search: local_search,
        ..PathConfig::default()
    };
    let path = fit_path(&train, &cfg)?;
    fs::create_dir_all(out)?;
    write_path_csv(&path, fs::File::create(out.join("path.csv"))?)?;
    let coef_scales = raw_scale.then_some(&scales);
    write_coefficients_csv(
        &path,
        fs::File::create(out.join("coefficients.csv"))?,
        coef_scales,
    )?;
    write_scales_csv(out, &scales)?;
    Ok((path, scales, schema))
}

fn termination_json(path: &PathResult) -> serde_json::Value {
    serde_json::Value::Array(
        path.termination
            .iter()
            .map(|(alpha, end)| {
                serde_json::json!({ "alpha": alpha, "reason": end.to_string() })
            })
            .collect(),
    )
}

/// Nonzero coefficients of one entry, optionally mapped back to the
/// original predictor scale (beta and BLUPs divide by the column scale,
/// gamma by its square).
fn write_chosen_csv(
    dir: &Path,
    entry: &PathEntry,
    scales: Option<&Array1<f64>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("chosen.csv"))?;
    w.write_record(["predictor", "beta", "gamma"])?;
    let gamma = entry
        .beta
        .iter()
        .map(|&(k, _)| {
            entry
                .gamma
                .iter()
                .find(|&&(j, _)| j == k)
                .map_or(0.0, |&(_, g)| g)
        })
        .collect::<Vec<f64>>();
    for (&(k, b), g) in entry.beta.iter().zip(gamma) {
        let (bs, gs) = match scales {
            Some(s) => (b / s[k], g / (s[k] * s[k])),
            None => (b, g),
        };
        w.write_record([
            format!("x{}", k + 1),
            bs.to_string(),
            gs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_blups_csv(
    dir: &Path,
    entry: &PathEntry,
    cluster_ids: &[String],
    scales: Option<&Array1<f64>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("blups.csv"))?;
    w.write_record(["cluster", "predictor", "u"])?;
    for (id, blups) in cluster_ids.iter().zip(&entry.blups) {
        for &(k, u) in blups {
            let us = match scales {
                Some(s) => u / s[k],
                None => u,
            };
            w.write_record([id.clone(), format!("x{}", k + 1), us.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let family: Family = args.family.into();
    let (path, scales, schema) = fit_and_write_path(
        &args.data,
        &args.cluster,
        &args.response,
        family,
        args.alpha_grid,
        args.n_lambda,
        args.local_search,
        args.raw_scale,
        &args.out,
    )?;
    let mut chosen_json = serde_json::Value::Null;
    if let Some(vpath) = &args.validation {
        let mut validation = load_csv(vpath, &schema, family)?;
        validation.apply_scales(&scales)?;
        let tuned = tune(&path, &validation)?;
        let coef_scales = args.raw_scale.then_some(&scales);
        write_chosen_csv(&args.out, &tuned.entry, coef_scales)?;
        write_blups_csv(&args.out, &tuned.entry, &path.cluster_ids, coef_scales)?;
        chosen_json = serde_json::json!({
            "lambda": tuned.entry.lambda,
            "alpha": tuned.entry.alpha,
            "validation_loss": tuned.loss,
            "sigma2_hat": tuned.entry.sigma2_hat,
            "objective": tuned.entry.objective,
            "nnz_fixed": tuned.entry.nnz_fixed(),
            "nnz_random": tuned.entry.nnz_random(),
        });
    }
    let config = serde_json::json!({
        "args": &args,
        "termination": termination_json(&path),
        "chosen": chosen_json,
    });
    write_manifest(&args.out, "fit", config)
}

fn cmd_path(args: PathArgs) -> Result<()> {
    let (path, _, _) = fit_and_write_path(
        &args.data,
        &args.cluster,
        &args.response,
        args.family.into(),
        args.alpha_grid,
        args.n_lambda,
        args.local_search,
        args.raw_scale,
        &args.out,
    )?;
    let config = serde_json::json!({
        "args": &args,
        "termination": termination_json(&path),
    });
    write_manifest(&args.out, "path", config)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let sim = match &args.config {
        Some(file) => {
            let text = fs::read_to_string(file)?;
            toml::from_str::<SimConfig>(&text)
                .map_err(|e| Error::InvalidConfig(format!("config file: {e}")))?
        }
        None => SimConfig {
            // clap enforces presence when --config is absent.
            n_total: args.n_total.unwrap(),
            p: args.p.unwrap(),
            s_fixed: args.s_fixed.unwrap(),
            s_random: args.s_random.unwrap(),
            rho: args.rho,
            family: args.family.into(),
            seed: args.seed.unwrap(),
        },
    };
    let study = generate_study(&sim)?;
    fs::create_dir_all(&args.out)?;
    write_csv(&study.train, args.out.join("train.csv"))?;
    write_csv(&study.validation, args.out.join("validation.csv"))?;
    write_truth_csv(&study.truth, args.out.join("truth.csv"))?;
    let config = serde_json::json!({
        "args": &args,
        "generator": &sim,
        "sigma2": study.truth.sigma2,
        "n_clusters": sim.n_clusters(),
    });
    write_manifest(&args.out, "simulate", config)
}

fn experiment_csv_header() -> [&'static str; 16] {
    [
        "n_total",
        "p",
        "rho",
        "family",
        "method",
        "replicate",
        "seed",
        "status",
        "f1_effect_type",
        "f1_nonzero",
        "prediction_error",
        "sparsity",
        "chosen_lambda",
        "chosen_alpha",
        "seconds",
        "error",
    ]
}

fn write_replicates_csv(dir: &Path, cfg: &ExperimentConfig, res: &ExperimentResult) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("replicates.csv"))?;
    w.write_record(experiment_csv_header())?;
    for r in &res.records {
        let cell = &cfg.cells[r.cell];
        let head = [
            cell.n_total.to_string(),
            cell.p.to_string(),
            cell.rho.to_string(),
            cell.family.to_string(),
            cell.method.to_string(),
            r.replicate.to_string(),
            r.seed.to_string(),
        ];
        let tail = match &r.outcome {
            Ok(m) => [
                "ok".to_string(),
                m.f1_effect_type.to_string(),
                m.f1_nonzero.to_string(),
                m.prediction_error.to_string(),
                m.sparsity.to_string(),
                m.chosen_lambda.to_string(),
                m.chosen_alpha.to_string(),
                m.seconds.to_string(),
                String::new(),
            ],
            Err(e) => [
                "failed".to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.clone(),
            ],
        };
        w.write_record(head.iter().chain(tail.iter()))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let mut cells = Vec::new();
    for &n_total in &args.n_total {
        for &p in &args.p {
            for &rho in &args.rho {
                for &method in &args.method {
                    cells.push(ExperimentCell {
                        n_total,
                        p,
                        rho,
                        family: args.family.into(),
                        method: method.into(),
                    });
                }
            }
        }
    }
    let cfg = ExperimentConfig {
        cells,
        replicates: args.replicates,
        seed: args.seed,
        s_fixed: args.s_fixed,
        s_random: args.s_random,
        path: PathConfig {
            n_lambda: args.n_lambda,
            alphas: alpha_grid(args.alpha_grid)?,
            ..PathConfig::default()
        },
    };
    let result = run_experiment(&cfg)?;
    fs::create_dir_all(&args.out)?;
    glmmselect::evaluate::write_experiment_csv(
        &result,
        fs::File::create(args.out.join("results.csv"))?,
    )?;
    write_replicates_csv(&args.out, &cfg, &result)?;
    write_manifest(&args.out, "evaluate", serde_json::json!({ "args": &args }))
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    if args.repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be positive".into()));
    }
    fs::create_dir_all(&args.out)?;
    let mut w = csv::Writer::from_path(args.out.join("bench.csv"))?;
    w.write_record([
        "n_total",
        "p",
        "method",
        "repeats",
        "entries",
        "seconds_mean",
        "seconds_se",
    ])?;
    for &n_total in &args.n_total {
        for &p in &args.p {
            let sim = SimConfig {
                n_total,
                p,
                s_fixed: args.s_fixed.min(p),
                s_random: args.s_random.min(args.s_fixed.min(p)),
                rho: args.rho,
                family: Family::Gaussian,
                seed: args.seed,
            };
            let (data, _) = generate_synthetic(&sim)?;
            let data = data.standardize()?;
            for &method in &args.method {
                let cfg = PathConfig {
                    n_lambda: args.n_lambda,
                    alphas: alpha_grid(args.alpha_grid)?,
                    use_local_search: method == MethodArg::CdLs,
                    ..PathConfig::default()
                };
                let mut times = Vec::with_capacity(args.repeats);
                let mut entries = 0usize;
                for _ in 0..args.repeats {
                    let start = Instant::now();
                    let path = fit_path(&data, &cfg)?;
                    times.push(start.elapsed().as_secs_f64());
                    entries = path.entries.len();
                }
                let (mean, se) = mean_se(&times);
                w.write_record([
                    n_total.to_string(),
                    p.to_string(),
                    Method::from(method).to_string(),
                    args.repeats.to_string(),
                    entries.to_string(),
                    mean.to_string(),
                    se.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    write_manifest(&args.out, "bench", serde_json::json!({ "args": &args }))
}
