use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dpmbq::experiment::{
    convergence_study, coverage_study, dpmbq_wasserstein, Method, StudyConfig,
};
use dpmbq::metrics::central_credible_interval;
use dpmbq::sampler::{sample_integral_posterior, sample_integral_posterior_standardized};
use dpmbq::testbed::mc_t_interval;
use dpmbq::{HyperPriors, SamplerConfig};
use serde::Serialize;
use serde_json::json;

use crate::input::{load_task, parse_samples, read_input, Format};
use crate::{CliError, Output};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "dpmbq",
    version,
    about = "Bayesian quadrature under an unknown sampling distribution"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Posterior over the integral from a sample set.
    Estimate(EstimateArgs),
    /// Interval coverage of DPMBQ and the t-interval on a test task.
    Coverage(CoverageArgs),
    /// Wasserstein distance of the posterior to the truth over a grid of n.
    Convergence(ConvergenceArgs),
    /// Student-t Monte Carlo interval from a sample set.
    Baseline(BaselineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SamplerArgs {
    /// Number of posterior draws of the integral.
    #[arg(long, default_value_t = 500)]
    pub draws: usize,
    /// Stick-breaking truncation level.
    #[arg(long, default_value_t = 500)]
    pub truncation: usize,
    /// Gibbs sweeps before each draw.
    #[arg(long, default_value_t = 100)]
    pub burn_in: usize,
}

impl SamplerArgs {
    fn config(&self, seed: u64) -> Result<SamplerConfig, CliError> {
        let config = SamplerConfig {
            outer_draws: self.draws,
            truncation: self.truncation,
            burn_in_sweeps: self.burn_in,
            between_sweeps: 1,
            seed,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Input format; guessed from the file extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Central credible levels to report.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.9")]
    pub levels: Vec<f64>,
    /// Run on f standardized to mean 0 and sd 1, mapping draws back afterwards.
    #[arg(long)]
    pub standardize_f: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    /// Task JSON file, or `builtin:illustration` / `builtin:rare-event`.
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub trials: usize,
    /// Trials for the t-interval; defaults to `--trials`.
    #[arg(long)]
    pub baseline_trials: Option<usize>,
    #[arg(long = "n", value_delimiter = ',', required = true)]
    pub ns: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Methods to evaluate.
    #[arg(long, value_delimiter = ',', default_value = "dpmbq,t-interval")]
    pub methods: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long, value_delimiter = ',', default_value = "10,20,40,80,160")]
    pub n_grid: Vec<usize>,
    #[arg(long)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, default_value_t = 0.5)]
    pub level: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(command: &Command) -> Result<Output, CliError> {
    match command {
        Command::Estimate(a) => estimate(a),
        Command::Coverage(a) => coverage(a),
        Command::Convergence(a) => convergence(a),
        Command::Baseline(a) => baseline(a),
    }
}

fn check_level(level: f64) -> Result<(), CliError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CliError::Invalid(format!(
            "level must lie in (0, 1), got {level}"
        )))
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct EstimateReport {
    draws: Vec<f64>,
    mean: f64,
    sd: f64,
    intervals: BTreeMap<String, [f64; 2]>,
    meta: serde_json::Value,
}

pub fn estimate(args: &EstimateArgs) -> Result<Output, CliError> {
    args.levels.iter().try_for_each(|l| check_level(*l))?;
    let raw = read_input(&args.input)?;
    let format = args.format.unwrap_or_else(|| Format::guess(&args.input));
    let samples = parse_samples(&raw.text, format)?;
    let priors = HyperPriors::default();
    let config = args.sampler.config(args.seed)?;

    let (post, standardization) = if args.standardize_f {
        let (post, st) = sample_integral_posterior_standardized(&samples, &priors, &config)?;
        (post, Some(st))
    } else {
        (sample_integral_posterior(&samples, &priors, &config)?, None)
    };

    let mut intervals = BTreeMap::new();
    for &level in &args.levels {
        let (lo, hi) = central_credible_interval(&post.draws, level)?;
        intervals.insert(level.to_string(), [lo, hi]);
    }
    let report = EstimateReport {
        mean: post.mean(),
        sd: post.sd(),
        intervals,
        meta: json!({
            "version": VERSION,
            "seed": args.seed,
            "input_sha256": raw.sha256,
            "n": samples.len(),
            "dim": samples.dim(),
            "failed_draws": post.failures,
            "standardization": standardization,
            "config": {
                "format": format_name(format),
                "levels": args.levels,
                "standardize_f": args.standardize_f,
                "sampler": config,
                "priors": priors,
            },
        }),
        draws: post.draws,
    };
    Ok(Output {
        body: to_json(&report),
        sidecar: None,
        out: args.out.clone(),
    })
}

fn format_name(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn parse_method(name: &str) -> Result<Method, CliError> {
    match name {
        "dpmbq" => Ok(Method::Dpmbq),
        "t-interval" => Ok(Method::TInterval),
        other => Err(CliError::Invalid(format!("unknown method {other:?}"))),
    }
}

pub fn coverage(args: &CoverageArgs) -> Result<Output, CliError> {
    check_level(args.level)?;
    let baseline_trials = args.baseline_trials.unwrap_or(args.trials);
    if args.trials == 0 || baseline_trials == 0 {
        return Err(CliError::Invalid("trials must be at least 1".into()));
    }
    let (task, task_hash) = load_task(&args.task)?;
    let methods = args
        .methods
        .iter()
        .map(|m| parse_method(m))
        .collect::<Result<Vec<_>, _>>()?;
    let plan: Vec<(Method, usize)> = methods
        .iter()
        .map(|&m| {
            (
                m,
                if m == Method::TInterval {
                    baseline_trials
                } else {
                    args.trials
                },
            )
        })
        .collect();
    let config = StudyConfig {
        seed: args.seed,
        priors: HyperPriors::default(),
        sampler: args.sampler.config(0)?,
    };
    let rows = coverage_study(&task, &plan, &args.ns, args.level, &config)?;

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["method", "n", "trials", "rate", "se"])
        .map_err(csv_write)?;
    for row in &rows {
        writer
            .write_record([
                row.method.to_string(),
                row.n.to_string(),
                row.trials.to_string(),
                row.rate.to_string(),
                row.se.to_string(),
            ])
            .map_err(csv_write)?;
    }
    let body = String::from_utf8(
        writer
            .into_inner()
            .map_err(|e| CliError::Write(e.to_string()))?,
    )
    .expect("utf-8 csv");
    let meta = json!({
        "meta": {
            "version": VERSION,
            "seed": args.seed,
            "task_sha256": task_hash,
            "config": {
                "task": task,
                "level": args.level,
                "ns": args.ns,
                "plan": plan.iter().map(|(m, t)| json!({"method": m, "trials": t})).collect::<Vec<_>>(),
                "sampler": config.sampler,
                "priors": config.priors,
            },
        },
    });
    Ok(Output {
        body,
        sidecar: Some(to_json(&meta)),
        out: args.out.clone(),
    })
}

fn csv_write(e: csv::Error) -> CliError {
    CliError::Write(e.to_string())
}

pub fn convergence(args: &ConvergenceArgs) -> Result<Output, CliError> {
    let (task, task_hash) = load_task(&args.task)?;
    let config = StudyConfig {
        seed: args.seed,
        priors: HyperPriors::default(),
        sampler: args.sampler.config(0)?,
    };
    let study = convergence_study(&args.n_grid, args.reps, |n, rep| {
        dpmbq_wasserstein(&task, n, rep, &config)
    })?;

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["n", "rep", "wasserstein"])
        .map_err(csv_write)?;
    for row in &study.rows {
        writer
            .write_record([
                row.n.to_string(),
                row.rep.to_string(),
                row.wasserstein.to_string(),
            ])
            .map_err(csv_write)?;
    }
    let body = String::from_utf8(
        writer
            .into_inner()
            .map_err(|e| CliError::Write(e.to_string()))?,
    )
    .expect("utf-8 csv");
    let ci = study.fit.slope_interval(0.95).ok().map(|(lo, hi)| [lo, hi]);
    let summary = json!({
        "slope": study.fit.slope,
        "intercept": study.fit.intercept,
        "slope_se": study.fit.slope_se,
        "slope_ci95": ci,
        "points": study.fit.points,
        "meta": {
            "version": VERSION,
            "seed": args.seed,
            "task_sha256": task_hash,
            "config": {
                "task": task,
                "n_grid": args.n_grid,
                "reps": args.reps,
                "sampler": config.sampler,
                "priors": config.priors,
            },
        },
    });
    Ok(Output {
        body,
        sidecar: Some(to_json(&summary)),
        out: args.out.clone(),
    })
}

pub fn baseline(args: &BaselineArgs) -> Result<Output, CliError> {
    check_level(args.level)?;
    let raw = read_input(&args.input)?;
    let format = args.format.unwrap_or_else(|| Format::guess(&args.input));
    let samples = parse_samples(&raw.text, format)?;
    let values = samples.values();
    if values.len() < 2 {
        return Err(CliError::Invalid(format!(
            "the t-interval needs n >= 2, got {}",
            values.len()
        )));
    }
    let (lo, hi) = mc_t_interval(values, args.level)?;
    let report = json!({
        "n": values.len(),
        "mean": values.iter().sum::<f64>() / values.len() as f64,
        "level": args.level,
        "interval": [lo, hi],
        "meta": {
            "version": VERSION,
            "input_sha256": raw.sha256,
            "config": { "format": format_name(format), "level": args.level },
        },
    });
    Ok(Output {
        body: to_json(&report),
        sidecar: None,
        out: args.out.clone(),
    })
}
