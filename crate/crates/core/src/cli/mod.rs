//! Batch command-line front end.
//!
//! Every command writes `report.json` (tool version, resolved configuration,
//! seed, results) plus per-time CSVs into `--output-dir`. Exit status: 0 on
//! success (non-converged results included, with a warning line), 1 on usage
//! or configuration errors, 2 on data errors, 3 on numerical failures.

mod commands;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::bayes::PriorSpec;
use crate::data::TimeSeriesData;
use crate::error::{Result, SsmError};
use crate::estimation::Backend;
use crate::model::StateSpaceModel;
use crate::zoo::ModelConfig;

#[derive(Parser, Debug)]
#[command(name = "ssmkit", version, about = "State-space model fitting, selection and diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct Common {
    /// Directory receiving report.json and CSV artifacts.
    #[arg(long, short = 'o')]
    pub output_dir: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
    /// Master seed; required by stochastic commands.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct ModelArgs {
    /// Model configuration JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Observation CSV with `time`, `y`/`y1..yk`, optional covariates and `quality`.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct BackendArgs {
    /// kalman, laplace, grid, particle, hmm or auto.
    #[arg(long, default_value = "auto")]
    pub backend: String,
    /// Grid cells.
    #[arg(long, default_value_t = 400)]
    pub cells: usize,
    /// Grid bounds `lo,hi` (chosen from the model when absent).
    #[arg(long, value_parser = parse_bounds)]
    pub bounds: Option<(f64, f64)>,
    /// Particle count for particle backends.
    #[arg(long, default_value_t = 1000)]
    pub particles: usize,
    /// Nelder-Mead restarts from the incumbent.
    #[arg(long, default_value_t = 2)]
    pub restarts: usize,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct McmcArgs {
    /// Prior JSON `{"name": {"family": "half_normal", "sd": 1}, ...}`; weakly informative defaults otherwise.
    #[arg(long)]
    pub priors: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 4000)]
    pub iters: usize,
    /// Warm-up draws discarded (half the iterations by default).
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Initial proposal SDs on the transformed scale, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub proposal_sds: Option<Vec<f64>>,
    /// Disable warm-up proposal tuning.
    #[arg(long)]
    pub no_adapt: bool,
    /// Parameter names that must stay increasing, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ordering: Option<Vec<String>>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate states and observations from a model.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Number of time steps on a unit-spaced grid.
        #[arg(long = "T", alias = "t-len")]
        t_len: Option<usize>,
        /// Data CSV whose layout (times, missingness, covariates) is reused.
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Maximum-likelihood fit.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: ModelArgs,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Profile likelihood of one parameter.
    Profile {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: ModelArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        param: String,
        #[arg(long, default_value_t = 21)]
        points: usize,
        /// Explicit grid, comma separated.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Flatness threshold in log-likelihood units.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Hessian eigen-analysis, profiles of every free parameter and optional simulation study.
    Ident {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: ModelArgs,
        #[command(flatten)]
        backend: BackendArgs,
        /// Smallest/largest eigenvalue ratio flagged as singular.
        #[arg(long, default_value_t = 1e-6)]
        rel_tol: f64,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Simulation-estimability replicates (0 to skip).
        #[arg(long, default_value_t = 0)]
        replicates: usize,
    },
    /// Posterior sampling.
    Mcmc {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: ModelArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        mcmc: McmcArgs,
        /// rw (marginal likelihood), gibbs (FFBS states) or pmmh.
        #[arg(long, default_value = "rw")]
        sampler: String,
        /// Store one state trajectory per draw.
        #[arg(long)]
        keep_states: bool,
    },
    /// Data cloning: posterior variance against the number of clones.
    Clone {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: ModelArgs,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        mcmc: McmcArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,4,16")]
        clones: Vec<usize>,
    },
    /// Compare models by information criteria.
    Select {
        #[command(flatten)]
        common: Common,
        /// Model configurations (repeat the flag).
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        mcmc: McmcArgs,
        /// Any of aic, aicc, aicb, waic, dic, waic_conditional, dic_conditional.
        #[arg(long, value_delimiter = ',', default_value = "aic,aicc")]
        criteria: Vec<String>,
        #[arg(long, default_value_t = 100)]
        bootstrap: usize,
        /// Cap on posterior draws used per criterion.
        #[arg(long, default_value_t = 2000)]
        max_draws: usize,
    },
    /// Residuals, predictive check and process-noise check at the MLE.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: ModelArgs,
        #[command(flatten)]
        backend: BackendArgs,
        /// Skip fitting and use the configuration's values.
        #[arg(long)]
        no_fit: bool,
        /// mean, sd or ssr.
        #[arg(long, default_value = "sd")]
        statistic: String,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
        /// Replicate states: posterior (observations redrawn around a smoothed draw) or new.
        #[arg(long, default_value = "posterior")]
        ppc_states: String,
        /// Significance level for the verdict flags.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 20)]
        max_lag: usize,
    },
    /// Cross-validated mean squared prediction error.
    Cv {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: ModelArgs,
        #[command(flatten)]
        backend: BackendArgs,
        /// rolling or block.
        #[arg(long, default_value = "rolling")]
        scheme: String,
        #[arg(long, default_value_t = 10)]
        origin: usize,
        #[arg(long, default_value_t = 1)]
        refit_every: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Keep the configuration's values instead of refitting per fold.
        #[arg(long)]
        no_refit: bool,
    },
}

fn parse_bounds(s: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected `lo,hi`".into());
    }
    let lo = parts[0].trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = parts[1].trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Fit { common, .. }
            | Command::Profile { common, .. }
            | Command::Ident { common, .. }
            | Command::Mcmc { common, .. }
            | Command::Clone { common, .. }
            | Command::Select { common, .. }
            | Command::Diagnose { common, .. }
            | Command::Cv { common, .. } => common,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Fit { .. } => "fit",
            Command::Profile { .. } => "profile",
            Command::Ident { .. } => "ident",
            Command::Mcmc { .. } => "mcmc",
            Command::Clone { .. } => "clone",
            Command::Select { .. } => "select",
            Command::Diagnose { .. } => "diagnose",
            Command::Cv { .. } => "cv",
        }
    }
}

/// What a command produced: results for the report and extra files.
pub(crate) struct Outcome {
    pub config: Value,
    pub results: Value,
    pub files: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub converged: bool,
}

impl Outcome {
    pub fn new(config: Value, results: Value) -> Self {
        Self { config, results, files: vec![], warnings: vec![], converged: true }
    }
}

pub(crate) fn load_model(path: &Path) -> Result<(ModelConfig, Box<dyn StateSpaceModel>)> {
    let text = std::fs::read_to_string(path).map_err(|e| SsmError::Config(format!("cannot read model file {}: {e}", path.display())))?;
    let cfg = ModelConfig::from_json(&text)?;
    let model = cfg.build()?;
    Ok((cfg, model))
}

pub(crate) fn load_data(path: &Path) -> Result<TimeSeriesData> {
    TimeSeriesData::from_csv_path(path)
}

pub(crate) fn require_seed(common: &Common, what: &str) -> Result<u64> {
    common.seed.ok_or_else(|| SsmError::Config(format!("`{what}` is stochastic; pass --seed")))
}

pub(crate) fn make_backend(
    args: &BackendArgs,
    model: &dyn StateSpaceModel,
    data: &TimeSeriesData,
    seed: Option<u64>,
) -> Result<Backend> {
    let theta = model.spec().nominal();
    let b = match args.backend.as_str() {
        "auto" => match Backend::auto(model, data, &theta) {
            Backend::Grid { .. } => Backend::Grid { cells: args.cells, bounds: args.bounds },
            b => b,
        },
        "kalman" => Backend::Kalman,
        "laplace" => Backend::Laplace,
        "grid" => Backend::Grid { cells: args.cells, bounds: args.bounds },
        "hmm" => Backend::Hmm,
        "particle" => Backend::Particle {
            particles: args.particles,
            seed: seed.ok_or_else(|| SsmError::Config("the particle backend is stochastic; pass --seed".into()))?,
        },
        other => {
            return Err(SsmError::Config(format!(
                "unknown backend `{other}`; expected kalman, laplace, grid, particle, hmm or auto"
            )))
        }
    };
    b.check(model, data, &theta)?;
    Ok(b)
}

/// Priors from a file, completed by weakly informative defaults; names not free in the model are dropped.
pub(crate) fn load_priors(path: Option<&Path>, model: &dyn StateSpaceModel) -> Result<PriorSpec> {
    let mut p = PriorSpec::weakly_informative(model.spec());
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| SsmError::Config(format!("cannot read priors {}: {e}", path.display())))?;
        let given = PriorSpec::from_json(&text).map_err(|e| SsmError::Config(format!("invalid priors file: {e}")))?;
        let free = model.spec().free_names();
        for (k, v) in given.priors {
            if free.contains(&k) {
                p.priors.insert(k, v);
            }
        }
    }
    p.check(model.spec())?;
    Ok(p)
}

fn prepare_output(dir: &Path, force: bool, files: &[String]) -> Result<()> {
    if dir.exists() && !force {
        for f in files.iter().map(String::as_str).chain(["report.json"]) {
            if dir.join(f).exists() {
                return Err(SsmError::Config(format!(
                    "{} already exists; pass --force to overwrite",
                    dir.join(f).display()
                )));
            }
        }
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// JSON with non-finite numbers mapped to null.
pub(crate) fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn execute(cli: &Cli, warn: &mut dyn FnMut(&str)) -> Result<()> {
    let common = cli.command.common();
    if let Some(0) = common.workers {
        return Err(SsmError::Config("--workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers.unwrap_or(0))
        .build()
        .map_err(|e| SsmError::Config(format!("cannot start worker pool: {e}")))?;
    prepare_output(&common.output_dir, common.force, &[])?;
    let outcome = pool.install(|| commands::dispatch(&cli.command))?;
    let names: Vec<String> = outcome.files.iter().map(|f| f.0.clone()).collect();
    prepare_output(&common.output_dir, common.force, &names)?;
    for (name, body) in &outcome.files {
        std::fs::write(common.output_dir.join(name), body)?;
    }
    let mut report = BTreeMap::new();
    report.insert("tool", json!("ssmkit"));
    report.insert("version", json!(env!("CARGO_PKG_VERSION")));
    report.insert("command", json!(cli.command.name()));
    report.insert("seed", json!(common.seed));
    report.insert("config", outcome.config);
    report.insert("converged", json!(outcome.converged));
    report.insert("warnings", json!(outcome.warnings));
    report.insert("results", outcome.results);
    let text = serde_json::to_string_pretty(&report)?;
    std::fs::write(common.output_dir.join("report.json"), text + "\n")?;
    for w in &outcome.warnings {
        warn(w);
    }
    if !outcome.converged {
        warn("results are flagged as not converged");
    }
    Ok(())
}

/// Parse `argv` (program name first) and run; returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut warn = |w: &str| eprintln!("warning: {w}");
    match execute(&cli, &mut warn) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
