//! Command-line front end.
//!
//! Exit codes: 0 success (or a conclusive decision), 1 failure, 2 inconclusive
//! decision, 64 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::detectors::Method;
use crate::error::{Error, Result};
use crate::eval::{self, DistributionReport};
use crate::io;
use crate::scenario::Scenario;
use crate::stats::{self, AsymptoticParams};
use crate::suite::{self, MethodSpec, SuiteConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

pub const SEED_ENV: &str = "RANKSCOPE_SEED";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Parser, Serialize, Deserialize)]
#[command(name = "rankscope", version, about = "Rank testing and source counting from sparse samples")]
pub struct Cli {
    /// Master seed; falls back to $RANKSCOPE_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    #[serde(skip)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate a field and its sampled observations from a scenario config.
    Generate(GenerateArgs),
    /// Estimate the rank of an observations file.
    Detect(DetectArgs),
    /// Monte Carlo check of the ratio statistics against their limiting law.
    Validate(ValidateArgs),
    /// Run a benchmark suite of methods over scenarios.
    Benchmark(BenchmarkArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    /// Scenario TOML; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of sources (overrides the config).
    #[arg(long)]
    pub count: Option<usize>,
}

fn parse_method(s: &str) -> std::result::Result<String, String> {
    s.parse::<Method>().map(|m| m.to_string()).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DetectArgs {
    /// Observations CSV (`# rows=R cols=C`, then `i,j,value`).
    pub observations: PathBuf,
    /// variance_ratio, averaged_rotations or baseline.
    #[arg(long, default_value = "variance_ratio", value_parser = parse_method)]
    pub method: String,
    /// Fixed threshold.
    #[arg(long, conflicts_with = "alpha")]
    pub b: Option<f64>,
    /// Significance level; the threshold follows from the limiting law.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub r_max: Option<usize>,
    /// Sub-sampling ratio c.
    #[arg(long)]
    pub c: Option<usize>,
    /// Chain length L.
    #[arg(long, visible_alias = "L")]
    pub steps: Option<usize>,
    /// Search for the optimal rotation first.
    #[arg(long)]
    pub rotate: bool,
    #[arg(long)]
    pub two_sided: bool,
    /// Leading singular values for averaged_rotations.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of rotation angles.
    #[arg(long)]
    pub angles: Option<usize>,
    /// Soft-impute regularization.
    #[arg(long)]
    pub reg: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

impl DetectArgs {
    pub fn method_spec(&self) -> MethodSpec {
        MethodSpec {
            name: None,
            method: self.method.clone(),
            b: self.b,
            alpha: self.alpha,
            r_max: self.r_max,
            c: self.c,
            steps: self.steps,
            rotate: self.rotate.then_some(true),
            two_sided: self.two_sided.then_some(true),
            n: self.n,
            angles: self.angles,
            reg: self.reg,
            max_iters: self.max_iters,
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 20)]
    pub c: usize,
    /// Chain length L.
    #[arg(long, visible_alias = "L", default_value_t = 150)]
    pub steps: usize,
    /// Monte Carlo replicates (at least 100).
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(100..))]
    pub reps: u64,
    /// Levels at which rejection rates are reported.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.05, 0.1])]
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BenchmarkArgs {
    /// Suite TOML.
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Written once per output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub invocation: Cli,
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub version: String,
    pub out_dir: PathBuf,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn resolve_seed(flag: Option<u64>) -> std::result::Result<u64, String> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("{SEED_ENV}='{v}' is not an unsigned integer")),
        Err(_) => Ok(0),
    }
}

/// Failure of a command: usage problems exit 64, everything else exits 1.
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn error_json(e: &Error) -> String {
    serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } }).to_string()
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    execute(cli)
}

pub fn execute(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            println!("{}", error_json(&e));
            EXIT_FAILURE
        }
    }
}

fn dispatch(mut cli: Cli) -> std::result::Result<i32, Failure> {
    if let Command::Replay(r) = &cli.command {
        let manifest = RunManifest::read(&r.manifest)?;
        let mut inv = manifest.invocation;
        inv.seed = Some(manifest.seed);
        if cli.out.is_some() {
            inv.out = cli.out.clone();
        }
        if cli.workers.is_some() {
            inv.workers = cli.workers;
        }
        if matches!(inv.command, Command::Replay(_)) {
            return Err(Failure::Usage("manifest records a replay".into()));
        }
        return dispatch(inv);
    }
    let seed = resolve_seed(cli.seed).map_err(Failure::Usage)?;
    cli.seed = Some(seed);
    if cli.workers == Some(0) {
        return Err(Failure::Usage("--workers must be at least 1".into()));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| Failure::Run(Error::Input(e.to_string())))?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("rankscope-out"));
    cli.out = Some(out.clone());
    let started = unix_now();
    let clock = Instant::now();
    let (name, config, code) = pool.install(|| -> std::result::Result<_, Failure> {
        Ok(match &cli.command {
            Command::Generate(a) => ("generate", a.config.clone(), cmd_generate(a, seed, &out)?),
            Command::Detect(a) => ("detect", None, cmd_detect(a, seed, &out)?),
            Command::Validate(a) => ("validate", None, cmd_validate(a, seed, &out)?),
            Command::Benchmark(a) => ("benchmark", Some(a.config.clone()), cmd_benchmark(a, seed, &out)?),
            Command::Replay(_) => unreachable!(),
        })
    })?;
    let manifest = RunManifest {
        command: name.to_string(),
        config,
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        out_dir: out.clone(),
        started_unix: started,
        finished_unix: unix_now(),
        wall_seconds: clock.elapsed().as_secs_f64(),
        invocation: cli,
    };
    std::fs::write(
        out.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest).map_err(Error::from)? + "\n",
    )
    .map_err(Error::from)?;
    Ok(code)
}

fn cmd_generate(a: &GenerateArgs, seed: u64, out: &Path) -> Result<i32> {
    let scenario = match &a.config {
        Some(p) => Scenario::from_file(p)?,
        None => Scenario::default(),
    };
    let count = a.count.unwrap_or(scenario.sources.count);
    let inst = scenario.generate(count, seed)?;
    std::fs::create_dir_all(out)?;
    io::write_dense(&out.join("truth.csv"), &inst.field.truth)?;
    io::write_observations(&out.join("observations.csv"), &inst.observations)?;
    std::fs::write(
        out.join("sources.json"),
        serde_json::to_string_pretty(&inst.field.sources)? + "\n",
    )?;
    std::fs::write(out.join("scenario.toml"), scenario.to_toml())?;
    println!(
        "{}",
        serde_json::json!({
            "sources": inst.field.sources.len(),
            "observed": inst.observations.len(),
            "out": out,
        })
    );
    Ok(EXIT_OK)
}

fn cmd_detect(a: &DetectArgs, seed: u64, out: &Path) -> std::result::Result<i32, Failure> {
    let detector = a.method_spec().to_detector().map_err(|e| Failure::Usage(e.to_string()))?;
    let obs = io::read_observations(&a.observations)?;
    let decision = detector.detect(&obs, seed)?;
    let json = decision.to_json()?;
    println!("{json}");
    std::fs::create_dir_all(out).map_err(Error::from)?;
    std::fs::write(out.join("decision.json"), json + "\n").map_err(Error::from)?;
    Ok(if decision.is_conclusive() { EXIT_OK } else { EXIT_INCONCLUSIVE })
}

#[derive(Serialize)]
struct ValidateReport<'a> {
    c: usize,
    steps: usize,
    reps: usize,
    threshold: Vec<(f64, f64)>,
    ratio: &'a DistributionReport,
    split: &'a DistributionReport,
}

fn cmd_validate(a: &ValidateArgs, seed: u64, out: &Path) -> Result<i32> {
    let reps = a.reps as usize;
    let p = AsymptoticParams::new(a.c, a.steps);
    let ratios = stats::simulate_chi_square_ratio(a.c, a.steps, reps, rng_seed(seed, 0))?;
    let split = stats::simulate_split_ratio(a.c, a.steps, reps, rng_seed(seed, 1))?;
    let ratio_rep = eval::empirical_density_check(&ratios, a.c, a.steps, &a.alpha)?;
    let split_rep = eval::split_density_check(&split, a.c, a.steps, &a.alpha)?;
    let thresholds = a
        .alpha
        .iter()
        .map(|&al| stats::threshold(a.c, a.steps, al).map(|b| (al, b)))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("ratio_qq.csv"), eval::qq_csv(&ratios, p.ratio_mean, p.ratio_variance)?)?;
    std::fs::write(out.join("split_qq.csv"), eval::qq_csv(&split, p.ratio_mean, p.split_ratio_variance)?)?;
    let report = ValidateReport {
        c: a.c,
        steps: a.steps,
        reps,
        threshold: thresholds,
        ratio: &ratio_rep,
        split: &split_rep,
    };
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(out.join("report.json"), json.clone() + "\n")?;
    println!("{json}");
    Ok(EXIT_OK)
}

fn rng_seed(seed: u64, k: u64) -> u64 {
    crate::rng::derive_seed(seed, &[k])
}

fn cmd_benchmark(a: &BenchmarkArgs, seed: u64, out: &Path) -> std::result::Result<i32, Failure> {
    let suite = SuiteConfig::from_file(&a.config).map_err(|e| match e {
        Error::Parameter(m) => Failure::Usage(m),
        other => Failure::Run(other),
    })?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(out).map_err(Error::from)?;
    let results = suite::run_suite(&suite, base, seed, Some(out))?;
    let summary: Vec<serde_json::Value> = results
        .iter()
        .map(|r| serde_json::json!({ "method": r.method, "scenario": r.scenario, "f1": r.f1, "diagonal_mass": r.diagonal_mass }))
        .collect();
    println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
    Ok(EXIT_OK)
}
