//! Command-line front end: argument definitions, dispatch and exit codes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::analysis::{
    analyze_periods, load_observations_csv, parse_periods, split_periods, synthesize_temperature,
    target_from_curve, write_observations, AnalyzeOptions, CsvSchema, PeriodDataset, Record,
    SynthSpec,
};
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::moments::{asymptotic_profile, exact_profile, ExactFamily};
use crate::montecarlo::{replicate_stream, AlgoConfig};
use crate::rng::RngStream;
use crate::samplers::{inverse_square_variances, BkConfig, CdfConfig, MzwConfig};
use crate::validate::{drift_scenario, run_suite, select_suites, SuiteOptions, DEFAULT_SEED};
use crate::warp::{TargetWarp, WarpPath};

pub const EXIT_OK: u8 = 0;
/// A validation check failed.
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
/// Bad input data or a failure while running.
pub const EXIT_DATA: u8 = 3;

/// Exit code for an error: parameter problems are usage errors, the rest
/// are data or runtime errors.
pub fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::InvalidParameter(_) | Error::Domain(_) | Error::Unsupported(_) | Error::InvalidElement(_) => {
            EXIT_USAGE
        }
        _ => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "warpsim", version, about = "Simulate random warping functions, check their moments, and measure distribution drift")]
pub struct Cli {
    /// Number of worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw sample paths and write one CSV per path.
    Simulate(SimulateArgs),
    /// Exact and limiting mean/variance curves of the partition samplers.
    Oracle(OracleArgs),
    /// Run validation suites and write a JSON report.
    Validate(ValidateArgs),
    /// Drift bands of each period against a reference period.
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Cdh,
    Bk,
    Cdf,
    Mzw,
    MzwOriginal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OracleAlgo {
    Bk,
    Cdf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub algo: Algo,
    /// Number of random knots (cdh, bk, cdf).
    #[arg(long)]
    pub n: Option<usize>,
    /// Truncation order (mzw, mzw-original).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Localisation of the polygonal sampler (cdf only), default 0.5.
    #[arg(long)]
    pub p: Option<f64>,
    /// phi1, phi2, phi3 or file:PATH (a CSV with columns x,y); default phi1.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub algo: OracleAlgo,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub theta: Option<f64>,
    /// cdf only, default 0.5.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, default_value = "phi1")]
    pub target: String,
    /// Interior points k/(G+1), k = 1..G.
    #[arg(long, default_value_t = 99)]
    pub grid_size: usize,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// moments, convergence, theta-sweep, frechet, theta-limit, mzw-limit,
    /// theta-estimate, structural, drift or all.
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// JSON report file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Include the long-running checks.
    #[arg(long)]
    pub long: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// CSV file with a timestamp and a value column.
    #[arg(long, conflicts_with = "synthesize", required_unless_present = "synthesize")]
    pub data: Option<PathBuf>,
    /// JSON synthetic-data spec, or `demo` for the built-in drift scenario.
    #[arg(long)]
    pub synthesize: Option<String>,
    #[arg(long, default_value = "timestamp")]
    pub timestamp_column: String,
    #[arg(long, default_value = "value")]
    pub value_column: String,
    /// Comma-separated period labels, or START/END; default the first period.
    #[arg(long)]
    pub reference: Option<String>,
    /// label=START/END,... (taken from the spec with --synthesize).
    #[arg(long)]
    pub periods: Option<String>,
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Bootstrap replicates.
    #[arg(long = "B", default_value_t = 100)]
    pub b: usize,
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a parsed command line and returns the exit code.
pub fn run(cli: Cli) -> Result<u8> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Error::param("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Oracle(a) => oracle(&a),
        Command::Validate(a) => validate(&a),
        Command::Analyze(a) => analyze(&a),
    }
}

pub fn parse_target(spec: &str) -> Result<TargetWarp> {
    match spec.strip_prefix("file:") {
        Some(path) => {
            let w = WarpPath::load(path)?;
            target_from_curve(w.xs(), w.ys())
        }
        None => TargetWarp::builtin(spec),
    }
}

fn forbid<T>(value: &Option<T>, flag: &str, algo: &str) -> Result<()> {
    if value.is_some() {
        return Err(Error::param(format!("--{flag} does not apply to --algo {algo}")));
    }
    Ok(())
}

fn need<T: Copy>(value: Option<T>, flag: &str, algo: &str) -> Result<T> {
    value.ok_or_else(|| Error::param(format!("--algo {algo} requires --{flag}")))
}

fn build_algo(a: &SimulateArgs, man: &mut RunManifest) -> Result<AlgoConfig> {
    let name = a.algo.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    man.param("algo", &name);
    let target_spec = a.target.clone().unwrap_or_else(|| "phi1".into());
    let algo = match a.algo {
        Algo::Cdh => {
            forbid(&a.m, "m", &name)?;
            forbid(&a.p, "p", &name)?;
            forbid(&a.target, "target", &name)?;
            let (n, theta) = (need(a.n, "n", &name)?, need(a.theta, "theta", &name)?);
            man.param("n", n).param("theta", theta);
            AlgoConfig::Cdh { n, theta }
        }
        Algo::Bk => {
            forbid(&a.m, "m", &name)?;
            forbid(&a.p, "p", &name)?;
            let (n, theta) = (need(a.n, "n", &name)?, need(a.theta, "theta", &name)?);
            man.param("n", n).param("theta", theta).param("target", &target_spec);
            AlgoConfig::Bk(BkConfig::new(n, theta, parse_target(&target_spec)?)?)
        }
        Algo::Cdf => {
            forbid(&a.m, "m", &name)?;
            let (n, theta) = (need(a.n, "n", &name)?, need(a.theta, "theta", &name)?);
            let p = a.p.unwrap_or(0.5);
            man.param("n", n).param("theta", theta).param("p", p).param("target", &target_spec);
            AlgoConfig::Cdf(CdfConfig::new(n, theta, p, parse_target(&target_spec)?)?)
        }
        Algo::Mzw => {
            forbid(&a.n, "n", &name)?;
            forbid(&a.p, "p", &name)?;
            let (m, theta) = (need(a.m, "m", &name)?, need(a.theta, "theta", &name)?);
            man.param("m", m).param("theta", theta).param("target", &target_spec).param("variances", "1/i^2");
            AlgoConfig::Mzw(MzwConfig::standard(m, theta, &parse_target(&target_spec)?)?)
        }
        Algo::MzwOriginal => {
            forbid(&a.n, "n", &name)?;
            forbid(&a.p, "p", &name)?;
            forbid(&a.theta, "theta", &name)?;
            forbid(&a.target, "target", &name)?;
            let m = need(a.m, "m", &name)?;
            if m == 0 {
                return Err(Error::param("--m must be at least 1"));
            }
            man.param("m", m).param("variances", "1/i^2");
            AlgoConfig::MzwOriginal {
                v: inverse_square_variances(m),
            }
        }
    };
    Ok(algo)
}

fn simulate(a: &SimulateArgs) -> Result<u8> {
    let mut man = RunManifest::start("simulate", Some(a.seed));
    let algo = build_algo(a, &mut man)?;
    if a.paths == 0 {
        return Err(Error::param("--paths must be at least 1"));
    }
    man.param("paths", a.paths).param("seed", a.seed);
    std::fs::create_dir_all(&a.out)?;
    for k in 0..a.paths {
        let mut rng = replicate_stream(a.seed, k);
        let path = algo.simulate(&mut rng)?;
        let name = format!("path_{k:04}.csv");
        path.save(a.out.join(&name))?;
        man.output(name);
    }
    man.finish();
    man.save(a.out.join("manifest.json"))?;
    println!("wrote {} paths to {}", a.paths, a.out.display());
    Ok(EXIT_OK)
}

/// Grid k/(G+1), k = 1..G.
pub fn interior_grid(g: usize) -> Vec<f64> {
    (1..=g).map(|k| k as f64 / (g + 1) as f64).collect()
}

fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    out.with_file_name(format!("{stem}.manifest.json"))
}

fn oracle(a: &OracleArgs) -> Result<u8> {
    let mut man = RunManifest::start("oracle", None);
    let theta = a.theta.ok_or_else(|| Error::param("oracle requires --theta"))?;
    if a.grid_size == 0 {
        return Err(Error::param("--grid-size must be at least 1"));
    }
    let family = match a.algo {
        OracleAlgo::Bk => {
            forbid(&a.p, "p", "bk")?;
            ExactFamily::Bk
        }
        OracleAlgo::Cdf => ExactFamily::Cdf { p: a.p.unwrap_or(0.5) },
    };
    let target = parse_target(&a.target)?;
    let grid = interior_grid(a.grid_size);
    let exact = exact_profile(family, &grid, a.n, theta, &target)?;
    let limit = asymptotic_profile(&grid, theta, &target)?;
    man.param("algo", exact.params.algorithm.clone())
        .param("n", a.n)
        .param("theta", theta)
        .param("p", exact.params.p)
        .param("target", &a.target)
        .param("grid_size", a.grid_size);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut wr = csv::Writer::from_writer(BufWriter::new(File::create(&a.out)?));
    wr.write_record(["t", "exact_mean", "exact_var", "asymptotic_mean", "asymptotic_var", "mean_gap", "var_gap"])?;
    for i in 0..grid.len() {
        wr.write_record([
            format!("{}", grid[i]),
            format!("{:e}", exact.mean[i]),
            format!("{:e}", exact.variance[i]),
            format!("{:e}", limit.mean[i]),
            format!("{:e}", limit.variance[i]),
            format!("{:e}", exact.mean[i] - limit.mean[i]),
            format!("{:e}", exact.variance[i] - limit.variance[i]),
        ])?;
    }
    wr.flush()?;
    man.output(a.out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    man.finish();
    man.save(manifest_path(&a.out))?;
    Ok(EXIT_OK)
}

fn validate(a: &ValidateArgs) -> Result<u8> {
    let suites = select_suites(&a.suite)?;
    let opts = SuiteOptions { seed: a.seed, long: a.long };
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for suite in suites {
        let report = run_suite(suite, &opts)?;
        for c in &report.checks {
            let tag = if c.skipped {
                "SKIP"
            } else if c.passed {
                "PASS"
            } else {
                "FAIL"
            };
            eprintln!("{tag} [{suite}] {}", c.name);
            if !c.skipped && !c.passed {
                failed.push(format!("[{suite}] {}", c.name));
            }
        }
        reports.push(report);
    }
    let doc = json!({
        "seed": a.seed,
        "long": a.long,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "passed": failed.is_empty(),
        "reports": reports,
    });
    match &a.out {
        Some(path) => {
            let f = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(f, &doc)?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out)?;
        }
    }
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        for f in &failed {
            eprintln!("failed check: {f}");
        }
        Ok(EXIT_CHECK_FAILED)
    }
}

fn load_synth_spec(spec: &str) -> Result<SynthSpec> {
    if spec == "demo" {
        return Ok(drift_scenario());
    }
    let f = File::open(spec)?;
    serde_json::from_reader(std::io::BufReader::new(f))
        .map_err(|e| Error::Ingestion(format!("synthetic spec {spec}: {e}")))
}

/// File-name-safe version of a period label.
fn safe_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn reference_sample(spec: Option<&str>, datasets: &[PeriodDataset], records: &[Record]) -> Result<(String, Vec<f64>)> {
    let Some(spec) = spec else {
        let first = datasets.first().ok_or_else(|| Error::param("no periods given"))?;
        return Ok((first.label.clone(), first.observations.clone()));
    };
    let labels: Vec<&str> = spec.split(',').map(str::trim).collect();
    if labels.iter().all(|l| datasets.iter().any(|d| d.label == *l)) {
        let obs = labels
            .iter()
            .flat_map(|l| datasets.iter().filter(|d| d.label == *l))
            .flat_map(|d| d.observations.iter().copied())
            .collect();
        return Ok((spec.to_string(), obs));
    }
    if spec.contains('/') {
        let period = parse_periods(&format!("reference={spec}"))?;
        let ds = split_periods(records, &period)?;
        return Ok((spec.to_string(), ds[0].observations.clone()));
    }
    Err(Error::param(format!("reference '{spec}' is neither a period label nor START/END")))
}

fn analyze(a: &AnalyzeArgs) -> Result<u8> {
    let mut man = RunManifest::start("analyze", Some(a.seed));
    std::fs::create_dir_all(&a.out)?;
    let (records, periods, skipped) = match (&a.data, &a.synthesize) {
        (Some(path), _) => {
            let schema = CsvSchema {
                timestamp_column: a.timestamp_column.clone(),
                value_column: a.value_column.clone(),
            };
            let periods = a
                .periods
                .as_deref()
                .ok_or_else(|| Error::param("--periods is required with --data"))?;
            let ing = load_observations_csv(path, &schema)?;
            man.param("data", path.display().to_string())
                .param("timestamp_column", &a.timestamp_column)
                .param("value_column", &a.value_column);
            (ing.records, parse_periods(periods)?, ing.skipped)
        }
        (None, Some(spec_arg)) => {
            let spec = load_synth_spec(spec_arg)?;
            let data_seed = RngStream::new(a.seed, u64::MAX).split(0).seed();
            let records = synthesize_temperature(&spec, &mut RngStream::new(data_seed, 0))?;
            let periods = match &a.periods {
                Some(p) => parse_periods(p)?,
                None => spec.periods()?,
            };
            let f = BufWriter::new(File::create(a.out.join("observations.csv"))?);
            write_observations(f, &records)?;
            man.output("observations.csv");
            man.param("synthesize", spec_arg).param("synth_spec", &spec);
            (records, periods, 0)
        }
        (None, None) => return Err(Error::param("one of --data or --synthesize is required")),
    };
    let datasets = split_periods(&records, &periods)?;
    let (reference_label, reference) = reference_sample(a.reference.as_deref(), &datasets, &records)?;
    let opts = AnalyzeOptions {
        m: a.m,
        alpha: a.alpha,
        b_reps: a.b,
        p: a.p,
        master_seed: a.seed,
    };
    man.param("periods", periods.iter().map(|p| p.label.clone()).collect::<Vec<_>>())
        .param("reference", &reference_label)
        .param("m", a.m)
        .param("alpha", a.alpha)
        .param("B", a.b)
        .param("p", a.p)
        .param("seed", a.seed);
    let results = analyze_periods(&reference, &datasets, &opts)?;
    let mut summary = Vec::new();
    for r in &results {
        let file = format!("band_{}.csv", safe_label(&r.label));
        r.band.write_csv(BufWriter::new(File::create(a.out.join(&file))?))?;
        man.output(file.clone());
        let (lo, hi) = (r.band.lower(), r.band.upper());
        summary.push(json!({
            "label": r.label,
            "count": r.count,
            "n": r.n,
            "theta_hat": r.theta_hat.theta_hat,
            "theta_hat_negative": r.theta_hat.negative,
            "theta_clamped": r.band.theta_clamped,
            "half_width": r.band.half_width,
            "band_contains_zero": lo.iter().zip(&hi).all(|(l, h)| *l <= 0.0 && *h >= 0.0),
            "band_above_zero_fraction": lo.iter().filter(|l| **l > 0.0).count() as f64 / lo.len() as f64,
            "band_below_zero_fraction": hi.iter().filter(|h| **h < 0.0).count() as f64 / hi.len() as f64,
            "band_file": file,
            "bootstrap": r.band.metadata_json(),
        }));
        println!(
            "{}: n={} theta_hat={:.3} half_width={:.5}",
            r.label, r.n, r.theta_hat.theta_hat, r.band.half_width
        );
    }
    let doc = json!({
        "reference": reference_label,
        "reference_count": reference.len(),
        "skipped_rows": skipped,
        "periods": summary,
    });
    serde_json::to_writer_pretty(BufWriter::new(File::create(a.out.join("summary.json"))?), &doc)?;
    man.output("summary.json");
    man.finish();
    man.save(a.out.join("manifest.json"))?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_errors_are_usage_errors() {
        assert_eq!(exit_code(&Error::param("x")), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Unsupported("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Ingestion("x".into())), EXIT_DATA);
        let wrapped = Error::Period {
            label: "a".into(),
            source: Box::new(Error::InsufficientSample("x".into())),
        };
        assert_eq!(exit_code(&wrapped), EXIT_DATA);
    }

    #[test]
    fn interior_grid_excludes_endpoints() {
        let g = interior_grid(99);
        assert_eq!(g.len(), 99);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[98] - 0.99).abs() < 1e-15);
    }

    #[test]
    fn safe_labels() {
        assert_eq!(safe_label("1980-1983"), "1980-1983");
        assert_eq!(safe_label("a b/c"), "a_b_c");
    }

    #[test]
    fn command_line_parses() {
        let cli = Cli::try_parse_from([
            "warpsim", "analyze", "--synthesize", "demo", "--B", "50", "--out", "x",
        ])
        .unwrap();
        match cli.command {
            Command::Analyze(a) => assert_eq!(a.b, 50),
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["warpsim", "analyze", "--out", "x"]).is_err());
    }
}
