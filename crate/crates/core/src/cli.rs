use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use cone_test::error::{Error, Result};
use cone_test::io::{parse_matrix_file, Layout, MatrixFormat};
use cone_test::kde::{default_grid, log_grid, lscv_select, Sample};
use cone_test::report::{to_json_line, BandwidthSelection, RunReport, VERSION};
use cone_test::rng::derive_seed;
use cone_test::simulate::{clt_diagnostic, run_experiment, CltSummary, ExperimentConfig, ExperimentReport};
use cone_test::two_sample::{gaussian_test_pooled, permutation_test, spectral_test, Bandwidths, Method, TwoSampleData};

#[derive(Debug, Parser)]
#[command(name = "cone-test", version, about = "Compare two samples of SPD matrices with a Wishart kernel density statistic")]
pub struct Cli {
    /// Worker threads (default: CONE_TEST_THREADS, else all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the two-sample test on two matrix files.
    Test(TestArgs),
    /// Select a bandwidth by least-squares cross-validation.
    Bandwidth(BandwidthArgs),
    /// Run a replicated simulation experiment from a TOML config.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct InputFormat {
    /// Matrix dimension d.
    #[arg(long)]
    pub dim: usize,
    /// Column layout: vech (d(d+1)/2 columns) or full (d*d columns).
    #[arg(long, default_value = "vech")]
    pub layout: String,
    /// Field delimiter (single character).
    #[arg(long, default_value = ",")]
    pub delimiter: String,
}

impl InputFormat {
    fn format(&self) -> Result<MatrixFormat> {
        let layout: Layout = self.layout.parse()?;
        let mut chars = self.delimiter.chars();
        let delimiter = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => return Err(Error::InvalidParameter(format!("delimiter must be one character, got '{}'", self.delimiter))),
        };
        MatrixFormat::new(self.dim, layout, delimiter)
    }
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// First sample, one matrix per row.
    #[arg(long)]
    pub sample1: PathBuf,
    /// Second sample, same format.
    #[arg(long)]
    pub sample2: PathBuf,
    #[command(flatten)]
    pub input: InputFormat,
    /// "auto" (LSCV on the pooled sample), B, or B1,B2.
    #[arg(long, default_value = "auto")]
    pub bandwidth: String,
    /// LSCV grid as lo:hi:count (log-spaced), used with --bandwidth auto.
    #[arg(long)]
    pub grid: Option<String>,
    /// gaussian, spectral, permutation, or all.
    #[arg(long, default_value = "permutation")]
    pub method: String,
    /// Permutations for the permutation method.
    #[arg(long, default_value_t = 999)]
    pub perms: usize,
    /// Weighted chi-square draws for the spectral method.
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
    /// Master seed; a fresh one is drawn and reported when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Level used for the reported reject flag.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct BandwidthArgs {
    /// Sample file, one matrix per row.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub format: InputFormat,
    /// lo:hi:count (log-spaced); default 0.005:1:25.
    #[arg(long)]
    pub grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides master_seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report standardized Gaussian-regime statistics instead of rejection rates.
    #[arg(long)]
    pub clt: bool,
    /// Include wall-clock time (the output is then no longer reproducible byte for byte).
    #[arg(long)]
    pub timing: bool,
}

fn parse_grid(spec: Option<&str>) -> Result<Vec<f64>> {
    let Some(spec) = spec else { return Ok(default_grid()) };
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::InvalidParameter(format!("grid must be lo:hi:count, got '{spec}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    log_grid(lo, hi, count)
}

enum BandwidthChoice {
    Auto,
    Given(Bandwidths),
}

fn parse_bandwidth(spec: &str) -> Result<BandwidthChoice> {
    if spec == "auto" {
        return Ok(BandwidthChoice::Auto);
    }
    let values: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::InvalidParameter(format!("bad bandwidth '{spec}'"))))
        .collect::<Result<_>>()?;
    match values.as_slice() {
        [b] => Ok(BandwidthChoice::Given(Bandwidths::common(*b)?)),
        [b1, b2] => Ok(BandwidthChoice::Given(Bandwidths::new(*b1, *b2)?)),
        _ => Err(Error::InvalidParameter(format!("bandwidth must be auto, B, or B1,B2; got '{spec}'"))),
    }
}

fn parse_methods(spec: &str) -> Result<Vec<Method>> {
    if spec == "all" {
        return Ok(vec![Method::Gaussian, Method::Spectral, Method::Permutation]);
    }
    Ok(vec![spec.parse()?])
}

fn fresh_seed() -> u64 {
    rand::rng().random()
}

/// Each output line of a successful command.
pub type Lines = Vec<String>;

fn cmd_test(args: &TestArgs) -> Result<Lines> {
    let methods = parse_methods(&args.method)?;
    let choice = parse_bandwidth(&args.bandwidth)?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {}", args.alpha)));
    }
    if let BandwidthChoice::Given(bw) = &choice {
        for m in &methods {
            if *m != Method::Permutation {
                bw.require_common(*m)?;
            }
        }
    }
    let grid = match choice {
        BandwidthChoice::Auto => Some(parse_grid(args.grid.as_deref())?),
        BandwidthChoice::Given(_) => None,
    };
    let format = args.input.format()?;
    let data = TwoSampleData::new(parse_matrix_file(&args.sample1, &format)?, parse_matrix_file(&args.sample2, &format)?)?;
    let (bandwidths, selection) = match choice {
        BandwidthChoice::Given(bw) => (bw, BandwidthSelection { rule: "fixed", grid: None, scores: None }),
        BandwidthChoice::Auto => {
            let sel = lscv_select(&data.pooled(), grid.as_deref().expect("grid parsed for auto"))?;
            (
                Bandwidths::common(sel.b_opt)?,
                BandwidthSelection { rule: "lscv", grid: Some(sel.grid), scores: Some(sel.scores) },
            )
        }
    };
    let master = args.seed.unwrap_or_else(fresh_seed);
    let mut lines = Vec::new();
    for (k, method) in methods.iter().enumerate() {
        let seed = if methods.len() == 1 { master } else { derive_seed(master, k as u64) };
        let result = match method {
            Method::Gaussian => gaussian_test_pooled(&data, bandwidths)?,
            Method::Spectral => spectral_test(&data, bandwidths, args.draws, seed)?,
            Method::Permutation => permutation_test(&data, bandwidths, args.perms, seed)?,
        };
        let report = RunReport::new(result, data.n1(), data.n2(), data.dim(), args.alpha, master, selection.clone());
        lines.push(to_json_line(&report));
    }
    Ok(lines)
}

#[derive(serde::Serialize)]
struct BandwidthReport<'a> {
    b_opt: f64,
    grid: &'a [f64],
    scores: &'a [f64],
    n: usize,
    d: usize,
    version: &'static str,
}

fn cmd_bandwidth(args: &BandwidthArgs) -> Result<Lines> {
    let grid = parse_grid(args.grid.as_deref())?;
    let sample: Sample = parse_matrix_file(&args.input, &args.format.format()?)?;
    let sel = lscv_select(&sample, &grid)?;
    let report = BandwidthReport {
        b_opt: sel.b_opt,
        grid: &sel.grid,
        scores: &sel.scores,
        n: sample.len(),
        d: sample.dim(),
        version: VERSION,
    };
    Ok(vec![to_json_line(&report)])
}

#[derive(serde::Serialize)]
struct SimulateReport {
    seed: u64,
    version: &'static str,
    #[serde(flatten)]
    report: ExperimentReport,
}

#[derive(serde::Serialize)]
struct CltReport {
    seed: u64,
    version: &'static str,
    #[serde(flatten)]
    summary: CltSummary,
}

fn cmd_simulate(args: &SimulateArgs) -> Result<Lines> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Io(format!("{}: {e}", args.config.display())))?;
    let mut config = ExperimentConfig::from_toml(&text)?;
    let has_seed = text.parse::<toml::Table>().map(|t| t.contains_key("master_seed")).unwrap_or(false);
    config.master_seed = match args.seed {
        Some(s) => s,
        None if has_seed => config.master_seed,
        None => fresh_seed(),
    };
    let seed = config.master_seed;
    let start = std::time::Instant::now();
    if args.clt {
        let summary = clt_diagnostic(&config)?;
        return Ok(vec![to_json_line(&CltReport { seed, version: VERSION, summary })]);
    }
    let mut report = run_experiment(&config)?;
    if args.timing {
        report.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    }
    Ok(vec![to_json_line(&SimulateReport { seed, version: VERSION, report })])
}

pub fn run(cli: &Cli) -> Result<Lines> {
    match &cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Bandwidth(a) => cmd_bandwidth(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

/// Worker count from the flag, else the environment.
pub fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("CONE_TEST_THREADS") {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("CONE_TEST_THREADS must be a positive integer, got '{v}'")))?,
            ),
            _ => None,
        },
    };
    if n == Some(0) {
        return Err(Error::InvalidParameter("thread count must be at least 1".into()));
    }
    Ok(n)
}
