//! `ndv`: generate populations, run distributed NDV experiments, calibrate
//! HyperLogLog and check the singleton-fraction assumption.
//!
//! Exit codes: 0 on success, 2 on usage or configuration errors, 1 on
//! runtime failures.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndv_core::datagen::{check_assumption, save_fof, Distribution, PopulationSpec, SamplingModel};
use ndv_core::estimators::EstimatorKind;
use ndv_core::experiment::{
    calibrate, default_fof_name, format_sig6, run_experiment, write_calibration, write_report,
    ExperimentConfig, SketchChoice,
};

/// Directory for output files when `--out` is not given.
const OUT_DIR_ENV: &str = "NDV_OUT_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "ndv",
    version,
    about = "Distributed distinct-value estimation with mergeable sketches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a population frequency-of-frequency file ("i,F_i" lines).
    Generate(GenerateArgs),
    /// Sample, partition, summarize and estimate; writes a CSV report.
    Run(RunArgs),
    /// Empirical HyperLogLog relative error per register width.
    Calibrate(CalibrateArgs),
    /// Expected f1/d of a sample against a threshold c.
    CheckAssumption(CheckArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Dist {
    Poisson,
    Zipf,
    File,
}

#[derive(Args, Debug)]
struct PopulationArgs {
    /// Population distribution.
    #[arg(long, value_enum)]
    dist: Dist,
    /// Target population size N (occurrences).
    #[arg(long, required_if_eq_any([("dist", "poisson"), ("dist", "zipf")]))]
    size: Option<u64>,
    /// Poisson mean class size.
    #[arg(long, required_if_eq("dist", "poisson"))]
    lambda: Option<f64>,
    /// Zipf skew (must exceed 1).
    #[arg(long = "zipf-s", required_if_eq("dist", "zipf"))]
    zipf_s: Option<f64>,
    /// Zipf class count D. Defaults to N/10.
    #[arg(long)]
    classes: Option<u64>,
    /// FoF file for `--dist file`.
    #[arg(long = "fof-file", required_if_eq("dist", "file"))]
    fof_file: Option<PathBuf>,
}

impl PopulationArgs {
    /// Fails early, naming the path, when the FoF file is unreadable.
    fn check_file(&self) -> Result<()> {
        if let (Dist::File, Some(p)) = (self.dist, &self.fof_file) {
            File::open(p).with_context(|| format!("opening FoF file {}", p.display()))?;
        }
        Ok(())
    }

    fn spec(&self) -> PopulationSpec {
        let size = self.size.unwrap_or(0);
        let distribution = match self.dist {
            Dist::Poisson => Distribution::Poisson {
                lambda: self.lambda.expect("required by clap"),
            },
            Dist::Zipf => Distribution::Zipf {
                s: self.zipf_s.expect("required by clap"),
                classes: self.classes.unwrap_or((size / 10).max(1)),
            },
            Dist::File => Distribution::File(self.fof_file.clone().expect("required by clap")),
        };
        PopulationSpec { distribution, size }
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    population: PopulationArgs,
    /// Output file. Defaults to a descriptive name in $NDV_OUT_DIR or the working directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SketchArg {
    Hll,
    Exact,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    population: PopulationArgs,
    /// Sampling rate q.
    #[arg(long)]
    rate: f64,
    /// Resample rate for the Shlosser estimators. Defaults to q.
    #[arg(long = "resample-rate")]
    resample_rate: Option<f64>,
    /// Number of machines k.
    #[arg(long)]
    machines: usize,
    /// HLL register-index bits, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "12")]
    bits: Vec<u8>,
    /// l0 sketch on the sketch path.
    #[arg(long, value_enum, default_value = "hll")]
    sketch: SketchArg,
    #[arg(long = "cs-depth", default_value_t = 5)]
    cs_depth: usize,
    #[arg(long = "cs-width", default_value_t = 20_000)]
    cs_width: usize,
    /// Estimators, comma separated, or "all".
    #[arg(long, value_delimiter = ',', default_value = "all")]
    estimators: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Fill the wall_ms column (output is then no longer reproducible byte for byte).
    #[arg(long = "record-time")]
    record_time: bool,
    /// Output CSV. Defaults to report.csv in $NDV_OUT_DIR, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Register-index bits, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10,12,14")]
    bits: Vec<u8>,
    /// Distinct ids inserted per sketch.
    #[arg(long, default_value_t = 1_000_000)]
    cardinality: u64,
    /// Number of independently seeded sketches per b.
    #[arg(long, default_value_t = 100)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV. Defaults to calibration.csv in $NDV_OUT_DIR, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ModelArg {
    Poisson,
    Binomial,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[command(flatten)]
    population: PopulationArgs,
    /// Sampling rate q.
    #[arg(long)]
    rate: f64,
    /// Required singleton fraction c.
    #[arg(long)]
    c: f64,
    /// Sampling model for the expectations.
    #[arg(long, value_enum, default_value = "poisson")]
    model: ModelArg,
}

fn out_dir() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)
}

/// `--out`, else `default_name` under $NDV_OUT_DIR, else `None` (stdout).
fn resolve_out(out: Option<PathBuf>, default_name: &Path) -> Option<PathBuf> {
    out.or_else(|| out_dir().map(|d| d.join(default_name)))
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)
                    .with_context(|| format!("creating {}", parent.display()))?;
            }
            Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_estimators(names: &[String]) -> Result<Vec<EstimatorKind>> {
    if names.iter().any(|n| n.trim().eq_ignore_ascii_case("all")) {
        return Ok(EstimatorKind::ALL.to_vec());
    }
    let mut out = Vec::new();
    for n in names {
        let k: EstimatorKind = n.parse()?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    Ok(out)
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let spec = args.population.spec();
    if let Distribution::File(_) = spec.distribution {
        return Err(ndv_core::Error::Config("generate needs --dist poisson or zipf".into()).into());
    }
    let fof = spec.generate()?;
    let path = args
        .out
        .unwrap_or_else(|| out_dir().unwrap_or_default().join(default_fof_name(&spec)));
    if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    save_fof(&fof, &path)?;
    eprintln!(
        "wrote {}: D={} N={} max class size {}",
        path.display(),
        fof.distinct(),
        fof.total(),
        fof.max_frequency().unwrap_or(0)
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    args.population.check_file()?;
    let config = ExperimentConfig {
        population: args.population.spec(),
        rate: args.rate,
        resample_rate: args.resample_rate,
        machines: args.machines,
        bits: args.bits,
        sketch: match args.sketch {
            SketchArg::Hll => SketchChoice::Hll,
            SketchArg::Exact => SketchChoice::Exact,
        },
        cs_depth: args.cs_depth,
        cs_width: args.cs_width,
        estimators: parse_estimators(&args.estimators)?,
        seed: args.seed,
        trials: args.trials,
        record_time: args.record_time,
    };
    config.validate()?;
    let report = run_experiment(&config)?;
    let path = resolve_out(args.out, Path::new("report.csv"));
    let mut w = open_out(path.as_deref())?;
    write_report(&report, &mut w)?;
    w.flush()?;
    if let Some(p) = path {
        eprintln!("wrote {} rows to {}", report.rows.len(), p.display());
    }
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let rows = calibrate(&args.bits, args.cardinality, args.seeds, args.seed)?;
    let path = resolve_out(args.out, Path::new("calibration.csv"));
    let mut w = open_out(path.as_deref())?;
    write_calibration(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_check(args: CheckArgs) -> Result<()> {
    args.population.check_file()?;
    let fof = args.population.spec().generate()?;
    let model = match args.model {
        ModelArg::Poisson => SamplingModel::Poisson,
        ModelArg::Binomial => SamplingModel::Binomial,
    };
    let check = check_assumption::<f64>(&fof, args.rate, args.c, model)?;
    println!("ratio,threshold,holds");
    println!(
        "{},{},{}",
        format_sig6(check.ratio),
        format_sig6(check.threshold),
        check.holds
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::CheckAssumption(a) => cmd_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = matches!(
                e.downcast_ref::<ndv_core::Error>(),
                Some(ndv_core::Error::Config(_))
            );
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
