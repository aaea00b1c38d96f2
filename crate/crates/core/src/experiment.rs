//! End-to-end experiment harness.
//!
//! A run generates the population once, then for each trial draws a
//! partitioned sample and pushes it through two pipelines: the exact path,
//! which merges every machine's frequency dictionary, and the sketch path,
//! which ships [`MachinePayload`]s to the coordinator. Each `(trial, b,
//! estimator)` triple becomes one [`ReportRow`].

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use crate::coordinator::{
    comm_report, resample_seed, run_coordinator, summarize_dict, RoleSet, SummaryParams,
};
use crate::datagen::{sample_population, Distribution, PopulationSpec, SamplePlan};
use crate::error::{Error, EstimatorError, Result};
use crate::estimators::{
    evaluate_adjusted, evaluate_original, ratio_error, relative_error, shlosser_ratio,
    EstimatorInputs, EstimatorKind,
};
use crate::frequency::{Fof, FofStats, FreqDict};
use crate::hash::derive_seed;
use crate::sketch::{CountSketch, DistinctSketch, ExactL0, HyperLogLog, MAX_BITS, MIN_BITS};

/// The ℓ0 sketch used on the sketch path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SketchChoice {
    #[default]
    Hll,
    /// Exact sets; turns the sketch path into an oracle run.
    Exact,
}

impl SketchChoice {
    pub fn name(self) -> &'static str {
        match self {
            SketchChoice::Hll => "hll",
            SketchChoice::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub population: PopulationSpec,
    /// Sampling rate `q`.
    pub rate: f64,
    /// Resample rate; defaults to `rate`.
    pub resample_rate: Option<f64>,
    pub machines: usize,
    /// HLL register-index bits to sweep. Ignored for [`SketchChoice::Exact`].
    pub bits: Vec<u8>,
    pub sketch: SketchChoice,
    pub cs_depth: usize,
    pub cs_width: usize,
    pub estimators: Vec<EstimatorKind>,
    pub seed: u64,
    pub trials: usize,
    /// Fill the wall-time column. Off by default so output is reproducible byte for byte.
    pub record_time: bool,
}

impl ExperimentConfig {
    /// A config with the default sketch shapes and every estimator.
    pub fn new(population: PopulationSpec, rate: f64, machines: usize) -> Self {
        ExperimentConfig {
            population,
            rate,
            resample_rate: None,
            machines,
            bits: vec![12],
            sketch: SketchChoice::Hll,
            cs_depth: 5,
            cs_width: 20_000,
            estimators: EstimatorKind::ALL.to_vec(),
            seed: 0,
            trials: 1,
            record_time: false,
        }
    }

    pub fn resample_rate(&self) -> f64 {
        self.resample_rate.unwrap_or(self.rate)
    }

    /// Sketch roles the machines must send for the requested estimators.
    pub fn roles(&self) -> RoleSet {
        RoleSet {
            count_sketch: self.estimators.iter().any(|k| k.needs_l2()),
            resample: self.estimators.iter().any(|k| k.needs_resample()),
        }
    }

    /// The `b` values a run iterates over; `None` stands for the exact sketch.
    fn bit_sweep(&self) -> Vec<Option<u8>> {
        match self.sketch {
            SketchChoice::Hll => self.bits.iter().copied().map(Some).collect(),
            SketchChoice::Exact => vec![None],
        }
    }

    pub fn validate(&self) -> Result<()> {
        SamplePlan::new(self.rate, self.machines, self.seed)?;
        let r = self.resample_rate();
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Config(format!(
                "resample rate must be in (0, 1], got {r}"
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators requested".into()));
        }
        if self.sketch == SketchChoice::Hll {
            if self.bits.is_empty() {
                return Err(Error::Config("no HLL bit widths requested".into()));
            }
            if let Some(b) = self
                .bits
                .iter()
                .find(|b| !(MIN_BITS..=MAX_BITS).contains(*b))
            {
                return Err(Error::Config(format!(
                    "b={b} outside [{MIN_BITS}, {MAX_BITS}]"
                )));
            }
        }
        if self.roles().count_sketch {
            CountSketch::new(self.cs_depth, self.cs_width, 0)?;
        }
        match &self.population.distribution {
            Distribution::Poisson { lambda } if !(*lambda > 0.0 && lambda.is_finite()) => Err(
                Error::Config(format!("lambda must be positive, got {lambda}")),
            ),
            Distribution::Zipf { s, classes } if !(*s > 1.0 && s.is_finite()) || *classes == 0 => {
                Err(Error::Config(format!(
                    "zipf needs s > 1 and at least one class, got s={s} classes={classes}"
                )))
            }
            Distribution::Poisson { .. } | Distribution::Zipf { .. }
                if self.population.size == 0 =>
            {
                Err(Error::Config("population size must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Exact statistics of one trial's merged sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSnapshot {
    pub stats: FofStats,
    /// `Σ(1-q)^i f_i / Σ iq(1-q)^{i-1} f_i`; absent when the sample is empty.
    pub shlosser_ratio: Option<f64>,
}

/// What the coordinator produced on the sketch path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchSnapshot {
    pub bits: Option<u8>,
    pub d: f64,
    pub f1: f64,
    pub l2sq: Option<f64>,
    pub d_resample: Option<f64>,
    pub f1_resample: Option<f64>,
    pub sketch_bytes: u64,
    pub dict_bytes: u64,
    pub merges: u64,
    pub wall_ms: Option<f64>,
}

pub type EstimateResult = std::result::Result<f64, EstimatorError>;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub trial: usize,
    pub trial_seed: u64,
    /// Distinct count of the population.
    pub true_d: u64,
    /// Occurrences in the population.
    pub true_n: u64,
    pub exact: ExactSnapshot,
    pub sketch: SketchSnapshot,
    pub estimator: EstimatorKind,
    /// Adjusted estimator on sketch outputs.
    pub esti: EstimateResult,
    /// Original estimator on the exact FoF.
    pub exact_value: EstimateResult,
    pub notes: Vec<String>,
}

impl ReportRow {
    /// `|esti - exact| / exact`.
    pub fn rel_error(&self) -> Option<f64> {
        match (&self.esti, &self.exact_value) {
            (Ok(a), Ok(b)) => Some(relative_error(*a, *b)),
            _ => None,
        }
    }

    pub fn esti_ratio_error(&self) -> EstimateResult {
        self.esti
            .clone()
            .and_then(|v| ratio_error(v, self.true_d as f64))
    }

    pub fn exact_ratio_error(&self) -> EstimateResult {
        self.exact_value
            .clone()
            .and_then(|v| ratio_error(v, self.true_d as f64))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub population: FofStats,
    /// Ordered by `(trial, b, estimator)`.
    pub rows: Vec<ReportRow>,
}

/// Runs every trial. Trials run in parallel; row order is deterministic.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let population = config.population.generate()?;
    run_on_population(config, &population)
}

/// Like [`run_experiment`] with an already generated population.
pub fn run_on_population(config: &ExperimentConfig, population: &Fof) -> Result<ExperimentReport> {
    config.validate()?;
    let per_trial = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, population, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        config: config.clone(),
        population: population.stats(),
        rows: per_trial.into_iter().flatten().collect(),
    })
}

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive_seed(master, trial as u64)
}

fn run_trial(config: &ExperimentConfig, population: &Fof, trial: usize) -> Result<Vec<ReportRow>> {
    let seed = trial_seed(config.seed, trial);
    let sample = sample_population(
        population,
        &SamplePlan::new(config.rate, config.machines, seed)?,
    )?;
    let dicts: Vec<FreqDict> = sample
        .streams
        .par_iter()
        .map(|s| FreqDict::from_stream(s.iter().copied()))
        .collect();
    let fof = FreqDict::merge(&dicts).to_fof();
    let true_d = population.distinct();
    let big_n = population.total() as f64;
    let exact = ExactSnapshot {
        stats: fof.stats(),
        shlosser_ratio: shlosser_ratio(&fof, config.rate).ok(),
    };
    let exact_inputs = EstimatorInputs::<f64>::exact(&fof, big_n, config.rate);
    let exact_values: Vec<_> = config
        .estimators
        .iter()
        .map(|&k| evaluate_original(k, &exact_inputs).map(|e| e.value))
        .collect();

    let mut rows = Vec::new();
    for bits in config.bit_sweep() {
        let sketch_seed = derive_seed(seed, 0xb175 + bits.unwrap_or(0) as u64);
        let snap = match bits {
            Some(b) => sketch_path(
                config,
                &dicts,
                HyperLogLog::new(b, sketch_seed)?,
                seed,
                bits,
            )?,
            None => sketch_path(config, &dicts, ExactL0::new(), seed, None)?,
        };
        let inputs = EstimatorInputs {
            d: snap.d,
            f1: snap.f1,
            n: exact.stats.n as f64,
            population: big_n,
            q: config.rate,
            l2sq: snap.l2sq,
            d_resample: snap.d_resample,
            f1_resample: snap.f1_resample,
            fof: None,
        };
        for (&kind, exact_value) in config.estimators.iter().zip(&exact_values) {
            let (esti, notes) = match evaluate_adjusted(kind, &inputs) {
                Ok(e) => (Ok(e.value), e.notes),
                Err(e) => (Err(e), Vec::new()),
            };
            rows.push(ReportRow {
                trial,
                trial_seed: seed,
                true_d,
                true_n: population.total(),
                exact,
                sketch: snap,
                estimator: kind,
                esti,
                exact_value: exact_value.clone(),
                notes,
            });
        }
    }
    Ok(rows)
}

fn sketch_path<S: DistinctSketch>(
    config: &ExperimentConfig,
    dicts: &[FreqDict],
    l0: S,
    trial_seed: u64,
    bits: Option<u8>,
) -> Result<SketchSnapshot> {
    let roles = config.roles();
    let cs_seed = derive_seed(trial_seed, 0xc5);
    let cs = if roles.count_sketch {
        CountSketch::new(config.cs_depth, config.cs_width, cs_seed)?
    } else {
        CountSketch::new(1, 1, cs_seed)?
    };
    let params = SummaryParams::new(l0, cs, config.resample_rate(), roles)?;
    let resample_master = derive_seed(trial_seed, 0x7e5a);
    let payloads = dicts
        .par_iter()
        .enumerate()
        .map(|(j, dict)| {
            summarize_dict(dict, &params, resample_seed(resample_master, j)).to_payload()
        })
        .collect::<Result<Vec<_>>>()?;

    let start = Instant::now();
    let out = run_coordinator::<S>(&payloads)?;
    let elapsed = start.elapsed();
    let ledger = comm_report(&payloads, dicts, out.total_merges);
    Ok(SketchSnapshot {
        bits,
        d: out.d,
        f1: out.f1,
        l2sq: out.l2sq,
        d_resample: out.resample.map(|r| r.d),
        f1_resample: out.resample.map(|r| r.f1),
        sketch_bytes: ledger.total_bytes,
        dict_bytes: ledger.dict_baseline_bytes,
        merges: ledger.merges,
        wall_ms: config.record_time.then_some(elapsed.as_secs_f64() * 1e3),
    })
}

/// Formats `x` with six significant digits, switching to exponent notation
/// outside `[1e-5, 1e6)` in the manner of C's `%g`.
pub fn format_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let fixed = format!("{:.*}", (5 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(format_sig6).unwrap_or_default()
}

fn fmt_result(x: &EstimateResult) -> String {
    match x {
        Ok(v) => format_sig6(*v),
        Err(e) => e.token().to_string(),
    }
}

pub const CSV_HEADER: [&str; 41] = [
    "trial",
    "trial_seed",
    "seed",
    "trials",
    "dist",
    "population_size",
    "lambda",
    "zipf_s",
    "zipf_classes",
    "fof_file",
    "rate",
    "resample_rate",
    "machines",
    "sketch",
    "bits",
    "cs_depth",
    "cs_width",
    "true_d",
    "true_n",
    "exact_d",
    "exact_n",
    "exact_f1",
    "exact_f2",
    "exact_l2sq",
    "exact_sh_ratio",
    "est_d",
    "est_f1",
    "est_l2sq",
    "est_d_resample",
    "est_f1_resample",
    "estimator",
    "esti_value",
    "exact_value",
    "rel_error",
    "esti_ratio_error",
    "exact_ratio_error",
    "sketch_bytes",
    "dict_bytes",
    "merges",
    "wall_ms",
    "notes",
];

fn config_fields(c: &ExperimentConfig) -> [String; 10] {
    let (dist, lambda, s, classes, file): (&str, String, String, String, String) =
        match &c.population.distribution {
            Distribution::Poisson { lambda } => (
                "poisson",
                format_sig6(*lambda),
                "".into(),
                "".into(),
                "".into(),
            ),
            Distribution::Zipf { s, classes } => (
                "zipf",
                "".into(),
                format_sig6(*s),
                classes.to_string(),
                "".into(),
            ),
            Distribution::File(p) => (
                "file",
                "".into(),
                "".into(),
                "".into(),
                p.display().to_string(),
            ),
        };
    [
        c.seed.to_string(),
        c.trials.to_string(),
        dist.into(),
        match c.population.distribution {
            Distribution::File(_) => String::new(),
            _ => c.population.size.to_string(),
        },
        lambda,
        s,
        classes,
        file,
        format_sig6(c.rate),
        format_sig6(c.resample_rate()),
    ]
}

/// Writes the report as CSV with a header line.
pub fn write_report<W: Write>(report: &ExperimentReport, writer: W) -> Result<()> {
    let c = &report.config;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    let cfg = config_fields(c);
    for r in &report.rows {
        let x = &r.exact.stats;
        let sk = &r.sketch;
        let mut rec: Vec<String> = vec![r.trial.to_string(), r.trial_seed.to_string()];
        rec.extend(cfg.iter().cloned());
        rec.extend([
            c.machines.to_string(),
            c.sketch.name().into(),
            sk.bits.map(|b| b.to_string()).unwrap_or_default(),
            c.cs_depth.to_string(),
            c.cs_width.to_string(),
            r.true_d.to_string(),
            r.true_n.to_string(),
            x.d.to_string(),
            x.n.to_string(),
            x.f1.to_string(),
            x.f2.to_string(),
            x.l2sq.to_string(),
            fmt_opt(r.exact.shlosser_ratio),
            format_sig6(sk.d),
            format_sig6(sk.f1),
            fmt_opt(sk.l2sq),
            fmt_opt(sk.d_resample),
            fmt_opt(sk.f1_resample),
            r.estimator.name().into(),
            fmt_result(&r.esti),
            fmt_result(&r.exact_value),
            fmt_opt(r.rel_error()),
            fmt_result(&r.esti_ratio_error()),
            fmt_result(&r.exact_ratio_error()),
            sk.sketch_bytes.to_string(),
            sk.dict_bytes.to_string(),
            sk.merges.to_string(),
            fmt_opt(sk.wall_ms),
            r.notes.join("; "),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical HLL error at one `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRow {
    pub bits: u8,
    pub cardinality: u64,
    pub seeds: usize,
    pub mean_rel_error: f64,
    /// Sample standard deviation of the signed relative error.
    pub std_rel_error: f64,
    /// `1.04 / sqrt(2^b)`.
    pub theoretical: f64,
}

impl CalibrationRow {
    pub fn std_ratio(&self) -> f64 {
        self.std_rel_error / self.theoretical
    }
}

/// Inserts `cardinality` distinct ids into one sketch per seed and summarizes
/// the relative error of the estimates.
pub fn calibrate(
    bits: &[u8],
    cardinality: u64,
    seeds: usize,
    master_seed: u64,
) -> Result<Vec<CalibrationRow>> {
    if seeds < 2 {
        return Err(Error::Config("calibration needs at least two seeds".into()));
    }
    if cardinality == 0 {
        return Err(Error::Config(
            "calibration cardinality must be positive".into(),
        ));
    }
    bits.iter()
        .map(|&b| {
            HyperLogLog::new(b, 0)?;
            let errors: Vec<f64> = (0..seeds)
                .into_par_iter()
                .map(|i| {
                    let seed = derive_seed(master_seed, ((b as u64) << 32) | i as u64);
                    let mut s = HyperLogLog::new(b, seed).expect("bits validated");
                    // Distinct ids per seed so the trials share nothing.
                    let base = derive_seed(seed, 1);
                    for x in 0..cardinality {
                        s.insert(base.wrapping_add(x));
                    }
                    s.estimate() / cardinality as f64 - 1.0
                })
                .collect();
            let mean = errors.iter().sum::<f64>() / seeds as f64;
            let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
            Ok(CalibrationRow {
                bits: b,
                cardinality,
                seeds,
                mean_rel_error: mean,
                std_rel_error: var.sqrt(),
                theoretical: HyperLogLog::standard_error(b),
            })
        })
        .collect()
}

pub fn write_calibration<W: Write>(rows: &[CalibrationRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "bits",
        "cardinality",
        "seeds",
        "mean_rel_error",
        "std_rel_error",
        "theoretical_std",
        "std_ratio",
    ])?;
    for r in rows {
        w.write_record([
            r.bits.to_string(),
            r.cardinality.to_string(),
            r.seeds.to_string(),
            format_sig6(r.mean_rel_error),
            format_sig6(r.std_rel_error),
            format_sig6(r.theoretical),
            format_sig6(r.std_ratio()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Default population file name for `generate`.
pub fn default_fof_name(spec: &PopulationSpec) -> PathBuf {
    match &spec.distribution {
        Distribution::Poisson { lambda } => {
            format!("poisson_l{}_n{}.csv", format_sig6(*lambda), spec.size).into()
        }
        Distribution::Zipf { s, classes } => {
            format!("zipf_s{}_d{}_n{}.csv", format_sig6(*s), classes, spec.size).into()
        }
        Distribution::File(p) => p.clone(),
    }
}
