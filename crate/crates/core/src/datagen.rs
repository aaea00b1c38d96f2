//! Synthetic populations, sampling and partitioning.
//!
//! Populations are described by their frequency-of-frequency vector `F_i` and
//! are never materialized class by class. Sampling draws a Binomial(i, q)
//! count per class (or splits a large block of equal-size classes with one
//! multinomial draw) and scatters each sampled occurrence to a uniformly
//! chosen machine.

use std::cmp::Ordering;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution as _};

use crate::error::{Error, Result};
use crate::frequency::Fof;
use crate::hash::{derive_seed, mix64};
use crate::scalar::Scalar;

/// Upper bound on the number of sampled occurrences we are willing to hold in memory.
pub const MAX_MATERIALIZED: f64 = 1e8;

/// Blocks of equal-size classes larger than this are split with one multinomial draw.
const CLASSWISE_LIMIT: u64 = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Poisson { lambda: f64 },
    Zipf { s: f64, classes: u64 },
    File(PathBuf),
}

/// A population to generate. `size` is the target `N = Σ i F_i` and is
/// ignored for [`Distribution::File`].
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub distribution: Distribution,
    pub size: u64,
}

impl PopulationSpec {
    pub fn generate(&self) -> Result<Fof> {
        match &self.distribution {
            Distribution::Poisson { lambda } => gen_fof_poisson(self.size, *lambda),
            Distribution::Zipf { s, classes } => gen_fof_zipf(self.size, *s, *classes),
            Distribution::File(path) => load_fof(path),
        }
    }
}

fn ln_factorials(upto: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(upto as usize + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..=upto {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// Rounds non-negative `weights` to integers summing to `round(Σ weights)`,
/// handing leftover units to the largest fractional parts (ties go to the
/// lower `tie_rank`).
fn largest_remainder(weights: &[f64], tie_rank: impl Fn(usize) -> f64) -> Vec<u64> {
    let total = weights.iter().sum::<f64>().round() as u64;
    let mut out: Vec<u64> = weights.iter().map(|w| w.floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = weights[a] - weights[a].floor();
        let fb = weights[b] - weights[b].floor();
        fb.partial_cmp(&fa)
            .unwrap_or(Ordering::Equal)
            .then_with(|| tie_rank(a).total_cmp(&tie_rank(b)))
    });
    for &idx in order.iter().take(total.saturating_sub(assigned) as usize) {
        out[idx] += 1;
    }
    out
}

/// Brings `Σ i F_i` into `[0.99 N, 1.01 N]` by adding singleton classes or
/// removing the smallest classes.
fn conserve(fof: &mut Fof, target: u64) {
    let lo = (0.99 * target as f64).ceil() as u64;
    let hi = (1.01 * target as f64).floor() as u64;
    let total = fof.total();
    if total < lo {
        fof.add(1, target - total);
        return;
    }
    if total <= hi {
        return;
    }
    let mut excess = total - target;
    let pairs: Vec<(u64, u64)> = fof.iter().collect();
    let mut kept = Vec::with_capacity(pairs.len());
    for (i, c) in pairs {
        if excess >= i {
            let drop = (excess / i).min(c);
            excess -= drop * i;
            if c > drop {
                kept.push((i, c - drop));
            }
        } else {
            kept.push((i, c));
        }
    }
    *fof = kept.into_iter().collect();
}

/// Poisson(λ) population of roughly `n` occurrences.
///
/// `D = round(n / λ)` classes are spread over sizes `1..=λ + 12√λ` in
/// proportion to the Poisson pmf; mass that would land on size 0 (or past the
/// window) goes to size 1. Rounding uses largest remainders so `Σ F_i = D`.
pub fn gen_fof_poisson(n: u64, lambda: f64) -> Result<Fof> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Config(format!(
            "poisson mean must be > 0, got {lambda}"
        )));
    }
    if n == 0 {
        return Err(Error::Config("population size must be >= 1".into()));
    }
    let classes = ((n as f64 / lambda).round() as u64).max(1);
    let window = ((lambda + 12.0 * lambda.sqrt()).floor() as u64).max(1);
    let lnf = ln_factorials(window);
    let ln_lambda = lambda.ln();
    let mut weights = vec![0.0; window as usize];
    for i in 2..=window {
        let ln_p = -lambda + i as f64 * ln_lambda - lnf[i as usize];
        weights[i as usize - 1] = classes as f64 * ln_p.exp();
    }
    let rest: f64 = weights.iter().sum();
    weights[0] = (classes as f64 - rest).max(0.0);
    let counts = largest_remainder(&weights, |idx| ((idx + 1) as f64 - lambda).abs());
    let mut fof: Fof = counts
        .into_iter()
        .enumerate()
        .map(|(idx, c)| (idx as u64 + 1, c))
        .collect();
    conserve(&mut fof, n);
    Ok(fof)
}

/// Class sizes `max(1, round(scale / j^s))` for `j = 1..=classes`, aggregated.
pub fn zipf_fof_with_scale(scale: f64, s: f64, classes: u64) -> Fof {
    let mut fof = Fof::new();
    let head = zipf_head(scale, s, classes);
    for j in 1..=head {
        let size = (scale / (j as f64).powf(s)).round().max(1.0) as u64;
        fof.add(size, 1);
    }
    fof.add(1, classes - head);
    fof
}

/// Classes beyond the head all round to size <= 1.
fn zipf_head(scale: f64, s: f64, classes: u64) -> u64 {
    let cut = (2.0 * scale).max(1.0).powf(1.0 / s).ceil();
    if cut >= classes as f64 {
        classes
    } else {
        cut as u64
    }
}

fn zipf_total(scale: f64, s: f64, classes: u64) -> u64 {
    let head = zipf_head(scale, s, classes);
    let mut total = classes - head;
    for j in 1..=head {
        total += (scale / (j as f64).powf(s)).round().max(1.0) as u64;
    }
    total
}

/// Zipf(s) population over `classes` classes with sizes summing to about `n`.
///
/// Class `j` gets `max(1, round(C / j^s))` occurrences where `C` is found by
/// bisection so the total lands as close to `n` as the rounding allows.
pub fn gen_fof_zipf(n: u64, s: f64, classes: u64) -> Result<Fof> {
    if !(s.is_finite() && s > 1.0) {
        return Err(Error::Config(format!("zipf skew must be > 1, got {s}")));
    }
    if classes == 0 {
        return Err(Error::Config("zipf class count must be >= 1".into()));
    }
    if classes > n {
        return Err(Error::Config(format!(
            "zipf with {classes} classes cannot sum to {n} occurrences"
        )));
    }
    if classes == 1 {
        return Fof::from_pairs([(n, 1)]);
    }
    let (mut lo, mut hi) = (0.0f64, n as f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if zipf_total(mid, s, classes) < n {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= hi * 1e-15 {
            break;
        }
    }
    let pick = if n.abs_diff(zipf_total(lo, s, classes)) <= n.abs_diff(zipf_total(hi, s, classes)) {
        lo
    } else {
        hi
    };
    Ok(zipf_fof_with_scale(pick, s, classes))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePlan {
    /// Sampling rate in `(0, 1]`.
    pub rate: f64,
    pub machines: usize,
    pub seed: u64,
}

impl SamplePlan {
    pub fn new(rate: f64, machines: usize, seed: u64) -> Result<Self> {
        let plan = SamplePlan {
            rate,
            machines,
            seed,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::Config(format!(
                "sample rate must be in (0, 1], got {}",
                self.rate
            )));
        }
        if self.machines == 0 {
            return Err(Error::Config("need at least one machine".into()));
        }
        Ok(())
    }
}

/// Sampled occurrences, one id stream per machine.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PartitionedSample {
    pub streams: Vec<Vec<u64>>,
}

impl PartitionedSample {
    pub fn machines(&self) -> usize {
        self.streams.len()
    }

    pub fn total(&self) -> usize {
        self.streams.iter().map(Vec::len).sum()
    }
}

/// Draws a Binomial(i, q) sample of every population class and scatters the
/// sampled occurrences over `plan.machines` machines uniformly at random.
///
/// Sampled classes get ids from a bijective counter mix, so ids are unique
/// per class and shared by all occurrences of a class on every machine.
pub fn sample_population(population: &Fof, plan: &SamplePlan) -> Result<PartitionedSample> {
    plan.validate()?;
    let expected = plan.rate * population.total() as f64;
    if expected > MAX_MATERIALIZED {
        return Err(Error::Resource(format!(
            "expected sample of {expected:.3e} occurrences exceeds {MAX_MATERIALIZED:.0e}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let id_key = derive_seed(plan.seed, 0x1d5);
    let mut next_class = 0u64;
    let mut streams = vec![Vec::new(); plan.machines];
    let mut emit = |count: u64, rng: &mut ChaCha8Rng| {
        let id = mix64(next_class.wrapping_add(id_key));
        next_class += 1;
        for _ in 0..count {
            streams[rng.random_range(0..plan.machines)].push(id);
        }
    };

    for (size, classes) in population.iter() {
        if plan.rate >= 1.0 {
            for _ in 0..classes {
                emit(size, &mut rng);
            }
        } else if classes <= CLASSWISE_LIMIT {
            let binom = Binomial::new(size, plan.rate).expect("valid binomial");
            for _ in 0..classes {
                let c = binom.sample(&mut rng);
                if c > 0 {
                    emit(c, &mut rng);
                }
            }
        } else {
            for (c, block) in split_classes(classes, size, plan.rate, &mut rng) {
                for _ in 0..block {
                    emit(c, &mut rng);
                }
            }
        }
    }
    Ok(PartitionedSample { streams })
}

/// Multinomial split of `classes` classes of size `size` into sampled-count
/// buckets `c >= 1` with Binomial(size, q) cell probabilities.
fn split_classes(classes: u64, size: u64, q: f64, rng: &mut impl Rng) -> Vec<(u64, u64)> {
    let lnf = ln_factorials(size);
    let (lq, lp) = (q.ln(), (1.0 - q).ln());
    let pmf = |c: u64| {
        (lnf[size as usize] - lnf[c as usize] - lnf[(size - c) as usize]
            + c as f64 * lq
            + (size - c) as f64 * lp)
            .exp()
    };
    let mut out = Vec::new();
    let mut remaining = classes;
    let mut mass_left = 1.0f64;
    for c in 0..=size {
        if remaining == 0 {
            break;
        }
        let p = pmf(c);
        let take = if c == size || p >= mass_left {
            remaining
        } else {
            Binomial::new(remaining, (p / mass_left).clamp(0.0, 1.0))
                .expect("valid binomial")
                .sample(rng)
        };
        remaining -= take;
        mass_left -= p;
        if c > 0 && take > 0 {
            out.push((c, take));
        }
    }
    out
}

/// How a class of size `i` is assumed to be sampled at rate `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingModel {
    /// Sampled count ~ Poisson(iq).
    #[default]
    Poisson,
    /// Sampled count ~ Binomial(i, q).
    Binomial,
}

/// Expected singleton and distinct counts of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleExpectation<T> {
    pub f1: T,
    pub d: T,
}

/// Poissonized `E[f1] = Σ iq e^{-iq} F_i` and `E[d] = Σ F_i (1 - e^{-iq})`.
pub fn expected_sample_stats<T: Scalar>(population: &Fof, q: T) -> Result<SampleExpectation<T>> {
    expected_sample_stats_with(population, q, SamplingModel::Poisson)
}

pub fn expected_sample_stats_with<T: Scalar>(
    population: &Fof,
    q: T,
    model: SamplingModel,
) -> Result<SampleExpectation<T>> {
    if !(q >= T::zero() && q <= T::one()) {
        return Err(Error::Config(format!(
            "sample rate must be in [0, 1], got {q}"
        )));
    }
    let mut f1 = T::zero();
    let mut d = T::zero();
    for (i, classes) in population.iter() {
        let size = T::of_u64(i);
        let classes = T::of_u64(classes);
        let iq = size * q;
        let (p_single, p_seen) = match model {
            SamplingModel::Poisson => (iq * (-iq).exp(), T::one() - (-iq).exp()),
            SamplingModel::Binomial => {
                let miss = T::one() - q;
                (iq * miss.powf(size - T::one()), T::one() - miss.powf(size))
            }
        };
        f1 = f1 + classes * p_single;
        d = d + classes * p_seen;
    }
    Ok(SampleExpectation { f1, d })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionCheck<T> {
    /// `E[f1] / E[d]`.
    pub ratio: T,
    pub threshold: T,
    pub holds: bool,
}

/// Tests whether the sample is expected to be singleton-dominated: `E[f1] / E[d] >= c`.
pub fn check_assumption<T: Scalar>(
    population: &Fof,
    q: T,
    c: T,
    model: SamplingModel,
) -> Result<AssumptionCheck<T>> {
    if !(q > T::zero() && q <= T::one()) {
        return Err(Error::Config(format!(
            "sample rate must be in (0, 1], got {q}"
        )));
    }
    if !(c > T::zero() && c < T::one()) {
        return Err(Error::Config(format!(
            "threshold must be in (0, 1), got {c}"
        )));
    }
    let e = expected_sample_stats_with(population, q, model)?;
    let ratio = if e.d > T::zero() {
        e.f1 / e.d
    } else {
        T::zero()
    };
    Ok(AssumptionCheck {
        ratio,
        threshold: c,
        holds: ratio >= c,
    })
}

/// Parses `i,F_i` lines. Blank lines are skipped.
pub fn read_fof<R: Read>(reader: R) -> Result<Fof> {
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let (a, b) = trimmed
            .split_once(',')
            .ok_or_else(|| err(format!("expected `i,F_i`, got {trimmed:?}")))?;
        let parse = |field: &str, what: &str| {
            field
                .trim()
                .parse::<u64>()
                .map_err(|e| err(format!("{what} {:?}: {e}", field.trim())))
        };
        let i = parse(a, "frequency")?;
        let c = parse(b, "count")?;
        if i == 0 || c == 0 {
            return Err(err("frequency and count must be positive".into()));
        }
        pairs.push((i, c, line_no));
    }
    let mut fof = Fof::new();
    let mut seen = std::collections::HashSet::new();
    for (i, c, line) in pairs {
        if !seen.insert(i) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate frequency {i}"),
            });
        }
        fof.add(i, c);
    }
    Ok(fof)
}

pub fn write_fof<W: Write>(fof: &Fof, mut writer: W) -> Result<()> {
    for (i, c) in fof.iter() {
        writeln!(writer, "{i},{c}")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_fof(path: impl AsRef<Path>) -> Result<Fof> {
    read_fof(fs::File::open(path)?)
}

pub fn save_fof(fof: &Fof, path: impl AsRef<Path>) -> Result<()> {
    write_fof(fof, std::io::BufWriter::new(fs::File::create(path)?))
}

/// Writes one machine's stream as little-endian 8-byte ids.
pub fn write_stream<W: Write>(ids: &[u64], mut writer: W) -> Result<()> {
    for id in ids {
        writer.write_all(&id.to_le_bytes())?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_stream<R: Read>(mut reader: R) -> Result<Vec<u64>> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    if buf.len() % 8 != 0 {
        return Err(Error::Decode(format!(
            "stream length {} is not a multiple of 8",
            buf.len()
        )));
    }
    Ok(buf
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
