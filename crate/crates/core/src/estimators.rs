//! Sampling-based NDV estimators.
//!
//! Each estimator exists in two forms. The *original* form reads the exact
//! frequency-of-frequency vector of the merged sample. The *adjusted* form
//! needs only quantities the coordinator can estimate from sketches: the
//! sample NDV `d`, the singleton count `f1`, `||X||_2^2` and, for the
//! Shlosser family, `d` and `f1` of a resample.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, EstimatorError};
use crate::frequency::Fof;
use crate::scalar::Scalar;

type EResult<T> = std::result::Result<T, EstimatorError>;

fn require(cond: bool, estimator: &'static str, reason: &str) -> EResult<()> {
    if cond {
        Ok(())
    } else {
        Err(EstimatorError::undefined(estimator, reason))
    }
}

fn finite<T: Scalar>(v: T, estimator: &'static str) -> EResult<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EstimatorError::undefined(estimator, "non-finite result"))
    }
}

/// `d + (sqrt(N/n) - 1) f1`.
pub fn gee<T: Scalar>(d: T, f1: T, population: T, n: T) -> EResult<T> {
    require(n >= T::one(), "gee", "empty sample")?;
    require(population >= n, "gee", "population smaller than sample")?;
    finite(d + ((population / n).sqrt() - T::one()) * f1, "gee")
}

/// `sqrt(N/n) f1 + Σ_{i>=2} f_i`, straight from the frequency-of-frequency vector.
pub fn gee_from_fof<T: Scalar>(fof: &Fof, population: T) -> EResult<T> {
    let n = T::of_u64(fof.total());
    require(n >= T::one(), "gee", "empty sample")?;
    require(population >= n, "gee", "population smaller than sample")?;
    let rest = fof
        .iter()
        .filter(|&(i, _)| i >= 2)
        .fold(T::zero(), |acc, (_, c)| acc + T::of_u64(c));
    finite(
        (population / n).sqrt() * T::of_u64(fof.get(1)) + rest,
        "gee",
    )
}

/// `d + f1^2 / (2 f2)`.
pub fn chao<T: Scalar>(d: T, f1: T, f2: T) -> EResult<T> {
    if f2 <= T::zero() {
        return Err(EstimatorError::BlowUp);
    }
    Ok(d + f1 * f1 / (T::lit(2.0) * f2))
}

/// Bias-corrected Chao: `d + f1 (f1 - 1) / (2 (f2 + 1))`.
pub fn chao2<T: Scalar>(d: T, f1: T, f2: T) -> EResult<T> {
    require(f2 >= T::zero(), "chao2", "negative f2")?;
    Ok(d + f1 * (f1 - T::one()) / (T::lit(2.0) * (f2 + T::one())))
}

/// Chao with `f2` replaced by `d - f1`: `d + f1^2 / (2 (d - f1))`.
pub fn chao3<T: Scalar>(d: T, f1: T) -> EResult<T> {
    require(f1 <= d, "chao3", "f1 exceeds d")?;
    if d == f1 {
        if f1 == T::zero() {
            return Ok(d);
        }
        return Err(EstimatorError::DegenerateSample { estimator: "chao3" });
    }
    Ok(d + T::lit(0.5) * f1 * f1 / (d - f1))
}

/// Chao–Lee skew term `max{ D1 (||X||^2 - n) / (n^2 - n - 1), 0 }`,
/// where `||X||^2 - n = Σ i(i-1) f_i`.
pub fn gamma_sq_chao_lee<T: Scalar>(d_hat1: T, l2sq: T, n: T) -> EResult<T> {
    require(n >= T::lit(2.0), "gamma_sq_chao_lee", "needs n >= 2")?;
    let v = d_hat1 * (l2sq - n) / (n * n - n - T::one());
    Ok(v.max(T::zero()))
}

/// First Chao–Lee estimator from `(d, f1, n, ||X||_2^2)`.
///
/// With coverage `C = 1 - f1/n` and `D1 = d / C`, returns `(d + f1 γ²) / C`.
pub fn cl1<T: Scalar>(d: T, f1: T, n: T, l2sq: T) -> EResult<T> {
    if f1 >= n {
        return Err(EstimatorError::CoverageZero { estimator: "cl1" });
    }
    let coverage = T::one() - f1 / n;
    if f1 == T::zero() {
        return Ok(d);
    }
    let d1 = d / coverage;
    let gamma = gamma_sq_chao_lee(d1, l2sq, n)?;
    finite((d + f1 * gamma) / coverage, "cl1")
}

/// First Chao–Lee estimator in the coverage form `d/C + n(1-C)/C γ²`,
/// summing `i(i-1) f_i` over the frequency-of-frequency vector.
pub fn cl1_from_fof<T: Scalar>(fof: &Fof) -> EResult<T> {
    let s = fof.stats();
    let (d, f1, n) = (T::of_u64(s.d), T::of_u64(s.f1), T::of_u64(s.n));
    if f1 >= n {
        return Err(EstimatorError::CoverageZero { estimator: "cl1" });
    }
    let coverage = T::one() - f1 / n;
    let d1 = d / coverage;
    if f1 == T::zero() {
        return Ok(d1);
    }
    let pairs = fof.iter().fold(T::zero(), |acc, (i, c)| {
        acc + T::of_u64(i) * T::of_u64(i - 1) * T::of_u64(c)
    });
    require(n >= T::lit(2.0), "cl1", "needs n >= 2")?;
    let gamma = (d1 * pairs / (n * n - n - T::one())).max(T::zero());
    finite(d1 + n * (T::one() - coverage) / coverage * gamma, "cl1")
}

/// `Σ (1-q)^i f_i / Σ i q (1-q)^{i-1} f_i`: expected unseen over expected singletons.
pub fn shlosser_ratio<T: Scalar>(fof: &Fof, q: T) -> EResult<T> {
    require(
        q > T::zero() && q <= T::one(),
        "shlosser",
        "q outside (0, 1]",
    )?;
    let miss = T::one() - q;
    let mut num = T::zero();
    let mut den = T::zero();
    for (i, c) in fof.iter() {
        let (ti, tc) = (T::of_u64(i), T::of_u64(c));
        num = num + miss.powf(ti) * tc;
        den = den + ti * q * miss.powf(ti - T::one()) * tc;
    }
    require(den > T::zero(), "shlosser", "zero denominator")?;
    finite(num / den, "shlosser")
}

/// Shlosser: `d + f1 Σ(1-q)^i f_i / Σ iq(1-q)^{i-1} f_i`.
pub fn shlosser_original<T: Scalar>(fof: &Fof, q: T) -> EResult<T> {
    let s = fof.stats();
    let ratio = shlosser_ratio(fof, q)?;
    Ok(T::of_u64(s.d) + T::of_u64(s.f1) * ratio)
}

/// Shlosser with the unseen ratio taken from a resample: `d + f1 (d - d_r) / f1_r`.
pub fn shlosser_adjusted<T: Scalar>(d: T, f1: T, d_resample: T, f1_resample: T) -> EResult<T> {
    if f1_resample <= T::zero() {
        return Err(EstimatorError::ResampleDegenerate {
            estimator: "shlosser",
        });
    }
    finite(d + f1 * (d - d_resample) / f1_resample, "shlosser")
}

fn check_rate<T: Scalar>(q: T, estimator: &'static str) -> EResult<()> {
    require(
        q > T::zero() && q <= T::one(),
        estimator,
        "q outside (0, 1]",
    )
}

/// First-order unsmoothed jackknife `d / (1 - (1-q) f1 / n)`.
pub fn jackknife_uj1<T: Scalar>(d: T, f1: T, n: T, q: T) -> EResult<T> {
    check_rate(q, "uj1")?;
    require(n > T::zero(), "uj1", "empty sample")?;
    let denom = T::one() - (T::one() - q) * f1 / n;
    require(denom > T::zero(), "uj1", "(1-q) f1 >= n")?;
    finite(d / denom, "uj1")
}

/// Method-of-moments skew `max(0, D/n^2 (||X||^2 - n) + D/N - 1)`.
pub fn gamma_sq_haas<T: Scalar>(d_hat: T, l2sq: T, n: T, population: T) -> EResult<T> {
    require(n >= T::one(), "gamma_sq_haas", "empty sample")?;
    require(population >= T::one(), "gamma_sq_haas", "empty population")?;
    let v = d_hat / (n * n) * (l2sq - n) + d_hat / population - T::one();
    Ok(v.max(T::zero()))
}

/// `(1-q) ln(1-q)`, continuous at `q = 1`.
fn miss_log_miss<T: Scalar>(q: T) -> T {
    let miss = T::one() - q;
    if miss <= T::zero() {
        T::zero()
    } else {
        miss * miss.ln()
    }
}

/// Second-order unsmoothed jackknife:
/// `(1 - (1-q) f1/n)^{-1} (d - f1 (1-q) ln(1-q) γ²(D_uj1) / q)`.
pub fn jackknife_uj2<T: Scalar>(d: T, f1: T, n: T, q: T, l2sq: T, population: T) -> EResult<T> {
    let uj1 = jackknife_uj1(d, f1, n, q)?;
    let gamma = gamma_sq_haas(uj1, l2sq, n, population)?;
    let denom = T::one() - (T::one() - q) * f1 / n;
    finite((d - f1 * miss_log_miss(q) * gamma / q) / denom, "uj2")
}

/// Smoothed second-order jackknife:
/// `(1 - (1-q)^Ñ)^{-1} (d - (1-q)^Ñ ln(1-q) N γ²(D_uj1))` with `Ñ = N / D_uj1`.
pub fn jackknife_sj2<T: Scalar>(d: T, f1: T, n: T, q: T, l2sq: T, population: T) -> EResult<T> {
    let uj1 = jackknife_uj1(d, f1, n, q)?;
    require(uj1 > T::zero(), "sj2", "D_uj1 is zero")?;
    let gamma = gamma_sq_haas(uj1, l2sq, n, population)?;
    let n_tilde = population / uj1;
    let miss = T::one() - q;
    if miss <= T::zero() {
        return Ok(d);
    }
    let miss_pow = miss.powf(n_tilde);
    let denom = T::one() - miss_pow;
    require(denom > T::zero(), "sj2", "(1-q)^Ñ = 1")?;
    finite(
        (d - miss_pow * miss.ln() * population * gamma) / denom,
        "sj2",
    )
}

/// Below this value of `(1+q)^{-Ñ}` the Sh2 class-size factor is replaced by its limit.
pub const SH2_LIMIT_CUTOFF: f64 = 1e-12;

/// Class-size factor `q (1+q)^{Ñ-1} / ((1+q)^Ñ - 1)` of Sh2.
///
/// Evaluated as `q/(1+q) / (1 - (1+q)^{-Ñ})`, which cannot overflow; when
/// `(1+q)^{-Ñ}` drops below [`SH2_LIMIT_CUTOFF`] the limit `q/(1+q)` is used.
pub fn sh2_factor<T: Scalar>(q: T, n_tilde: T) -> EResult<T> {
    check_rate(q, "sh2")?;
    require(n_tilde > T::zero(), "sh2", "Ñ must be positive")?;
    let one_q = T::one() + q;
    let limit = q / one_q;
    let decay = one_q.powf(-n_tilde);
    if decay.as_f64() < SH2_LIMIT_CUTOFF {
        return Ok(limit);
    }
    Ok(limit / (T::one() - decay))
}

/// Sh2 with the unseen ratio given directly.
pub fn shlosser_sh2_with_ratio<T: Scalar>(
    d: T,
    f1: T,
    unseen_ratio: T,
    q: T,
    population: T,
    d_uj1: T,
) -> EResult<T> {
    require(d_uj1 > T::zero(), "sh2", "D_uj1 is zero")?;
    let factor = sh2_factor(q, population / d_uj1)?;
    finite(d + f1 * factor * unseen_ratio, "sh2")
}

/// Sh2 from the frequency-of-frequency vector.
pub fn shlosser_sh2<T: Scalar>(fof: &Fof, q: T, population: T, d_uj1: T) -> EResult<T> {
    let s = fof.stats();
    if s.f1 == 0 {
        return Ok(T::of_u64(s.d));
    }
    let ratio = shlosser_ratio(fof, q)?;
    shlosser_sh2_with_ratio(T::of_u64(s.d), T::of_u64(s.f1), ratio, q, population, d_uj1)
}

/// `max{D̂/D, D/D̂}`.
pub fn ratio_error<T: Scalar>(estimate: T, truth: T) -> EResult<T> {
    require(
        estimate > T::zero() && truth > T::zero(),
        "ratio_error",
        "both values must be positive",
    )?;
    Ok((estimate / truth).max(truth / estimate))
}

/// `|a - b| / |b|`.
pub fn relative_error<T: Scalar>(approx: T, exact: T) -> T {
    if exact == T::zero() {
        if approx == T::zero() {
            T::zero()
        } else {
            T::infinity()
        }
    } else {
        ((approx - exact) / exact).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Gee,
    Chao,
    Cl1,
    Shlosser,
    Uj1,
    Uj2,
    Sj2,
    Sh2,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 8] = [
        EstimatorKind::Gee,
        EstimatorKind::Chao,
        EstimatorKind::Cl1,
        EstimatorKind::Shlosser,
        EstimatorKind::Uj1,
        EstimatorKind::Uj2,
        EstimatorKind::Sj2,
        EstimatorKind::Sh2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Gee => "gee",
            EstimatorKind::Chao => "chao",
            EstimatorKind::Cl1 => "cl1",
            EstimatorKind::Shlosser => "shlosser",
            EstimatorKind::Uj1 => "uj1",
            EstimatorKind::Uj2 => "uj2",
            EstimatorKind::Sj2 => "sj2",
            EstimatorKind::Sh2 => "sh2",
        }
    }

    /// Whether the adjusted form needs `||X||_2^2`.
    pub fn needs_l2(self) -> bool {
        matches!(
            self,
            EstimatorKind::Cl1 | EstimatorKind::Uj2 | EstimatorKind::Sj2
        )
    }

    /// Whether the adjusted form needs resample statistics.
    pub fn needs_resample(self) -> bool {
        matches!(self, EstimatorKind::Shlosser | EstimatorKind::Sh2)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown estimator {s:?}")))
    }
}

/// Scalars an estimator may read. `fof` is present only on the exact path.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorInputs<T> {
    pub d: T,
    pub f1: T,
    /// Sample size.
    pub n: T,
    /// Population size `N`.
    pub population: T,
    /// Sampling rate.
    pub q: T,
    pub l2sq: Option<T>,
    pub d_resample: Option<T>,
    pub f1_resample: Option<T>,
    pub fof: Option<Fof>,
}

impl<T: Scalar> EstimatorInputs<T> {
    /// Exact inputs read off the merged sample.
    pub fn exact(fof: &Fof, population: T, q: T) -> Self {
        let s = fof.stats();
        EstimatorInputs {
            d: T::of_u64(s.d),
            f1: T::of_u64(s.f1),
            n: T::of_u64(s.n),
            population,
            q,
            l2sq: Some(T::of_u128(s.l2sq)),
            d_resample: None,
            f1_resample: None,
            fof: Some(fof.clone()),
        }
    }

    /// Pulls sketch outputs into `0 <= f1 <= d <= n`, recording every clamp.
    pub fn sanitized(&self) -> (Self, Vec<String>) {
        let mut out = self.clone();
        let mut notes = Vec::new();
        let mut clamp = |name: &str, v: &mut T, lo: T, hi: T| {
            if *v < lo {
                notes.push(format!("{name} {} clamped up to {}", *v, lo));
                *v = lo;
            } else if *v > hi {
                notes.push(format!("{name} {} clamped down to {}", *v, hi));
                *v = hi;
            }
        };
        clamp("d", &mut out.d, T::zero(), self.n);
        let d = out.d;
        clamp("f1", &mut out.f1, T::zero(), d);
        if let Some(dr) = out.d_resample.as_mut() {
            clamp("d_resample", dr, T::zero(), d);
        }
        if let (Some(fr), Some(dr)) = (out.f1_resample.as_mut(), out.d_resample) {
            clamp("f1_resample", fr, T::zero(), dr);
        }
        (out, notes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<T> {
    pub kind: EstimatorKind,
    pub value: T,
    /// Clamps and other adjustments applied on the way.
    pub notes: Vec<String>,
    /// The value came out below the sample NDV `d`, which no well-posed input produces.
    pub below_sample_ndv: bool,
}

impl<T: Scalar> Estimate<T> {
    fn new(kind: EstimatorKind, value: T, d: T, mut notes: Vec<String>) -> Self {
        // Allow for rounding in the float arithmetic.
        let below = value < d * (T::one() - T::lit(1e-9));
        if below {
            notes.push(format!("value {value} below sample NDV {d}"));
        }
        Estimate {
            kind,
            value,
            notes,
            below_sample_ndv: below,
        }
    }
}

fn missing(kind: EstimatorKind, what: &str) -> EstimatorError {
    EstimatorError::undefined(kind.name(), format!("missing input {what}"))
}

/// Evaluates the original form on the exact frequency-of-frequency vector.
pub fn evaluate_original<T: Scalar>(
    kind: EstimatorKind,
    inputs: &EstimatorInputs<T>,
) -> EResult<Estimate<T>> {
    let fof = inputs.fof.as_ref().ok_or_else(|| missing(kind, "fof"))?;
    let s = fof.stats();
    let (d, f1, n) = (T::of_u64(s.d), T::of_u64(s.f1), T::of_u64(s.n));
    let l2sq = T::of_u128(s.l2sq);
    let (big_n, q) = (inputs.population, inputs.q);
    let value = match kind {
        EstimatorKind::Gee => gee_from_fof(fof, big_n)?,
        EstimatorKind::Chao => chao2(d, f1, T::of_u64(s.f2))?,
        EstimatorKind::Cl1 => cl1_from_fof(fof)?,
        EstimatorKind::Shlosser => shlosser_original(fof, q)?,
        EstimatorKind::Uj1 => jackknife_uj1(d, f1, n, q)?,
        EstimatorKind::Uj2 => jackknife_uj2(d, f1, n, q, l2sq, big_n)?,
        EstimatorKind::Sj2 => jackknife_sj2(d, f1, n, q, l2sq, big_n)?,
        EstimatorKind::Sh2 => {
            let uj1 = jackknife_uj1(d, f1, n, q)?;
            shlosser_sh2(fof, q, big_n, uj1)?
        }
    };
    Ok(Estimate::new(kind, value, d, Vec::new()))
}

/// Evaluates the adjusted form on (possibly sketch-estimated) scalars.
pub fn evaluate_adjusted<T: Scalar>(
    kind: EstimatorKind,
    inputs: &EstimatorInputs<T>,
) -> EResult<Estimate<T>> {
    let (x, notes) = inputs.sanitized();
    let (d, f1, n, big_n, q) = (x.d, x.f1, x.n, x.population, x.q);
    let l2 = || x.l2sq.ok_or_else(|| missing(kind, "l2sq"));
    let resample = || match (x.d_resample, x.f1_resample) {
        (Some(dr), Some(fr)) => Ok((dr, fr)),
        _ => Err(missing(kind, "resample")),
    };
    let value = match kind {
        EstimatorKind::Gee => gee(d, f1, big_n, n)?,
        EstimatorKind::Chao => chao3(d, f1)?,
        EstimatorKind::Cl1 => cl1(d, f1, n, l2()?)?,
        EstimatorKind::Shlosser => {
            let (dr, fr) = resample()?;
            shlosser_adjusted(d, f1, dr, fr)?
        }
        EstimatorKind::Uj1 => jackknife_uj1(d, f1, n, q)?,
        EstimatorKind::Uj2 => jackknife_uj2(d, f1, n, q, l2()?, big_n)?,
        EstimatorKind::Sj2 => jackknife_sj2(d, f1, n, q, l2()?, big_n)?,
        EstimatorKind::Sh2 => {
            if f1 == T::zero() {
                d
            } else {
                let (dr, fr) = resample()?;
                if fr <= T::zero() {
                    return Err(EstimatorError::ResampleDegenerate { estimator: "sh2" });
                }
                let uj1 = jackknife_uj1(d, f1, n, q)?;
                shlosser_sh2_with_ratio(d, f1, (d - dr) / fr, q, big_n, uj1)?
            }
        }
    };
    Ok(Estimate::new(kind, value, d, notes))
}
