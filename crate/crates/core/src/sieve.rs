//! Arithmetic of `Z[1/n]` and the sieve over enumerated points: `n`-coprime
//! parts `[w]_n`, factor counts, the remainders `R_q`, the partial sums of the
//! sieve dimension, and the beta-sieve lower bound
//! `T W(z) (C1 - C2 l (log log 3T)^{3t+2} / log T)`.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arith::{self, FactorBudget};
use crate::densities::{DensityError, DensityFunction};
use crate::exact;
use crate::point::RationalGroupPoint;
use crate::poly::PolynomialFamily;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SieveError {
    #[error("f vanishes at this point")]
    ZeroValue,
    #[error("{value} is not in Z[1/{n}]")]
    NotInRing { value: String, n: u64 },
    #[error("invalid sieve parameter: {0}")]
    InvalidParameter(String),
    #[error("density for p = {p} unavailable: {source}")]
    MissingDensities { p: u64, source: DensityError },
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// Factorizer settings. The seed only drives Pollard rho starting points.
#[derive(Debug, Clone, Copy)]
pub struct Factorizer {
    pub budget: FactorBudget,
    pub seed: u64,
}

impl Default for Factorizer {
    fn default() -> Self {
        Factorizer {
            budget: FactorBudget::default(),
            seed: 0x5eed,
        }
    }
}

impl Factorizer {
    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

/// `w = u [w]_n` with `u` a unit of `Z[1/n]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SievedValue {
    #[serde(with = "exact")]
    pub raw: BigRational,
    pub n: u64,
    #[serde(serialize_with = "display")]
    pub coprime_part: BigUint,
    #[serde(serialize_with = "display_factors")]
    pub factors: Vec<(BigUint, u32)>,
    /// With multiplicity; a lower bound when `complete` is false.
    pub factor_count: u64,
    pub complete: bool,
}

impl SievedValue {
    /// The unit `w / [w]_n`.
    pub fn unit(&self) -> BigRational {
        &self.raw / BigRational::from_integer(BigInt::from(self.coprime_part.clone()))
    }
}

fn display<T: std::fmt::Display, S: serde::Serializer>(x: &T, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

fn display_factors<S: serde::Serializer>(fs: &[(BigUint, u32)], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(fs.iter().map(|(p, e)| (p.to_string(), e)))
}

/// `[w]_n` and its factorization.
pub fn coprime_part(w: &BigRational, n: u64, factorizer: &Factorizer) -> Result<SievedValue, SieveError> {
    coprime_part_salted(w, n, factorizer, 0)
}

fn coprime_part_salted(w: &BigRational, n: u64, factorizer: &Factorizer, salt: u64) -> Result<SievedValue, SieveError> {
    if w.is_zero() {
        return Err(SieveError::ZeroValue);
    }
    let primes = arith::prime_divisors(n);
    let part = arith::n_coprime_part(w, &primes).ok_or_else(|| SieveError::NotInRing {
        value: w.to_string(),
        n,
    })?;
    let f = arith::factor_biguint(&part, factorizer.budget, &mut factorizer.rng(salt));
    Ok(SievedValue {
        raw: w.clone(),
        n,
        coprime_part: part,
        factor_count: f.factor_count(),
        complete: f.is_complete(),
        factors: f.primes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RPrimality {
    Yes,
    No,
    /// Factorization incomplete and the lower bound does not exceed `r`.
    Indeterminate,
}

/// Whether `f_1(z) ... f_t(z)` has at most `r` prime factors in `Z[1/n]`.
pub fn is_r_prime(
    z: &RationalGroupPoint,
    fam: &PolynomialFamily,
    n: u64,
    r: u64,
    factorizer: &Factorizer,
) -> Result<RPrimality, SieveError> {
    r_primality(&coprime_part(&fam.eval(z), n, factorizer)?, r)
}

pub fn r_primality(v: &SievedValue, r: u64) -> Result<RPrimality, SieveError> {
    Ok(if v.factor_count > r {
        RPrimality::No
    } else if v.complete {
        RPrimality::Yes
    } else {
        RPrimality::Indeterminate
    })
}

/// `[f(gamma)]_n` for every point, in input order; `None` marks `f(gamma) = 0`.
pub fn sieved_values(
    points: &[RationalGroupPoint],
    fam: &PolynomialFamily,
    n: u64,
    factorizer: &Factorizer,
) -> Result<Vec<Option<SievedValue>>, SieveError> {
    points
        .par_iter()
        .enumerate()
        .map(
            |(i, z)| match coprime_part_salted(&fam.eval(z), n, factorizer, i as u64) {
                Ok(v) => Ok(Some(v)),
                Err(SieveError::ZeroValue) => Ok(None),
                Err(e) => Err(e),
            },
        )
        .collect()
}

/// `a_k = #{gamma : [f(gamma)]_n = k}`; zero values are not included.
pub fn value_histogram(points: &[RationalGroupPoint], fam: &PolynomialFamily, n: u64) -> BTreeMap<BigUint, usize> {
    let primes = arith::prime_divisors(n);
    let mut hist = BTreeMap::new();
    for z in points {
        if let Some(k) = arith::n_coprime_part(&fam.eval(z), &primes) {
            *hist.entry(k).or_insert(0) += 1;
        }
    }
    hist
}

/// `#{gamma : f(gamma) == 0 mod q}`, zero values included.
pub fn divisible_count(points: &[RationalGroupPoint], fam: &PolynomialFamily, n: u64, q: u64) -> usize {
    let primes = arith::prime_divisors(n);
    let qb = BigUint::from(q);
    points
        .iter()
        .filter(|z| match arith::n_coprime_part(&fam.eval(z), &primes) {
            None => true,
            Some(k) => (k % &qb).is_zero(),
        })
        .count()
}

/// Square-free `q <= q_max` coprime to `excluded`, ascending.
pub fn squarefree_coprime(q_max: u64, excluded: &BigUint) -> Vec<u64> {
    (1..=q_max)
        .filter(|&q| arith::is_squarefree(q) && excluded.gcd(&BigUint::from(q)).is_one())
        .collect()
}

/// Parameters for [`axiom_report`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AxiomParams {
    pub q_max: u64,
    pub w: f64,
    pub z: f64,
    /// Lower end `-l` of the allowed deviation bracket.
    pub l: f64,
    /// Upper end `c3` of the allowed deviation bracket.
    pub c3: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct A1Check {
    #[serde(with = "exact")]
    pub sum_abs_remainders: BigRational,
    /// Largest `zeta` with `sum |R_q| <= T^{1 - zeta}`; `None` if undefined.
    pub fitted_zeta: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct A2Check {
    pub w: f64,
    pub z: f64,
    /// `sum_{w <= p < z} rho(p) log p / p - t log(z / w)`.
    pub deviation: f64,
    pub l: f64,
    pub c3: f64,
    pub within_bracket: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    pub total: usize,
    /// `R_q` for each square-free `q <= q_max` coprime to `Delta n`.
    #[serde(serialize_with = "exact::map::serialize")]
    pub remainders: BTreeMap<u64, BigRational>,
    pub a1: A1Check,
    pub a2: A2Check,
}

/// `R_q = #{f(gamma) == 0 mod q} - (rho(q)/q) T` exactly, plus the sieve
/// dimension partial sum over `w <= p < z`. Points with `f(gamma) = 0` are
/// not part of the sifted sequence and are dropped first.
pub fn axiom_report(
    points: &[RationalGroupPoint],
    rho: &mut DensityFunction,
    delta: &BigUint,
    params: &AxiomParams,
) -> Result<AxiomReport, SieveError> {
    let fam = rho.family.clone();
    let n = rho.n;
    let excluded = delta * BigUint::from(n);
    let points = &nonzero_points(points, &fam);
    let total = points.len();
    let t_big = BigRational::from_integer(BigInt::from(total));
    let mut remainders = BTreeMap::new();
    for q in squarefree_coprime(params.q_max, &excluded) {
        let r = rho.rho(q)?;
        let count = BigRational::from_integer(BigInt::from(divisible_count(points, &fam, n, q)));
        let expected = r / BigRational::from_integer(BigInt::from(q)) * &t_big;
        remainders.insert(q, count - expected);
    }
    let sum_abs: BigRational = remainders.values().map(|r| r.abs()).sum();
    let fitted_zeta = if total > 1 && sum_abs.is_positive() {
        Some(1.0 - crate::volumes::ln_rational(&sum_abs) / (total as f64).ln())
    } else {
        None
    };

    let mut partial = 0.0;
    for p in arith::primes_up_to(params.z.ceil() as u64) {
        let pf = p as f64;
        if pf < params.w || pf >= params.z || (&excluded % p).is_zero() {
            continue;
        }
        let r = rho
            .rho(p)
            .map_err(|source| SieveError::MissingDensities { p, source })?;
        partial += r.to_f64().unwrap_or(f64::NAN) * pf.ln() / pf;
    }
    let t = fam.count() as f64;
    let deviation = partial - t * (params.z / params.w).ln();
    Ok(AxiomReport {
        total,
        remainders,
        a1: A1Check {
            sum_abs_remainders: sum_abs,
            fitted_zeta,
        },
        a2: A2Check {
            w: params.w,
            z: params.z,
            deviation,
            l: params.l,
            c3: params.c3,
            within_bracket: deviation >= -params.l && deviation <= params.c3,
        },
    })
}

/// Inputs of the beta-sieve bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BetaParams {
    pub tau: f64,
    pub s: f64,
    pub l: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaBound {
    pub total: usize,
    pub t: usize,
    /// `z = T^{tau/s}`.
    pub z: f64,
    /// `W(z) = prod (1 - rho(p)/p)` over `p <= z` coprime to `Delta n`.
    #[serde(with = "exact")]
    pub w_z: BigRational,
    /// May be `-inf` (serialized as `null`) or negative.
    pub lower_bound: f64,
    pub vacuous: bool,
}

pub fn beta_sieve_lower_bound(
    total: usize,
    rho: &mut DensityFunction,
    delta: &BigUint,
    params: &BetaParams,
) -> Result<BetaBound, SieveError> {
    let t = rho.family.count();
    if params.s <= 9.0 * t as f64 {
        return Err(SieveError::InvalidParameter(format!(
            "need s > 9t = {}, got s = {}",
            9 * t,
            params.s
        )));
    }
    if params.tau.is_nan() || params.tau <= 0.0 {
        return Err(SieveError::InvalidParameter(format!(
            "need tau > 0, got {}",
            params.tau
        )));
    }
    let tf = total as f64;
    let z = if total == 0 {
        0.0
    } else {
        tf.powf(params.tau / params.s)
    };
    let excluded = delta * BigUint::from(rho.n);
    let mut w_z = BigRational::one();
    for p in arith::primes_up_to(z.floor() as u64) {
        if !(&excluded % p).is_zero() {
            let r = rho
                .rho(p)
                .map_err(|source| SieveError::MissingDensities { p, source })?;
            w_z *= BigRational::one() - r / BigRational::from_integer(BigInt::from(p));
        }
    }
    let lower_bound = if total <= 1 {
        // log T = 0: the error term is unbounded unless it is switched off
        if params.c2 * params.l == 0.0 {
            tf * w_z.to_f64().unwrap_or(0.0) * params.c1
        } else {
            f64::NEG_INFINITY
        }
    } else {
        let err = params.c2 * params.l * (3.0 * tf).ln().ln().powi(3 * t as i32 + 2) / tf.ln();
        tf * w_z.to_f64().unwrap_or(0.0) * (params.c1 - err)
    };
    Ok(BetaBound {
        total,
        t,
        z,
        w_z,
        lower_bound,
        vacuous: lower_bound.is_nan() || lower_bound <= 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlmostPrimeCount {
    /// `S_{n,z}(x)`.
    pub count: usize,
    /// Points with `f(gamma) = 0`, excluded from the count.
    pub zero_values: usize,
    /// The sifting primes `p <= z` coprime to `Delta n`.
    pub sifting_primes: Vec<u64>,
}

/// Points whose `[f(gamma)]_n` has no prime factor `p <= z` coprime to `Delta n`.
pub fn almost_prime_count(
    points: &[RationalGroupPoint],
    fam: &PolynomialFamily,
    n: u64,
    delta: &BigUint,
    z: f64,
) -> AlmostPrimeCount {
    let excluded = delta * BigUint::from(n);
    let sifting: Vec<u64> = arith::primes_up_to(z.max(0.0).floor() as u64)
        .into_iter()
        .filter(|&p| !(&excluded % p).is_zero())
        .collect();
    let primes_n = arith::prime_divisors(n);
    let (count, zero_values) = points
        .par_iter()
        .map(|g| match arith::n_coprime_part(&fam.eval(g), &primes_n) {
            None => (0, 1),
            Some(k) => (sifting.iter().all(|&p| !(&k % p).is_zero()) as usize, 0),
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    AlmostPrimeCount {
        count,
        zero_values,
        sifting_primes: sifting,
    }
}

/// Everything the `sieve` subcommand reports for one point set.
#[derive(Debug, Clone, Serialize)]
pub struct SieveReport {
    #[serde(rename = "T")]
    pub total: usize,
    /// Points with `f(gamma) != 0`; the `T` of the sieve bound and of `R_q`.
    pub sifted_total: usize,
    pub n: u64,
    pub t: usize,
    #[serde(serialize_with = "display")]
    pub delta: BigUint,
    pub tau: f64,
    pub s: f64,
    pub l: f64,
    pub c1: f64,
    pub c2: f64,
    pub z: f64,
    #[serde(with = "exact")]
    pub w_z: BigRational,
    pub lower_bound: f64,
    pub vacuous: bool,
    pub direct_count: usize,
    pub zero_values: usize,
    pub axioms: AxiomReport,
    pub rho: DensityFunction,
    /// Histogram of factor counts of `[f(gamma)]_n` (zero values omitted).
    pub factor_count_histogram: BTreeMap<u64, usize>,
    pub incomplete_factorizations: usize,
}

impl SieveReport {
    /// Consistency required when the bound's hypotheses were verified.
    pub fn bound_respected(&self) -> bool {
        self.vacuous || self.lower_bound <= self.direct_count as f64
    }
}

pub struct SieveInputs<'a> {
    pub points: &'a [RationalGroupPoint],
    pub family: &'a PolynomialFamily,
    pub n: u64,
    pub delta: BigUint,
    pub beta: BetaParams,
    pub q_max: u64,
    /// `w` and `c3` of the dimension check; `z` and `l` come from `beta`.
    pub w: f64,
    pub c3: f64,
    pub factorizer: Factorizer,
}

/// The sifted sequence: points with `f(gamma) != 0`, in input order.
pub fn nonzero_points(points: &[RationalGroupPoint], fam: &PolynomialFamily) -> Vec<RationalGroupPoint> {
    points.iter().filter(|g| !fam.eval(g).is_zero()).cloned().collect()
}

pub fn sieve_report(inputs: &SieveInputs<'_>) -> Result<SieveReport, SieveError> {
    let mut rho = DensityFunction::new(inputs.family.clone(), inputs.n);
    let sifted = nonzero_points(inputs.points, inputs.family).len();
    let bound = beta_sieve_lower_bound(sifted, &mut rho, &inputs.delta, &inputs.beta)?;
    let axioms = axiom_report(
        inputs.points,
        &mut rho,
        &inputs.delta,
        &AxiomParams {
            q_max: inputs.q_max,
            w: inputs.w,
            z: bound.z.max(inputs.w),
            l: inputs.beta.l,
            c3: inputs.c3,
        },
    )?;
    let apc = almost_prime_count(inputs.points, inputs.family, inputs.n, &inputs.delta, bound.z);
    let values = sieved_values(inputs.points, inputs.family, inputs.n, &inputs.factorizer)?;
    let mut histogram = BTreeMap::new();
    let mut incomplete = 0;
    for v in values.iter().flatten() {
        *histogram.entry(v.factor_count).or_insert(0) += 1;
        incomplete += (!v.complete) as usize;
    }
    Ok(SieveReport {
        total: inputs.points.len(),
        sifted_total: sifted,
        n: inputs.n,
        t: inputs.family.count(),
        delta: inputs.delta.clone(),
        tau: inputs.beta.tau,
        s: inputs.beta.s,
        l: inputs.beta.l,
        c1: inputs.beta.c1,
        c2: inputs.beta.c2,
        z: bound.z,
        w_z: bound.w_z,
        lower_bound: bound.lower_bound,
        vacuous: bound.vacuous,
        direct_count: apc.count,
        zero_values: apc.zero_values,
        axioms,
        rho,
        factor_count_histogram: histogram,
        incomplete_factorizations: incomplete,
    })
}
