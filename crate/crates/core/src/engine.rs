//! Drivers: the exponent `alpha_0` and almost-prime bound `r`, explicit
//! witnesses `z` with `den(z) = n` near `x`, and the empirical counting ratio
//! `T_n(x) / ((2 eps)^d m(B_n^f))`.

use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use serde::Serialize;
use thiserror::Error;

use crate::arith;
use crate::densities::{self, DensityError};
use crate::enumerate::{enumerate_points, EnumerateError, EnumerationOptions, EpsilonRule, Strategy};
use crate::exact;
use crate::point::{max_distance, BallSpec, CoreError, RationalGroupPoint};
use crate::poly::PolynomialFamily;
use crate::sieve::{self, Factorizer, SieveError};
use crate::volumes::{self, VolumeError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("alpha = {alpha} is not below alpha0 = {alpha0}")]
    AlphaTooLarge {
        alpha: Box<BigRational>,
        alpha0: Box<BigRational>,
    },
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("no witness within radius {radius}; first nonempty radius found by doubling: {}", nonempty_radius.as_ref().map_or("none".to_string(), |r| r.to_string()))]
    NoWitness {
        radius: Box<BigRational>,
        nonempty_radius: Option<Box<BigRational>>,
    },
    #[error(transparent)]
    Enumerate(#[from] EnumerateError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Sieve(#[from] SieveError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// `iota = 1` when `r(G) = 2`, else the least even integer `>= r(G)/2`.
pub fn iota_from_r_g(r_g: &BigRational) -> u32 {
    let two = BigRational::from_integer(2.into());
    if *r_g == two {
        return 1;
    }
    let half = (r_g / &two).ceil().to_integer().to_u32().unwrap_or(u32::MAX);
    half + half % 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterInputs {
    /// `dim G`.
    pub d: u32,
    /// Growth exponent `a(G)`.
    pub a: BigRational,
    pub iota: u32,
    pub r_g: BigRational,
    pub alpha: BigRational,
    /// Number of polynomials.
    pub t: u32,
    /// `deg(f_1 ... f_t)`.
    pub deg_f: u32,
    /// `delta_n(f)`.
    pub delta_n: u32,
}

impl ParameterInputs {
    /// `SL_N` defaults: `d = N^2 - 1`, `a = 2` for `N = 2`.
    pub fn for_sl(
        dim: usize,
        alpha: BigRational,
        iota: u32,
        r_g: BigRational,
        fam: &PolynomialFamily,
        delta_n: u32,
    ) -> Result<Self, EngineError> {
        let a = match dim {
            2 => BigRational::from_integer(2.into()),
            _ => {
                return Err(EngineError::InvalidParameters(format!(
                    "no exact growth exponent for N = {dim}; pass a fitted one"
                )))
            }
        };
        Ok(ParameterInputs {
            d: (dim * dim - 1) as u32,
            a,
            iota,
            r_g,
            alpha,
            t: fam.count() as u32,
            deg_f: fam.total_degree(),
            delta_n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremParameters {
    pub d: u32,
    #[serde(with = "exact")]
    pub a: BigRational,
    pub iota: u32,
    #[serde(with = "exact")]
    pub r_g: BigRational,
    #[serde(with = "exact")]
    pub alpha: BigRational,
    /// `a / (4 iota d)`.
    #[serde(with = "exact")]
    pub alpha0: BigRational,
    /// `a / (2 iota d)`, the anisotropic variant (reported only).
    #[serde(with = "exact")]
    pub alpha0_anisotropic: BigRational,
    #[serde(serialize_with = "display")]
    pub r: BigInt,
    pub delta_n: u32,
    pub t: u32,
    pub deg_f: u32,
    /// `alpha / a`.
    #[serde(with = "exact")]
    pub alpha_prime: BigRational,
    /// `((4 iota)^{-1} - alpha' d) / (alpha' (d + 1))`.
    #[serde(with = "exact")]
    pub kappa: BigRational,
    /// `((4 iota)^{-1} - alpha' d) / ((d + 1)^2 (1 - alpha' d))`.
    #[serde(with = "exact")]
    pub tau0: BigRational,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(x: &T, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

fn display_opt<T: std::fmt::Display, S: serde::Serializer>(x: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_str(&v.to_string()),
        None => s.serialize_none(),
    }
}

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn alpha0(d: u32, a: &BigRational, iota: u32) -> BigRational {
    a / rat(4 * iota as i64 * d as i64)
}

pub fn theorem_parameters(inp: &ParameterInputs) -> Result<TheoremParameters, EngineError> {
    if inp.d == 0 || !inp.a.is_positive() || inp.iota == 0 || !inp.alpha.is_positive() {
        return Err(EngineError::InvalidParameters(format!(
            "need d >= 1, a > 0, iota >= 1, alpha > 0 (got d = {}, a = {}, iota = {}, alpha = {})",
            inp.d, inp.a, inp.iota, inp.alpha
        )));
    }
    let d = rat(inp.d as i64);
    let four_iota = rat(4 * inp.iota as i64);
    let a0 = alpha0(inp.d, &inp.a, inp.iota);
    if inp.alpha >= a0 {
        return Err(EngineError::AlphaTooLarge {
            alpha: Box::new(inp.alpha.clone()),
            alpha0: Box::new(a0),
        });
    }
    let d1 = &d + BigRational::one();
    let num = rat(9 * inp.t as i64 * inp.deg_f as i64) * &d1 * &d1;
    let den = &inp.a / &four_iota - &inp.alpha * &d;
    let r = BigInt::from(inp.delta_n) + (num / den).ceil().to_integer();
    let alpha_prime = &inp.alpha / &inp.a;
    let gap = four_iota.recip() - &alpha_prime * &d;
    let kappa = &gap / (&alpha_prime * &d1);
    let tau0 = &gap / (&d1 * &d1 * (BigRational::one() - &alpha_prime * &d));
    Ok(TheoremParameters {
        d: inp.d,
        a: inp.a.clone(),
        iota: inp.iota,
        r_g: inp.r_g.clone(),
        alpha: inp.alpha.clone(),
        alpha0: a0,
        alpha0_anisotropic: &inp.a / rat(2 * inp.iota as i64 * inp.d as i64),
        r,
        delta_n: inp.delta_n,
        t: inp.t,
        deg_f: inp.deg_f,
        alpha_prime,
        kappa,
        tau0,
    })
}

/// `n^{-alpha}` as the exact value of the nearest double.
pub fn witness_radius(n: u64, alpha: f64) -> Result<BigRational, EngineError> {
    let eps = (n as f64).powf(-alpha);
    BigRational::from_float(eps)
        .filter(|e| e.is_positive())
        .ok_or_else(|| EngineError::InvalidParameters(format!("radius n^-alpha = {eps} is not a positive number")))
}

#[derive(Debug, Clone)]
pub struct WitnessQuery<'a> {
    pub dim: usize,
    pub center: Vec<BigRational>,
    pub n: u64,
    pub radius: BigRational,
    /// The exponent behind `radius`, recorded only.
    pub alpha: Option<f64>,
    pub family: &'a PolynomialFamily,
    pub strategy: Strategy,
    pub options: EnumerationOptions,
    pub factorizer: Factorizer,
    /// Doublings attempted when the ball is empty.
    pub max_doublings: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct WitnessRecord {
    #[serde(with = "exact::vec")]
    pub x: Vec<BigRational>,
    pub n: u64,
    pub alpha: Option<f64>,
    #[serde(with = "exact")]
    pub radius: BigRational,
    pub z: RationalGroupPoint,
    #[serde(with = "exact")]
    pub distance: BigRational,
    /// Prime factors of `[f(z)]_n`; a lower bound if `complete` is false.
    pub factor_count: u64,
    pub complete: bool,
    /// The almost-prime bound from [`theorem_parameters`], when `alpha < alpha0`.
    #[serde(serialize_with = "display_opt")]
    pub theorem_r: Option<BigInt>,
    /// `T_n(x)` for the searched ball.
    pub candidates: usize,
    pub zero_values: usize,
    pub elapsed_ms: u128,
}

/// Among `B_n(x, radius) ∩ Gamma_n`, the point with the fewest prime factors in
/// `[f(z)]_n`; ties go to the smaller distance, then canonical order. Points
/// with `f(z) = 0` are never chosen.
pub fn find_witness(query: &WitnessQuery<'_>) -> Result<WitnessRecord, EngineError> {
    let start = Instant::now();
    let ball = BallSpec::new(query.dim, query.center.clone(), query.radius.clone(), query.n)?;
    let res = enumerate_points(&ball, query.strategy, &query.options)?;
    let values = sieve::sieved_values(&res.points, query.family, query.n, &query.factorizer)?;
    let zero_values = values.iter().filter(|v| v.is_none()).count();
    let best = res
        .points
        .iter()
        .zip(&values)
        .filter_map(|(z, v)| v.as_ref().map(|v| (z, v)))
        .map(|(z, v)| (v.factor_count, max_distance(z, ball.center()), z, v))
        .min_by(|a, b| (a.0, &a.1, a.2).cmp(&(b.0, &b.1, b.2)));
    match best {
        Some((factor_count, distance, z, v)) => Ok(WitnessRecord {
            x: ball.center().to_vec(),
            n: query.n,
            alpha: query.alpha,
            radius: query.radius.clone(),
            z: z.clone(),
            distance,
            factor_count,
            complete: v.complete,
            theorem_r: None,
            candidates: res.count(),
            zero_values,
            elapsed_ms: start.elapsed().as_millis(),
        }),
        None => Err(EngineError::NoWitness {
            radius: Box::new(query.radius.clone()),
            nonempty_radius: first_nonempty_radius(query, &ball)?.map(Box::new),
        }),
    }
}

/// Double the radius until the ball holds a point with `f != 0`.
fn first_nonempty_radius(query: &WitnessQuery<'_>, ball: &BallSpec) -> Result<Option<BigRational>, EngineError> {
    let mut radius = query.radius.clone();
    let primes = arith::prime_divisors(query.n);
    for _ in 0..query.max_doublings {
        radius *= rat(2);
        let res = match enumerate_points(&ball.with_radius(radius.clone())?, query.strategy, &query.options) {
            Ok(r) => r,
            Err(EnumerateError::SearchSpaceTooLarge { .. }) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        if res
            .points
            .iter()
            .any(|z| arith::n_coprime_part(&query.family.eval(z), &primes).is_some())
        {
            return Ok(Some(radius));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Serialize)]
pub struct CountCell {
    pub x_index: usize,
    pub n: u64,
    pub epsilon: f64,
    pub count: Option<usize>,
    #[serde(with = "exact")]
    pub finite_volume: BigRational,
    /// `T / ((2 eps)^d m(B_n^f))`.
    pub ratio: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CountingReport {
    pub cells: Vec<CountCell>,
    pub count_threshold: usize,
    /// `max / min` of the ratios over cells with `T >= count_threshold`.
    pub spread: Option<f64>,
    pub significant_cells: usize,
}

impl CountingReport {
    pub fn significant(&self) -> bool {
        self.spread.is_some()
    }
}

/// Ratios `T_n(x) / ((2 eps)^d m(B_n^f))`, `d = N^2 - 1`, over all `(x, n)`.
/// Cells over budget are reported as skipped.
pub fn counting_verification(
    dim: usize,
    centers: &[Vec<BigRational>],
    n_list: &[u64],
    rule: &EpsilonRule,
    count_threshold: usize,
    strategy: Strategy,
    opts: &EnumerationOptions,
) -> Result<CountingReport, EngineError> {
    let d = (dim * dim - 1) as i32;
    let mut cells = Vec::new();
    for (xi, x) in centers.iter().enumerate() {
        for &n in n_list {
            let eps = rule.radius(dim, n)?;
            let vol = volumes::finite_volume(dim, n)?;
            let ball = BallSpec::new(dim, x.clone(), eps.clone(), n)?;
            let eps_f = eps.to_f64().unwrap_or(f64::NAN);
            let (count, skipped) = match enumerate_points(&ball, strategy, opts) {
                Ok(r) => (Some(r.count()), None),
                Err(e @ EnumerateError::SearchSpaceTooLarge { .. }) => (None, Some(e.to_string())),
                Err(e) => return Err(e.into()),
            };
            let ratio = count.map(|t| {
                let main = (2.0 * eps_f).powi(d) * vol.to_f64().unwrap_or(f64::INFINITY);
                t as f64 / main
            });
            cells.push(CountCell {
                x_index: xi,
                n,
                epsilon: eps_f,
                count,
                finite_volume: vol,
                ratio,
                skipped,
            });
        }
    }
    let sig: Vec<f64> = cells
        .iter()
        .filter(|c| c.count.is_some_and(|t| t >= count_threshold && t > 0))
        .filter_map(|c| c.ratio)
        .collect();
    let spread = if sig.is_empty() {
        None
    } else {
        let max = sig.iter().copied().fold(f64::MIN, f64::max);
        let min = sig.iter().copied().fold(f64::MAX, f64::min);
        Some(max / min)
    };
    Ok(CountingReport {
        significant_cells: sig.len(),
        cells,
        count_threshold,
        spread,
    })
}

/// `delta_n(f)` from the stabilized gcd, or `None` when it did not stabilize.
pub fn delta_for(fam: &PolynomialFamily, n: u64, samples: usize, window: usize) -> Option<u32> {
    densities::delta_n(fam, n, samples, window).ok().map(|c| c.small_delta)
}

/// Smallest distance from `x` to a point of `points`, if any.
pub fn nearest_distance(points: &[RationalGroupPoint], x: &[BigRational]) -> Option<BigRational> {
    points.iter().map(|z| max_distance(z, x)).min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point::{ball_membership, snap_dyadic};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn inputs(alpha: BigRational, iota: u32) -> ParameterInputs {
        ParameterInputs {
            d: 3,
            a: q(2, 1),
            iota,
            r_g: q(4, 1),
            alpha,
            t: 1,
            deg_f: 1,
            delta_n: 0,
        }
    }

    fn entry11() -> PolynomialFamily {
        PolynomialFamily::preset("entry11", 2).unwrap()
    }

    fn query(fam: &PolynomialFamily, n: u64, radius: BigRational) -> WitnessQuery<'_> {
        WitnessQuery {
            dim: 2,
            center: RationalGroupPoint::identity(2).to_rationals(),
            n,
            radius,
            alpha: None,
            family: fam,
            strategy: Strategy::Optimized,
            options: EnumerationOptions::default(),
            factorizer: Factorizer::default(),
            max_doublings: 8,
        }
    }

    #[test]
    fn iota_rule() {
        assert_eq!(iota_from_r_g(&q(2, 1)), 1);
        assert_eq!(iota_from_r_g(&q(4, 1)), 2);
        assert_eq!(iota_from_r_g(&q(5, 1)), 4);
        assert_eq!(iota_from_r_g(&q(3, 1)), 2);
        assert_eq!(iota_from_r_g(&q(8, 1)), 4);
    }

    #[test]
    fn parameter_examples() {
        let p = theorem_parameters(&inputs(exact::parse_rational("0.1").unwrap(), 1)).unwrap();
        assert_eq!(p.alpha0, q(1, 6));
        assert_eq!(p.r, BigInt::from(720));
        assert_eq!(p.alpha0_anisotropic, q(1, 3));

        assert!(matches!(
            theorem_parameters(&inputs(q(1, 6), 1)),
            Err(EngineError::AlphaTooLarge { .. })
        ));

        let p = theorem_parameters(&inputs(exact::parse_rational("0.05").unwrap(), 2)).unwrap();
        assert_eq!(p.alpha0, q(1, 12));
        assert_eq!(p.r, BigInt::from(1440));
        // alpha' = 1/40: kappa = (1/8 - 3/40) / (4/40) = 1/2
        assert_eq!(p.kappa, q(1, 2));
        assert_eq!(p.tau0, q(1, 20) / (q(16, 1) * q(37, 40)));

        assert!(matches!(
            theorem_parameters(&inputs(q(0, 1), 1)),
            Err(EngineError::InvalidParameters(_))
        ));
    }

    #[test]
    fn witness_examples() {
        let f = entry11();
        let w = find_witness(&query(&f, 2, witness_radius(2, 1.0).unwrap())).unwrap();
        assert_eq!(w.candidates, 8);
        assert_eq!(w.factor_count, 0);
        assert_eq!(w.z.numerator_i64().unwrap(), vec![1, -1, 1, 3]);
        assert_eq!(w.distance, q(1, 2));
        assert!(ball_membership(
            &w.z,
            &BallSpec::identity_centered(2, q(1, 2), 2).unwrap()
        ));

        match find_witness(&query(&f, 2, q(2, 5))) {
            Err(EngineError::NoWitness { nonempty_radius, .. }) => {
                assert_eq!(nonempty_radius.as_deref(), Some(&q(4, 5)))
            }
            other => panic!("expected NoWitness, got {other:?}"),
        }

        let w = find_witness(&query(&f, 1, witness_radius(1, 0.3).unwrap())).unwrap();
        assert_eq!(w.z, RationalGroupPoint::identity(2));
        assert_eq!(w.distance, q(0, 1));
    }

    #[test]
    fn counting_examples() {
        let id = RationalGroupPoint::identity(2).to_rationals();
        let opts = EnumerationOptions::default();
        let rule = EpsilonRule::Fixed(q(1, 2));
        let single = counting_verification(
            2,
            std::slice::from_ref(&id),
            &[53],
            &rule,
            100,
            Strategy::Optimized,
            &opts,
        )
        .unwrap();
        assert_eq!(single.spread, Some(1.0));

        let none = counting_verification(
            2,
            std::slice::from_ref(&id),
            &[2, 3],
            &rule,
            1000,
            Strategy::Optimized,
            &opts,
        )
        .unwrap();
        assert!(!none.significant());
        assert_eq!(none.cells.len(), 2);

        let generic: Vec<BigRational> = [1.1, 0.2, -0.15, (1.0 - 0.03) / 1.1]
            .iter()
            .map(|&v| snap_dyadic(v, 53))
            .collect();
        let rep =
            counting_verification(2, &[id, generic], &[101, 103], &rule, 1000, Strategy::Optimized, &opts).unwrap();
        assert_eq!(rep.significant_cells, 4);
        assert!(rep.spread.unwrap() <= 1.3, "{rep:?}");
    }

    #[test]
    fn witness_monotone_in_radius() {
        let f = PolynomialFamily::preset("trace-minus-2", 2).unwrap();
        for n in [6u64, 15, 22] {
            let mut prev = u64::MAX;
            for alpha in [0.6, 0.4, 0.2, 0.1] {
                let w = find_witness(&query(&f, n, witness_radius(n, alpha).unwrap()));
                if let Ok(w) = w {
                    assert!(w.factor_count <= prev);
                    prev = w.factor_count;
                    assert_eq!(w.z.den(), &BigInt::from(n));
                }
            }
        }
    }

    /// Independent evaluation through `f64`-free integer arithmetic: with
    /// `a = A/B`, `alpha = P/Q`, `den = a/(4 iota) - alpha d = (A Q - 4 iota B P d)/(4 iota B Q)`.
    fn r_by_integers(d: i64, a: (i64, i64), iota: i64, alpha: (i64, i64), t: i64, deg: i64, delta: i64) -> i64 {
        let (aa, ab) = a;
        let (pp, pq) = alpha;
        let num = 9 * t * deg * (d + 1) * (d + 1) * 4 * iota * ab * pq;
        let den = aa * pq - 4 * iota * ab * pp * d;
        delta + num.div_euclid(den) + (num.rem_euclid(den) != 0) as i64
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn r_formula_exact(d in 1i64..9, aa in 1i64..8, ab in 1i64..4, iota in 1i64..5, pp in 1i64..50, pq in 1i64..400, t in 1i64..4, deg in 1i64..4, delta in 0i64..5) {
            let inp = ParameterInputs {
                d: d as u32,
                a: q(aa, ab),
                iota: iota as u32,
                r_g: q(4, 1),
                alpha: q(pp, pq),
                t: t as u32,
                deg_f: deg as u32,
                delta_n: delta as u32,
            };
            match theorem_parameters(&inp) {
                Ok(p) => {
                    prop_assert!(q(pp, pq) < q(aa, 4 * iota * ab * d));
                    prop_assert_eq!(p.r, BigInt::from(r_by_integers(d, (aa, ab), iota, (pp, pq), t, deg, delta)));
                }
                Err(EngineError::AlphaTooLarge { .. }) => prop_assert!(q(pp, pq) >= q(aa, 4 * iota * ab * d)),
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
    }
}
