//! Exact rational points of `SL_N(Q)` and the adelic balls `B_n(x, eps)`.
//!
//! A point is stored as an integer numerator matrix `u` and a positive
//! denominator `v` with `z = u / v`, `det(u) = v^N` and
//! `gcd(u_11, ..., u_NN, v) = 1`. Under that normalization `v` is the
//! denominator `den(z)`, and for every prime `p` dividing `v` the p-adic max
//! norm of `z` is exactly the p-part of `v`.
//!
//! Distances are entrywise max distances `|z - x|_inf`, evaluated exactly
//! against a center snapped to a dyadic grid.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::arith;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("matrix is not in SL_N: determinant is {determinant}")]
    NotUnimodular { determinant: BigRational },
    #[error("expected {expected} entries for dimension {dim}, got {actual}")]
    DimensionMismatch { dim: usize, expected: usize, actual: usize },
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("invalid ball: {0}")]
    InvalidBall(String),
}

/// A point of `SL_N(Q)` in reduced form `u / v`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RationalGroupPoint {
    dim: usize,
    u: Vec<BigInt>,
    v: BigInt,
}

impl RationalGroupPoint {
    pub fn identity(dim: usize) -> Self {
        let mut u = vec![BigInt::zero(); dim * dim];
        for i in 0..dim {
            u[i * dim + i] = BigInt::one();
        }
        RationalGroupPoint {
            dim,
            u,
            v: BigInt::one(),
        }
    }

    /// Reduce a rational matrix (row-major) of determinant one.
    ///
    /// `v` is the lcm of the entry denominators; minimality of the lcm is
    /// what forces `gcd(u, v) = 1`.
    pub fn reduce(dim: usize, raw: &[BigRational]) -> Result<Self, CoreError> {
        check_len(dim, raw.len())?;
        let det = det_rational(dim, raw);
        if !det.is_one() {
            return Err(CoreError::NotUnimodular { determinant: det });
        }
        let v = raw.iter().fold(BigInt::one(), |acc, q| acc.lcm(q.denom()));
        let u = raw.iter().map(|q| q.numer() * (&v / q.denom())).collect();
        Ok(RationalGroupPoint { dim, u, v })
    }

    /// Build from a numerator and denominator, checking every invariant.
    pub fn from_parts(dim: usize, u: Vec<BigInt>, v: BigInt) -> Result<Self, CoreError> {
        check_len(dim, u.len())?;
        if v < BigInt::one() {
            return Err(CoreError::InvalidPoint(format!("denominator {v} < 1")));
        }
        let g = u.iter().fold(v.clone(), |acc, x| acc.gcd(x));
        if !g.is_one() {
            return Err(CoreError::InvalidPoint(format!(
                "gcd of numerator entries and denominator is {g}, not 1"
            )));
        }
        let det = det_integer(dim, &u);
        if det != num_traits::pow(v.clone(), dim) {
            return Err(CoreError::InvalidPoint(format!(
                "det(u) = {det} but v^N = {}",
                num_traits::pow(v.clone(), dim)
            )));
        }
        Ok(RationalGroupPoint { dim, u, v })
    }

    /// Build from small integers already known to satisfy the invariants.
    pub(crate) fn from_i64_unchecked(dim: usize, u: &[i64], v: i64) -> Self {
        debug_assert_eq!(u.len(), dim * dim);
        RationalGroupPoint {
            dim,
            u: u.iter().map(|&x| BigInt::from(x)).collect(),
            v: BigInt::from(v),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major numerator entries.
    pub fn numerator(&self) -> &[BigInt] {
        &self.u
    }

    /// `den(z)`.
    pub fn den(&self) -> &BigInt {
        &self.v
    }

    pub fn entry(&self, i: usize, j: usize) -> BigRational {
        BigRational::new(self.u[i * self.dim + j].clone(), self.v.clone())
    }

    pub fn to_rationals(&self) -> Vec<BigRational> {
        self.u
            .iter()
            .map(|x| BigRational::new(x.clone(), self.v.clone()))
            .collect()
    }

    /// Numerator entries as `i64`, if they all fit.
    pub fn numerator_i64(&self) -> Option<Vec<i64>> {
        self.u.iter().map(|x| x.to_i64()).collect()
    }

    /// Exact group product `self * other`, reduced.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in product");
        let n = self.dim;
        let mut prod = vec![BigInt::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = BigInt::zero();
                for k in 0..n {
                    acc += &self.u[i * n + k] * &other.u[k * n + j];
                }
                prod[i * n + j] = acc;
            }
        }
        let v = &self.v * &other.v;
        let g = prod.iter().fold(v.clone(), |acc, x| acc.gcd(x));
        RationalGroupPoint {
            dim: n,
            u: prod.into_iter().map(|x| x / &g).collect(),
            v: v / &g,
        }
    }

    pub fn is_integral(&self) -> bool {
        self.v.is_one()
    }
}

impl fmt::Debug for RationalGroupPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({:?}) / {}",
            self.u.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
            self.v
        )
    }
}

impl fmt::Display for RationalGroupPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.dim {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "[")?;
            for j in 0..self.dim {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.entry(i, j))?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

/// Canonical order: lexicographic on the flattened numerator, then the
/// denominator.
impl Ord for RationalGroupPoint {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dim
            .cmp(&other.dim)
            .then_with(|| self.u.cmp(&other.u))
            .then_with(|| self.v.cmp(&other.v))
    }
}

impl PartialOrd for RationalGroupPoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Serialize, Deserialize)]
struct PointJson {
    n_dim: usize,
    u: Vec<Vec<String>>,
    v: String,
}

impl Serialize for RationalGroupPoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows = self
            .u
            .chunks(self.dim)
            .map(|row| row.iter().map(|x| x.to_string()).collect())
            .collect();
        PointJson {
            n_dim: self.dim,
            u: rows,
            v: self.v.to_string(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RationalGroupPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = PointJson::deserialize(d)?;
        if raw.u.len() != raw.n_dim || raw.u.iter().any(|r| r.len() != raw.n_dim) {
            return Err(D::Error::custom("numerator shape does not match n_dim"));
        }
        let parse = |s: &str| s.parse::<BigInt>().map_err(D::Error::custom);
        let u = raw
            .u
            .iter()
            .flatten()
            .map(|s| parse(s))
            .collect::<Result<Vec<_>, _>>()?;
        let v = parse(&raw.v)?;
        RationalGroupPoint::from_parts(raw.n_dim, u, v).map_err(D::Error::custom)
    }
}

fn check_len(dim: usize, actual: usize) -> Result<(), CoreError> {
    if dim == 0 || actual != dim * dim {
        return Err(CoreError::DimensionMismatch {
            dim,
            expected: dim * dim,
            actual,
        });
    }
    Ok(())
}

/// Determinant of a square rational matrix by Gaussian elimination.
pub fn det_rational(dim: usize, m: &[BigRational]) -> BigRational {
    let mut a = m.to_vec();
    let mut det = BigRational::one();
    for col in 0..dim {
        let Some(pivot) = (col..dim).find(|&r| !a[r * dim + col].is_zero()) else {
            return BigRational::zero();
        };
        if pivot != col {
            for k in 0..dim {
                a.swap(pivot * dim + k, col * dim + k);
            }
            det = -det;
        }
        let pv = a[col * dim + col].clone();
        det *= &pv;
        for r in col + 1..dim {
            let factor = &a[r * dim + col] / &pv;
            if factor.is_zero() {
                continue;
            }
            for k in col..dim {
                let sub = &factor * &a[col * dim + k];
                a[r * dim + k] -= sub;
            }
        }
    }
    det
}

/// Determinant of a square integer matrix (fraction-free Bareiss).
pub fn det_integer(dim: usize, m: &[BigInt]) -> BigInt {
    let mut a = m.to_vec();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..dim {
        if a[k * dim + k].is_zero() {
            let Some(swap) = (k + 1..dim).find(|&r| !a[r * dim + k].is_zero()) else {
                return BigInt::zero();
            };
            for c in 0..dim {
                a.swap(k * dim + c, swap * dim + c);
            }
            sign = -sign;
        }
        for i in k + 1..dim {
            for j in k + 1..dim {
                let val = &a[i * dim + j] * &a[k * dim + k] - &a[i * dim + k] * &a[k * dim + j];
                a[i * dim + j] = val / &prev;
            }
        }
        prev = a[k * dim + k].clone();
    }
    sign * &a[dim * dim - 1]
}

/// Exponent `k` of the p-adic max norm `p^k` of a reduced point.
pub fn padic_norm_exponent(z: &RationalGroupPoint, p: u64) -> i64 {
    let vv = arith::valuation(&z.v, p) as i64;
    z.u.iter()
        .filter(|x| !x.is_zero())
        .map(|x| vv - arith::valuation(x, p) as i64)
        .max()
        .expect("a point of SL_N has a nonzero entry")
}

/// The p-adic max norm of `z`. For points of `SL_N(Q)` this is `p^k` with
/// `k >= 0`; for a reduced point it is exactly the p-part of `den(z)`.
pub fn padic_norm(z: &RationalGroupPoint, p: u64) -> BigUint {
    let k = padic_norm_exponent(z, p);
    assert!(k >= 0, "determinant-one matrices have p-adic norm >= 1");
    num_traits::pow(BigUint::from(p), k as usize)
}

/// Snap a real number to the dyadic grid `2^-bits`.
pub fn snap_dyadic(x: f64, bits: u32) -> BigRational {
    let scale = BigInt::one() << bits;
    let scaled = x * 2f64.powi(bits as i32);
    let rounded = BigRational::from_float(scaled.round()).expect("finite coordinate");
    BigRational::new(rounded.to_integer(), scale)
}

/// Default dyadic precision for real centers.
pub const DEFAULT_PRECISION_BITS: u32 = 53;

/// The ball `B_n(x, eps)`: archimedean closed max-ball around `x` times the
/// p-adic shells `||g||_p = p^{alpha_p}` for `p | n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSpec {
    dim: usize,
    center: Vec<BigRational>,
    radius: BigRational,
    modulus: u64,
    factorization: Vec<(u64, u32)>,
}

impl BallSpec {
    pub fn new(dim: usize, center: Vec<BigRational>, radius: BigRational, modulus: u64) -> Result<Self, CoreError> {
        check_len(dim, center.len())?;
        if !radius.is_positive() {
            return Err(CoreError::InvalidBall(format!("radius {radius} must be > 0")));
        }
        if modulus == 0 {
            return Err(CoreError::InvalidBall("modulus must be >= 1".into()));
        }
        Ok(BallSpec {
            dim,
            center,
            radius,
            modulus,
            factorization: arith::factorize_u64(modulus),
        })
    }

    /// Snap a floating-point center to the dyadic grid; the radius is
    /// converted exactly.
    pub fn from_f64(
        dim: usize,
        center: &[f64],
        radius: f64,
        modulus: u64,
        precision_bits: u32,
    ) -> Result<Self, CoreError> {
        if !radius.is_finite() {
            return Err(CoreError::InvalidBall(format!("radius {radius} is not finite")));
        }
        let center = center.iter().map(|&x| snap_dyadic(x, precision_bits)).collect();
        let radius =
            BigRational::from_float(radius).ok_or_else(|| CoreError::InvalidBall("radius is not finite".into()))?;
        BallSpec::new(dim, center, radius, modulus)
    }

    pub fn identity_centered(dim: usize, radius: BigRational, modulus: u64) -> Result<Self, CoreError> {
        let center = RationalGroupPoint::identity(dim).to_rationals();
        BallSpec::new(dim, center, radius, modulus)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn center(&self) -> &[BigRational] {
        &self.center
    }
    pub fn radius(&self) -> &BigRational {
        &self.radius
    }
    pub fn modulus(&self) -> u64 {
        self.modulus
    }
    /// `n = prod p^{alpha_p}`.
    pub fn factorization(&self) -> &[(u64, u32)] {
        &self.factorization
    }

    pub fn with_radius(&self, radius: BigRational) -> Result<Self, CoreError> {
        BallSpec::new(self.dim, self.center.clone(), radius, self.modulus)
    }
}

/// Entrywise max distance `|z - x|_inf`.
pub fn max_distance(z: &RationalGroupPoint, x: &[BigRational]) -> BigRational {
    z.to_rationals()
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b).abs())
        .max()
        .unwrap_or_else(BigRational::zero)
}

/// Whether every prime of `den(z)` divides `n`, i.e. `z` lies in `Gamma_n`.
pub fn in_gamma_n(z: &RationalGroupPoint, n: u64) -> bool {
    let mut rest = z.v.clone();
    for (p, _) in arith::factorize_u64(n) {
        let pb = BigInt::from(p);
        while (&rest % &pb).is_zero() {
            rest /= &pb;
        }
    }
    rest.is_one()
}

/// Membership of `z` in `B_n(x, eps) ∩ Gamma_n`.
pub fn ball_membership(z: &RationalGroupPoint, ball: &BallSpec) -> bool {
    if z.dim != ball.dim {
        return false;
    }
    let shells = in_gamma_n(z, ball.modulus)
        && ball
            .factorization
            .iter()
            .all(|&(p, a)| padic_norm_exponent(z, p) == a as i64);
    debug_assert_eq!(shells, z.v == BigInt::from(ball.modulus));
    shells && max_distance(z, &ball.center) <= ball.radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn ints(xs: &[i64]) -> Vec<BigInt> {
        xs.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn reduce_identity() {
        let z = RationalGroupPoint::reduce(2, &RationalGroupPoint::identity(2).to_rationals()).unwrap();
        assert_eq!(z, RationalGroupPoint::identity(2));
        assert_eq!(z.den(), &BigInt::one());
    }

    #[test]
    fn reduce_half_unipotent() {
        let z = RationalGroupPoint::reduce(2, &[q(1, 1), q(1, 2), q(0, 1), q(1, 1)]).unwrap();
        assert_eq!(z.numerator(), ints(&[2, 1, 0, 2]).as_slice());
        assert_eq!(z.den(), &BigInt::from(2));
    }

    #[test]
    fn reduce_mixed_denominators() {
        let z = RationalGroupPoint::reduce(2, &[q(1, 6), q(1, 1), q(5, 6), q(11, 1)]).unwrap();
        assert_eq!(z.numerator(), ints(&[1, 6, 5, 66]).as_slice());
        assert_eq!(z.den(), &BigInt::from(6));
        assert_eq!(det_integer(2, z.numerator()), BigInt::from(36));
    }

    #[test]
    fn reduce_rejects_non_unimodular() {
        let err = RationalGroupPoint::reduce(2, &[q(2, 1), q(0, 1), q(0, 1), q(1, 1)]).unwrap_err();
        assert_eq!(err, CoreError::NotUnimodular { determinant: q(2, 1) });
    }

    #[test]
    fn from_parts_checks_invariants() {
        assert!(RationalGroupPoint::from_parts(2, ints(&[2, 0, 0, 2]), 2.into()).is_err());
        assert!(RationalGroupPoint::from_parts(2, ints(&[2, 1, 0, 1]), 1.into()).is_err());
        assert!(RationalGroupPoint::from_parts(2, ints(&[1, 0, 0, 1]), 0.into()).is_err());
        assert!(RationalGroupPoint::from_parts(2, ints(&[1, 6, 5, 66]), 6.into()).is_ok());
    }

    #[test]
    fn padic_norm_examples() {
        let id = RationalGroupPoint::identity(2);
        assert_eq!(padic_norm(&id, 7), BigUint::one());
        let z = RationalGroupPoint::from_parts(2, ints(&[2, 1, 0, 2]), 2.into()).unwrap();
        assert_eq!(padic_norm(&z, 2), BigUint::from(2u32));
        let w = RationalGroupPoint::from_parts(2, ints(&[1, 6, 5, 66]), 6.into()).unwrap();
        assert_eq!(padic_norm(&w, 3), BigUint::from(3u32));
        assert_eq!(padic_norm(&w, 5), BigUint::one());
    }

    #[test]
    fn membership_examples() {
        let id = RationalGroupPoint::identity(2);
        let b = BallSpec::identity_centered(2, q(1, 10), 1).unwrap();
        assert!(ball_membership(&id, &b));

        let z = RationalGroupPoint::from_parts(2, ints(&[2, 1, 0, 2]), 2.into()).unwrap();
        let b2 = BallSpec::identity_centered(2, q(1, 2), 2).unwrap();
        assert!(ball_membership(&z, &b2));
        assert_eq!(max_distance(&z, b2.center()), q(1, 2));
        let b4 = BallSpec::identity_centered(2, q(1, 2), 4).unwrap();
        assert!(!ball_membership(&z, &b4));
        let tight = BallSpec::identity_centered(2, q(2, 5), 2).unwrap();
        assert!(!ball_membership(&z, &tight));
    }

    #[test]
    fn denominator_with_foreign_prime_is_not_in_ball() {
        // den 6 but n = 2: the 2-adic shell matches, the 3 is outside Z[1/2]
        let w = RationalGroupPoint::from_parts(2, ints(&[1, 6, 5, 66]), 6.into()).unwrap();
        let b = BallSpec::new(2, w.to_rationals(), q(1, 1), 2).unwrap();
        assert_eq!(padic_norm_exponent(&w, 2), 1);
        assert!(!ball_membership(&w, &b));
    }

    #[test]
    fn ball_validation() {
        assert!(BallSpec::identity_centered(2, q(0, 1), 1).is_err());
        assert!(BallSpec::identity_centered(2, q(1, 1), 0).is_err());
        assert!(BallSpec::from_f64(2, &[1.0, 0.0, 0.0], 0.5, 1, 53).is_err());
        let b = BallSpec::from_f64(2, &[1.0, 0.1, 0.0, 1.0], 0.5, 12, 53).unwrap();
        assert_eq!(b.factorization(), &[(2, 2), (3, 1)]);
        assert_eq!(b.center()[1].denom(), &(BigInt::one() << 53u32));
    }

    #[test]
    fn det_agrees_on_3x3() {
        let m = ints(&[2, -1, 0, -1, 2, -1, 0, -1, 2]);
        assert_eq!(det_integer(3, &m), BigInt::from(4));
        let r: Vec<BigRational> = m.iter().map(|x| BigRational::from(x.clone())).collect();
        assert_eq!(det_rational(3, &r), q(4, 1));
    }

    #[test]
    fn json_encoding_is_decimal_strings() {
        let w = RationalGroupPoint::from_parts(2, ints(&[1, 6, 5, 66]), 6.into()).unwrap();
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(s, r#"{"n_dim":2,"u":[["1","6"],["5","66"]],"v":"6"}"#);
        let back: RationalGroupPoint = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
        let bad = r#"{"n_dim":2,"u":[["2","0"],["0","2"]],"v":"2"}"#;
        assert!(serde_json::from_str::<RationalGroupPoint>(bad).is_err());
    }

    /// Random SL_2(Q) points built as products of elementary matrices.
    fn arb_point() -> impl Strategy<Value = RationalGroupPoint> {
        prop::collection::vec((0usize..2, -6i64..=6, 1i64..=6), 1..6).prop_map(|steps| {
            steps
                .into_iter()
                .fold(RationalGroupPoint::identity(2), |acc, (slot, num, den)| {
                    let t = q(num, den);
                    let e = if slot == 0 {
                        vec![q(1, 1), t, q(0, 1), q(1, 1)]
                    } else {
                        vec![q(1, 1), q(0, 1), t, q(1, 1)]
                    };
                    acc.mul(&RationalGroupPoint::reduce(2, &e).unwrap())
                })
        })
    }

    proptest! {
        #[test]
        fn reduce_round_trips(z in arb_point()) {
            let again = RationalGroupPoint::reduce(2, &z.to_rationals()).unwrap();
            prop_assert_eq!(&again, &z);
            prop_assert!(RationalGroupPoint::from_parts(2, z.numerator().to_vec(), z.den().clone()).is_ok());
        }

        #[test]
        fn den_of_product_divides(z in arb_point(), w in arb_point()) {
            let zw = z.mul(&w);
            prop_assert!((z.den() * w.den()).is_multiple_of(zw.den()));
        }

        #[test]
        fn norms_multiply_to_den(z in arb_point()) {
            let den = z.den().to_u64().unwrap();
            let prod: BigUint = arith::prime_divisors(den).iter().map(|&p| padic_norm(&z, p)).product();
            prop_assert_eq!(BigInt::from(prod), z.den().clone());
        }

        #[test]
        fn huge_integral_ball_is_exactly_integral_points(z in arb_point()) {
            let b = BallSpec::identity_centered(2, q(1_000_000_000, 1), 1).unwrap();
            prop_assert_eq!(ball_membership(&z, &b), z.is_integral());
        }

        #[test]
        fn max_distance_is_a_metric(a in arb_point(), b in arb_point(), c in arb_point()) {
            let (ar, br, cr) = (a.to_rationals(), b.to_rationals(), c.to_rationals());
            prop_assert_eq!(max_distance(&a, &br), max_distance(&b, &ar));
            prop_assert!(max_distance(&a, &cr) <= max_distance(&a, &br) + max_distance(&b, &cr));
            prop_assert!(max_distance(&a, &ar).is_zero());
        }
    }
}
