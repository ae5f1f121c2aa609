//! p-adic ball volumes, the adelic product `m(B_n^f)`, the growth exponent
//! `a(G)` and the Harish-Chandra function of `SL_2(Q_p)`.
//!
//! Haar measure is normalized by `m(SL_N(Z_p)) = 1`. The ball
//! `{g : ||g||_p = p^l}` is a union of right `SL_N(Z_p)`-cosets `p^{-l} M K`
//! with `M` integral, primitive and `det M = p^{N l}`, so its volume is the
//! number of such classes. The oracle counts them by Hermite normal form.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::{arith, exact};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolumeError {
    #[error("no closed form for N = {dim} and the oracle needs {cells} cells (budget {budget})")]
    UnsupportedDimension { dim: usize, cells: u128, budget: u128 },
    #[error("degenerate growth fit: {samples} sample(s), need at least 2 distinct n")]
    DegenerateFit { samples: usize },
    #[error("no linear recurrence of order <= {max_order} fits {len} terms")]
    NoRecurrenceFound { max_order: usize, len: usize },
    #[error("level p^{level} does not resolve the integrand for p = {p}, l = {l}")]
    LevelInsufficient { p: u64, l: u32, level: u32 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Cell budget for the Hermite-normal-form oracle.
pub const ORACLE_CELL_BUDGET: u128 = 20_000_000;

fn pow_u128(p: u64, e: u32) -> u128 {
    (p as u128).pow(e)
}

fn check_prime(p: u64) -> Result<(), VolumeError> {
    if arith::is_prime_u64(p) {
        Ok(())
    } else {
        Err(VolumeError::InvalidArgument(format!("{p} is not prime")))
    }
}

/// `m(B_{p^l, p})`. Closed form for `N = 2`; the oracle otherwise.
pub fn local_ball_volume(dim: usize, p: u64, l: u32) -> Result<BigRational, VolumeError> {
    check_prime(p)?;
    if l == 0 {
        return Ok(BigRational::one());
    }
    if dim == 2 {
        let v = BigInt::from(p + 1) * num_traits::pow(BigInt::from(p), (2 * l - 1) as usize);
        return Ok(BigRational::from_integer(v));
    }
    let count = hnf_count(dim, p, l, ORACLE_CELL_BUDGET)?;
    Ok(BigRational::from_integer(BigInt::from(count)))
}

/// Number of Hermite normal forms `[[a, b], [0, d]]` with `ad = p^{2l}`,
/// `0 <= b < d` and `gcd(a, b, d) = 1`.
pub fn hnf_coset_oracle(p: u64, l: u32) -> u128 {
    let total = 2 * l;
    let mut count = 0u128;
    for i in 0..=total {
        let d = p.pow(total - i);
        // gcd(p^i, b, p^{2l-i}) is a power of p: it is 1 iff an exponent is 0 or p does not divide b
        for b in 0..d {
            if i == 0 || i == total || b % p != 0 {
                count += 1;
            }
        }
    }
    count
}

/// `N x N` version of [`hnf_coset_oracle`]: upper triangular integral
/// matrices with diagonal `p^{e_j}`, `sum e_j = N l`, entries of column `j`
/// reduced into `[0, p^{e_j})`, and content prime to `p`.
pub fn hnf_count(dim: usize, p: u64, l: u32, budget: u128) -> Result<u128, VolumeError> {
    if dim == 0 {
        return Err(VolumeError::InvalidArgument("dimension must be positive".into()));
    }
    let total = dim as u32 * l;
    let tuples = exponent_tuples(dim, total);
    let cells: u128 = tuples
        .iter()
        .map(|e| {
            e.iter().enumerate().fold(1u128, |acc, (j, &ej)| {
                acc.saturating_mul(pow_u128(p, ej).saturating_pow(j as u32))
            })
        })
        .fold(0u128, u128::saturating_add);
    if cells > budget {
        return Err(VolumeError::UnsupportedDimension { dim, cells, budget });
    }
    let mut count = 0u128;
    for e in &tuples {
        if e.contains(&0) {
            // a unit on the diagonal makes every such matrix primitive
            count += e
                .iter()
                .enumerate()
                .fold(1u128, |acc, (j, &ej)| acc * pow_u128(p, ej).pow(j as u32));
            continue;
        }
        // off-diagonal slots: (column j, bound p^{e_j}), j entries per column
        let bounds: Vec<u128> = e
            .iter()
            .enumerate()
            .flat_map(|(j, &ej)| std::iter::repeat_n(pow_u128(p, ej), j))
            .collect();
        let mut slot = vec![0u128; bounds.len()];
        loop {
            if slot.iter().any(|&x| x % p as u128 != 0) {
                count += 1;
            }
            if !advance(&mut slot, &bounds) {
                break;
            }
        }
    }
    Ok(count)
}

/// Odometer step over `0..bounds[i]`; `false` once every digit wrapped.
fn advance(slot: &mut [u128], bounds: &[u128]) -> bool {
    for i in (0..slot.len()).rev() {
        slot[i] += 1;
        if slot[i] < bounds[i] {
            return true;
        }
        slot[i] = 0;
    }
    false
}

fn exponent_tuples(dim: usize, total: u32) -> Vec<Vec<u32>> {
    if dim == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in exponent_tuples(dim - 1, total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// `m(B_n^f) = prod_{p | n} m(B_{n,p})`.
pub fn finite_volume(dim: usize, n: u64) -> Result<BigRational, VolumeError> {
    if n == 0 {
        return Err(VolumeError::InvalidArgument("n must be at least 1".into()));
    }
    let mut acc = BigRational::one();
    for (p, e) in arith::factorize_u64(n) {
        acc *= local_ball_volume(dim, p, e)?;
    }
    Ok(acc)
}

/// `v(0), ..., v(L)` for one prime.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalVolumeTable {
    pub dim: usize,
    pub p: u64,
    #[serde(serialize_with = "exact::map::serialize")]
    pub entries: BTreeMap<u32, BigRational>,
}

impl LocalVolumeTable {
    pub fn build(dim: usize, p: u64, max_l: u32) -> Result<Self, VolumeError> {
        let entries = (0..=max_l)
            .map(|l| Ok((l, local_ball_volume(dim, p, l)?)))
            .collect::<Result<_, VolumeError>>()?;
        Ok(LocalVolumeTable { dim, p, entries })
    }

    pub fn values(&self) -> Vec<BigRational> {
        self.entries.values().cloned().collect()
    }
}

/// One CSV row of the `volumes` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeRow {
    pub p: u64,
    #[serde(rename = "ℓ")]
    pub l: u32,
    pub closed_form: Option<String>,
    pub oracle: Option<String>,
    #[serde(rename = "match")]
    pub matches: Option<bool>,
}

/// Closed form against oracle for each `(p, l)`. Missing sides are `None`.
pub fn volume_rows(dim: usize, primes: &[u64], max_l: u32) -> Result<Vec<VolumeRow>, VolumeError> {
    let mut rows = Vec::new();
    for &p in primes {
        check_prime(p)?;
        for l in 0..=max_l {
            let closed = if dim == 2 {
                Some(local_ball_volume(2, p, l)?.to_integer())
            } else {
                None
            };
            let oracle = if dim == 2 {
                let cells = (2 * l as u128 + 1).saturating_mul(pow_u128(p, 2 * l));
                (cells <= ORACLE_CELL_BUDGET).then(|| BigInt::from(hnf_coset_oracle(p, l)))
            } else {
                hnf_count(dim, p, l, ORACLE_CELL_BUDGET).ok().map(BigInt::from)
            };
            let matches = match (&closed, &oracle) {
                (Some(c), Some(o)) => Some(c == o),
                _ => None,
            };
            rows.push(VolumeRow {
                p,
                l,
                closed_form: closed.map(|x| x.to_string()),
                oracle: oracle.map(|x| x.to_string()),
                matches,
            });
        }
    }
    Ok(rows)
}

pub fn volume_rows_csv(rows: &[VolumeRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("volume rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthEstimate {
    /// `(n, m(B_n^f))` in increasing `n`.
    #[serde(serialize_with = "exact::pairs::serialize")]
    pub samples: Vec<(u64, BigRational)>,
    pub fitted_exponent: f64,
    /// Smallest and largest `n` used in the fit.
    pub window: (u64, u64),
}

/// Least-squares slope of `log m(B_n^f)` against `log n` over
/// `2 <= n <= n_max`, optionally only over `n` supported on `restrict_primes`.
pub fn growth_exponent(dim: usize, n_max: u64, restrict_primes: Option<&[u64]>) -> Result<GrowthEstimate, VolumeError> {
    let allowed: Option<BTreeSet<u64>> = restrict_primes.map(|ps| ps.iter().copied().collect());
    let mut samples = Vec::new();
    for n in 2..=n_max {
        if let Some(set) = &allowed {
            if !arith::prime_divisors(n).iter().all(|p| set.contains(p)) {
                continue;
            }
        }
        samples.push((n, finite_volume(dim, n)?));
    }
    if samples.len() < 2 {
        return Err(VolumeError::DegenerateFit { samples: samples.len() });
    }
    let xs: Vec<f64> = samples.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|(_, v)| ln_rational(v)).collect();
    let fitted_exponent = ols_slope(&xs, &ys);
    let window = (samples[0].0, samples[samples.len() - 1].0);
    Ok(GrowthEstimate {
        samples,
        fitted_exponent,
        window,
    })
}

pub(crate) fn ln_rational(x: &BigRational) -> f64 {
    match x.to_f64() {
        Some(v) if v.is_finite() && v > 0.0 => v.ln(),
        _ => {
            // out of f64 range: keep the top 60 bits of numerator and denominator
            let ln = |b: &BigInt| {
                let s = b.bits().saturating_sub(60);
                (b >> s).to_f64().unwrap_or(1.0).ln() + s as f64 * std::f64::consts::LN_2
            };
            ln(x.numer()) - ln(x.denom())
        }
    }
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub(crate) fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// A constant-coefficient recurrence
/// `s(k + r) = c_1 s(k + r - 1) + ... + c_r s(k)` valid for `k >= offset`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recurrence {
    pub order: usize,
    pub offset: usize,
    #[serde(serialize_with = "exact::vec::serialize")]
    pub coefficients: Vec<BigRational>,
}

impl Recurrence {
    /// The ratio of an order-one recurrence.
    pub fn ratio(&self) -> Option<&BigRational> {
        (self.order == 1).then(|| &self.coefficients[0])
    }
}

/// Smallest-order, then smallest-offset recurrence fitting `seq`. Each
/// candidate is solved from its first `r` equations and verified on at least
/// one more.
pub fn find_recurrence(seq: &[BigRational], max_order: usize, max_offset: usize) -> Result<Recurrence, VolumeError> {
    for order in 1..=max_order {
        for offset in 0..=max_offset {
            let eqs = seq.len().saturating_sub(offset + order);
            if eqs < order + 1 {
                continue;
            }
            let row =
                |k: usize| -> Vec<BigRational> { (1..=order).map(|i| seq[offset + k + order - i].clone()).collect() };
            let rhs = |k: usize| seq[offset + k + order].clone();
            let a: Vec<Vec<BigRational>> = (0..order).map(row).collect();
            let b: Vec<BigRational> = (0..order).map(rhs).collect();
            let Some(c) = solve_exact(a, b) else {
                continue;
            };
            let fits = (0..eqs).all(|k| {
                let lhs: BigRational = row(k).iter().zip(&c).map(|(x, y)| x * y).sum();
                lhs == rhs(k)
            });
            if fits {
                return Ok(Recurrence {
                    order,
                    offset,
                    coefficients: c,
                });
            }
        }
    }
    Err(VolumeError::NoRecurrenceFound {
        max_order,
        len: seq.len(),
    })
}

/// Gaussian elimination over `Q`; `None` when singular.
fn solve_exact(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Option<Vec<BigRational>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = &a[r][col] / &a[col][col];
                let pivot_row = a[col].clone();
                for (x, y) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= &f * y;
                }
                let t = &f * &b[col];
                b[r] -= t;
            }
        }
    }
    Some((0..n).map(|i| &b[i] / &a[i][i]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RationalityReport {
    pub p: u64,
    #[serde(serialize_with = "exact::vec::serialize")]
    pub values: Vec<BigRational>,
    pub recurrence: Recurrence,
    /// `v(l + 1) = p^2 v(l)` for every `l >= 1` in range (`N = 2` only).
    pub sl2_recurrence_holds: Option<bool>,
}

/// Fits `v(0), ..., v(L)` with a linear recurrence, which is equivalent to
/// rationality of `sum v(l) T^l` (up to the fitted range).
pub fn poincare_rationality_check(dim: usize, p: u64, max_l: u32) -> Result<RationalityReport, VolumeError> {
    if max_l < 4 {
        return Err(VolumeError::InvalidArgument(format!("need L >= 4, got {max_l}")));
    }
    let values = LocalVolumeTable::build(dim, p, max_l)?.values();
    let recurrence = find_recurrence(&values, 3, 2)?;
    let sl2_recurrence_holds = (dim == 2).then(|| {
        let p2 = BigRational::from_integer(BigInt::from(p * p));
        values.windows(2).skip(1).all(|w| w[1] == &w[0] * &p2)
    });
    Ok(RationalityReport {
        p,
        values,
        recurrence,
        sl2_recurrence_holds,
    })
}

/// Default congruence level `p^k` for `Xi_p(diag(p^l, p^{-l}))`.
pub fn default_xi_level(l: u32) -> u32 {
    (2 * l).max(1)
}

/// `Xi_p(diag(p^l, p^{-l}))` at the default level, escalating once.
pub fn harish_chandra_xi(p: u64, l: u32) -> Result<BigRational, VolumeError> {
    harish_chandra_xi_with_escalation(p, l, default_xi_level(l))
}

/// Try level `p^k`; on [`VolumeError::LevelInsufficient`] retry at `p^{k+1}`
/// and give up after that.
pub fn harish_chandra_xi_with_escalation(p: u64, l: u32, level: u32) -> Result<BigRational, VolumeError> {
    match harish_chandra_xi_at_level(p, l, level) {
        Err(VolumeError::LevelInsufficient { .. }) => harish_chandra_xi_at_level(p, l, level + 1),
        other => other,
    }
}

/// Average of `Delta(q(g u))^{-1/2}` over `SL_2(Z_p) / K(p^k)`.
///
/// With `g u = k b` (Iwasawa), the diagonal entry `a` of `b` satisfies
/// `|a|_p = max(p^{-l} |u_11|_p, p^l |u_21|_p)` and `Delta^{-1/2} = 1/|a|_p`.
/// The integrand depends only on the first column of `u`, and each primitive
/// column mod `p^k` has the same number of lifts to `SL_2(Z/p^k)`, so the
/// average runs over primitive columns. Columns are grouped by `u_21`; the
/// number of admissible `u_11` residues is `p^k` for a unit `u_21` and
/// `p^k - p^{k-1}` otherwise.
pub fn harish_chandra_xi_at_level(p: u64, l: u32, level: u32) -> Result<BigRational, VolumeError> {
    check_prime(p)?;
    if level == 0 {
        return Err(VolumeError::LevelInsufficient { p, l, level });
    }
    let q = p
        .checked_pow(level)
        .filter(|&q| q <= 1 << 32)
        .ok_or_else(|| VolumeError::InvalidArgument(format!("level {p}^{level} too large")))?;
    // tally u_21 residues by valuation (level = "at least k") before any rational arithmetic
    let mut by_valuation = vec![0u64; level as usize + 1];
    for y in 0..q {
        let mut v = 0usize;
        let mut t = y;
        while v < level as usize && t % p == 0 {
            t /= p;
            v += 1;
        }
        by_valuation[v] += 1;
    }
    if by_valuation[level as usize] > 0 && level < 2 * l {
        // v(u_21) >= k leaves max(p^{-l}, p^{l-v}) undetermined
        return Err(VolumeError::LevelInsufficient { p, l, level });
    }
    let units_fibre = BigInt::from(q);
    let nonunit_fibre = BigInt::from(q - q / p);
    let mut sum = BigRational::zero();
    let mut total = BigInt::zero();
    for (v, &count) in by_valuation.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let v = v as i64;
        // u_11 is a unit whenever u_21 is not
        let (fibre, e) = if v == 0 {
            (&units_fibre, l as i64)
        } else {
            (&nonunit_fibre, (l as i64 - v).max(-(l as i64)))
        };
        let weight = BigInt::from(count) * fibre;
        sum += pow_rational(p, -e) * BigRational::from_integer(weight.clone());
        total += weight;
    }
    Ok(sum / BigRational::from_integer(total))
}

fn pow_rational(p: u64, e: i64) -> BigRational {
    let base = BigRational::from_integer(BigInt::from(p));
    if e >= 0 {
        num_traits::pow(base, e as usize)
    } else {
        num_traits::pow(base.recip(), e.unsigned_abs() as usize)
    }
}

/// `|x|` of an exact rational as `f64`, for reporting.
pub fn abs_f64(x: &BigRational) -> f64 {
    x.abs().to_f64().unwrap_or(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn int(n: i64) -> BigRational {
        q(n, 1)
    }

    #[test]
    fn local_volume_examples() {
        for p in [2, 3, 5, 7] {
            assert_eq!(local_ball_volume(2, p, 0).unwrap(), int(1));
            assert_eq!(hnf_coset_oracle(p, 0), 1);
        }
        assert_eq!(local_ball_volume(2, 2, 1).unwrap(), int(6));
        assert_eq!(local_ball_volume(2, 3, 2).unwrap(), int(108));
        assert_eq!(hnf_coset_oracle(2, 1), 6);
        assert_eq!(hnf_coset_oracle(5, 1), 30);
        assert_eq!(hnf_coset_oracle(3, 2), 108);
        assert!(local_ball_volume(2, 4, 1).is_err());
    }

    #[test]
    fn closed_form_matches_oracle() {
        for p in arith::primes_up_to(13) {
            for l in 0..=3 {
                assert_eq!(
                    local_ball_volume(2, p, l).unwrap(),
                    BigRational::from_integer(hnf_coset_oracle(p, l).into()),
                    "p={p} l={l}"
                );
                if p <= 7 {
                    assert_eq!(hnf_count(2, p, l, u128::MAX).unwrap(), hnf_coset_oracle(p, l));
                }
            }
        }
    }

    #[test]
    fn sl3_oracle_volume() {
        let v = local_ball_volume(3, 2, 1).unwrap();
        assert_eq!(
            v,
            BigRational::from_integer(hnf_count(3, 2, 1, u128::MAX).unwrap().into())
        );
        assert!(v > int(1));
        assert!(matches!(
            hnf_count(3, 13, 4, 1000),
            Err(VolumeError::UnsupportedDimension { dim: 3, .. })
        ));
    }

    #[test]
    fn sl3_level_one_count() {
        // straight loop over 3x3 HNFs with det 8, no shortcut for unit diagonals
        let p = 2u64;
        let mut count = 0;
        // all upper triangular HNFs with diagonal product 8
        for e in exponent_tuples(3, 3) {
            let d: Vec<u64> = e.iter().map(|&x| p.pow(x)).collect();
            for b01 in 0..d[1] {
                for b02 in 0..d[2] {
                    for b12 in 0..d[2] {
                        let content = [d[0], d[1], d[2], b01, b02, b12]
                            .iter()
                            .fold(0u64, |g, &x| num_integer::gcd(g, x));
                        if content % p != 0 {
                            count += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(hnf_count(3, p, 1, u128::MAX).unwrap(), count);
    }

    #[test]
    fn finite_volume_examples() {
        assert_eq!(finite_volume(2, 1).unwrap(), int(1));
        assert_eq!(finite_volume(2, 6).unwrap(), int(72));
        assert_eq!(finite_volume(2, 4).unwrap(), int(24));
        assert!(finite_volume(2, 0).is_err());
    }

    #[test]
    fn finite_volume_closed_product() {
        for n in 1..300u64 {
            let expected = arith::prime_divisors(n)
                .iter()
                .fold(int(n as i64 * n as i64), |acc, &p| acc * q(p as i64 + 1, p as i64));
            let got = finite_volume(2, n).unwrap();
            assert_eq!(got, expected);
            assert!(got >= int(n as i64 * n as i64));
        }
    }

    #[test]
    fn growth_exponent_examples() {
        let est = growth_exponent(2, 10_000, None).unwrap();
        assert!((1.95..=2.05).contains(&est.fitted_exponent), "{}", est.fitted_exponent);
        assert_eq!(est.window, (2, 10_000));

        let two = growth_exponent(2, 4096, Some(&[2])).unwrap();
        assert!((two.fitted_exponent - 2.0).abs() < 1e-9);
        assert!(two.samples.iter().all(|(n, _)| n.is_power_of_two()));

        assert_eq!(
            growth_exponent(2, 1, None),
            Err(VolumeError::DegenerateFit { samples: 0 })
        );
        assert_eq!(
            growth_exponent(2, 3, Some(&[2])),
            Err(VolumeError::DegenerateFit { samples: 1 })
        );
    }

    #[test]
    fn rationality_examples() {
        let r2 = poincare_rationality_check(2, 2, 5).unwrap();
        assert_eq!(r2.recurrence.order, 1);
        assert_eq!(r2.recurrence.ratio(), Some(&int(4)));
        assert_eq!(r2.sl2_recurrence_holds, Some(true));
        let r3 = poincare_rationality_check(2, 3, 5).unwrap();
        assert_eq!(r3.recurrence.ratio(), Some(&int(9)));

        let ones = vec![int(1); 6];
        let rec = find_recurrence(&ones, 3, 2).unwrap();
        assert_eq!((rec.order, rec.offset), (1, 0));
        assert_eq!(rec.ratio(), Some(&int(1)));

        assert!(poincare_rationality_check(2, 2, 3).is_err());
    }

    #[test]
    fn recurrence_detects_fibonacci_and_rejects_noise() {
        let fib: Vec<BigRational> = [1, 1, 2, 3, 5, 8, 13, 21].iter().map(|&x| int(x)).collect();
        let rec = find_recurrence(&fib, 3, 0).unwrap();
        assert_eq!(rec.order, 2);
        assert_eq!(rec.coefficients, vec![int(1), int(1)]);

        let noise: Vec<BigRational> = [1, 7, 2, 9, 4, 1, 8].iter().map(|&x| int(x)).collect();
        assert!(matches!(
            find_recurrence(&noise, 2, 1),
            Err(VolumeError::NoRecurrenceFound { .. })
        ));
    }

    #[test]
    fn volume_rows_match() {
        let rows = volume_rows(2, &[2, 3], 2).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.matches == Some(true)));
        let csv = volume_rows_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("p,ℓ,closed_form,oracle,match"));
        assert_eq!(lines.nth(1), Some("2,1,6,6,true"));
    }

    /// Spherical-function profile of the Harish-Chandra function on the tree.
    fn xi_closed(p: i64, l: u32) -> BigRational {
        let pl = num_traits::pow(int(p), l as usize);
        (int(1) + int(2 * l as i64) * q(p - 1, p + 1)) / pl
    }

    /// Full scan over primitive columns `(u11, u21)` mod `p^k`.
    fn xi_full_scan(p: u64, l: u32, k: u32) -> BigRational {
        let m = p.pow(k);
        let mut sum = BigRational::zero();
        let mut count = 0i64;
        for x in 0..m {
            for y in 0..m {
                if x % p == 0 && y % p == 0 {
                    continue;
                }
                let abs = |t: u64| -> i64 {
                    if t == 0 {
                        -(k as i64) - 100
                    } else {
                        -(arith::valuation(&BigInt::from(t), p) as i64)
                    }
                };
                // exponents of p in |p^l y| and |p^{-l} x|
                let ey = if y == 0 { i64::MIN } else { abs(y) + l as i64 };
                let ex = if x == 0 { i64::MIN } else { abs(x) - l as i64 };
                let e = ey.max(ex);
                sum += pow_rational(p, -e);
                count += 1;
            }
        }
        sum / int(count)
    }

    #[test]
    fn xi_examples() {
        for p in [2, 3, 5] {
            assert_eq!(harish_chandra_xi(p, 0).unwrap(), int(1));
        }
        assert_eq!(harish_chandra_xi(2, 1).unwrap(), q(5, 6));
        assert_eq!(harish_chandra_xi(3, 1).unwrap(), q(2, 3));
    }

    #[test]
    fn xi_matches_profile_and_full_scan() {
        for p in [2u64, 3, 5, 7] {
            for l in 0..=3u32 {
                let v = harish_chandra_xi(p, l).unwrap();
                assert_eq!(v, xi_closed(p as i64, l), "p={p} l={l}");
                if p.pow(default_xi_level(l)) <= 800 {
                    assert_eq!(v, xi_full_scan(p, l, default_xi_level(l)));
                }
            }
        }
    }

    #[test]
    fn xi_level_escalation() {
        // level 2l-1 escalates to 2l and succeeds
        assert_eq!(harish_chandra_xi_with_escalation(2, 2, 3).unwrap(), xi_closed(2, 2));
        // level 2l-2 cannot be rescued by one escalation
        assert_eq!(
            harish_chandra_xi_with_escalation(2, 2, 2),
            Err(VolumeError::LevelInsufficient { p: 2, l: 2, level: 3 })
        );
        // finer levels give the same value
        assert_eq!(harish_chandra_xi_at_level(3, 1, 4).unwrap(), q(2, 3));
    }

    #[test]
    fn xi_decay_profile() {
        for p in [2u64, 3, 5] {
            let vals: Vec<BigRational> = (0..6).map(|l| harish_chandra_xi(p, l).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]));
            let scaled: Vec<BigRational> = vals
                .iter()
                .enumerate()
                .map(|(l, v)| v * num_traits::pow(int(p as i64), l))
                .collect();
            let step = &scaled[1] - &scaled[0];
            assert!(step > int(0));
            assert!(scaled.windows(2).all(|w| &w[1] - &w[0] == step));
        }
    }

    proptest! {
        #[test]
        fn finite_volume_multiplicative(a in 1u64..500, b in 1u64..500) {
            prop_assume!(num_integer::gcd(a, b) == 1);
            prop_assert_eq!(
                finite_volume(2, a * b).unwrap(),
                finite_volume(2, a).unwrap() * finite_volume(2, b).unwrap()
            );
        }

        #[test]
        fn finite_volume_at_least_n_squared(n in 1u64..100_000) {
            prop_assert!(finite_volume(2, n).unwrap() >= int((n * n) as i64));
        }
    }
}
