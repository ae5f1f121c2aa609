//! Congruence densities `rho(q)`, the Lang-Weil check `rho(p) = t + O(p^{-1/2})`,
//! and the gcd `Delta_n(f)` of the values of `f` on `Gamma_n`.

use std::collections::{BTreeMap, HashSet, VecDeque};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arith;
use crate::exact;
use crate::point::RationalGroupPoint;
use crate::poly::PolynomialFamily;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("|SL_{dim}(Z/{q})| scan needs {cells} cells, budget is {budget}")]
    BudgetExceeded {
        dim: usize,
        q: u64,
        cells: u128,
        budget: u128,
    },
    #[error("q = {0} is not square-free")]
    NotSquarefree(u64),
    #[error("q = {q} is not coprime to n = {n}")]
    NotCoprime { q: u64, n: u64 },
    #[error("gcd did not stabilize within {samples} samples (best so far {best})")]
    NonStabilized {
        samples: usize,
        best: String,
        certificate: Box<GcdCertificate>,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Default cap on the number of residue cells scanned for one modulus.
pub const DEFAULT_DENSITY_BUDGET: u128 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityMethod {
    /// Enumerate `SL_N(Z/q)` itself.
    Direct,
    /// `rho(q) = prod_{p | q} rho(p)`, each factor by direct enumeration.
    #[default]
    Product,
}

/// `|SL_N(Z/q)|` for square-free `q`.
pub fn sl_order(dim: usize, q: u64) -> u128 {
    arith::prime_divisors(q)
        .into_iter()
        .map(|p| {
            let p = p as u128;
            // p^{N(N-1)/2} prod_{k=2}^N (p^k - 1)
            let mut o = p.pow((dim * (dim - 1) / 2) as u32);
            for k in 2..=dim as u32 {
                o *= p.pow(k) - 1;
            }
            o
        })
        .product()
}

fn det_mod(dim: usize, m: &[i64], q: i64) -> i64 {
    let e = |i: usize| m[i] as i128;
    let d = match dim {
        1 => e(0),
        2 => e(0) * e(3) - e(1) * e(2),
        3 => {
            e(0) * (e(4) * e(8) - e(5) * e(7)) - e(1) * (e(3) * e(8) - e(5) * e(6)) + e(2) * (e(3) * e(7) - e(4) * e(6))
        }
        _ => {
            // Laplace expansion along the first row, reduced as we go
            let mut acc: i128 = 0;
            for j in 0..dim {
                let minor: Vec<i64> = (1..dim)
                    .flat_map(|r| (0..dim).filter(move |&c| c != j).map(move |c| (r, c)))
                    .map(|(r, c)| m[r * dim + c])
                    .collect();
                let term = e(j) * det_mod(dim - 1, &minor, q) as i128;
                acc += if j % 2 == 0 { term } else { -term };
                acc %= q as i128;
            }
            acc
        }
    };
    d.rem_euclid(q as i128) as i64
}

/// `(#{g in SL_N(Z/q) : f(g) = 0}, |SL_N(Z/q)|)` by exhaustive enumeration.
///
/// All entries but the last are scanned; `det` is affine in the last entry,
/// so its admissible residues come from one linear congruence.
pub fn count_zeros_direct(fam: &PolynomialFamily, q: u64, budget: u128) -> Result<(u128, u128), DensityError> {
    let dim = fam.dim;
    if q == 0 || dim < 2 {
        return Err(DensityError::InvalidArgument(format!(
            "need q >= 1 and N >= 2, got q = {q}, N = {dim}"
        )));
    }
    let free = dim * dim - 1;
    let cells = (q as u128).checked_pow(free as u32).unwrap_or(u128::MAX);
    if cells > budget {
        return Err(DensityError::BudgetExceeded { dim, q, cells, budget });
    }
    let qi = q as i64;
    let counts: Vec<(u128, u128)> = (0..q)
        .into_par_iter()
        .map(|first| {
            let mut m = vec![0i64; dim * dim];
            m[0] = first as i64;
            let (mut zeros, mut order) = (0u128, 0u128);
            loop {
                m[free] = 0;
                let d0 = det_mod(dim, &m, qi);
                m[free] = 1;
                let slope = (det_mod(dim, &m, qi) - d0).rem_euclid(qi);
                if let Some((x0, step)) = arith::solve_linear_congruence(slope, 1 - d0, qi) {
                    let mut x = x0;
                    while x < qi {
                        m[free] = x;
                        let residues: Vec<u64> = m.iter().map(|&v| v as u64).collect();
                        debug_assert_eq!(det_mod(dim, &m, qi), 1 % qi);
                        order += 1;
                        if fam.eval_mod(&residues, q) == 0 {
                            zeros += 1;
                        }
                        x += step;
                    }
                }
                // odometer over entries 1..free
                let mut i = free;
                loop {
                    if i <= 1 {
                        return (zeros, order);
                    }
                    i -= 1;
                    m[i] += 1;
                    if m[i] < qi {
                        break;
                    }
                    m[i] = 0;
                }
            }
        })
        .collect();
    Ok(counts.into_iter().fold((0, 0), |(z, o), (dz, d_o)| (z + dz, o + d_o)))
}

/// `rho(q) = q * #zeros / |SL_N(Z/q)|` for square-free `q`.
pub fn local_density(
    fam: &PolynomialFamily,
    q: u64,
    method: DensityMethod,
    budget: u128,
) -> Result<BigRational, DensityError> {
    if q == 0 || !arith::is_squarefree(q) {
        return Err(DensityError::NotSquarefree(q));
    }
    if q == 1 {
        return Ok(BigRational::one());
    }
    match method {
        DensityMethod::Direct => {
            let (zeros, order) = count_zeros_direct(fam, q, budget)?;
            Ok(BigRational::new(
                BigInt::from(q) * BigInt::from(zeros),
                BigInt::from(order),
            ))
        }
        DensityMethod::Product => arith::prime_divisors(q)
            .into_iter()
            .map(|p| local_density(fam, p, DensityMethod::Direct, budget))
            .try_fold(BigRational::one(), |acc, r| Ok(acc * r?)),
    }
}

/// `rho` memoized over square-free moduli coprime to `n`.
#[derive(Debug, Clone, Serialize)]
pub struct DensityFunction {
    #[serde(skip)]
    pub family: PolynomialFamily,
    pub n: u64,
    pub method: DensityMethod,
    #[serde(skip)]
    pub budget: u128,
    #[serde(serialize_with = "exact::map::serialize")]
    pub values: BTreeMap<u64, BigRational>,
    pub group_orders: BTreeMap<u64, u128>,
}

impl DensityFunction {
    pub fn new(family: PolynomialFamily, n: u64) -> Self {
        DensityFunction {
            family,
            n,
            method: DensityMethod::Product,
            budget: DEFAULT_DENSITY_BUDGET,
            values: BTreeMap::new(),
            group_orders: BTreeMap::new(),
        }
    }

    pub fn rho(&mut self, q: u64) -> Result<BigRational, DensityError> {
        if let Some(v) = self.values.get(&q) {
            return Ok(v.clone());
        }
        if q.gcd(&self.n) != 1 {
            return Err(DensityError::NotCoprime { q, n: self.n });
        }
        let v = local_density(&self.family, q, self.method, self.budget)?;
        self.values.insert(q, v.clone());
        self.group_orders.insert(q, sl_order(self.family.dim, q));
        Ok(v)
    }

    /// Cached value, if already computed.
    pub fn get(&self, q: u64) -> Option<&BigRational> {
        self.values.get(&q)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LangWeilRow {
    pub p: u64,
    #[serde(with = "exact")]
    pub rho: BigRational,
    /// `|rho(p) - t| * sqrt(p)`.
    pub normalized_deviation: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LangWeilReport {
    pub t: usize,
    pub threshold: f64,
    pub rows: Vec<LangWeilRow>,
}

impl LangWeilReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| !r.flagged)
    }

    pub fn max_deviation(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.normalized_deviation).reduce(f64::max)
    }
}

/// `rho(p)` against `t` for each prime, flagging deviations above `threshold`
/// (5 by default).
pub fn lang_weil_report(
    fam: &PolynomialFamily,
    primes: &[u64],
    threshold: f64,
    budget: u128,
) -> Result<LangWeilReport, DensityError> {
    let t = fam.count();
    let mut rows = Vec::with_capacity(primes.len());
    for &p in primes {
        if !arith::is_prime_u64(p) {
            return Err(DensityError::InvalidArgument(format!("{p} is not prime")));
        }
        let rho = local_density(fam, p, DensityMethod::Direct, budget)?;
        let dev = (&rho - BigRational::from_integer(BigInt::from(t)))
            .to_f64()
            .unwrap_or(f64::INFINITY)
            .abs()
            * (p as f64).sqrt();
        rows.push(LangWeilRow {
            p,
            rho,
            normalized_deviation: dev,
            flagged: dev > threshold,
        });
    }
    Ok(LangWeilReport { t, threshold, rows })
}

/// Output of [`delta_n`]: the stabilized gcd of `[f(gamma)]_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GcdCertificate {
    pub n: u64,
    /// `Delta_n(f)`, as a decimal string.
    #[serde(serialize_with = "serialize_display")]
    pub delta: BigUint,
    pub delta_factors: Vec<(u64, u32)>,
    /// `delta_n(f)`: prime factors of `Delta_n(f)` with multiplicity.
    pub small_delta: u32,
    pub sample_size: usize,
    pub zero_values_skipped: usize,
    pub stabilization_window: usize,
    /// Whether the stopping rule was met (gcd 1, or stable for the window).
    pub stabilized: bool,
    /// Generator words (indices into [`elementary_generators`]) at which the
    /// running gcd dropped.
    pub decisive_words: Vec<Vec<usize>>,
}

fn serialize_display<T: std::fmt::Display, S: serde::Serializer>(x: &T, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

/// `I + c e_ij` for `i != j`, `c` in `{1, -1, 1/n, -1/n}`, without duplicates.
pub fn elementary_generators(dim: usize, n: u64) -> Vec<RationalGroupPoint> {
    let mut coeffs = vec![BigRational::one(), -BigRational::one()];
    if n > 1 {
        let inv = BigRational::new(BigInt::one(), BigInt::from(n));
        coeffs.push(inv.clone());
        coeffs.push(-inv);
    }
    let mut out = Vec::new();
    for i in 0..dim {
        for j in 0..dim {
            if i == j {
                continue;
            }
            for c in &coeffs {
                let mut m = RationalGroupPoint::identity(dim).to_rationals();
                m[i * dim + j] = c.clone();
                out.push(RationalGroupPoint::reduce(dim, &m).expect("elementary matrices are unimodular"));
            }
        }
    }
    out
}

/// Running gcd of `[f(gamma)]_n` over a breadth-first enumeration of
/// `Gamma_n` by words in [`elementary_generators`]. Stops at gcd 1 or after
/// `window` consecutive samples without change; zero values are skipped.
pub fn delta_n(fam: &PolynomialFamily, n: u64, budget: usize, window: usize) -> Result<GcdCertificate, DensityError> {
    if n == 0 {
        return Err(DensityError::InvalidArgument("n must be at least 1".into()));
    }
    let dim = fam.dim;
    let primes = arith::prime_divisors(n);
    let gens = elementary_generators(dim, n);
    let mut seen: HashSet<RationalGroupPoint> = HashSet::new();
    let mut queue: VecDeque<(RationalGroupPoint, Vec<usize>)> = VecDeque::new();
    let id = RationalGroupPoint::identity(dim);
    seen.insert(id.clone());
    queue.push_back((id, Vec::new()));

    let mut gcd = BigUint::zero();
    let mut since_change = 0usize;
    let mut samples = 0usize;
    let mut zeros = 0usize;
    let mut decisive = Vec::new();
    let mut stabilized = false;

    while let Some((g, word)) = queue.pop_front() {
        if samples >= budget {
            break;
        }
        samples += 1;
        match arith::n_coprime_part(&fam.eval(&g), &primes) {
            None => zeros += 1,
            Some(part) => {
                let next = gcd.gcd(&part);
                if next != gcd {
                    gcd = next;
                    since_change = 0;
                    decisive.push(word.clone());
                } else {
                    since_change += 1;
                }
            }
        }
        if gcd.is_one() || (!gcd.is_zero() && since_change >= window) {
            stabilized = true;
            break;
        }
        for (k, s) in gens.iter().enumerate() {
            let h = g.mul(s);
            if seen.insert(h.clone()) {
                let mut w = word.clone();
                w.push(k);
                queue.push_back((h, w));
            }
        }
    }

    let delta_factors = match gcd.to_u64() {
        Some(d) => arith::factorize_u64(d),
        None => Vec::new(),
    };
    let cert = GcdCertificate {
        n,
        small_delta: delta_factors.iter().map(|(_, e)| e).sum(),
        delta_factors,
        delta: gcd,
        sample_size: samples,
        zero_values_skipped: zeros,
        stabilization_window: window,
        stabilized,
        decisive_words: decisive,
    };
    if stabilized {
        Ok(cert)
    } else {
        Err(DensityError::NonStabilized {
            samples,
            best: cert.delta.to_string(),
            certificate: Box::new(cert),
        })
    }
}

/// A pseudo-random element of `Gamma_n`: a product of `len` generators.
pub fn random_gamma_n<R: Rng>(dim: usize, n: u64, len: usize, rng: &mut R) -> RationalGroupPoint {
    let gens = elementary_generators(dim, n);
    (0..len).fold(RationalGroupPoint::identity(dim), |acc, _| {
        acc.mul(&gens[rng.gen_range(0..gens.len())])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{Monomial, Polynomial};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn entry11() -> PolynomialFamily {
        PolynomialFamily::preset("entry11", 2).unwrap()
    }

    /// `g11^2 - g11`, always even on integer matrices.
    fn g11_times_g11_minus_1() -> PolynomialFamily {
        let sq = Polynomial {
            terms: vec![
                Monomial {
                    coeff: 1.into(),
                    exps: vec![2, 0, 0, 0],
                },
                Monomial {
                    coeff: (-1).into(),
                    exps: vec![1, 0, 0, 0],
                },
            ],
        };
        PolynomialFamily::new(2, vec![sq]).unwrap()
    }

    /// Plain `q^4` scan with the determinant checked directly.
    fn brute_sl2(fam: &PolynomialFamily, q: u64) -> (u128, u128) {
        let (mut z, mut o) = (0, 0);
        for a in 0..q {
            for b in 0..q {
                for c in 0..q {
                    for d in 0..q {
                        if (a * d + q * q - b * c % q) % q == 1 % q {
                            o += 1;
                            if fam.eval_mod(&[a, b, c, d], q) == 0 {
                                z += 1;
                            }
                        }
                    }
                }
            }
        }
        (z, o)
    }

    #[test]
    fn density_examples() {
        let f = entry11();
        let b = DEFAULT_DENSITY_BUDGET;
        assert_eq!(local_density(&f, 5, DensityMethod::Direct, b).unwrap(), q(5, 6));
        assert_eq!(local_density(&f, 2, DensityMethod::Direct, b).unwrap(), q(2, 3));
        assert_eq!(local_density(&f, 10, DensityMethod::Direct, b).unwrap(), q(5, 9));
        assert_eq!(local_density(&f, 10, DensityMethod::Product, b).unwrap(), q(5, 9));
        assert_eq!(count_zeros_direct(&f, 5, b).unwrap(), (20, 120));
        assert_eq!(count_zeros_direct(&f, 10, b).unwrap().1, 720);
        assert_eq!(local_density(&f, 1, DensityMethod::Direct, b).unwrap(), q(1, 1));
        assert_eq!(
            local_density(&f, 4, DensityMethod::Direct, b),
            Err(DensityError::NotSquarefree(4))
        );
    }

    #[test]
    fn direct_scan_matches_naive_scan() {
        for fam in [entry11(), PolynomialFamily::preset("trace-minus-2", 2).unwrap()] {
            for q in [2, 3, 5, 6, 7, 10] {
                assert_eq!(
                    count_zeros_direct(&fam, q, u128::MAX).unwrap(),
                    brute_sl2(&fam, q),
                    "q={q}"
                );
            }
        }
    }

    #[test]
    fn group_orders() {
        for p in arith::primes_up_to(13) {
            let (_, o) = count_zeros_direct(&entry11(), p, u128::MAX).unwrap();
            assert_eq!(o, (p * (p * p - 1)) as u128);
            assert_eq!(sl_order(2, p), o);
        }
        let f3 = PolynomialFamily::preset("entry11", 3).unwrap();
        for p in [2, 3] {
            assert_eq!(count_zeros_direct(&f3, p, u128::MAX).unwrap().1, sl_order(3, p));
        }
        assert_eq!(sl_order(3, 2), 168);
    }

    #[test]
    fn entry11_closed_form() {
        for p in arith::primes_up_to(13) {
            let r = local_density(&entry11(), p, DensityMethod::Direct, u128::MAX).unwrap();
            assert_eq!(r, q(p as i64, p as i64 + 1));
            assert!(r < BigRational::from_integer(p.into()));
        }
    }

    #[test]
    fn budget_error() {
        assert!(matches!(
            local_density(&entry11(), 13, DensityMethod::Direct, 100),
            Err(DensityError::BudgetExceeded { cells: 2197, .. })
        ));
    }

    #[test]
    fn lang_weil_examples() {
        let rep = lang_weil_report(&entry11(), &arith::primes_up_to(13), 5.0, DEFAULT_DENSITY_BUDGET).unwrap();
        assert!(rep.all_pass());
        for row in &rep.rows {
            let expected = (row.p as f64).sqrt() / (row.p as f64 + 1.0);
            assert!((row.normalized_deviation - expected).abs() < 1e-12);
            assert!(row.normalized_deviation <= 0.5);
        }

        let two = PolynomialFamily::preset("entries11-22", 2).unwrap();
        let rep = lang_weil_report(&two, &[3], 5.0, DEFAULT_DENSITY_BUDGET).unwrap();
        assert_eq!(rep.t, 2);
        assert_eq!(rep.rows[0].rho, q(5, 4));
        assert!(rep.rows[0].normalized_deviation <= 2.0);

        assert!(lang_weil_report(&two, &[], 5.0, 10).unwrap().rows.is_empty());
    }

    #[test]
    fn multiplicativity_direct_vs_product() {
        let f = PolynomialFamily::preset("trace-minus-2", 2).unwrap();
        for (a, b) in [(2u64, 3u64), (2, 5), (3, 5), (3, 7), (5, 7), (2, 11)] {
            let ra = local_density(&f, a, DensityMethod::Direct, u128::MAX).unwrap();
            let rb = local_density(&f, b, DensityMethod::Direct, u128::MAX).unwrap();
            let rab = local_density(&f, a * b, DensityMethod::Direct, u128::MAX).unwrap();
            assert_eq!(rab, ra * rb);
        }
    }

    #[test]
    fn density_function_memoizes_and_checks_n() {
        let mut rho = DensityFunction::new(entry11(), 2);
        assert_eq!(rho.rho(15).unwrap(), q(3, 4) * q(5, 6));
        assert_eq!(rho.group_orders[&15], 24 * 120);
        assert!(rho.get(15).is_some());
        assert_eq!(rho.rho(6), Err(DensityError::NotCoprime { q: 6, n: 2 }));
    }

    #[test]
    fn delta_examples() {
        let c = delta_n(&entry11(), 1, 100, 50).unwrap();
        assert_eq!(c.delta, BigUint::one());
        let c = delta_n(&entry11(), 6, 100, 50).unwrap();
        assert_eq!((c.delta.clone(), c.small_delta), (BigUint::one(), 0));

        let sum = Polynomial::entry(2, 0, 0)
            + Polynomial::entry(2, 0, 1)
            + Polynomial::entry(2, 1, 0)
            + Polynomial::entry(2, 1, 1);
        let fam = PolynomialFamily::new(2, vec![sum]).unwrap();
        let c = delta_n(&fam, 1, 1000, 50).unwrap();
        assert!(BigUint::from(2u8) % &c.delta == BigUint::zero());
        assert!(c.stabilized);
    }

    #[test]
    fn delta_two_then_one() {
        let f = g11_times_g11_minus_1();
        let c1 = delta_n(&f, 1, 2000, 50).unwrap();
        assert_eq!(c1.delta, BigUint::from(2u8));
        assert_eq!(c1.small_delta, 1);
        assert!(c1.sample_size > 50);
        let c2 = delta_n(&f, 2, 2000, 50).unwrap();
        assert_eq!(c2.delta, BigUint::one());
        let c3 = delta_n(&f, 3, 2000, 50).unwrap();
        assert!((&c1.delta % &c3.delta).is_zero());
        assert!(c3.small_delta <= c1.small_delta);
    }

    #[test]
    fn delta_non_stabilized_keeps_best() {
        let f = g11_times_g11_minus_1();
        match delta_n(&f, 1, 3, 50) {
            Err(DensityError::NonStabilized { certificate, .. }) => {
                assert!(!certificate.stabilized);
                assert_eq!(certificate.sample_size, 3);
            }
            other => panic!("expected NonStabilized, got {other:?}"),
        }
    }

    #[test]
    fn delta_divides_fresh_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for (fam, n) in [
            (g11_times_g11_minus_1(), 1u64),
            (g11_times_g11_minus_1(), 3),
            (entry11(), 5),
        ] {
            let cert = delta_n(&fam, n, 5000, 50).unwrap();
            let primes = arith::prime_divisors(n);
            for _ in 0..1000 {
                let g = random_gamma_n(2, n, 12, &mut rng);
                if let Some(part) = arith::n_coprime_part(&fam.eval(&g), &primes) {
                    assert!((part % &cert.delta).is_zero());
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn rho_multiplicative(i in 0usize..5, j in 0usize..5) {
            let primes = [2u64, 3, 5, 7, 11];
            prop_assume!(i != j);
            let f = entry11();
            let (a, b) = (primes[i], primes[j]);
            let direct = local_density(&f, a * b, DensityMethod::Direct, u128::MAX).unwrap();
            let prod = local_density(&f, a, DensityMethod::Direct, u128::MAX).unwrap()
                * local_density(&f, b, DensityMethod::Direct, u128::MAX).unwrap();
            prop_assert_eq!(direct.clone(), prod);
            prop_assert!(direct < BigRational::from_integer((a * b).into()));
        }
    }
}
