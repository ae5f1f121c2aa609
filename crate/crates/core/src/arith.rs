//! Integer helpers shared by the other modules: small-prime sieving,
//! factorization of moduli, modular inverses and a big-integer factorizer
//! (trial division, Miller-Rabin, Pollard-Brent rho).

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

/// All primes `<= limit`, by a plain Eratosthenes sieve.
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let limit = limit as usize;
    let mut composite = vec![false; limit + 1];
    let mut primes = Vec::new();
    for i in 2..=limit {
        if composite[i] {
            continue;
        }
        primes.push(i as u64);
        let mut j = i * i;
        while j <= limit {
            composite[j] = true;
            j += i;
        }
    }
    primes
}

/// Prime factorization of a machine integer by trial division.
///
/// Only used on moduli and levels, which are small.
pub fn factorize_u64(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    let mut p = 2u64;
    while p * p <= n {
        if n.is_multiple_of(p) {
            let mut e = 0;
            while n.is_multiple_of(p) {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Distinct prime divisors of `n`.
pub fn prime_divisors(n: u64) -> Vec<u64> {
    factorize_u64(n).into_iter().map(|(p, _)| p).collect()
}

pub fn is_squarefree(n: u64) -> bool {
    n >= 1 && factorize_u64(n).iter().all(|&(_, e)| e == 1)
}

pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let (d, s) = split_pow2(n - 1);
    // deterministic for all 64-bit inputs
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn split_pow2(mut d: u64) -> (u64, u32) {
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    (d, s)
}

pub fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod_u64(acc, base, m);
        }
        base = mul_mod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Extended Euclid on `i64`: returns `(g, x, y)` with `a x + b y = g >= 0`.
pub fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    let (mut old_r, mut r) = (a, b);
    let (mut old_s, mut s) = (1i64, 0i64);
    let (mut old_t, mut t) = (0i64, 1i64);
    while r != 0 {
        let q = old_r.div_euclid(r);
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
        (old_t, t) = (t, old_t - q * t);
    }
    if old_r < 0 {
        (-old_r, -old_s, -old_t)
    } else {
        (old_r, old_s, old_t)
    }
}

/// Inverse of `a` modulo `m`, if it exists.
pub fn mod_inverse(a: i64, m: i64) -> Option<i64> {
    let (g, x, _) = ext_gcd(a.rem_euclid(m), m);
    (g == 1).then(|| x.rem_euclid(m))
}

/// Solutions `x mod m` of `a x == b (mod m)`, as `(x0, step)` with all
/// solutions `x0 + k*step`. `None` when there is no solution.
pub fn solve_linear_congruence(a: i64, b: i64, m: i64) -> Option<(i64, i64)> {
    debug_assert!(m > 0);
    let a = a.rem_euclid(m);
    let b = b.rem_euclid(m);
    let g = a.gcd(&m);
    if b % g != 0 {
        return None;
    }
    let step = m / g;
    if step == 1 {
        return Some((0, 1));
    }
    let inv = mod_inverse(a / g, step)?;
    let x0 = ((b / g) as i128 * inv as i128).rem_euclid(step as i128) as i64;
    Some((x0, step))
}

/// p-adic valuation of a nonzero big integer.
pub fn valuation(x: &BigInt, p: u64) -> u32 {
    debug_assert!(!x.is_zero());
    let p = BigInt::from(p);
    let mut v = 0;
    let mut y = x.clone();
    loop {
        let (q, r) = y.div_rem(&p);
        if !r.is_zero() {
            return v;
        }
        y = q;
        v += 1;
    }
}

/// `|x|` with every factor of the primes in `strip` divided out.
pub fn strip_primes(x: &BigInt, strip: &[u64]) -> BigUint {
    let mut y = x.magnitude().clone();
    if y.is_zero() {
        return y;
    }
    for &p in strip {
        let pb = BigUint::from(p);
        loop {
            let (q, r) = y.div_rem(&pb);
            if !r.is_zero() {
                break;
            }
            y = q;
        }
    }
    y
}

/// The `n`-coprime part `[w]_n` of `w` in `Z[1/n]`, where `n_primes` are the
/// primes of `n`. `None` if `w = 0` or its denominator has other primes.
pub fn n_coprime_part(w: &num_rational::BigRational, n_primes: &[u64]) -> Option<BigUint> {
    if w.is_zero() || !strip_primes(w.denom(), n_primes).is_one() {
        return None;
    }
    Some(strip_primes(w.numer(), n_primes))
}

/// Result of [`factor_biguint`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factorization {
    /// Prime factors found, with multiplicity, sorted ascending.
    pub primes: Vec<(BigUint, u32)>,
    /// Composite cofactors the factorizer gave up on.
    pub unfactored: Vec<BigUint>,
}

impl Factorization {
    pub fn is_complete(&self) -> bool {
        self.unfactored.is_empty()
    }

    /// Number of prime factors counted with multiplicity. When incomplete,
    /// each unfactored composite contributes 2, which makes this a lower bound.
    pub fn factor_count(&self) -> u64 {
        let found: u64 = self.primes.iter().map(|(_, e)| *e as u64).sum();
        found + 2 * self.unfactored.len() as u64
    }
}

/// Limits for the big-integer factorizer.
#[derive(Debug, Clone, Copy)]
pub struct FactorBudget {
    pub trial_limit: u64,
    pub rho_iterations: u64,
}

impl Default for FactorBudget {
    fn default() -> Self {
        FactorBudget {
            trial_limit: 1_000_000,
            rho_iterations: 2_000_000,
        }
    }
}

/// Factor a positive integer: trial division by primes up to the budget, then
/// Miller-Rabin and Pollard-Brent rho on what remains.
pub fn factor_biguint<R: Rng>(n: &BigUint, budget: FactorBudget, rng: &mut R) -> Factorization {
    let mut primes: Vec<(BigUint, u32)> = Vec::new();
    let mut unfactored = Vec::new();
    let mut rest = n.clone();
    if rest.is_zero() {
        return Factorization { primes, unfactored };
    }

    // trial division, stopping early once p^2 exceeds the cofactor
    let mut p = 2u64;
    while p <= budget.trial_limit {
        if let Some(r) = rest.to_u64() {
            if p.saturating_mul(p) > r {
                break;
            }
        }
        let pb = BigUint::from(p);
        if (&rest % &pb).is_zero() {
            let mut e = 0;
            while (&rest % &pb).is_zero() {
                rest /= &pb;
                e += 1;
            }
            primes.push((pb, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }

    let mut stack = Vec::new();
    if !rest.is_one() {
        stack.push(rest);
    }
    while let Some(m) = stack.pop() {
        if is_probable_prime(&m) {
            add_prime(&mut primes, m);
            continue;
        }
        match pollard_brent(&m, budget.rho_iterations, rng) {
            Some(d) => {
                let other = &m / &d;
                stack.push(d);
                stack.push(other);
            }
            None => unfactored.push(m),
        }
    }
    primes.sort();
    Factorization { primes, unfactored }
}

fn add_prime(primes: &mut Vec<(BigUint, u32)>, p: BigUint) {
    if let Some(entry) = primes.iter_mut().find(|(q, _)| *q == p) {
        entry.1 += 1;
    } else {
        primes.push((p, 1));
    }
}

/// Miller-Rabin with the first 13 prime bases; deterministic below 3.3e24.
pub fn is_probable_prime(n: &BigUint) -> bool {
    if let Some(small) = n.to_u64() {
        return is_prime_u64(small);
    }
    if n.is_even() {
        return false;
    }
    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    'witness: for a in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41] {
        let mut x = BigUint::from(a).modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Pollard-Brent rho; returns a nontrivial divisor or `None` when the
/// iteration budget runs out.
pub fn pollard_brent<R: Rng>(n: &BigUint, max_iter: u64, rng: &mut R) -> Option<BigUint> {
    let one = BigUint::one();
    if n.is_even() {
        return Some(BigUint::from(2u32));
    }
    let mut spent = 0u64;
    let n_u64 = n.to_u64().unwrap_or(u64::MAX);
    while spent < max_iter {
        let c = BigUint::from(rng.gen_range(1..n_u64.min(1 << 40)));
        let mut y = BigUint::from(rng.gen_range(0..n_u64.min(1 << 40)));
        let m = 128u64;
        let mut g = one.clone();
        let mut r = 1u64;
        let mut q = one.clone();
        let mut x = y.clone();
        let mut ys = y.clone();
        let step = |v: &BigUint| (v * v + &c) % n;
        while g.is_one() && spent < max_iter {
            x = y.clone();
            for _ in 0..r {
                y = step(&y);
            }
            let mut k = 0;
            while k < r && g.is_one() {
                ys = y.clone();
                for _ in 0..m.min(r - k) {
                    y = step(&y);
                    let diff = if x > y { &x - &y } else { &y - &x };
                    q = (q * diff) % n;
                }
                g = q.gcd(n);
                k += m;
                spent += m.min(r);
            }
            r *= 2;
        }
        if g == *n {
            // backtrack one step at a time
            loop {
                ys = step(&ys);
                let diff = if x > ys { &x - &ys } else { &ys - &x };
                g = diff.gcd(n);
                if !g.is_one() {
                    break;
                }
            }
        }
        if !g.is_one() && g != *n {
            return Some(g);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_primes() {
        assert_eq!(primes_up_to(20), vec![2, 3, 5, 7, 11, 13, 17, 19]);
        assert!(primes_up_to(1).is_empty());
    }

    #[test]
    fn factorize_moduli() {
        assert_eq!(factorize_u64(360), vec![(2, 3), (3, 2), (5, 1)]);
        assert_eq!(factorize_u64(1), vec![]);
        assert_eq!(factorize_u64(97), vec![(97, 1)]);
        assert!(is_squarefree(30));
        assert!(!is_squarefree(12));
    }

    #[test]
    fn miller_rabin_u64() {
        let sieve = primes_up_to(10_000);
        for n in 0..10_000u64 {
            assert_eq!(is_prime_u64(n), sieve.binary_search(&n).is_ok(), "n={n}");
        }
        assert!(is_prime_u64(18446744073709551557));
        assert!(!is_prime_u64(3215031751)); // strong pseudoprime to 2,3,5,7
    }

    #[test]
    fn linear_congruence() {
        assert_eq!(solve_linear_congruence(3, 4, 7), Some((6, 7)));
        assert_eq!(solve_linear_congruence(4, 2, 6), Some((2, 3)));
        assert_eq!(solve_linear_congruence(4, 1, 6), None);
        assert_eq!(solve_linear_congruence(0, 0, 5), Some((0, 1)));
    }

    #[test]
    fn factor_big_semiprime() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // two primes just above the trial-division limit
        let p = BigUint::from(1_000_003u64);
        let q = BigUint::from(1_000_033u64);
        let n = &p * &q * &p;
        let f = factor_biguint(&n, FactorBudget::default(), &mut rng);
        assert!(f.is_complete());
        assert_eq!(f.primes, vec![(p, 2), (q, 1)]);
        assert_eq!(f.factor_count(), 3);
    }

    #[test]
    fn factor_with_no_budget_is_a_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = BigUint::from(1_000_003u64) * BigUint::from(1_000_033u64);
        let budget = FactorBudget {
            trial_limit: 100,
            rho_iterations: 0,
        };
        let f = factor_biguint(&n, budget, &mut rng);
        assert!(!f.is_complete());
        assert_eq!(f.factor_count(), 2);
    }

    #[test]
    fn n_coprime_parts() {
        use num_rational::BigRational;
        let w = |a: i64, b: i64| BigRational::new(a.into(), b.into());
        assert_eq!(n_coprime_part(&w(40, 1), &[2, 5]), Some(BigUint::from(1u8)));
        assert_eq!(n_coprime_part(&w(12, 1), &[2, 5]), Some(BigUint::from(3u8)));
        assert_eq!(n_coprime_part(&w(-90, 1), &[2, 3]), Some(BigUint::from(5u8)));
        assert_eq!(n_coprime_part(&w(7, 6), &[2, 3]), Some(BigUint::from(7u8)));
        assert_eq!(n_coprime_part(&w(7, 5), &[2, 3]), None);
        assert_eq!(n_coprime_part(&w(0, 1), &[2]), None);
    }
}
