//! Integer polynomial families `f_1, ..., f_t` in the matrix entries.
//!
//! Variables are the entries `g_ij` in row-major order. Absolute
//! irreducibility on the group is taken on trust from the caller.

use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::point::RationalGroupPoint;

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("invalid polynomial family: {0}")]
    Invalid(String),
    #[error("unknown preset {0:?} (expected entry11, trace-minus-2, entries11-22 or entryIJ)")]
    UnknownPreset(String),
    #[error("reading coefficient file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing coefficient file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monomial {
    #[serde(with = "bigint_string")]
    pub coeff: BigInt,
    /// One exponent per matrix entry, row-major.
    pub exps: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|m| m.exps.iter().sum::<u32>()).max().unwrap_or(0)
    }

    /// The coordinate function `g_ij` (0-based indices).
    pub fn entry(dim: usize, i: usize, j: usize) -> Self {
        let mut exps = vec![0; dim * dim];
        exps[i * dim + j] = 1;
        Polynomial {
            terms: vec![Monomial {
                coeff: BigInt::one(),
                exps,
            }],
        }
    }

    pub fn constant(dim: usize, c: i64) -> Self {
        Polynomial {
            terms: vec![Monomial {
                coeff: BigInt::from(c),
                exps: vec![0; dim * dim],
            }],
        }
    }

    fn is_zero(&self) -> bool {
        // like terms are not merged on construction, so merge before testing
        let mut merged: Vec<(Vec<u32>, BigInt)> = Vec::new();
        for m in &self.terms {
            match merged.iter_mut().find(|(e, _)| *e == m.exps) {
                Some((_, c)) => *c += &m.coeff,
                None => merged.push((m.exps.clone(), m.coeff.clone())),
            }
        }
        merged.iter().all(|(_, c)| c.is_zero())
    }

    pub fn eval_rational(&self, x: &[BigRational]) -> BigRational {
        let mut acc = BigRational::zero();
        for m in &self.terms {
            let mut term = BigRational::from(m.coeff.clone());
            for (xi, &e) in x.iter().zip(&m.exps) {
                if e > 0 {
                    term *= num_traits::pow(xi.clone(), e as usize);
                }
            }
            acc += term;
        }
        acc
    }

    pub fn eval_integer(&self, x: &[BigInt]) -> BigInt {
        let mut acc = BigInt::zero();
        for m in &self.terms {
            let mut term = m.coeff.clone();
            for (xi, &e) in x.iter().zip(&m.exps) {
                if e > 0 {
                    term *= num_traits::pow(xi.clone(), e as usize);
                }
            }
            acc += term;
        }
        acc
    }

    /// Value modulo `q` at residues `x` (each in `0..q`).
    pub fn eval_mod(&self, x: &[u64], q: u64) -> u64 {
        let q128 = q as u128;
        let mut acc: u128 = 0;
        for m in &self.terms {
            let c = (&m.coeff % BigInt::from(q)).to_i64().unwrap_or(0).rem_euclid(q as i64) as u128;
            let mut term = c;
            for (xi, &e) in x.iter().zip(&m.exps) {
                for _ in 0..e {
                    term = term * (*xi as u128) % q128;
                }
            }
            acc = (acc + term) % q128;
        }
        acc as u64
    }
}

impl std::ops::Add for Polynomial {
    type Output = Polynomial;

    fn add(mut self, other: Polynomial) -> Polynomial {
        self.terms.extend(other.terms);
        self
    }
}

/// The family `f_1, ..., f_t` whose product is sieved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolynomialFamily {
    pub dim: usize,
    pub polys: Vec<Polynomial>,
}

impl PolynomialFamily {
    pub fn new(dim: usize, polys: Vec<Polynomial>) -> Result<Self, PolyError> {
        let fam = PolynomialFamily { dim, polys };
        fam.validate()?;
        Ok(fam)
    }

    fn validate(&self) -> Result<(), PolyError> {
        if self.polys.is_empty() {
            return Err(PolyError::Invalid("need at least one polynomial".into()));
        }
        for (i, p) in self.polys.iter().enumerate() {
            if p.terms.iter().any(|m| m.exps.len() != self.dim * self.dim) {
                return Err(PolyError::Invalid(format!(
                    "polynomial {i} has a monomial with the wrong number of exponents"
                )));
            }
            if p.is_zero() {
                return Err(PolyError::Invalid(format!("polynomial {i} is zero")));
            }
        }
        Ok(())
    }

    /// Named presets: `entry11`, `trace-minus-2`, `entries11-22`, and
    /// `entryIJ` for any single coordinate.
    pub fn preset(name: &str, dim: usize) -> Result<Self, PolyError> {
        let polys = match name {
            "entry11" => vec![Polynomial::entry(dim, 0, 0)],
            "entries11-22" => vec![Polynomial::entry(dim, 0, 0), Polynomial::entry(dim, 1, 1)],
            "trace-minus-2" => {
                let trace = (0..dim)
                    .map(|i| Polynomial::entry(dim, i, i))
                    .fold(Polynomial { terms: vec![] }, |acc, p| acc + p);
                vec![trace + Polynomial::constant(dim, -2)]
            }
            other => {
                let digits = other
                    .strip_prefix("entry")
                    .filter(|s| s.len() == 2 && s.bytes().all(|b| b.is_ascii_digit()))
                    .ok_or_else(|| PolyError::UnknownPreset(other.into()))?;
                let i = (digits.as_bytes()[0] - b'1') as usize;
                let j = (digits.as_bytes()[1] - b'1') as usize;
                if i >= dim || j >= dim {
                    return Err(PolyError::UnknownPreset(other.into()));
                }
                vec![Polynomial::entry(dim, i, j)]
            }
        };
        PolynomialFamily::new(dim, polys)
    }

    /// Load a family from a JSON coefficient file with this struct's schema.
    pub fn from_json_file(path: &Path) -> Result<Self, PolyError> {
        let text = std::fs::read_to_string(path)?;
        let fam: PolynomialFamily = serde_json::from_str(&text)?;
        fam.validate()?;
        Ok(fam)
    }

    /// `t`.
    pub fn count(&self) -> usize {
        self.polys.len()
    }

    /// `deg(f_1 ... f_t)`.
    pub fn total_degree(&self) -> u32 {
        self.polys.iter().map(Polynomial::degree).sum()
    }

    /// Exact `f_1(z) ... f_t(z)`.
    pub fn eval(&self, z: &RationalGroupPoint) -> BigRational {
        let x = z.to_rationals();
        self.polys
            .iter()
            .map(|p| p.eval_rational(&x))
            .fold(BigRational::one(), |a, b| a * b)
    }

    /// `f_1(u) ... f_t(u)` on the numerator matrix.
    pub fn eval_numerator(&self, z: &RationalGroupPoint) -> BigInt {
        self.polys
            .iter()
            .map(|p| p.eval_integer(z.numerator()))
            .fold(BigInt::one(), |a, b| a * b)
    }

    pub fn eval_mod(&self, x: &[u64], q: u64) -> u64 {
        self.polys.iter().fold(1 % q, |acc, p| {
            ((acc as u128 * p.eval_mod(x, q) as u128) % q as u128) as u64
        })
    }
}

mod bigint_string {
    use num_bigint::BigInt;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &BigInt, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&x.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigInt, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Str(String),
            Int(i64),
        }
        match Raw::deserialize(d)? {
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Int(i) => Ok(BigInt::from(i)),
        }
    }
}
