//! Rational points of prescribed denominator on `SL_N(Q)` near a real target.
//!
//! [`enumerate`] lists `B_n(x, eps) ∩ Gamma_n` exactly; [`volumes`] and
//! [`densities`] supply the local data `m(B_n^f)` and `rho(q)`; [`sieve`]
//! turns those into remainder checks and a lower bound for points whose
//! polynomial values have no small prime factor; [`spectral`] measures the
//! decay of Hecke operators; [`engine`] combines everything into parameter
//! formulas, witnesses and counting checks, and [`cli`] exposes it.

pub mod arith;
pub mod cli;
pub mod config;
pub mod densities;
pub mod engine;
pub mod enumerate;
pub mod exact;
pub mod point;
pub mod poly;
pub mod sieve;
pub mod spectral;
pub mod volumes;
