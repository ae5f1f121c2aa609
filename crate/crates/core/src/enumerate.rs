//! Exact enumeration of `B_n(x, eps) ∩ Gamma_n`.
//!
//! A point with `den(z) = n` in the closed max-ball of radius `eps` around
//! `x` is `u / n` with `u` integral, `det(u) = n^N`, `gcd(u, n) = 1` and
//! `u_ij` in `[n(x_ij - eps), n(x_ij + eps)]`. Two strategies produce that
//! set:
//!
//! * `Oracle` scans the whole integer box (any `N`; used at `N <= 3`).
//! * `Optimized` (`N = 2`) runs over `(a, b)`, solves `b c == -n^2 (mod a)`
//!   for the arithmetic progression of admissible `c`, and reads `d` off the
//!   determinant equation.
//!
//! The outermost entry range is split into chunks that are scanned in
//! parallel; chunk outputs are concatenated and sorted, so results do not
//! depend on scheduling.

use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith;
use crate::point::{BallSpec, CoreError, RationalGroupPoint};
use crate::volumes::{self, VolumeError};

#[derive(Debug, Error)]
pub enum EnumerateError {
    #[error("search space too large: {actual} exceeds the budget of {budget}")]
    SearchSpaceTooLarge { budget: u128, actual: u128 },
    #[error("enumeration aborted by cancellation signal")]
    Aborted,
    #[error("strategy {strategy:?} does not support N = {dim}")]
    UnsupportedDimension { strategy: Strategy, dim: usize },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Optimized,
    Oracle,
}

#[derive(Debug, Clone)]
pub struct EnumerationOptions {
    /// Maximum number of integer cells the oracle may visit.
    pub oracle_cell_budget: u128,
    /// Maximum number of `(a, b)` rows the optimized solver may visit.
    pub optimized_row_budget: u128,
    pub parallel: bool,
    pub cancel: Option<Arc<AtomicBool>>,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        EnumerationOptions {
            oracle_cell_budget: 1_000_000_000,
            optimized_row_budget: 10_000_000,
            parallel: true,
            cancel: None,
        }
    }
}

impl EnumerationOptions {
    fn cancelled(&self) -> bool {
        self.cancel.as_ref().is_some_and(|c| c.load(AtomicOrdering::Relaxed))
    }
}

#[derive(Debug, Clone)]
pub struct EnumerationResult {
    /// Points in canonical order, without duplicates.
    pub points: Vec<RationalGroupPoint>,
    pub ball: BallSpec,
    pub strategy: Strategy,
    pub elapsed: Duration,
}

impl EnumerationResult {
    /// `T_n(x)`.
    pub fn count(&self) -> usize {
        self.points.len()
    }
}

/// Trailing record of the JSON-lines stream.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EnumerationSummary {
    pub count: usize,
    pub elapsed_ms: u128,
    pub strategy: Strategy,
}

impl EnumerationResult {
    pub fn summary(&self) -> EnumerationSummary {
        EnumerationSummary {
            count: self.count(),
            elapsed_ms: self.elapsed.as_millis(),
            strategy: self.strategy,
        }
    }

    /// One JSON line per point followed by the summary record.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            out.push_str(&serde_json::to_string(p).expect("points serialize"));
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&self.summary()).expect("summary serializes"));
        out.push('\n');
        out
    }
}

/// Parse a JSON-lines enumeration stream. Summary lines are skipped.
pub fn parse_json_lines(text: &str) -> Result<Vec<RationalGroupPoint>, serde_json::Error> {
    let mut points = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let value: serde_json::Value = serde_json::from_str(line)?;
        if value.get("count").is_some() && value.get("u").is_none() {
            continue;
        }
        points.push(serde_json::from_value(value)?);
    }
    Ok(points)
}

/// Integer box `[lo_ij, hi_ij]` for the numerator entries.
#[derive(Debug, Clone)]
struct NumeratorBox {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl NumeratorBox {
    fn new(ball: &BallSpec) -> Result<Self, EnumerateError> {
        let n = BigRational::from_integer(ball.modulus().into());
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for x in ball.center() {
            let l = (&n * (x - ball.radius())).ceil().to_integer();
            let h = (&n * (x + ball.radius())).floor().to_integer();
            let too_big = || EnumerateError::SearchSpaceTooLarge {
                budget: i64::MAX as u128,
                actual: u128::MAX,
            };
            lo.push(l.to_i64().ok_or_else(too_big)?);
            hi.push(h.to_i64().ok_or_else(too_big)?);
        }
        Ok(NumeratorBox { lo, hi })
    }

    fn width(&self, i: usize) -> u128 {
        (self.hi[i] - self.lo[i] + 1).max(0) as u128
    }

    fn cells(&self) -> u128 {
        (0..self.lo.len()).fold(1u128, |acc, i| acc.saturating_mul(self.width(i)))
    }
}

pub fn enumerate_points(
    ball: &BallSpec,
    strategy: Strategy,
    opts: &EnumerationOptions,
) -> Result<EnumerationResult, EnumerateError> {
    let start = Instant::now();
    let bx = NumeratorBox::new(ball)?;
    let n = ball.modulus() as i64;
    let dim = ball.dim();
    let mut raw = match strategy {
        Strategy::Oracle => {
            if !(1..=3).contains(&dim) {
                return Err(EnumerateError::UnsupportedDimension { strategy, dim });
            }
            let cells = bx.cells();
            if cells > opts.oracle_cell_budget {
                return Err(EnumerateError::SearchSpaceTooLarge {
                    budget: opts.oracle_cell_budget,
                    actual: cells,
                });
            }
            scan_box(&bx, dim, n, opts)?
        }
        Strategy::Optimized => {
            if dim != 2 {
                return Err(EnumerateError::UnsupportedDimension { strategy, dim });
            }
            let rows = bx.width(0).saturating_mul(bx.width(1));
            if rows > opts.optimized_row_budget {
                return Err(EnumerateError::SearchSpaceTooLarge {
                    budget: opts.optimized_row_budget,
                    actual: rows,
                });
            }
            solve_sl2(&bx, n, opts)?
        }
    };
    raw.sort_unstable();
    raw.dedup();
    let points = raw
        .iter()
        .map(|u| RationalGroupPoint::from_i64_unchecked(dim, u, n))
        .collect();
    Ok(EnumerationResult {
        points,
        ball: ball.clone(),
        strategy,
        elapsed: start.elapsed(),
    })
}

fn gcd_with(entries: &[i64], n: i64) -> i64 {
    entries.iter().fold(n, |g, &x| g.gcd(&x))
}

fn det_small(dim: usize, u: &[i64]) -> i128 {
    let e = |i: usize| u[i] as i128;
    match dim {
        1 => e(0),
        2 => e(0) * e(3) - e(1) * e(2),
        3 => {
            e(0) * (e(4) * e(8) - e(5) * e(7)) - e(1) * (e(3) * e(8) - e(5) * e(6)) + e(2) * (e(3) * e(7) - e(4) * e(6))
        }
        _ => unreachable!("oracle dimension checked by caller"),
    }
}

/// Split the outermost range into chunks and run `scan` on each.
fn run_chunked<F>(lo: i64, hi: i64, opts: &EnumerationOptions, scan: F) -> Result<Vec<Vec<i64>>, EnumerateError>
where
    F: Fn(i64) -> Result<Vec<Vec<i64>>, EnumerateError> + Sync,
{
    if hi < lo {
        return Ok(Vec::new());
    }
    let chunks: Vec<i64> = (lo..=hi).collect();
    let parts: Vec<Result<Vec<Vec<i64>>, EnumerateError>> = if opts.parallel {
        chunks.par_iter().map(|&a| scan(a)).collect()
    } else {
        chunks.iter().map(|&a| scan(a)).collect()
    };
    let mut out = Vec::new();
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

fn scan_box(bx: &NumeratorBox, dim: usize, n: i64, opts: &EnumerationOptions) -> Result<Vec<Vec<i64>>, EnumerateError> {
    let target = (n as i128).pow(dim as u32);
    let m = dim * dim;
    run_chunked(bx.lo[0], bx.hi[0], opts, |first| {
        if opts.cancelled() {
            return Err(EnumerateError::Aborted);
        }
        let mut found = Vec::new();
        let mut u: Vec<i64> = bx.lo.clone();
        u[0] = first;
        if (1..m).any(|i| bx.lo[i] > bx.hi[i]) {
            return Ok(found);
        }
        loop {
            if det_small(dim, &u) == target && gcd_with(&u, n) == 1 {
                found.push(u.clone());
            }
            // odometer over entries 1..m
            let mut i = m - 1;
            loop {
                if i == 0 {
                    return Ok(found);
                }
                if u[i] < bx.hi[i] {
                    u[i] += 1;
                    break;
                }
                u[i] = bx.lo[i];
                i -= 1;
            }
        }
    })
}

fn solve_sl2(bx: &NumeratorBox, n: i64, opts: &EnumerationOptions) -> Result<Vec<Vec<i64>>, EnumerateError> {
    let n2 = n * n;
    let (clo, chi, dlo, dhi) = (bx.lo[2], bx.hi[2], bx.lo[3], bx.hi[3]);
    run_chunked(bx.lo[0], bx.hi[0], opts, |a| {
        if opts.cancelled() {
            return Err(EnumerateError::Aborted);
        }
        let mut found = Vec::new();
        for b in bx.lo[1]..=bx.hi[1] {
            if a == 0 {
                // -b c = n^2: b determines c, d is free
                if b == 0 || n2 % b != 0 {
                    continue;
                }
                let c = -n2 / b;
                if c < clo || c > chi {
                    continue;
                }
                for d in dlo..=dhi {
                    let u = [a, b, c, d];
                    if gcd_with(&u, n) == 1 {
                        found.push(u.to_vec());
                    }
                }
                continue;
            }
            // a d = n^2 + b c needs b c == -n^2 (mod |a|)
            let m = a.abs();
            let Some((c0, step)) = arith::solve_linear_congruence(b, -n2, m) else {
                continue;
            };
            let mut c = clo + (c0 - clo).rem_euclid(step);
            while c <= chi {
                let num = n2 as i128 + b as i128 * c as i128;
                debug_assert!((num % a as i128).is_zero());
                let d = (num / a as i128) as i64;
                if d >= dlo && d <= dhi {
                    let u = [a, b, c, d];
                    if gcd_with(&u, n) == 1 {
                        found.push(u.to_vec());
                    }
                }
                c += step;
            }
        }
        Ok(found)
    })
}

/// How the radius is chosen per modulus in [`count_table`].
#[derive(Debug, Clone, PartialEq)]
pub enum EpsilonRule {
    Fixed(BigRational),
    /// `eps_n = m(B_n^f)^{-alpha'}`.
    Power {
        alpha_prime: f64,
    },
}

impl EpsilonRule {
    pub fn radius(&self, dim: usize, n: u64) -> Result<BigRational, EnumerateError> {
        match self {
            EpsilonRule::Fixed(eps) => Ok(eps.clone()),
            EpsilonRule::Power { alpha_prime } => {
                let vol = volumes::finite_volume(dim, n)?;
                let v = vol.to_f64().unwrap_or(f64::INFINITY);
                let eps = v.powf(-alpha_prime);
                BigRational::from_float(eps)
                    .ok_or_else(|| EnumerateError::Core(CoreError::InvalidBall(format!("radius {eps} is not finite"))))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CountRow {
    pub n: u64,
    pub epsilon: f64,
    /// `T_n(x)`; `None` when the row was skipped.
    pub count: Option<usize>,
    pub elapsed_ms: u128,
    pub strategy: Strategy,
    pub skipped: Option<String>,
}

/// `T_n(x)` for each `n`, one row per modulus. Budget overruns mark the row
/// skipped instead of failing the table.
pub fn count_table(
    dim: usize,
    center: &[BigRational],
    n_list: &[u64],
    rule: &EpsilonRule,
    strategy: Strategy,
    opts: &EnumerationOptions,
) -> Result<Vec<CountRow>, EnumerateError> {
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let eps = rule.radius(dim, n)?;
        let ball = BallSpec::new(dim, center.to_vec(), eps.clone(), n)?;
        let start = Instant::now();
        let (count, skipped) = match enumerate_points(&ball, strategy, opts) {
            Ok(res) => (Some(res.count()), None),
            Err(e @ EnumerateError::SearchSpaceTooLarge { .. }) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        rows.push(CountRow {
            n,
            epsilon: eps.to_f64().unwrap_or(f64::NAN),
            count,
            elapsed_ms: start.elapsed().as_millis(),
            strategy,
            skipped,
        });
    }
    Ok(rows)
}
