//! Hecke averaging operators on finite congruence quotients and the decay of
//! their second singular value with the radius.
//!
//! The `p`-adic ball `{||g||_p = p^l}` acts on functions on a finite quotient
//! through the `(p+1)p^{2l-1}` classes of primitive determinant-`p^{2l}`
//! elements. [`build_hecke_graph`] realizes them inside a definite quaternion
//! maximal order `O` split at `p`: the classes are the left unit-classes of
//! primitive elements of reduced norm `p^{2l}`, the finite quotient is
//! `O^x \ SL_2(Z/q)`, and the generators act through a splitting
//! `O/qO = M_2(Z/q)` after scaling by `p^{-l}`. The resulting graph is a
//! finite quotient of the Bruhat-Tits tree and is connected.
//!
//! [`borel_hnf_graph`] is the naive alternative that lets the upper triangular
//! Hermite normal forms act on `PGL_2(Z/q)` directly. Those matrices never
//! leave the Borel subgroup mod `q`, so that graph is disconnected and has no
//! gap; it is kept as a reference fixture.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_integer::Integer;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arith;
use crate::volumes;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("{vertices} vertices exceed the eigensolve budget of {budget}")]
    BudgetExceeded { vertices: usize, budget: usize },
    #[error("eigensolve residual {residual:e} above tolerance {tolerance:e}")]
    ConvergenceFailure { residual: f64, tolerance: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("generator count {found} differs from the ball volume {expected}")]
    GeneratorMismatch { found: usize, expected: u128 },
}

pub const DEFAULT_VERTEX_BUDGET: usize = 20_000;
pub const EIGEN_TOLERANCE: f64 = 1e-10;
/// Slope threshold `-1/4 + 0.05`.
pub const SLOPE_THRESHOLD: f64 = -0.20;

/// A maximal order in the definite quaternion algebra `(-1, -r)` with basis
/// `1, i, j, k = ij`, `i^2 = -1`, `j^2 = -r`.
///
/// Elements are stored with doubled coordinates `(A, B, C, D)`, meaning
/// `(A + B i + C j + D k) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QuaternionOrder {
    pub r: i64,
}

pub type Quaternion = [i64; 4];

impl QuaternionOrder {
    /// Hurwitz order (discriminant 2).
    pub const HURWITZ: QuaternionOrder = QuaternionOrder { r: 1 };
    /// `Z[w] + Z[w] i` in `(-1, -3)`, `w = (1 + j)/2` (discriminant 3).
    pub const EISENSTEIN: QuaternionOrder = QuaternionOrder { r: 3 };

    /// An order whose algebra is split at `p`.
    pub fn split_at(p: u64) -> Self {
        if p == 2 {
            Self::EISENSTEIN
        } else {
            Self::HURWITZ
        }
    }

    /// The single finite prime where the algebra ramifies.
    pub fn discriminant(&self) -> u64 {
        if self.r == 1 {
            2
        } else {
            3
        }
    }

    pub fn contains(&self, x: &Quaternion) -> bool {
        let [a, b, c, d] = *x;
        match self.r {
            1 => {
                a.rem_euclid(2) == b.rem_euclid(2)
                    && b.rem_euclid(2) == c.rem_euclid(2)
                    && c.rem_euclid(2) == d.rem_euclid(2)
            }
            _ => (a - c).rem_euclid(2) == 0 && (b - d).rem_euclid(2) == 0,
        }
    }

    /// `4 * nrd`.
    pub fn norm4(&self, x: &Quaternion) -> i64 {
        let [a, b, c, d] = *x;
        a * a + b * b + self.r * (c * c + d * d)
    }

    /// Product in doubled coordinates.
    pub fn mul(&self, x: &Quaternion, y: &Quaternion) -> Quaternion {
        let r = self.r;
        let [a1, b1, c1, d1] = *x;
        let [a2, b2, c2, d2] = *y;
        let raw = [
            a1 * a2 - b1 * b2 - r * c1 * c2 - r * d1 * d2,
            a1 * b2 + b1 * a2 + r * (c1 * d2 - d1 * c2),
            a1 * c2 + c1 * a2 + (d1 * b2 - b1 * d2),
            a1 * d2 + d1 * a2 + (b1 * c2 - c1 * b2),
        ];
        debug_assert!(raw.iter().all(|v| v % 2 == 0), "order not closed under product");
        raw.map(|v| v / 2)
    }

    /// All elements of reduced norm `m`.
    pub fn elements_of_norm(&self, m: i64) -> Vec<Quaternion> {
        let target = 4 * m;
        let bound = target.isqrt() + 1;
        let mut out = Vec::new();
        for a in -bound..=bound {
            let sa = a * a;
            if sa > target {
                continue;
            }
            for b in -bound..=bound {
                let sb = sa + b * b;
                if sb > target {
                    continue;
                }
                for c in -bound..=bound {
                    let sc = sb + self.r * c * c;
                    if sc > target {
                        continue;
                    }
                    let rest = target - sc;
                    if rest % self.r != 0 {
                        continue;
                    }
                    let dd = rest / self.r;
                    let d = dd.isqrt();
                    if d * d != dd {
                        continue;
                    }
                    for d in if d == 0 { vec![0] } else { vec![d, -d] } {
                        let x = [a, b, c, d];
                        if self.contains(&x) {
                            out.push(x);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn units(&self) -> Vec<Quaternion> {
        self.elements_of_norm(1)
    }

    /// `x / p` is not in the order.
    pub fn is_primitive(&self, x: &Quaternion, p: i64) -> bool {
        if x.iter().any(|v| v % p != 0) {
            return true;
        }
        !self.contains(&x.map(|v| v / p))
    }

    /// Left unit-classes `O^x alpha` of primitive elements of norm `p^{2l}`,
    /// each given by its smallest member.
    pub fn ball_classes(&self, p: u64, l: u32) -> Vec<Quaternion> {
        let units = self.units();
        let m = (p as i64).pow(2 * l);
        let mut classes: Vec<Quaternion> = self
            .elements_of_norm(m)
            .into_iter()
            .filter(|x| self.is_primitive(x, p as i64))
            .map(|x| units.iter().map(|u| self.mul(u, &x)).min().expect("units nonempty"))
            .collect();
        classes.sort_unstable();
        classes.dedup();
        classes
    }
}

type Mat2 = [u64; 4];

fn mat_mul(x: &Mat2, y: &Mat2, q: u64) -> Mat2 {
    let m = |a: u64, b: u64| (a * b) % q;
    [
        (m(x[0], y[0]) + m(x[1], y[2])) % q,
        (m(x[0], y[1]) + m(x[1], y[3])) % q,
        (m(x[2], y[0]) + m(x[3], y[2])) % q,
        (m(x[2], y[1]) + m(x[3], y[3])) % q,
    ]
}

fn det2(x: &Mat2, q: u64) -> u64 {
    (x[0] * x[3] % q + q - x[1] * x[2] % q) % q
}

fn encode(x: &Mat2, q: u64) -> usize {
    (((x[0] * q + x[1]) * q + x[2]) * q + x[3]) as usize
}

/// A splitting `O/qO -> M_2(Z/q)`: `i -> [[0,1],[-1,0]]`,
/// `j -> [[s,t],[t,-s]]` with `s^2 + t^2 = -r`.
#[derive(Debug, Clone, Copy)]
struct Splitting {
    q: u64,
    basis: [Mat2; 4],
    half: u64,
}

impl Splitting {
    fn new(order: &QuaternionOrder, q: u64) -> Option<Self> {
        let target = (q as i64 - order.r % q as i64).rem_euclid(q as i64) as u64;
        let (s, t) = (0..q)
            .flat_map(|s| (0..q).map(move |t| (s, t)))
            .find(|&(s, t)| (s * s + t * t) % q == target)?;
        let one = [1 % q, 0, 0, 1 % q];
        let i = [0, 1 % q, q - 1, 0];
        let j = [s, t, t, (q - s) % q];
        let k = mat_mul(&i, &j, q);
        let half = arith::mod_inverse(2, q as i64)? as u64;
        Some(Splitting {
            q,
            basis: [one, i, j, k],
            half,
        })
    }

    /// Image of `x * scale` (doubled coordinates halved here).
    fn image(&self, x: &Quaternion, scale: u64) -> Mat2 {
        let q = self.q;
        let mut out = [0u64; 4];
        for (coef, b) in x.iter().zip(&self.basis) {
            let c = coef.rem_euclid(q as i64) as u64;
            for k in 0..4 {
                out[k] = (out[k] + c * b[k]) % q;
            }
        }
        let s = self.half * scale % q;
        out.map(|v| v * s % q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HeckeModel {
    /// Quaternion-order quotient of the tree.
    Quaternion { r: i64 },
    /// Hermite normal forms on `PGL_2(Z/q)`.
    BorelHnf,
    /// Built from a supplied matrix.
    Fixture,
}

/// A row-stochastic averaging operator on a finite vertex set.
#[derive(Debug, Clone)]
pub struct HeckeOperatorGraph {
    pub p: u64,
    pub q: u64,
    pub l: u32,
    pub model: HeckeModel,
    /// Unnormalized number of neighbours per vertex (with multiplicity).
    pub degree: usize,
    pub operator: DMatrix<f64>,
}

impl HeckeOperatorGraph {
    pub fn vertex_count(&self) -> usize {
        self.operator.nrows()
    }

    /// A graph around an arbitrary row-stochastic matrix.
    pub fn from_operator(operator: DMatrix<f64>) -> Result<Self, SpectralError> {
        if operator.nrows() != operator.ncols() || operator.nrows() == 0 {
            return Err(SpectralError::InvalidParameters(
                "operator must be square and nonempty".into(),
            ));
        }
        Ok(HeckeOperatorGraph {
            p: 0,
            q: 0,
            l: 0,
            model: HeckeModel::Fixture,
            degree: 0,
            operator,
        })
    }

    /// Two copies side by side (block diagonal).
    pub fn disjoint_union(&self, other: &HeckeOperatorGraph) -> HeckeOperatorGraph {
        let (n, m) = (self.vertex_count(), other.vertex_count());
        let mut op = DMatrix::zeros(n + m, n + m);
        op.view_mut((0, 0), (n, n)).copy_from(&self.operator);
        op.view_mut((n, n), (m, m)).copy_from(&other.operator);
        HeckeOperatorGraph {
            model: HeckeModel::Fixture,
            operator: op,
            ..self.clone()
        }
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.operator
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `max |A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        (&self.operator - self.operator.transpose()).amax()
    }
}

fn check_params(p: u64, q: u64) -> Result<(), SpectralError> {
    if !arith::is_prime_u64(p) {
        return Err(SpectralError::InvalidParameters(format!("p = {p} is not prime")));
    }
    if q < 2 || q.gcd(&p) != 1 {
        return Err(SpectralError::InvalidParameters(format!(
            "need q >= 2 coprime to p = {p}, got {q}"
        )));
    }
    if q > 1000 {
        return Err(SpectralError::InvalidParameters(format!(
            "q = {q} too large for a dense model"
        )));
    }
    Ok(())
}

/// `SL_2(Z/q)` in lexicographic order.
fn sl2_mod(q: u64) -> Vec<Mat2> {
    let mut out = Vec::new();
    for a in 0..q {
        for b in 0..q {
            for c in 0..q {
                for d in 0..q {
                    let m = [a, b, c, d];
                    if det2(&m, q) == 1 % q {
                        out.push(m);
                    }
                }
            }
        }
    }
    out
}

/// Assign class ids to `elements` under left multiplication by `group`.
fn left_orbits(elements: &[Mat2], group: &[Mat2], q: u64) -> (Vec<usize>, HashMap<usize, usize>) {
    let index: HashMap<usize, usize> = elements.iter().enumerate().map(|(i, m)| (encode(m, q), i)).collect();
    let mut class = vec![usize::MAX; elements.len()];
    let mut reps = Vec::new();
    for (i, g) in elements.iter().enumerate() {
        if class[i] != usize::MAX {
            continue;
        }
        let id = reps.len();
        reps.push(i);
        for u in group {
            class[index[&encode(&mat_mul(u, g, q), q)]] = id;
        }
    }
    (reps, index.into_iter().map(|(k, i)| (k, class[i])).collect())
}

/// Averaging operator of the generators `gens` acting on the left of
/// representatives `reps` (indices into `elements`), with vertex lookup `class_of`.
fn assemble(
    elements: &[Mat2],
    reps: &[usize],
    class_of: &HashMap<usize, usize>,
    gens: &[Mat2],
    q: u64,
) -> DMatrix<f64> {
    let n = reps.len();
    let w = 1.0 / gens.len() as f64;
    let rows: Vec<Vec<(usize, f64)>> = reps
        .par_iter()
        .map(|&r| {
            let x = &elements[r];
            let mut row: HashMap<usize, f64> = HashMap::new();
            for g in gens {
                *row.entry(class_of[&encode(&mat_mul(g, x, q), q)]).or_insert(0.0) += w;
            }
            let mut row: Vec<(usize, f64)> = row.into_iter().collect();
            row.sort_unstable_by_key(|e| e.0);
            row
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            m[(i, j)] = v;
        }
    }
    m
}

/// The radius-`2l` operator on `O^x \ SL_2(Z/q)`.
///
/// `q` must be coprime to `p` and to the discriminant of the order used
/// (2 for odd `p`, 3 for `p = 2`).
pub fn build_hecke_graph(p: u64, q: u64, l: u32, budget: usize) -> Result<HeckeOperatorGraph, SpectralError> {
    check_params(p, q)?;
    let order = QuaternionOrder::split_at(p);
    if q.gcd(&(2 * order.discriminant())) != 1 {
        return Err(SpectralError::InvalidParameters(format!(
            "q = {q} must be coprime to {} for the order (-1, -{})",
            2 * order.discriminant(),
            order.r
        )));
    }
    let split = Splitting::new(&order, q)
        .ok_or_else(|| SpectralError::InvalidParameters(format!("no splitting of the order mod {q}")))?;
    let elements = sl2_mod(q);
    let units: Vec<Mat2> = order.units().iter().map(|u| split.image(u, 1)).collect();
    let orbit_size = {
        let mut imgs: Vec<usize> = units.iter().map(|u| encode(u, q)).collect();
        imgs.sort_unstable();
        imgs.dedup();
        imgs.len()
    };
    let vertices = elements.len() / orbit_size;
    if vertices > budget {
        return Err(SpectralError::BudgetExceeded { vertices, budget });
    }

    let classes = order.ball_classes(p, l);
    let expected = volumes::hnf_coset_oracle(p, l);
    if classes.len() as u128 != expected {
        return Err(SpectralError::GeneratorMismatch {
            found: classes.len(),
            expected,
        });
    }
    let scale = arith::mod_inverse((p as i64).pow(l).rem_euclid(q as i64), q as i64).expect("p is a unit mod q") as u64;
    let gens: Vec<Mat2> = classes.iter().map(|x| split.image(x, scale)).collect();
    debug_assert!(gens.iter().all(|g| det2(g, q) == 1 % q));

    let (reps, class_of) = left_orbits(&elements, &units, q);
    let operator = assemble(&elements, &reps, &class_of, &gens, q);
    Ok(HeckeOperatorGraph {
        p,
        q,
        l,
        model: HeckeModel::Quaternion { r: order.r },
        degree: gens.len(),
        operator,
    })
}

/// Hermite normal forms `[[a, b], [0, d]]`, `ad = p^{2l}`, acting on the left
/// of `PGL_2(Z/q)`.
pub fn borel_hnf_graph(p: u64, q: u64, l: u32, budget: usize) -> Result<HeckeOperatorGraph, SpectralError> {
    check_params(p, q)?;
    let mut gl = Vec::new();
    for a in 0..q {
        for b in 0..q {
            for c in 0..q {
                for d in 0..q {
                    let m = [a, b, c, d];
                    if det2(&m, q).gcd(&q) == 1 {
                        gl.push(m);
                    }
                }
            }
        }
    }
    let scalars: Vec<Mat2> = (1..q).filter(|s| s.gcd(&q) == 1).map(|s| [s, 0, 0, s]).collect();
    let vertices = gl.len() / scalars.len();
    if vertices > budget {
        return Err(SpectralError::BudgetExceeded { vertices, budget });
    }
    let total = 2 * l;
    let mut gens = Vec::new();
    for i in 0..=total {
        let (a, d) = (p.pow(i), p.pow(total - i));
        for b in 0..d {
            if i == 0 || i == total || b % p != 0 {
                gens.push([a % q, b % q, 0, d % q]);
            }
        }
    }
    let (reps, class_of) = left_orbits(&gl, &scalars, q);
    let operator = assemble(&gl, &reps, &class_of, &gens, q);
    Ok(HeckeOperatorGraph {
        p,
        q,
        l,
        model: HeckeModel::BorelHnf,
        degree: gens.len(),
        operator,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularValue {
    pub lambda2: f64,
    pub residual: f64,
}

/// Largest `|eigenvalue|` of `(A + A^T)/2` on mean-zero functions.
pub fn second_singular_value(g: &HeckeOperatorGraph) -> Result<SingularValue, SpectralError> {
    let n = g.vertex_count();
    if n == 1 {
        return Ok(SingularValue {
            lambda2: 0.0,
            residual: 0.0,
        });
    }
    let sym = (&g.operator + g.operator.transpose()) * 0.5;
    let proj = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let b = &proj * sym * &proj;
    let eig = SymmetricEigen::new(b.clone());
    let residual = (&b * &eig.eigenvectors - &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues)).amax();
    if residual.is_nan() || residual > EIGEN_TOLERANCE {
        return Err(SpectralError::ConvergenceFailure {
            residual,
            tolerance: EIGEN_TOLERANCE,
        });
    }
    let lambda2 = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max).min(1.0);
    Ok(SingularValue { lambda2, residual })
}

#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    #[serde(rename = "ℓ")]
    pub l: u32,
    pub volume: u128,
    pub lambda2: f64,
    #[serde(skip)]
    pub vertices: usize,
    /// Left out of the fit because `lambda2` is below the eigen tolerance.
    #[serde(skip)]
    pub excluded: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapDecayReport {
    pub p: u64,
    pub q: u64,
    pub rows: Vec<GapRow>,
    /// Least-squares slope of `log lambda2` against `log m(B)`; `None` when
    /// fewer than two rows can be fitted.
    pub slope: Option<f64>,
    pub threshold: f64,
    pub passed: bool,
}

impl GapDecayReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("rows serialize");
        }
        let mut out = String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8");
        match self.slope {
            Some(s) => out.push_str(&format!(
                "# slope={s:.6} threshold={} pass={}\n",
                self.threshold, self.passed
            )),
            None => out.push_str("# slope=undefined pass=false\n"),
        }
        out
    }
}

pub fn gap_decay_report(p: u64, q: u64, ls: &[u32], budget: usize) -> Result<GapDecayReport, SpectralError> {
    let mut rows = Vec::new();
    for &l in ls {
        let g = build_hecke_graph(p, q, l, budget)?;
        let sv = second_singular_value(&g)?;
        rows.push(GapRow {
            l,
            volume: volumes::hnf_coset_oracle(p, l),
            lambda2: sv.lambda2,
            vertices: g.vertex_count(),
            excluded: sv.lambda2 <= EIGEN_TOLERANCE,
        });
    }
    let fit: Vec<&GapRow> = rows.iter().filter(|r| !r.excluded).collect();
    let slope = if fit.len() >= 2 && fit.windows(2).any(|w| w[0].volume != w[1].volume) {
        let xs: Vec<f64> = fit.iter().map(|r| (r.volume as f64).ln()).collect();
        let ys: Vec<f64> = fit.iter().map(|r| r.lambda2.ln()).collect();
        Some(volumes::ols_slope(&xs, &ys))
    } else {
        None
    };
    let passed = slope.is_some_and(|s| s <= SLOPE_THRESHOLD) && rows.iter().all(|r| r.lambda2 < 1.0);
    Ok(GapDecayReport {
        p,
        q,
        rows,
        slope,
        threshold: SLOPE_THRESHOLD,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_units_and_closure() {
        for (order, units) in [(QuaternionOrder::HURWITZ, 24), (QuaternionOrder::EISENSTEIN, 12)] {
            let us = order.units();
            assert_eq!(us.len(), units);
            for a in &us {
                for b in &us {
                    let c = order.mul(a, b);
                    assert!(order.contains(&c));
                    assert_eq!(order.norm4(&c), 4);
                }
            }
        }
    }

    #[test]
    fn norm_is_multiplicative() {
        let o = QuaternionOrder::EISENSTEIN;
        let xs = o.elements_of_norm(4);
        let ys = o.elements_of_norm(7);
        for x in xs.iter().take(10) {
            for y in ys.iter().take(10) {
                assert_eq!(o.norm4(&o.mul(x, y)), 4 * 28);
            }
        }
    }

    #[test]
    fn class_counts_match_ball_volume() {
        for p in [2u64, 3, 5] {
            let o = QuaternionOrder::split_at(p);
            for l in 0..=3 {
                assert_eq!(
                    o.ball_classes(p, l).len() as u128,
                    volumes::hnf_coset_oracle(p, l),
                    "p={p} l={l}"
                );
            }
        }
    }

    #[test]
    fn splitting_is_a_homomorphism() {
        for (order, q) in [
            (QuaternionOrder::HURWITZ, 5u64),
            (QuaternionOrder::EISENSTEIN, 7),
            (QuaternionOrder::HURWITZ, 21),
        ] {
            let s = Splitting::new(&order, q).unwrap();
            let xs = order.elements_of_norm(6);
            for x in xs.iter().take(12) {
                for y in xs.iter().take(12) {
                    let lhs = s.image(&order.mul(x, y), 1);
                    let rhs = mat_mul(&s.image(x, 1), &s.image(y, 1), q);
                    assert_eq!(lhs, rhs);
                }
                assert_eq!(det2(&s.image(x, 1), q), 6 % q);
            }
        }
    }

    #[test]
    fn graph_examples() {
        let g = build_hecke_graph(2, 5, 1, DEFAULT_VERTEX_BUDGET).unwrap();
        assert_eq!(g.vertex_count(), 10);
        assert_eq!(g.degree, 6);
        assert!(g.max_row_sum_error() < 1e-12);
        let g = build_hecke_graph(3, 5, 1, DEFAULT_VERTEX_BUDGET).unwrap();
        assert_eq!((g.vertex_count(), g.degree), (5, 12));
        let g = build_hecke_graph(2, 7, 2, DEFAULT_VERTEX_BUDGET).unwrap();
        assert_eq!((g.vertex_count(), g.degree), (28, 24));
    }

    #[test]
    fn radius_zero_is_identity() {
        let g = build_hecke_graph(2, 5, 0, DEFAULT_VERTEX_BUDGET).unwrap();
        assert_eq!(g.operator, DMatrix::identity(10, 10));
        assert_eq!(second_singular_value(&g).unwrap().lambda2, 1.0);
    }

    #[test]
    fn constant_vector_is_fixed() {
        let g = build_hecke_graph(3, 7, 2, DEFAULT_VERTEX_BUDGET).unwrap();
        let ones = nalgebra::DVector::from_element(g.vertex_count(), 1.0);
        assert!((&g.operator * &ones - &ones).amax() < 1e-12);
        assert!(g.asymmetry() < 1e-12);
    }

    #[test]
    fn spectral_gap_on_connected_graphs() {
        for (p, q) in [(2, 5), (3, 5), (2, 7), (3, 7)] {
            let sv = second_singular_value(&build_hecke_graph(p, q, 1, DEFAULT_VERTEX_BUDGET).unwrap()).unwrap();
            assert!(sv.lambda2 < 1.0 - 1e-6, "(p,q)=({p},{q}) lambda2={}", sv.lambda2);
            assert!(sv.residual <= EIGEN_TOLERANCE);
        }
    }

    #[test]
    fn disconnected_fixtures_have_no_gap() {
        let g = build_hecke_graph(2, 5, 1, DEFAULT_VERTEX_BUDGET).unwrap();
        let two = g.disjoint_union(&g);
        assert!((second_singular_value(&two).unwrap().lambda2 - 1.0).abs() < 1e-9);

        let borel = borel_hnf_graph(2, 5, 1, DEFAULT_VERTEX_BUDGET).unwrap();
        assert_eq!(borel.vertex_count(), 120);
        assert_eq!(borel.degree, 6);
        assert!(borel.max_row_sum_error() < 1e-12);
        assert!((second_singular_value(&borel).unwrap().lambda2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fixture_constructor() {
        let cycle = DMatrix::from_fn(
            4,
            4,
            |i, j| if (i + 1) % 4 == j || (j + 1) % 4 == i { 0.5 } else { 0.0 },
        );
        let g = HeckeOperatorGraph::from_operator(cycle).unwrap();
        // the 4-cycle is bipartite: eigenvalue -1 on mean-zero functions
        assert!((second_singular_value(&g).unwrap().lambda2 - 1.0).abs() < 1e-12);
        assert!(HeckeOperatorGraph::from_operator(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn decay_examples() {
        let rep = gap_decay_report(2, 5, &[1, 2, 3, 4], DEFAULT_VERTEX_BUDGET).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.slope.unwrap() <= SLOPE_THRESHOLD);
        let rep = gap_decay_report(3, 7, &[1, 2, 3], DEFAULT_VERTEX_BUDGET).unwrap();
        assert!(rep.passed, "{rep:?}");
        let single = gap_decay_report(2, 5, &[2], DEFAULT_VERTEX_BUDGET).unwrap();
        assert_eq!(single.slope, None);
        assert!(!single.passed);
        assert!(single.to_csv().ends_with("# slope=undefined pass=false\n"));
    }

    #[test]
    fn invalid_parameters_and_budget() {
        assert!(build_hecke_graph(4, 5, 1, 100).is_err());
        assert!(build_hecke_graph(2, 6, 1, 100).is_err());
        assert!(build_hecke_graph(2, 3, 1, 100).is_err());
        assert!(build_hecke_graph(3, 9, 1, 100).is_err());
        assert_eq!(
            build_hecke_graph(2, 5, 1, 5).unwrap_err(),
            SpectralError::BudgetExceeded {
                vertices: 10,
                budget: 5
            }
        );
    }
}
