//! Measures of the slab sets `B(q, δ)` and `B'(q, δ)` in the unit cube of
//! `n × m` real matrices, their pairwise intersections, and the membership
//! predicates used by the Monte Carlo oracles.
//!
//! A point `X` is stored row-major as a flat slice of length `n·m`; `qX` is the
//! row vector `(Σ_i q_i x_ij)_j` of `m` linear forms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numtheory::{factorize, gcd_u64, mobius_product, Factorization};
use crate::rational::{self, Rational};

/// Distance from `δ` below which a sample is treated as lying on the boundary.
pub const BOUNDARY_GUARD: f64 = 1e-12;

/// A nonzero integer vector with its sup norm, coordinate gcd and primitive part.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IntVec {
    coords: Vec<i64>,
    sup_norm: u64,
    gcd: u64,
    gcd_factors: Factorization,
    primitive: Vec<i64>,
}

impl IntVec {
    pub fn new(coords: Vec<i64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::domain("vector must have dimension >= 1"));
        }
        if coords.contains(&i64::MIN) {
            return Err(Error::domain("coordinate out of range"));
        }
        let sup_norm = coords.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0);
        if sup_norm == 0 {
            return Err(Error::domain("vector must be nonzero"));
        }
        let gcd = coords
            .iter()
            .fold(0u64, |g, c| gcd_u64(g, c.unsigned_abs()));
        let primitive = coords.iter().map(|&c| c / gcd as i64).collect();
        Ok(Self {
            gcd_factors: factorize(gcd),
            coords,
            sup_norm,
            gcd,
            primitive,
        })
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn sup_norm(&self) -> u64 {
        self.sup_norm
    }

    pub fn gcd(&self) -> u64 {
        self.gcd
    }

    pub fn gcd_factorization(&self) -> &Factorization {
        &self.gcd_factors
    }

    pub fn primitive_part(&self) -> &[i64] {
        &self.primitive
    }

    pub fn is_primitive(&self) -> bool {
        self.gcd == 1
    }

    /// `q1 ∥ q2` iff every 2×2 minor `q1_i q2_j − q1_j q2_i` vanishes.
    pub fn is_parallel(&self, other: &IntVec) -> bool {
        parallel(&self.coords, &other.coords)
    }

    /// `other = ±self`.
    pub fn is_plus_minus(&self, other: &IntVec) -> bool {
        self.coords == other.coords
            || self
                .coords
                .iter()
                .zip(&other.coords)
                .all(|(a, b)| *a == -*b)
    }
}

pub(crate) fn parallel(a: &[i64], b: &[i64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            if a[i] as i128 * b[j] as i128 != a[j] as i128 * b[i] as i128 {
                return false;
            }
        }
    }
    true
}

impl Serialize for IntVec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords.serialize(s)
    }
}

impl<'de> Deserialize<'de> for IntVec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let coords = Vec::<i64>::deserialize(d)?;
        IntVec::new(coords).map_err(serde::de::Error::custom)
    }
}

/// `B(q, δ)` (`coprime = false`) or `B'(q, δ)` (`coprime = true`) in `[0,1]^{n·m}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SlabSpecJson", into = "SlabSpecJson")]
pub struct SlabSpec {
    q: IntVec,
    delta: Rational,
    delta_f64: f64,
    m: u32,
    coprime: bool,
}

#[derive(Serialize, Deserialize)]
struct SlabSpecJson {
    q: Vec<i64>,
    m: u32,
    delta: String,
    coprime: bool,
}

impl TryFrom<SlabSpecJson> for SlabSpec {
    type Error = Error;

    fn try_from(raw: SlabSpecJson) -> Result<Self> {
        SlabSpec::new(
            IntVec::new(raw.q)?,
            rational::parse(&raw.delta)?,
            raw.m,
            raw.coprime,
        )
    }
}

impl From<SlabSpec> for SlabSpecJson {
    fn from(s: SlabSpec) -> Self {
        SlabSpecJson {
            q: s.q.coords,
            m: s.m,
            delta: rational::to_text(&s.delta),
            coprime: s.coprime,
        }
    }
}

impl SlabSpec {
    /// Requires `0 < δ < 1/2` and `m ≥ 1`.
    pub fn new(q: IntVec, delta: Rational, m: u32, coprime: bool) -> Result<Self> {
        check_delta(&delta)?;
        if m == 0 {
            return Err(Error::domain("m must be >= 1"));
        }
        Ok(Self {
            delta_f64: rational::to_f64(&delta),
            q,
            delta,
            m,
            coprime,
        })
    }

    pub fn q(&self) -> &IntVec {
        &self.q
    }

    pub fn delta(&self) -> &Rational {
        &self.delta
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn n(&self) -> usize {
        self.q.dim()
    }

    pub fn coprime(&self) -> bool {
        self.coprime
    }

    /// Dimension `n·m` of the ambient cube.
    pub fn dims(&self) -> usize {
        self.q.dim() * self.m as usize
    }

    pub fn with_coprime(&self, coprime: bool) -> Self {
        Self {
            coprime,
            ..self.clone()
        }
    }
}

pub(crate) fn check_delta(delta: &Rational) -> Result<()> {
    if *delta <= rational::int(0) || *delta >= rational::ratio(1, 2) {
        return Err(Error::domain(format!(
            "delta = {} must lie in (0, 1/2)",
            rational::to_text(delta)
        )));
    }
    Ok(())
}

/// `|B(q, δ)| = (2δ)^m`, independent of `q`.
pub fn measure_b(s: &SlabSpec) -> Rational {
    rational::pow(&(&s.delta * rational::int(2)), s.m)
}

/// `|B'(q, δ)| = (2δ)^m ∏_{p | gcd(q)} (1 − p^(−m))`.
pub fn measure_b_prime(s: &SlabSpec) -> Rational {
    measure_b(s) * mobius_product(s.q.gcd_factorization(), s.m)
}

/// `|B′|` for coprime slabs, `|B|` otherwise.
pub fn exact_measure(s: &SlabSpec) -> Rational {
    if s.coprime {
        measure_b_prime(s)
    } else {
        measure_b(s)
    }
}

/// Two-sided bracket on `|B'(q, δ)|`.
///
/// For `m = 1` both sides equal `2δ·φ(d)/d`. For `m > 1` the bracket is
/// `[(6/π²)⁻·(2δ)^m, (2δ)^m]` with the certified rational proxy
/// [`rational::six_over_pi_squared_lower`].
pub fn measure_b_prime_bounds(s: &SlabSpec) -> (Rational, Rational) {
    if s.m == 1 {
        let d = s.q.gcd_factorization();
        let phi = crate::numtheory::euler_phi(d);
        let exact = &s.delta * rational::int(2) * rational::from_biguint(&phi)
            / rational::from_biguint(&d.value());
        (exact.clone(), exact)
    } else {
        let upper = measure_b(s);
        (rational::six_over_pi_squared_lower() * &upper, upper)
    }
}

fn check_compatible(s1: &SlabSpec, s2: &SlabSpec) -> Result<()> {
    if s1.n() != s2.n() || s1.m != s2.m {
        return Err(Error::domain(format!(
            "slabs live in different cubes: n={},m={} vs n={},m={}",
            s1.n(),
            s1.m,
            s2.n(),
            s2.m
        )));
    }
    Ok(())
}

/// `|B(q1, δ1) ∩ B(q2, δ2)| = |B(q1, δ1)|·|B(q2, δ2)|` for non-parallel `q1, q2`,
/// and likewise for `B'` slabs.
///
/// Write `q = d·r` with `r` primitive. Membership in `B(q, δ)` or `B'(q, δ)`
/// depends on `X` only through `rX mod 1`, and for non-parallel `r1, r2` the map
/// `X ↦ (r1X, r2X) mod 1` pushes Lebesgue measure to Lebesgue measure.
pub fn intersection_measure_nonparallel(s1: &SlabSpec, s2: &SlabSpec) -> Result<Rational> {
    check_compatible(s1, s2)?;
    if s1.q.is_parallel(&s2.q) {
        return Err(Error::domain(
            "vectors are parallel; use intersection_upper_bound or the Monte Carlo oracle",
        ));
    }
    Ok(exact_measure(s1) * exact_measure(s2))
}

/// `c·(δ1·δ2)^m` for `q1 ≠ ±q2`; `c` is an audit constant supplied by the caller.
pub fn intersection_upper_bound(s1: &SlabSpec, s2: &SlabSpec, c: &Rational) -> Result<Rational> {
    check_compatible(s1, s2)?;
    if s1.q.is_plus_minus(&s2.q) {
        return Err(Error::domain(
            "q2 = ±q1 is the diagonal term, handled separately",
        ));
    }
    Ok(c * rational::pow(&(&s1.delta * &s2.delta), s1.m))
}

/// Outcome of a floating-point membership test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Inside,
    Outside,
    /// `max_j ‖(qX)_j‖` is within [`BOUNDARY_GUARD`] of `δ`; Monte Carlo resamples.
    Boundary,
}

/// Membership of `x` in a slab given by raw parts.
///
/// `p* = −round(qX)` is the only candidate since `δ < 1/2`. Exact half-integers
/// have distance `1/2 ≥ δ` and are never members.
#[inline]
pub fn classify_raw(
    x: &[f64],
    q: &[i64],
    q_gcd: u64,
    m: usize,
    delta: f64,
    coprime: bool,
) -> Membership {
    debug_assert_eq!(x.len(), q.len() * m);
    let mut worst = 0.0f64;
    let mut g = q_gcd;
    for j in 0..m {
        let mut a = 0.0;
        for (i, &qi) in q.iter().enumerate() {
            a += qi as f64 * x[i * m + j];
        }
        let r = a.round();
        let dist = (a - r).abs();
        if dist > worst {
            worst = dist;
        }
        if coprime {
            g = gcd_u64(g, r.abs() as u64);
        }
    }
    if (worst - delta).abs() < BOUNDARY_GUARD {
        Membership::Boundary
    } else if worst < delta && (!coprime || g == 1) {
        Membership::Inside
    } else {
        Membership::Outside
    }
}

pub fn classify(x: &[f64], s: &SlabSpec) -> Membership {
    assert_eq!(x.len(), s.dims(), "point has wrong dimension");
    classify_raw(
        x,
        &s.q.coords,
        s.q.gcd,
        s.m as usize,
        s.delta_f64,
        s.coprime,
    )
}

/// Whether `x ∈ B(q, δ)` (or `B'`). Boundary-guard samples are decided by the
/// plain strict inequality.
pub fn membership(x: &[f64], s: &SlabSpec) -> bool {
    assert_eq!(x.len(), s.dims(), "point has wrong dimension");
    let m = s.m as usize;
    let mut worst = 0.0f64;
    let mut g = s.q.gcd;
    for j in 0..m {
        let a: f64 =
            s.q.coords
                .iter()
                .enumerate()
                .map(|(i, &qi)| qi as f64 * x[i * m + j])
                .sum();
        let r = a.round();
        worst = worst.max((a - r).abs());
        g = gcd_u64(g, r.abs() as u64);
    }
    worst < s.delta_f64 && (!s.coprime || g == 1)
}

/// `T_q : X ↦ qX mod 1`, componentwise fractional part in `[0,1)^m`.
pub fn torus_map(x: &[f64], q: &IntVec) -> Vec<f64> {
    let n = q.dim();
    assert!(x.len().is_multiple_of(n), "point has wrong dimension");
    let m = x.len() / n;
    (0..m)
        .map(|j| {
            let a: f64 = q
                .coords
                .iter()
                .enumerate()
                .map(|(i, &qi)| qi as f64 * x[i * m + j])
                .sum();
            let f = a - a.floor();
            if f >= 1.0 {
                0.0
            } else {
                f
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn v(c: &[i64]) -> IntVec {
        IntVec::new(c.to_vec()).unwrap()
    }

    fn slab(q: &[i64], delta: Rational, m: u32, coprime: bool) -> SlabSpec {
        SlabSpec::new(v(q), delta, m, coprime).unwrap()
    }

    #[test]
    fn intvec_invariants() {
        let q = v(&[6, -4, 0]);
        assert_eq!(q.sup_norm(), 6);
        assert_eq!(q.gcd(), 2);
        assert_eq!(q.primitive_part(), &[3, -2, 0]);
        assert!(!q.is_primitive());
        assert!(IntVec::new(vec![0, 0]).is_err());
        assert!(IntVec::new(vec![]).is_err());
        assert!(v(&[1, 2]).is_parallel(&v(&[-3, -6])));
        assert!(!v(&[1, 2]).is_parallel(&v(&[2, 1])));
        assert!(v(&[1, 1]).is_plus_minus(&v(&[-1, -1])));
        assert!(!v(&[1, 1]).is_plus_minus(&v(&[2, 2])));
    }

    #[test]
    fn delta_domain_is_enforced() {
        assert!(SlabSpec::new(v(&[1]), ratio(1, 2), 1, false).is_err());
        assert!(SlabSpec::new(v(&[1]), ratio(0, 1), 1, false).is_err());
        assert!(SlabSpec::new(v(&[1]), ratio(-1, 10), 1, false).is_err());
        assert!(SlabSpec::new(v(&[1]), ratio(1, 10), 0, false).is_err());
        assert!(SlabSpec::new(v(&[1]), ratio(49, 100), 1, false).is_ok());
    }

    #[test]
    fn measure_b_examples() {
        assert_eq!(
            measure_b(&slab(&[1, 2], ratio(1, 10), 1, false)),
            ratio(1, 5)
        );
        assert_eq!(
            measure_b(&slab(&[7, 0, 0], ratio(1, 4), 3, false)),
            ratio(1, 8)
        );
        let a = measure_b(&slab(&[3, 9], ratio(1, 10), 2, false));
        let b = measure_b(&slab(&[1, 0], ratio(1, 10), 2, false));
        assert_eq!(a, b);
    }

    #[test]
    fn measure_b_prime_examples() {
        let prim = slab(&[2, 3], ratio(1, 8), 3, true);
        assert_eq!(measure_b_prime(&prim), measure_b(&prim));
        assert_eq!(
            measure_b_prime(&slab(&[2, 2], ratio(1, 10), 1, true)),
            ratio(1, 10)
        );
        assert_eq!(
            measure_b_prime(&slab(&[3], ratio(1, 4), 2, true)),
            ratio(2, 9)
        );
    }

    #[test]
    fn bounds_examples() {
        let (lo, hi) = measure_b_prime_bounds(&slab(&[2, 2], ratio(1, 10), 1, true));
        assert_eq!((lo, hi), (ratio(1, 10), ratio(1, 10)));
        let s = slab(&[6, 12], ratio(1, 4), 2, true);
        let (lo, hi) = measure_b_prime_bounds(&s);
        assert_eq!(hi, ratio(1, 4));
        let exact = measure_b_prime(&s);
        assert!(lo <= exact && exact <= hi);
        let s = slab(&[1, 5], ratio(1, 4), 2, true);
        let (lo, hi) = measure_b_prime_bounds(&s);
        assert!(lo < measure_b_prime(&s));
        assert_eq!(measure_b_prime(&s), hi);
    }

    #[test]
    fn bounds_hold_for_large_prime_gcd() {
        // gcd is the primorial of 31: the bracket must still contain the exact value.
        let d = 2 * 3 * 5 * 7 * 11 * 13 * 17 * 19 * 23 * 29 * 31i64;
        let s = slab(&[d, 0], ratio(1, 10), 2, true);
        let (lo, hi) = measure_b_prime_bounds(&s);
        let exact = measure_b_prime(&s);
        assert!(lo <= exact && exact <= hi);
    }

    #[test]
    fn measure_b_prime_m1_is_phi_ratio() {
        for d in 1..=10_000i64 {
            let s = slab(&[d, 0], ratio(1, 10), 1, true);
            let f = factorize(d as u64);
            let phi = crate::numtheory::euler_phi(&f);
            let expect = ratio(1, 5) * rational::from_biguint(&phi) / rational::int(d);
            assert_eq!(measure_b_prime(&s), expect, "d = {d}");
            assert!(measure_b_prime(&s) <= measure_b(&s));
            assert_eq!(measure_b_prime(&s) == measure_b(&s), d == 1);
        }
    }

    #[test]
    fn nonparallel_intersections() {
        let got = intersection_measure_nonparallel(
            &slab(&[1, 0], ratio(1, 10), 1, false),
            &slab(&[0, 1], ratio(1, 10), 1, false),
        )
        .unwrap();
        assert_eq!(got, ratio(1, 25));
        let got = intersection_measure_nonparallel(
            &slab(&[1, 2], ratio(1, 8), 2, false),
            &slab(&[2, 1], ratio(1, 4), 2, false),
        )
        .unwrap();
        assert_eq!(got, ratio(1, 64));
        assert!(intersection_measure_nonparallel(
            &slab(&[1, 2], ratio(1, 8), 1, false),
            &slab(&[3, 6], ratio(1, 8), 1, false),
        )
        .is_err());
        // (2,2) as a B' slab keeps half of B: p must be odd.
        let got = intersection_measure_nonparallel(
            &slab(&[2, 2], ratio(1, 8), 1, true),
            &slab(&[1, 0], ratio(1, 8), 1, false),
        )
        .unwrap();
        assert_eq!(got, ratio(1, 32));
        assert!(intersection_measure_nonparallel(
            &slab(&[1, 2], ratio(1, 8), 1, false),
            &slab(&[1, 2, 3], ratio(1, 8), 1, false),
        )
        .is_err());
    }

    #[test]
    fn upper_bound_form() {
        let got = intersection_upper_bound(
            &slab(&[1, 0], ratio(1, 10), 1, true),
            &slab(&[2, 0], ratio(1, 10), 1, true),
            &rational::int(4),
        )
        .unwrap();
        assert_eq!(got, ratio(1, 25));
        let got = intersection_upper_bound(
            &slab(&[1, 0], ratio(1, 4), 2, true),
            &slab(&[2, 0], ratio(1, 8), 2, true),
            &rational::int(1),
        )
        .unwrap();
        assert_eq!(got, ratio(1, 1024));
        assert!(intersection_upper_bound(
            &slab(&[1, 1], ratio(1, 4), 1, true),
            &slab(&[-1, -1], ratio(1, 4), 1, true),
            &rational::int(1),
        )
        .is_err());
    }

    #[test]
    fn membership_examples() {
        let zero = [0.0, 0.0];
        assert!(membership(&zero, &slab(&[3, 5], ratio(1, 100), 1, false)));
        assert!(membership(&zero, &slab(&[3, 5], ratio(1, 100), 1, true)));
        assert!(!membership(&zero, &slab(&[2, 4], ratio(1, 100), 1, true)));
        assert!(!membership(&[0.26], &slab(&[2], ratio(1, 20), 1, false)));
        // qX = 0.98, p* = -1, gcd(1, 2) = 1.
        assert!(membership(&[0.49], &slab(&[2], ratio(1, 20), 1, true)));
        // Exact half-integer: distance 1/2.
        assert!(!membership(&[0.25], &slab(&[2], ratio(49, 100), 1, false)));
        assert_eq!(
            classify(&[0.1], &slab(&[1], ratio(1, 10), 1, false)),
            Membership::Boundary
        );
    }

    #[test]
    fn torus_map_examples() {
        assert_eq!(torus_map(&[0.0, 0.0], &v(&[3, 4])), vec![0.0]);
        let y = torus_map(&[0.3, 0.9], &v(&[1, 1]));
        assert!((y[0] - 0.2).abs() < 1e-12);
        let y = torus_map(&[0.3, 0.9, 0.5, 0.25], &v(&[-1, 2]));
        assert_eq!(y.len(), 2);
        assert!((y[0] - 0.7).abs() < 1e-12);
        assert!((y[1] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn slab_json_roundtrip() {
        let s = slab(&[2, 2], ratio(1, 10), 1, true);
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"q":[2,2],"m":1,"delta":"1/10","coprime":true}"#);
        let back: SlabSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<SlabSpec>(
            r#"{"q":[1],"m":1,"delta":"1/2","coprime":false}"#
        )
        .is_err());
    }
}
