//! Approximating functions, sup-norm lattice counts, and the exact sums built
//! from them: Khintchine partial sums, `Σ |B'_q(ψ)|`, and the quantities
//! `Φ(h)`, `χ(h)` of the quantitative theory.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numtheory::{divisor_count, euler_phi, factorize, mobius_product, Factorization};
use crate::rational::{self, Rational};

/// Largest sup norm an enumerating (rather than closed-form) path will visit.
pub const DENSE_HORIZON: u64 = 1000;
/// Largest number of lattice points an enumerating path will visit.
pub const ENUMERATION_CAP: u64 = 4_000_000;
/// Largest `h` for which dense functions are summed term by term.
pub const DENSE_TERMS_CAP: u64 = 10_000_000;

/// One support point of a sparse approximating function, carried as
/// `l·ψ(l)^m` so that `ψ(l)` itself never has to be formed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsePoint {
    l: Factorization,
    value: BigUint,
    lpsim: Rational,
}

impl SparsePoint {
    pub fn l(&self) -> &Factorization {
        &self.l
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    /// `l·ψ(l)^m`.
    pub fn lpsim(&self) -> &Rational {
        &self.lpsim
    }

    /// `ψ(l)^m`.
    pub fn psi_pow(&self) -> Rational {
        &self.lpsim / rational::from_biguint(&self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseFunction {
    m: u32,
    support: Vec<SparsePoint>,
}

impl SparseFunction {
    /// Support must be strictly increasing and every weight nonnegative.
    pub fn new(m: u32, support: Vec<(Factorization, Rational)>) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("sparse function needs m >= 1"));
        }
        let support: Vec<SparsePoint> = support
            .into_iter()
            .map(|(l, lpsim)| SparsePoint {
                value: l.value(),
                l,
                lpsim,
            })
            .collect();
        for w in support.windows(2) {
            if w[0].value >= w[1].value {
                return Err(Error::domain(format!(
                    "sparse support must be strictly increasing: {} then {}",
                    w[0].l, w[1].l
                )));
            }
        }
        if let Some(p) = support.iter().find(|p| p.lpsim.is_negative()) {
            return Err(Error::domain(format!("negative weight at {}", p.l)));
        }
        Ok(Self { m, support })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn support(&self) -> &[SparsePoint] {
        &self.support
    }

    pub fn get(&self, h: &BigUint) -> Option<&SparsePoint> {
        self.support
            .binary_search_by(|p| p.value.cmp(h))
            .ok()
            .map(|i| &self.support[i])
    }

    /// Support points with `l <= limit`.
    pub fn upto(&self, limit: &BigUint) -> &[SparsePoint] {
        let k = self.support.partition_point(|p| &p.value <= limit);
        &self.support[..k]
    }
}

/// `ψ : ℕ → ℚ≥0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ApproxJson", into = "ApproxJson")]
pub enum ApproxFunction {
    Constant(Rational),
    /// `c·h^(−τ)`; exact evaluation needs an integral `τ`.
    Power {
        c: Rational,
        tau: Rational,
    },
    /// Values for listed `h`, zero elsewhere.
    Table(BTreeMap<u64, Rational>),
    Sparse(SparseFunction),
    /// `min{cap, inner(h)}`.
    Capped {
        cap: Rational,
        inner: Box<ApproxFunction>,
    },
}

/// A nonzero term `ψ(h)^m` together with `h` and its factorization.
#[derive(Debug, Clone)]
pub struct Term {
    pub h: BigUint,
    pub factors: Factorization,
    pub pow: Rational,
}

fn small_h(h: &BigUint) -> Option<u64> {
    h.to_u64()
}

impl ApproxFunction {
    pub fn constant(c: Rational) -> Result<Self> {
        if c.is_negative() {
            return Err(Error::domain("approximating functions are nonnegative"));
        }
        Ok(Self::Constant(c))
    }

    pub fn power(c: Rational, tau: Rational) -> Result<Self> {
        if c.is_negative() {
            return Err(Error::domain("approximating functions are nonnegative"));
        }
        Ok(Self::Power { c, tau })
    }

    pub fn table(values: BTreeMap<u64, Rational>) -> Result<Self> {
        if values.contains_key(&0) {
            return Err(Error::domain("table keys start at h = 1"));
        }
        if values.values().any(Signed::is_negative) {
            return Err(Error::domain("approximating functions are nonnegative"));
        }
        Ok(Self::Table(values))
    }

    /// Exact `ψ(h)^m`.
    pub fn psi_pow(&self, h: &BigUint, m: u32) -> Result<Rational> {
        if h.is_zero() {
            return Err(Error::domain("ψ is defined on positive integers"));
        }
        match self {
            Self::Constant(c) => Ok(rational::pow(c, m)),
            Self::Power { c, tau } => {
                if !tau.is_integer() {
                    return Err(Error::domain(format!(
                        "h^(-{}) is not rational in general; use an integral exponent",
                        rational::to_text(tau)
                    )));
                }
                let e = tau
                    .to_integer()
                    .abs()
                    .to_usize()
                    .ok_or_else(|| Error::domain("exponent too large"))?
                    * m as usize;
                let hp = num_traits::pow(rational::from_biguint(h), e);
                let cm = rational::pow(c, m);
                Ok(if tau.is_negative() { cm * hp } else { cm / hp })
            }
            Self::Table(t) => Ok(small_h(h)
                .and_then(|k| t.get(&k))
                .map(|v| rational::pow(v, m))
                .unwrap_or_else(Rational::zero)),
            Self::Sparse(s) => {
                if s.m != m {
                    return Err(Error::domain(format!(
                        "sparse function stores l·ψ(l)^{}, asked for exponent {m}",
                        s.m
                    )));
                }
                Ok(s.get(h)
                    .map(SparsePoint::psi_pow)
                    .unwrap_or_else(Rational::zero))
            }
            Self::Capped { cap, inner } => {
                let v = inner.psi_pow(h, m)?;
                let c = rational::pow(cap, m);
                Ok(if v < c { v } else { c })
            }
        }
    }

    /// Floating-point `ψ(h)`, used by the counting kernels.
    pub fn psi_f64(&self, h: u64) -> f64 {
        match self {
            Self::Constant(c) => rational::to_f64(c),
            Self::Power { c, tau } => rational::to_f64(c) * (h as f64).powf(-rational::to_f64(tau)),
            Self::Table(t) => t.get(&h).map(rational::to_f64).unwrap_or(0.0),
            Self::Sparse(s) => s
                .get(&BigUint::from(h))
                .map(|p| rational::to_f64(&p.psi_pow()).powf(1.0 / s.m as f64))
                .unwrap_or(0.0),
            Self::Capped { cap, inner } => inner.psi_f64(h).min(rational::to_f64(cap)),
        }
    }

    /// Whether `ψ` is zero outside a finite set (so `terms` never enumerates).
    fn is_finitely_supported(&self) -> bool {
        match self {
            Self::Table(_) | Self::Sparse(_) => true,
            Self::Constant(c) => c.is_zero(),
            Self::Power { c, .. } => c.is_zero(),
            Self::Capped { cap, inner } => cap.is_zero() || inner.is_finitely_supported(),
        }
    }

    /// Nonzero terms `ψ(h)^m` for `1 <= h <= limit`, in increasing `h`.
    pub fn terms(&self, m: u32, limit: &BigUint) -> Result<Vec<Term>> {
        match self {
            Self::Table(t) => {
                let mut out = Vec::new();
                for (&h, v) in t {
                    if BigUint::from(h) > *limit {
                        break;
                    }
                    if !v.is_zero() {
                        out.push(Term {
                            h: BigUint::from(h),
                            factors: factorize(h),
                            pow: rational::pow(v, m),
                        });
                    }
                }
                Ok(out)
            }
            Self::Sparse(s) => {
                if s.m != m {
                    return Err(Error::domain(format!(
                        "sparse function stores l·ψ(l)^{}, asked for exponent {m}",
                        s.m
                    )));
                }
                Ok(s.upto(limit)
                    .iter()
                    .filter(|p| !p.lpsim.is_zero())
                    .map(|p| Term {
                        h: p.value.clone(),
                        factors: p.l.clone(),
                        pow: p.psi_pow(),
                    })
                    .collect())
            }
            Self::Capped { cap, inner } if inner.is_finitely_supported() => {
                let c = rational::pow(cap, m);
                Ok(inner
                    .terms(m, limit)?
                    .into_iter()
                    .map(|mut t| {
                        if t.pow > c {
                            t.pow = c.clone();
                        }
                        t
                    })
                    .filter(|t| !t.pow.is_zero())
                    .collect())
            }
            _ if self.is_finitely_supported() => Ok(Vec::new()),
            _ => {
                let n = limit
                    .to_u64()
                    .filter(|&n| n <= DENSE_TERMS_CAP)
                    .ok_or_else(|| {
                        Error::capacity(format!(
                            "dense summation limited to h <= {DENSE_TERMS_CAP}, asked for {limit}"
                        ))
                    })?;
                let mut out = Vec::with_capacity(n as usize);
                for h in 1..=n {
                    let hb = BigUint::from(h);
                    let pow = self.psi_pow(&hb, m)?;
                    if !pow.is_zero() {
                        out.push(Term {
                            h: hb,
                            factors: factorize(h),
                            pow,
                        });
                    }
                }
                Ok(out)
            }
        }
    }

    /// Errors unless `ψ(h) < 1/2` for every `h <= limit`.
    pub fn check_below_half(&self, m: u32, limit: &BigUint) -> Result<()> {
        let half_m = rational::pow(&rational::ratio(1, 2), m);
        for t in self.terms(m, limit)? {
            if t.pow >= half_m {
                return Err(Error::domain(format!("ψ({}) >= 1/2", t.h)));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ApproxJson {
    Constant {
        c: String,
    },
    Power {
        c: String,
        tau: String,
    },
    Table {
        values: BTreeMap<String, String>,
    },
    Sparse {
        m: u32,
        support: Vec<SparsePointJson>,
    },
    Capped {
        cap: String,
        inner: Box<ApproxJson>,
    },
}

#[derive(Serialize, Deserialize)]
struct SparsePointJson {
    l: Factorization,
    lpsim: String,
}

impl TryFrom<ApproxJson> for ApproxFunction {
    type Error = Error;

    fn try_from(raw: ApproxJson) -> Result<Self> {
        match raw {
            ApproxJson::Constant { c } => Self::constant(rational::parse(&c)?),
            ApproxJson::Power { c, tau } => {
                Self::power(rational::parse(&c)?, rational::parse(&tau)?)
            }
            ApproxJson::Table { values } => Self::table(
                values
                    .into_iter()
                    .map(|(h, v)| {
                        let h = h
                            .trim()
                            .parse()
                            .map_err(|_| Error::parse(format!("bad table key {h:?}")))?;
                        Ok((h, rational::parse(&v)?))
                    })
                    .collect::<Result<_>>()?,
            ),
            ApproxJson::Sparse { m, support } => Ok(Self::Sparse(SparseFunction::new(
                m,
                support
                    .into_iter()
                    .map(|p| Ok((p.l, rational::parse(&p.lpsim)?)))
                    .collect::<Result<_>>()?,
            )?)),
            ApproxJson::Capped { cap, inner } => {
                let cap = rational::parse(&cap)?;
                if !cap.is_positive() {
                    return Err(Error::domain("cap must be positive"));
                }
                Ok(Self::Capped {
                    cap,
                    inner: Box::new(Self::try_from(*inner)?),
                })
            }
        }
    }
}

impl From<ApproxFunction> for ApproxJson {
    fn from(f: ApproxFunction) -> Self {
        match f {
            ApproxFunction::Constant(c) => ApproxJson::Constant {
                c: rational::to_text(&c),
            },
            ApproxFunction::Power { c, tau } => ApproxJson::Power {
                c: rational::to_text(&c),
                tau: rational::to_text(&tau),
            },
            ApproxFunction::Table(t) => ApproxJson::Table {
                values: t
                    .iter()
                    .map(|(h, v)| (h.to_string(), rational::to_text(v)))
                    .collect(),
            },
            ApproxFunction::Sparse(s) => ApproxJson::Sparse {
                m: s.m,
                support: s
                    .support
                    .into_iter()
                    .map(|p| SparsePointJson {
                        l: p.l,
                        lpsim: rational::to_text(&p.lpsim),
                    })
                    .collect(),
            },
            ApproxFunction::Capped { cap, inner } => ApproxJson::Capped {
                cap: rational::to_text(&cap),
                inner: Box::new((*inner).into()),
            },
        }
    }
}

fn sphere_count_big(n: u32, h: &BigUint) -> BigUint {
    let two_h = h << 1usize;
    num_traits::pow(&two_h + 1u32, n as usize) - num_traits::pow(two_h - 1u32, n as usize)
}

/// Number of `q ∈ Zⁿ` with `|q| = h`: `(2h+1)ⁿ − (2h−1)ⁿ`.
pub fn sphere_count(n: u32, h: u64) -> BigUint {
    assert!(n >= 1 && h >= 1, "sphere_count needs n >= 1 and h >= 1");
    sphere_count_big(n, &BigUint::from(h))
}

fn primitive_count_factored(n: u32, h: &Factorization) -> BigUint {
    let hv = h.value();
    let mut acc = BigInt::zero();
    for (v, mu) in h.squarefree_divisors() {
        let c = BigInt::from(sphere_count_big(n, &(&hv / v.value())));
        if mu > 0 {
            acc += c;
        } else {
            acc -= c;
        }
    }
    acc.to_biguint().expect("primitive count is nonnegative")
}

/// Number of primitive `q ∈ Zⁿ` with `|q| = h`, by Möbius inversion of
/// [`sphere_count`] over the divisors of `h`.
pub fn primitive_count(n: u32, h: u64) -> BigUint {
    assert!(n >= 1 && h >= 1, "primitive_count needs n >= 1 and h >= 1");
    primitive_count_factored(n, &factorize(h))
}

/// `Σ_{h=1}^{N} h^(n−1) ψ(h)^m`.
pub fn khintchine_partial_sum(
    psi: &ApproxFunction,
    n: u32,
    m: u32,
    limit: &BigUint,
) -> Result<Rational> {
    if n == 0 || m == 0 {
        return Err(Error::domain("n and m must be >= 1"));
    }
    Ok(psi
        .terms(m, limit)?
        .iter()
        .map(|t| rational::from_biguint(&num_traits::pow(t.h.clone(), (n - 1) as usize)) * &t.pow)
        .sum())
}

/// `S_N = Σ_{0<|q|≤N} |B'(q, ψ(|q|))|`, grouped by the gcd `d` of `q`:
/// `Σ_h (2ψ(h))^m Σ_{d|h} ∏_{p|d}(1 − p^(−m)) · #{q' primitive : |q'| = h/d}`.
pub fn sum_b_prime_measures(psi: &ApproxFunction, n: u32, m: u32, limit: u64) -> Result<Rational> {
    if n == 0 || m == 0 {
        return Err(Error::domain("n and m must be >= 1"));
    }
    if n * m == 1 {
        return Err(Error::domain("the sum over B' sets needs n·m > 1"));
    }
    let limit = BigUint::from(limit);
    psi.check_below_half(m, &limit)?;
    let scale = rational::two_pow(m);
    let mut total = Rational::zero();
    for t in psi.terms(m, &limit)? {
        let mut inner = Rational::zero();
        for d in t.factors.divisors() {
            let rest = t.factors.div(&d).expect("d divides h");
            inner +=
                mobius_product(&d, m) * rational::from_biguint(&primitive_count_factored(n, &rest));
        }
        total += &scale * &t.pow * inner;
    }
    Ok(total)
}

/// `f(h) = Σ_{d|h} φ(d)φ(h/d)/d`, evaluated as `h·∏_{p|h}(1 − p^(−2))`.
pub fn jordan2_over_h(h: &Factorization) -> Rational {
    rational::from_biguint(&h.value()) * mobius_product(h, 2)
}

/// `Σ_{v|l} d(v)φ(l/v)`, evaluated multiplicatively as
/// `l·θ(l)·∏_{p|l}(1 − p^(−k_p−1)) = ∏ (p^(k_p+1) − 1)/(p − 1)`.
pub fn divisor_sigma(l: &Factorization) -> BigUint {
    l.factors().iter().fold(BigUint::one(), |acc, &(p, k)| {
        let p = BigUint::from(p);
        acc * ((num_traits::pow(p.clone(), (k + 1) as usize) - 1u32) / (p - 1u32))
    })
}

/// `divisor_sigma(l)/l` as an exact rational.
pub fn divisor_sigma_over_l(l: &Factorization) -> Rational {
    rational::from_biguint(&divisor_sigma(l)) / rational::from_biguint(&l.value())
}

/// Normalisation of `Φ` and `χ`: the theorem statement weighs each `q` by
/// `(2Ψ(q))^m`, the counterexample proof by `Ψ(q)^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    Theorem,
    #[default]
    Proof,
}

impl Convention {
    pub fn factor(self, m: u32) -> Rational {
        match self {
            Convention::Theorem => rational::two_pow(m),
            Convention::Proof => rational::int(1),
        }
    }
}

impl std::str::FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem" => Ok(Convention::Theorem),
            "proof" => Ok(Convention::Proof),
            _ => Err(Error::parse(format!("unknown convention {s:?}"))),
        }
    }
}

impl std::fmt::Display for Convention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Convention::Theorem => "theorem",
            Convention::Proof => "proof",
        })
    }
}

/// `Ψ : Zⁿ → ℚ≥0`.
#[derive(Debug, Clone, PartialEq)]
pub enum MultiApproxFunction {
    /// `Ψ(q) = ψ(|q|)` on `Zⁿ`.
    NormLift { psi: ApproxFunction, n: u32 },
    /// `Ψ(q) = ψ(|q|)` when `q = (q1, q2, 0, …, 0)`, zero otherwise.
    PlaneLift { psi: ApproxFunction, n: u32 },
    /// Explicit values, zero elsewhere.
    Table {
        n: u32,
        values: BTreeMap<Vec<i64>, Rational>,
    },
}

impl MultiApproxFunction {
    pub fn dim(&self) -> u32 {
        match self {
            Self::NormLift { n, .. } | Self::PlaneLift { n, .. } | Self::Table { n, .. } => *n,
        }
    }

    pub fn table(n: u32, values: BTreeMap<Vec<i64>, Rational>) -> Result<Self> {
        for (q, v) in &values {
            if q.len() != n as usize || q.iter().all(|&c| c == 0) {
                return Err(Error::domain(format!(
                    "bad table key {q:?} for dimension {n}"
                )));
            }
            if v.is_negative() {
                return Err(Error::domain("approximating functions are nonnegative"));
            }
        }
        Ok(Self::Table { n, values })
    }

    fn in_support_shape(&self, q: &[i64]) -> bool {
        match self {
            Self::PlaneLift { .. } => q.iter().skip(2).all(|&c| c == 0),
            _ => true,
        }
    }

    /// Exact `Ψ(q)^m`.
    pub fn value_pow(&self, q: &[i64], m: u32) -> Result<Rational> {
        if q.len() != self.dim() as usize {
            return Err(Error::domain("vector has the wrong dimension"));
        }
        let norm = q.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0);
        if norm == 0 {
            return Err(Error::domain("Ψ is defined on nonzero vectors"));
        }
        match self {
            Self::NormLift { psi, .. } | Self::PlaneLift { psi, .. } => {
                if self.in_support_shape(q) {
                    psi.psi_pow(&BigUint::from(norm), m)
                } else {
                    Ok(Rational::zero())
                }
            }
            Self::Table { values, .. } => Ok(values
                .get(q)
                .map(|v| rational::pow(v, m))
                .unwrap_or_else(Rational::zero)),
        }
    }

    pub fn value_f64(&self, q: &[i64]) -> f64 {
        let norm = q.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0);
        match self {
            Self::NormLift { psi, .. } | Self::PlaneLift { psi, .. } => {
                if self.in_support_shape(q) {
                    psi.psi_f64(norm)
                } else {
                    0.0
                }
            }
            Self::Table { values, .. } => values.get(q).map(rational::to_f64).unwrap_or(0.0),
        }
    }
}

/// `Σ_{|q| = l} d(gcd q)` in dimension `n`, i.e. `Σ_{v|l} d(v)·#{primitive, norm l/v}`.
fn divisor_weighted_sphere(n: u32, l: &Factorization) -> Result<BigUint> {
    if n == 2 {
        // #{primitive, norm k} = 8φ(k) in the plane, and Σ_{v|l} d(v)φ(l/v) = divisor_sigma(l).
        return Ok(divisor_sigma(l) * 8u32);
    }
    if l.omega() > 16 {
        return Err(Error::capacity(format!(
            "divisor-weighted sphere count in dimension {n} needs the divisors of {l}"
        )));
    }
    let mut acc = BigUint::zero();
    for v in l.divisors() {
        let rest = l.div(&v).expect("v divides l");
        acc += divisor_count(&v) * primitive_count_factored(n, &rest);
    }
    Ok(acc)
}

fn lift_parts(psi_fn: &MultiApproxFunction) -> Option<(&ApproxFunction, u32)> {
    match psi_fn {
        MultiApproxFunction::NormLift { psi, n } => Some((psi, *n)),
        MultiApproxFunction::PlaneLift { psi, .. } => Some((psi, 2)),
        MultiApproxFunction::Table { .. } => None,
    }
}

fn table_phi_chi(
    values: &BTreeMap<Vec<i64>, Rational>,
    m: u32,
    h: &BigUint,
    conv: Convention,
) -> Result<(Rational, Rational)> {
    let h = h.to_u64().filter(|&h| h <= DENSE_HORIZON).ok_or_else(|| {
        Error::capacity(format!(
            "tabulated Ψ is only summed up to |q| <= {DENSE_HORIZON}"
        ))
    })?;
    let factor = conv.factor(m);
    let (mut phi, mut chi) = (Rational::zero(), Rational::zero());
    for (q, v) in values {
        if q.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0) > h {
            continue;
        }
        let w = &factor * rational::pow(v, m);
        let g = q
            .iter()
            .fold(0u64, |g, c| crate::numtheory::gcd_u64(g, c.unsigned_abs()));
        chi += &w * rational::from_biguint(&divisor_count(&factorize(g)));
        phi += w;
    }
    Ok((phi, chi))
}

/// `Φ(h)` and `χ(h)` together.
///
/// Lifts are evaluated shell by shell (`#{|q| = l}` and `Σ_{|q|=l} d(gcd q)` in closed
/// form), so sparse functions with primorial-scale support are handled exactly.
pub fn phi_chi(
    psi_fn: &MultiApproxFunction,
    m: u32,
    h: &BigUint,
    conv: Convention,
) -> Result<(Rational, Rational)> {
    if h.is_zero() {
        return Err(Error::domain("h must be >= 1"));
    }
    let (phi, chi) = match lift_parts(psi_fn) {
        None => match psi_fn {
            MultiApproxFunction::Table { values, .. } => table_phi_chi(values, m, h, conv)?,
            _ => unreachable!(),
        },
        Some((psi, n_eff)) => {
            let factor = conv.factor(m);
            let (mut phi, mut chi) = (Rational::zero(), Rational::zero());
            for t in psi.terms(m, h)? {
                let w = &factor * &t.pow;
                phi += &w * rational::from_biguint(&sphere_count_big(n_eff, &t.h));
                chi += &w * rational::from_biguint(&divisor_weighted_sphere(n_eff, &t.factors)?);
            }
            (phi, chi)
        }
    };
    assert!(chi >= phi, "χ(h) < Φ(h) violates d(gcd q) >= 1");
    Ok((phi, chi))
}

/// `Φ(h) = Σ_{0<|q|≤h} (2Ψ(q))^m` (theorem) or `Σ Ψ(q)^m` (proof).
pub fn phi_schmidt(
    psi_fn: &MultiApproxFunction,
    m: u32,
    h: &BigUint,
    conv: Convention,
) -> Result<Rational> {
    phi_chi(psi_fn, m, h, conv).map(|(phi, _)| phi)
}

/// `χ(h) = Σ_{0<|q|≤h} (2Ψ(q))^m d(gcd q)` (theorem) or without the `2^m` (proof).
pub fn chi_schmidt(
    psi_fn: &MultiApproxFunction,
    m: u32,
    h: &BigUint,
    conv: Convention,
) -> Result<Rational> {
    phi_chi(psi_fn, m, h, conv).map(|(_, chi)| chi)
}

/// Reference evaluation of `(Φ(h), χ(h))` by visiting every `q` with `|q| <= h`.
pub fn phi_chi_enumerated(
    psi_fn: &MultiApproxFunction,
    m: u32,
    h: u64,
    conv: Convention,
) -> Result<(Rational, Rational)> {
    let n = psi_fn.dim();
    let side = 2 * h + 1;
    let points = (side as u128).checked_pow(n).unwrap_or(u128::MAX);
    if h > DENSE_HORIZON || points > ENUMERATION_CAP as u128 {
        return Err(Error::capacity(format!(
            "enumeration of |q| <= {h} in dimension {n} exceeds the horizon"
        )));
    }
    let factor = conv.factor(m);
    let mut by_norm: Vec<Option<Rational>> = vec![None; h as usize + 1];
    let mut q = vec![-(h as i64); n as usize];
    let (mut phi, mut chi) = (Rational::zero(), Rational::zero());
    loop {
        let norm = q.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0);
        if norm > 0 {
            let w = match psi_fn {
                MultiApproxFunction::Table { .. } => psi_fn.value_pow(&q, m)?,
                _ if !psi_fn.in_support_shape(&q) => Rational::zero(),
                _ => {
                    let slot = &mut by_norm[norm as usize];
                    if slot.is_none() {
                        *slot = Some(psi_fn.value_pow(&q, m)?);
                    }
                    slot.clone().expect("filled above")
                }
            };
            if !w.is_zero() {
                let g = q
                    .iter()
                    .fold(0u64, |g, c| crate::numtheory::gcd_u64(g, c.unsigned_abs()));
                let w = &factor * w;
                chi += &w * rational::from_biguint(&divisor_count(&factorize(g)));
                phi += w;
            }
        }
        let mut i = 0;
        loop {
            if i == q.len() {
                return Ok((phi, chi));
            }
            if q[i] < h as i64 {
                q[i] += 1;
                break;
            }
            q[i] = -(h as i64);
            i += 1;
        }
    }
}

/// One row of the per-`h` series report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub h: u64,
    #[serde(with = "rational::text")]
    pub psi_pow: Rational,
    /// `Σ_{k≤h} k^(n−1) ψ(k)^m`.
    #[serde(with = "rational::text")]
    pub khintchine_partial: Rational,
    /// `Σ_{|q|≤h} |B'_q(ψ)|`, absent when `n·m = 1`.
    #[serde(serialize_with = "ser_opt_rational")]
    pub sum_b_prime: Option<Rational>,
    #[serde(with = "rational::text")]
    pub phi: Rational,
    #[serde(with = "rational::text")]
    pub chi: Rational,
}

fn ser_opt_rational<S: serde::Serializer>(
    v: &Option<Rational>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(r) => s.serialize_str(&rational::to_text(r)),
        None => s.serialize_str(""),
    }
}

/// Running sums for `h = 1..=limit` under `Ψ = NormLift(ψ, n)`.
pub fn series_table(
    psi: &ApproxFunction,
    n: u32,
    m: u32,
    limit: u64,
    conv: Convention,
) -> Result<Vec<SeriesRow>> {
    if n == 0 || m == 0 || limit == 0 {
        return Err(Error::domain("n, m and N must be >= 1"));
    }
    let with_b_prime = n * m > 1 && psi.check_below_half(m, &BigUint::from(limit)).is_ok();
    let factor = conv.factor(m);
    let scale = rational::two_pow(m);
    let terms: BTreeMap<u64, Term> = psi
        .terms(m, &BigUint::from(limit))?
        .into_iter()
        .map(|t| (t.h.to_u64().expect("h <= limit"), t))
        .collect();
    let mut rows = Vec::with_capacity(limit as usize);
    let (mut k, mut s, mut phi, mut chi) = (
        Rational::zero(),
        Rational::zero(),
        Rational::zero(),
        Rational::zero(),
    );
    for h in 1..=limit {
        let pow = match terms.get(&h) {
            Some(t) => {
                let hb = rational::from_biguint(&t.h);
                k += num_traits::pow(hb, (n - 1) as usize) * &t.pow;
                let w = &factor * &t.pow;
                phi += &w * rational::from_biguint(&sphere_count(n, h));
                chi += &w * rational::from_biguint(&divisor_weighted_sphere(n, &t.factors)?);
                if with_b_prime {
                    let mut inner = Rational::zero();
                    for d in t.factors.divisors() {
                        let rest = t.factors.div(&d).expect("d divides h");
                        inner += mobius_product(&d, m)
                            * rational::from_biguint(&primitive_count_factored(n, &rest));
                    }
                    s += &scale * &t.pow * inner;
                }
                t.pow.clone()
            }
            None => Rational::zero(),
        };
        rows.push(SeriesRow {
            h,
            psi_pow: pow,
            khintchine_partial: k.clone(),
            sum_b_prime: with_b_prime.then(|| s.clone()),
            phi: phi.clone(),
            chi: chi.clone(),
        });
    }
    Ok(rows)
}

/// `φ` of a plain integer, as a convenience for oracles.
pub fn phi_u64(h: u64) -> BigUint {
    euler_phi(&factorize(h))
}
