//! Approximating functions on primorials whose error weight `χ` dominates
//! `F(Φ)` for a prescribed increasing gauge `F`, together with an exact
//! certificate and its replay.
//!
//! The function lives on a run of consecutive primorials `l_n`, cut into blocks
//! `[h_t, h_{t+1})`. Each block carries total weight one: `l·ψ(l)^m = 1/s_t` on
//! the `s_t` primorials of the block. The blocks are chosen so that
//! `½·Σ_{t≤T} θ(h_t) >= F(8T + 8)` for every `T`.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::{Gauge, PRECISIONS};
use crate::numtheory::{primes_up_to, theta, Factorization};
use crate::rational::{self, Rational};
use crate::series::{phi_chi, ApproxFunction, Convention, MultiApproxFunction, SparseFunction};

/// Largest prime the builder will multiply into a primorial by default.
pub const DEFAULT_PRIME_BUDGET: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub h: Factorization,
    pub s: u64,
    #[serde(with = "rational::text")]
    pub theta: Rational,
}

/// A primorial that satisfied the block inequality but was skipped to keep
/// `s_t` nondecreasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thinned {
    pub l: Factorization,
    pub t: usize,
    pub s_would_be: u64,
    pub s_previous: u64,
}

/// Exact values at `h = h_t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: usize,
    pub h: Factorization,
    /// `Σ_{l≤h} l·ψ(l)^m`.
    #[serde(with = "rational::text")]
    pub partial: Rational,
    #[serde(with = "rational::text")]
    pub phi: Rational,
    #[serde(with = "rational::text")]
    pub chi: Rational,
    /// `½·Σ_{l≤h} l·ψ(l)^m·θ(l)`, a lower bound for `χ(h)`.
    #[serde(with = "rational::text")]
    pub chi_lower: Rational,
    /// `8·Σ_{l≤h} l·ψ(l)^m`, an upper bound for `Φ(h)`.
    #[serde(with = "rational::text")]
    pub phi_upper: Rational,
    /// Certified upper bracket of `F(Φ(h))` at the precision that decided it.
    #[serde(with = "rational::text")]
    pub f_upper: Rational,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub block_sums: bool,
    pub monotone: bool,
    pub vb1: bool,
    pub final_inequality: bool,
}

impl Verdicts {
    pub fn all(&self) -> bool {
        self.block_sums && self.monotone && self.vb1 && self.final_inequality
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub gauge: Gauge,
    pub m: u32,
    pub n: u32,
    pub convention: Convention,
    pub prime_budget: u64,
    /// How the block lengths are ordered; always `"nondecreasing"`.
    pub s_order: String,
    pub blocks: Vec<Block>,
    /// `h_{T+1}`, the first primorial past the last block.
    pub end: Factorization,
    pub thinned: Vec<Thinned>,
    pub checkpoints: Vec<Checkpoint>,
    pub verdicts: Verdicts,
}

/// Why the builder stopped short of its target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfeasibilityReport {
    pub gauge: Gauge,
    pub m: u32,
    pub target_blocks: usize,
    pub prime_budget: u64,
    /// Points `h_1, h_2, …` admitted before the primes ran out.
    pub found: Vec<Factorization>,
    /// Index `T` of the point that could not be placed.
    pub t: usize,
    /// `8T + 8`.
    pub x: u64,
    /// Bracket for `2·F(x) − Σ_{t<T} θ(h_t)`, the `θ` the next point would need.
    #[serde(with = "rational::text")]
    pub required_theta_lo: Rational,
    #[serde(with = "rational::text")]
    pub required_theta_hi: Rational,
    /// Dyadic bracket of `θ` of the largest primorial within budget.
    #[serde(with = "rational::text")]
    pub best_theta_lo: Rational,
    #[serde(with = "rational::text")]
    pub best_theta_hi: Rational,
    /// The inequality that could not be met, in words.
    pub binding: String,
}

/// A failed check with both sides as exact rationals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub check: String,
    pub detail: String,
    #[serde(with = "rational::text")]
    pub lhs: Rational,
    #[serde(with = "rational::text")]
    pub rhs: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub verdicts: Verdicts,
    pub checkpoints: Vec<Checkpoint>,
    pub failures: Vec<Failure>,
}

impl CertifyReport {
    pub fn passed(&self) -> bool {
        self.verdicts.all() && self.failures.is_empty()
    }
}

/// Decides `lhs >= F(x)` and returns the bracket end that decided it:
/// the upper end when it holds, the lower end when it fails.
fn decide(gauge: &Gauge, lhs: &Rational, x: &Rational) -> Result<(bool, Rational)> {
    for bits in PRECISIONS {
        let (lo, hi) = gauge.bracket(x, bits)?;
        if *lhs >= hi {
            return Ok((true, hi));
        }
        if *lhs < lo {
            return Ok((false, lo));
        }
    }
    let (_, hi) = gauge.bracket(x, PRECISIONS[PRECISIONS.len() - 1])?;
    Ok((false, hi))
}

fn half() -> Rational {
    rational::ratio(1, 2)
}

fn vb1_x(t: usize) -> Rational {
    rational::int(8 * t as i64 + 8)
}

/// Builds `ψ` for `F` with `T` blocks under the proof convention.
pub fn build_psi(
    gauge: &Gauge,
    m: u32,
    blocks: usize,
    prime_budget: u64,
) -> Result<(ApproxFunction, Certificate)> {
    build_psi_with(gauge, m, blocks, prime_budget, Convention::Proof)
}

pub fn build_psi_with(
    gauge: &Gauge,
    m: u32,
    blocks: usize,
    prime_budget: u64,
    convention: Convention,
) -> Result<(ApproxFunction, Certificate)> {
    if m == 0 || blocks == 0 {
        return Err(Error::domain("need m >= 1 and at least one block"));
    }
    let primes = primes_up_to(prime_budget);
    let primorial = |n: usize| {
        Factorization::from_pairs_unchecked(primes[..=n].iter().map(|&p| (p, 1)).collect())
    };

    // Greedy scan: index n is the primorial of the first n + 1 primes.
    let mut chosen: Vec<(usize, Rational)> = Vec::new();
    let mut thinned = Vec::new();
    let mut sum_theta = Rational::zero();
    let mut th = Rational::one();
    let mut bracket_for: Option<(usize, Rational, Rational)> = None;
    for (n, &p) in primes.iter().enumerate() {
        th *= rational::ratio(p as i64, p as i64 - 1);
        let t = chosen.len() + 1;
        if bracket_for.as_ref().map(|b| b.0) != Some(t) {
            let (lo, hi) = gauge.bracket(&vb1_x(t), PRECISIONS[0])?;
            bracket_for = Some((t, lo, hi));
        }
        let (_, lo, hi) = bracket_for.as_ref().expect("set above");
        let lhs = half() * (&sum_theta + &th);
        let admit = if lhs >= *hi {
            true
        } else if lhs < *lo {
            false
        } else {
            decide(gauge, &lhs, &vb1_x(t))?.0
        };
        if !admit {
            continue;
        }
        if chosen.len() >= 2 {
            let k = chosen.len();
            let s_prev = (chosen[k - 1].0 - chosen[k - 2].0) as u64;
            let s_new = (n - chosen[k - 1].0) as u64;
            if s_new < s_prev {
                thinned.push(Thinned {
                    l: primorial(n),
                    t,
                    s_would_be: s_new,
                    s_previous: s_prev,
                });
                continue;
            }
        }
        sum_theta += &th;
        chosen.push((n, th.clone()));
        if chosen.len() == blocks + 1 {
            break;
        }
    }

    if chosen.len() < blocks + 1 {
        let t = chosen.len() + 1;
        let x = vb1_x(t);
        let (f_lo, f_hi) = gauge.bracket(&x, PRECISIONS[0])?;
        let two = rational::int(2);
        let best = if primes.is_empty() {
            Rational::one()
        } else {
            th
        };
        let need_lo = &two * &f_lo - &sum_theta;
        let need_hi = &two * &f_hi - &sum_theta;
        let binding = format!(
            "(1/2)(sum of chosen theta + theta(h_{t})) >= F({}) needs theta(h_{t}) >= {:.6e}; \
             largest primorial with primes <= {prime_budget} has theta = {:.6}",
            8 * t + 8,
            rational::to_f64(&need_lo),
            rational::to_f64(&best),
        );
        return Err(Error::Infeasible(Box::new(InfeasibilityReport {
            gauge: gauge.clone(),
            m,
            target_blocks: blocks,
            prime_budget,
            found: chosen.iter().map(|(n, _)| primorial(*n)).collect(),
            t,
            x: 8 * t as u64 + 8,
            required_theta_lo: need_lo,
            required_theta_hi: need_hi,
            best_theta_lo: rational::floor_dyadic(&best, 64),
            best_theta_hi: rational::ceil_dyadic(&best, 64),
            binding,
        })));
    }

    let mut support = Vec::new();
    let mut block_list = Vec::with_capacity(blocks);
    for w in chosen.windows(2) {
        let (start, ref th) = w[0];
        let s = (w[1].0 - start) as u64;
        for n in start..w[1].0 {
            support.push((primorial(n), rational::ratio(1, s as i64)));
        }
        block_list.push(Block {
            h: primorial(start),
            s,
            theta: th.clone(),
        });
    }
    let sparse = SparseFunction::new(m, support)?;
    let end = primorial(chosen[blocks].0);

    let mut cert = Certificate {
        gauge: gauge.clone(),
        m,
        n: 2,
        convention,
        prime_budget,
        s_order: "nondecreasing".into(),
        blocks: block_list,
        end,
        thinned,
        checkpoints: Vec::new(),
        verdicts: Verdicts {
            block_sums: false,
            monotone: false,
            vb1: false,
            final_inequality: false,
        },
    };
    let report = evaluate(&sparse, gauge, m, &cert)?;
    cert.checkpoints = report.checkpoints;
    cert.verdicts = report.verdicts;
    Ok((ApproxFunction::Sparse(sparse), cert))
}

fn block_bounds(cert: &Certificate) -> Vec<(BigUint, BigUint)> {
    let mut heights: Vec<BigUint> = cert.blocks.iter().map(|b| b.h.value()).collect();
    heights.push(cert.end.value());
    heights
        .windows(2)
        .map(|w| (w[0].clone(), w[1].clone()))
        .collect()
}

fn checkpoint(
    psi: &SparseFunction,
    gauge: &Gauge,
    m: u32,
    convention: Convention,
    t: usize,
    h: &Factorization,
) -> Result<Checkpoint> {
    let hv = h.value();
    let factor = convention.factor(m);
    let mut partial = Rational::zero();
    let mut weighted = Rational::zero();
    for p in psi.upto(&hv) {
        partial += p.lpsim();
        weighted += p.lpsim() * theta(p.l());
    }
    let lift = MultiApproxFunction::PlaneLift {
        psi: ApproxFunction::Sparse(psi.clone()),
        n: 2,
    };
    let (phi, chi) = phi_chi(&lift, m, &hv, convention)?;
    let chi_lower = &factor * half() * weighted;
    let phi_upper = &factor * rational::int(8) * &partial;
    let (chain, _) = decide(gauge, &chi_lower, &phi_upper)?;
    let (exact, f_bound) = decide(gauge, &chi, &phi)?;
    let f_upper = if exact {
        f_bound
    } else {
        gauge.upper(&phi, PRECISIONS[0])?
    };
    Ok(Checkpoint {
        t,
        h: h.clone(),
        partial,
        phi,
        chi,
        chi_lower,
        phi_upper,
        f_upper,
        holds: chain && exact,
    })
}

/// Recomputes everything a certificate asserts about `ψ` from scratch.
fn evaluate(
    psi: &SparseFunction,
    gauge: &Gauge,
    m: u32,
    cert: &Certificate,
) -> Result<CertifyReport> {
    let mut failures = Vec::new();
    let mut fail = |check: &str, detail: String, lhs: Rational, rhs: Rational| {
        failures.push(Failure {
            check: check.into(),
            detail,
            lhs,
            rhs,
        });
    };
    let bounds = block_bounds(cert);

    // Each block carries total weight one.
    let mut block_sums = true;
    for (t, (lo, hi)) in bounds.iter().enumerate() {
        let total: Rational = psi
            .support()
            .iter()
            .filter(|p| p.value() >= lo && p.value() < hi)
            .map(|p| p.lpsim().clone())
            .sum();
        if !total.is_one() {
            block_sums = false;
            fail(
                "block_sum",
                format!("block {} starting at {}", t + 1, cert.blocks[t].h),
                total,
                Rational::one(),
            );
        }
    }
    let first = bounds.first().map(|b| b.0.clone()).unwrap_or_default();
    let outside: Rational = psi
        .support()
        .iter()
        .filter(|p| p.value() < &first || p.value() >= &cert.end.value())
        .map(|p| p.lpsim().clone())
        .sum();
    if !outside.is_zero() {
        block_sums = false;
        fail(
            "block_sum",
            "weight outside [h_1, h_{T+1})".into(),
            outside,
            Rational::zero(),
        );
    }

    // Monotone on the support, block heights increasing primorials,
    // θ increasing along blocks, s_t nondecreasing and matching the support.
    let mut monotone = true;
    for w in psi.support().windows(2) {
        let (a, b) = (w[0].psi_pow(), w[1].psi_pow());
        if b > a {
            monotone = false;
            fail(
                "monotone",
                format!("ψ^m increases from {} to {}", w[0].l(), w[1].l()),
                a,
                b,
            );
        }
    }
    for (t, b) in cert.blocks.iter().enumerate() {
        if !b.h.is_primorial() {
            monotone = false;
            fail(
                "monotone",
                format!("h_{} = {} is not a primorial", t + 1, b.h),
                Rational::zero(),
                Rational::zero(),
            );
        }
        let th = theta(&b.h);
        if th != b.theta {
            monotone = false;
            fail("recorded", format!("θ(h_{})", t + 1), b.theta.clone(), th);
        }
        let count = psi
            .support()
            .iter()
            .filter(|p| p.value() >= &bounds[t].0 && p.value() < &bounds[t].1)
            .count() as u64;
        if count != b.s {
            monotone = false;
            fail(
                "recorded",
                format!("s_{} against support points in block", t + 1),
                rational::int(b.s as i64),
                rational::int(count as i64),
            );
        }
    }
    if !cert.end.is_primorial() {
        monotone = false;
        fail(
            "monotone",
            format!("h_T+1 = {} is not a primorial", cert.end),
            Rational::zero(),
            Rational::zero(),
        );
    }
    for (t, (lo, hi)) in bounds.iter().enumerate() {
        if lo >= hi {
            monotone = false;
            fail(
                "monotone",
                format!("h_{} >= h_{}", t + 1, t + 2),
                rational::from_biguint(lo),
                rational::from_biguint(hi),
            );
        }
    }
    for (t, w) in cert.blocks.windows(2).enumerate() {
        if w[1].s < w[0].s {
            monotone = false;
            fail(
                "monotone",
                format!("s_{} < s_{}", t + 2, t + 1),
                rational::int(w[1].s as i64),
                rational::int(w[0].s as i64),
            );
        }
        if w[1].theta <= w[0].theta {
            monotone = false;
            fail(
                "monotone",
                format!("θ(h_{}) <= θ(h_{})", t + 2, t + 1),
                w[1].theta.clone(),
                w[0].theta.clone(),
            );
        }
    }

    // ½·Σ_{t≤T} θ(h_t) >= F(8T + 8) for T = 1..=T+1.
    let mut vb1 = true;
    let mut thetas: Vec<Rational> = cert.blocks.iter().map(|b| theta(&b.h)).collect();
    thetas.push(theta(&cert.end));
    let mut sum = Rational::zero();
    for (i, th) in thetas.iter().enumerate() {
        sum += th;
        let t = i + 1;
        let lhs = half() * &sum;
        let (ok, bound) = decide(gauge, &lhs, &vb1_x(t))?;
        if !ok {
            vb1 = false;
            fail(
                "vb1",
                format!("T = {t}: (1/2)Σθ >= F({})", 8 * t + 8),
                lhs,
                bound,
            );
        }
    }

    // χ(h_t) >= F(Φ(h_t)) for t >= 2, through the chain and exactly.
    let mut points: Vec<(usize, &Factorization)> = cert
        .blocks
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, b)| (i + 1, &b.h))
        .collect();
    points.push((cert.blocks.len() + 1, &cert.end));
    let checkpoints: Vec<Checkpoint> = points
        .par_iter()
        .map(|&(t, h)| checkpoint(psi, gauge, m, cert.convention, t, h))
        .collect::<Result<_>>()?;
    let mut final_inequality = true;
    for c in &checkpoints {
        if !c.holds {
            final_inequality = false;
            let (_, lo) = gauge.bracket(&c.phi, PRECISIONS[0])?;
            fail(
                "final_inequality",
                format!("χ(h_{}) >= F(Φ(h_{}))", c.t, c.t),
                c.chi.clone(),
                lo,
            );
        }
    }

    Ok(CertifyReport {
        verdicts: Verdicts {
            block_sums,
            monotone,
            vb1,
            final_inequality,
        },
        checkpoints,
        failures,
    })
}

/// Replays a certificate against `ψ`: every asserted value is recomputed and
/// every inequality decided again with exact rationals.
pub fn certify(
    psi: &SparseFunction,
    gauge: &Gauge,
    n: u32,
    m: u32,
    cert: &Certificate,
) -> Result<CertifyReport> {
    if n != 2 || cert.n != 2 {
        return Err(Error::domain("the certificate is stated for n = 2"));
    }
    if psi.m() != m || cert.m != m {
        return Err(Error::domain(format!(
            "exponent mismatch: ψ has {}, certificate {}, asked {m}",
            psi.m(),
            cert.m
        )));
    }
    if *gauge != cert.gauge {
        return Err(Error::domain(format!(
            "certificate is for gauge {}, not {gauge}",
            cert.gauge
        )));
    }
    if cert.blocks.is_empty() {
        return Err(Error::domain("certificate has no blocks"));
    }
    let mut report = evaluate(psi, gauge, m, cert)?;
    if report.checkpoints != cert.checkpoints {
        report.verdicts.final_inequality = false;
        report.failures.push(Failure {
            check: "recorded".into(),
            detail: "checkpoint values differ from recomputation".into(),
            lhs: Rational::from_integer(cert.checkpoints.len().into()),
            rhs: Rational::from_integer(report.checkpoints.len().into()),
        });
    }
    if report.verdicts != cert.verdicts {
        report.failures.push(Failure {
            check: "recorded".into(),
            detail: "recorded verdicts differ from recomputation".into(),
            lhs: Rational::zero(),
            rhs: Rational::zero(),
        });
    }
    Ok(report)
}

/// `Σ_{l≤h} l·ψ(l)^m` at each checkpoint.
pub fn divergence_trace(psi: &SparseFunction, checkpoints: &[BigUint]) -> Vec<(BigUint, Rational)> {
    checkpoints
        .iter()
        .map(|h| {
            (
                h.clone(),
                psi.upto(h).iter().map(|p| p.lpsim().clone()).sum(),
            )
        })
        .collect()
}

/// `Ψ(q) = ψ(|q|)` on the plane `q = (q1, q2, 0, …, 0)` of `Zⁿ`, zero elsewhere.
pub fn lift_to_multivariable(psi: ApproxFunction, n: u32) -> Result<MultiApproxFunction> {
    if n < 2 {
        return Err(Error::domain("the plane lift needs n >= 2"));
    }
    Ok(MultiApproxFunction::PlaneLift { psi, n })
}

/// `h ↦ min{c, ψ(h)}`.
pub fn truncate_min(psi: &ApproxFunction, c: &Rational) -> Result<ApproxFunction> {
    if *c <= Rational::zero() {
        return Err(Error::domain("truncation level must be positive"));
    }
    Ok(match psi {
        ApproxFunction::Constant(v) => ApproxFunction::Constant(v.min(c).clone()),
        ApproxFunction::Power { c: k, tau } if *tau >= Rational::zero() && k <= c => psi.clone(),
        ApproxFunction::Table(t) => {
            ApproxFunction::Table(t.iter().map(|(h, v)| (*h, v.min(c).clone())).collect())
        }
        ApproxFunction::Sparse(s) => {
            let cm = rational::pow(c, s.m());
            let support = s
                .support()
                .iter()
                .map(|p| {
                    let cap = rational::from_biguint(p.value()) * &cm;
                    (p.l().clone(), p.lpsim().min(&cap).clone())
                })
                .collect();
            ApproxFunction::Sparse(SparseFunction::new(s.m(), support)?)
        }
        ApproxFunction::Capped { cap, inner } => ApproxFunction::Capped {
            cap: cap.min(c).clone(),
            inner: inner.clone(),
        },
        ApproxFunction::Power { .. } => ApproxFunction::Capped {
            cap: c.clone(),
            inner: Box::new(psi.clone()),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numtheory::factorize;
    use crate::rational::{int, ratio};

    fn sparse_of(f: &ApproxFunction) -> &SparseFunction {
        match f {
            ApproxFunction::Sparse(s) => s,
            _ => panic!("expected a sparse function"),
        }
    }

    #[test]
    fn log_gauge_five_blocks() {
        let (psi, cert) = build_psi(&Gauge::Log, 1, 5, DEFAULT_PRIME_BUDGET).unwrap();
        assert!(cert.verdicts.all(), "{:?}", cert.verdicts);
        // θ(2·3·…·19) ≈ 5.847 is the first primorial theta above 2·ln 17 ≈ 5.666.
        assert_eq!(cert.blocks[0].h.to_string(), "2*3*5*7*11*13*17*19");
        assert_eq!(cert.blocks.len(), 5);
        let s = sparse_of(&psi);
        assert!(s.upto(&(cert.blocks[0].h.value() - 1u32)).is_empty());
        let report = certify(s, &Gauge::Log, 2, 1, &cert).unwrap();
        assert!(report.passed(), "{:?}", report.failures);
    }

    #[test]
    fn injected_faults_are_named() {
        let (psi, cert) = build_psi(&Gauge::Log, 1, 3, DEFAULT_PRIME_BUDGET).unwrap();
        let s = sparse_of(&psi);
        let mut points: Vec<(Factorization, Rational)> = s
            .support()
            .iter()
            .map(|p| (p.l().clone(), p.lpsim().clone()))
            .collect();
        points[1].1 *= int(2);
        let doubled = SparseFunction::new(1, points.clone()).unwrap();
        let r = certify(&doubled, &Gauge::Log, 2, 1, &cert).unwrap();
        assert!(!r.verdicts.block_sums);
        assert!(r
            .failures
            .iter()
            .any(|f| f.check == "block_sum" && f.lhs == int(2)));

        let mut rising = points;
        rising[1].1 = int(1);
        rising[2].1 = int(1_000_000);
        let rising = SparseFunction::new(1, rising).unwrap();
        let r = certify(&rising, &Gauge::Log, 2, 1, &cert).unwrap();
        assert!(!r.verdicts.monotone);
    }

    #[test]
    fn steep_exponential_is_infeasible() {
        let err = build_psi(&Gauge::exp(int(2)).unwrap(), 1, 1, DEFAULT_PRIME_BUDGET).unwrap_err();
        let Error::Infeasible(report) = err else {
            panic!("expected infeasibility")
        };
        assert_eq!((report.t, report.x), (1, 16));
        assert!(report.found.is_empty());
        // 2e^32 ≈ 1.5793e14.
        let (lo, hi) = (
            rational::to_f64(&report.required_theta_lo),
            rational::to_f64(&report.required_theta_hi),
        );
        let target = 2.0 * 32f64.exp();
        assert!(lo <= target * (1.0 + 1e-12) && target <= hi * (1.0 + 1e-12));
        assert!(report.best_theta_hi < report.required_theta_lo);
    }

    #[test]
    fn certificate_round_trips() {
        let (psi, cert) = build_psi(
            &Gauge::linear(ratio(1, 4), int(0)).unwrap(),
            2,
            3,
            DEFAULT_PRIME_BUDGET,
        )
        .unwrap();
        let text = serde_json::to_string(&cert).unwrap();
        let back: Certificate = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cert);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        let r = certify(sparse_of(&psi), &back.gauge, 2, 2, &back).unwrap();
        assert!(r.passed(), "{:?}", r.failures);
    }

    #[test]
    fn divergence_trace_counts_blocks() {
        let (psi, cert) = build_psi(&Gauge::Log, 1, 4, DEFAULT_PRIME_BUDGET).unwrap();
        let s = sparse_of(&psi);
        let h2 = cert.blocks[1].h.value();
        let trace = divergence_trace(
            s,
            &[
                BigUint::from(5u32),
                h2.clone() - 1u32,
                cert.end.value() * 7u32,
            ],
        );
        assert_eq!(trace[0].1, int(0));
        assert_eq!(trace[1].1, int(1));
        assert_eq!(trace[2].1, int(4));
    }

    #[test]
    fn lift_and_truncate() {
        let psi = ApproxFunction::table([(1, ratio(6, 10)), (2, ratio(1, 10))].into()).unwrap();
        let lifted = lift_to_multivariable(psi.clone(), 4).unwrap();
        assert_eq!(lifted.value_pow(&[1, 2, 0, 0], 1).unwrap(), ratio(1, 10));
        assert_eq!(lifted.value_pow(&[1, 0, 1, 0], 1).unwrap(), int(0));
        assert!(lift_to_multivariable(psi.clone(), 1).is_err());

        assert_eq!(
            truncate_min(&psi, &ratio(1, 2)).unwrap(),
            ApproxFunction::table([(1, ratio(1, 2)), (2, ratio(1, 10))].into()).unwrap()
        );
        assert_eq!(
            truncate_min(&ApproxFunction::constant(int(1)).unwrap(), &ratio(1, 4)).unwrap(),
            ApproxFunction::constant(ratio(1, 4)).unwrap()
        );
        let p = ApproxFunction::power(ratio(1, 4), int(1)).unwrap();
        assert_eq!(truncate_min(&p, &ratio(1, 2)).unwrap(), p);
        let capped = truncate_min(
            &ApproxFunction::power(int(2), int(1)).unwrap(),
            &ratio(1, 2),
        )
        .unwrap();
        assert_eq!(
            capped.psi_pow(&BigUint::from(1u32), 1).unwrap(),
            ratio(1, 2)
        );
        assert_eq!(
            capped.psi_pow(&BigUint::from(8u32), 1).unwrap(),
            ratio(1, 4)
        );
        assert!(truncate_min(&p, &int(0)).is_err());

        let sparse = ApproxFunction::Sparse(
            SparseFunction::new(1, vec![(factorize(2), int(2)), (factorize(6), ratio(1, 2))])
                .unwrap(),
        );
        let t = truncate_min(&sparse, &ratio(1, 4)).unwrap();
        assert_eq!(t.psi_pow(&BigUint::from(2u32), 1).unwrap(), ratio(1, 4));
        assert_eq!(t.psi_pow(&BigUint::from(6u32), 1).unwrap(), ratio(1, 12));
    }
}
