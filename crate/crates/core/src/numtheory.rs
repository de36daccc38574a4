//! Factored integers and the multiplicative functions used throughout the crate.
//!
//! Every closed-form measure and sum consumes a [`Factorization`] rather than a
//! raw integer. Primorial-scale integers are only ever built from their primes,
//! so they never need to be factored.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rational::Rational;

/// A positive integer as an ascending list of `(prime, exponent)` pairs.
///
/// The empty list is `1`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Factorization {
    factors: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn one() -> Self {
        Self::default()
    }

    /// Builds a factorization from explicit pairs, checking that the primes are
    /// prime and strictly increasing and that every exponent is positive.
    pub fn from_pairs(factors: Vec<(u64, u32)>) -> Result<Self> {
        for w in factors.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::parse(format!(
                    "primes must be strictly increasing, got {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        for &(p, k) in &factors {
            if k == 0 {
                return Err(Error::parse(format!("zero exponent on prime {p}")));
            }
            if !is_prime(p) {
                return Err(Error::parse(format!("{p} is not prime")));
            }
        }
        Ok(Self { factors })
    }

    /// Squarefree product of the given primes, which must be increasing.
    pub fn from_primes(primes: &[u64]) -> Result<Self> {
        Self::from_pairs(primes.iter().map(|&p| (p, 1)).collect())
    }

    pub(crate) fn from_pairs_unchecked(factors: Vec<(u64, u32)>) -> Self {
        debug_assert!(factors.windows(2).all(|w| w[0].0 < w[1].0));
        Self { factors }
    }

    pub fn factors(&self) -> &[(u64, u32)] {
        &self.factors
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.factors.iter().map(|&(p, _)| p)
    }

    /// Number of distinct prime factors.
    pub fn omega(&self) -> usize {
        self.factors.len()
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn is_squarefree(&self) -> bool {
        self.factors.iter().all(|&(_, k)| k == 1)
    }

    pub fn exponent_of(&self, p: u64) -> u32 {
        self.factors
            .binary_search_by_key(&p, |&(q, _)| q)
            .map(|i| self.factors[i].1)
            .unwrap_or(0)
    }

    /// The represented integer, multiplied out exactly.
    pub fn value(&self) -> BigUint {
        let mut acc = BigUint::one();
        for &(p, k) in &self.factors {
            acc *= num_traits::pow(BigUint::from(p), k as usize);
        }
        acc
    }

    pub fn value_u64(&self) -> Option<u64> {
        let mut acc: u64 = 1;
        for &(p, k) in &self.factors {
            for _ in 0..k {
                acc = acc.checked_mul(p)?;
            }
        }
        Some(acc)
    }

    pub fn mul(&self, other: &Factorization) -> Factorization {
        let mut out = Vec::with_capacity(self.factors.len() + other.factors.len());
        let (mut i, mut j) = (0, 0);
        while i < self.factors.len() && j < other.factors.len() {
            let (a, b) = (self.factors[i], other.factors[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => {
                    out.push(a);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push((a.0, a.1 + b.1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.factors[i..]);
        out.extend_from_slice(&other.factors[j..]);
        Factorization { factors: out }
    }

    /// `self / other`, or `None` when `other` does not divide `self`.
    pub fn div(&self, other: &Factorization) -> Option<Factorization> {
        let mut out = Vec::with_capacity(self.factors.len());
        let mut j = 0;
        for &(p, k) in &self.factors {
            let mut e = k;
            if j < other.factors.len() && other.factors[j].0 == p {
                e = k.checked_sub(other.factors[j].1)?;
                j += 1;
            }
            if e > 0 {
                out.push((p, e));
            }
        }
        if j != other.factors.len() {
            return None;
        }
        Some(Factorization { factors: out })
    }

    /// All divisors, as factorizations.
    pub fn divisors(&self) -> Vec<Factorization> {
        let mut out = vec![Factorization::one()];
        for &(p, k) in &self.factors {
            let prev = std::mem::take(&mut out);
            for d in prev {
                for e in 0..=k {
                    let mut f = d.factors.clone();
                    if e > 0 {
                        f.push((p, e));
                    }
                    out.push(Factorization { factors: f });
                }
            }
        }
        out
    }

    /// Squarefree divisors `v` with their Möbius sign `μ(v)`.
    pub fn squarefree_divisors(&self) -> Vec<(Factorization, i8)> {
        let mut out = vec![(Factorization::one(), 1i8)];
        for &(p, _) in &self.factors {
            let extra: Vec<_> = out
                .iter()
                .map(|(d, s)| {
                    let mut f = d.factors.clone();
                    f.push((p, 1));
                    (Factorization { factors: f }, -s)
                })
                .collect();
            out.extend(extra);
        }
        out
    }

    /// Whether this is the product of the first `k` primes for some `k ≥ 1`.
    pub fn is_primorial(&self) -> bool {
        if self.factors.is_empty() {
            return false;
        }
        let primes = small_primes();
        self.factors.len() <= primes.len()
            && self
                .factors
                .iter()
                .zip(primes.iter())
                .all(|(&(p, k), &q)| k == 1 && p == q)
    }
}

impl fmt::Display for Factorization {
    /// `2^3*3*5^2`; exponent 1 is omitted and `1` is the empty product.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return f.write_str("1");
        }
        for (i, &(p, k)) in self.factors.iter().enumerate() {
            if i > 0 {
                f.write_str("*")?;
            }
            if k == 1 {
                write!(f, "{p}")?;
            } else {
                write!(f, "{p}^{k}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for Factorization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "1" {
            return Ok(Self::one());
        }
        let mut pairs = Vec::new();
        for part in s.split('*') {
            let part = part.trim();
            let (p, k) = match part.split_once('^') {
                Some((p, k)) => (p.trim(), k.trim()),
                None => (part, "1"),
            };
            let p: u64 = p
                .parse()
                .map_err(|_| Error::parse(format!("bad prime {p:?} in {s:?}")))?;
            let k: u32 = k
                .parse()
                .map_err(|_| Error::parse(format!("bad exponent {k:?} in {s:?}")))?;
            pairs.push((p, k));
        }
        Self::from_pairs(pairs)
    }
}

impl Serialize for Factorization {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Factorization {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

const SIEVE_LIMIT: u64 = 1 << 16;

/// Primes below 2^16, built once.
fn small_primes() -> &'static [u64] {
    static CACHE: OnceLock<Vec<u64>> = OnceLock::new();
    CACHE.get_or_init(|| primes_up_to(SIEVE_LIMIT))
}

/// Sieve of Eratosthenes; all primes `<= limit`.
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i.saturating_mul(i);
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut a: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    a %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, a, m);
        }
        a = mul_mod(a, a, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for the whole `u64` range.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Trial division by cached primes below 2^16, then a 6k±1 wheel for the
/// (rare) cofactors that are neither 1 nor prime.
///
/// # Panics
///
/// Panics on `v == 0`.
pub fn factorize(v: u64) -> Factorization {
    assert!(v >= 1, "factorize requires a positive integer");
    let mut rest = v;
    let mut factors = Vec::new();
    for &p in small_primes() {
        if p * p > rest {
            break;
        }
        if rest.is_multiple_of(p) {
            let mut k = 0;
            while rest.is_multiple_of(p) {
                rest /= p;
                k += 1;
            }
            factors.push((p, k));
        }
    }
    if rest > 1 {
        if rest < SIEVE_LIMIT * SIEVE_LIMIT || is_prime(rest) {
            factors.push((rest, 1));
        } else {
            let mut p = SIEVE_LIMIT + 1;
            while p % 6 != 5 {
                p += 1;
            }
            let mut step = 2;
            while (p as u128) * (p as u128) <= rest as u128 {
                if rest.is_multiple_of(p) {
                    let mut k = 0;
                    while rest.is_multiple_of(p) {
                        rest /= p;
                        k += 1;
                    }
                    factors.push((p, k));
                    if is_prime(rest) || rest == 1 {
                        break;
                    }
                }
                p += step;
                step = 6 - step;
            }
            if rest > 1 {
                factors.push((rest, 1));
            }
        }
    }
    Factorization { factors }
}

/// Factorization of a big integer; values above `u64::MAX` are rejected.
pub fn factorize_big(v: &BigUint) -> Result<Factorization> {
    match v.to_u64() {
        Some(0) => Err(Error::domain("cannot factor 0")),
        Some(x) => Ok(factorize(x)),
        None => Err(Error::domain(format!(
            "{v} exceeds 2^64; supply its factorization instead"
        ))),
    }
}

pub fn mobius(f: &Factorization) -> i8 {
    if f.is_squarefree() {
        if f.omega().is_multiple_of(2) {
            1
        } else {
            -1
        }
    } else {
        0
    }
}

/// Euler's totient, `∏ p^(k−1)(p−1)`.
pub fn euler_phi(f: &Factorization) -> BigUint {
    let mut acc = BigUint::one();
    for &(p, k) in f.factors() {
        acc *= num_traits::pow(BigUint::from(p), (k - 1) as usize) * BigUint::from(p - 1);
    }
    acc
}

/// Number of divisors, `∏ (k + 1)`.
pub fn divisor_count(f: &Factorization) -> BigUint {
    f.factors()
        .iter()
        .fold(BigUint::one(), |acc, &(_, k)| acc * BigUint::from(k + 1))
}

/// `∏_{p|d} (1 − p^(−m))`, which equals `Σ_{l|d} μ(l)/l^m`; `1` for `d = 1`.
pub fn mobius_product(f: &Factorization, m: u32) -> Rational {
    assert!(m >= 1, "mobius_product needs m >= 1");
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for p in f.primes() {
        let pm = num_traits::pow(BigInt::from(p), m as usize);
        num *= &pm - 1;
        den *= pm;
    }
    Rational::new(num, den)
}

/// `θ(l) = ∏_{p|l} p/(p−1)`.
pub fn theta(f: &Factorization) -> Rational {
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for p in f.primes() {
        num *= p;
        den *= p - 1;
    }
    Rational::new(num, den)
}

/// Primorials `2, 2·3, 2·3·5, …` over all primes `<= limit_prime`.
pub fn primorials(limit_prime: u64) -> impl Iterator<Item = Factorization> {
    let primes = primes_up_to(limit_prime);
    (1..=primes.len()).map(move |k| Factorization {
        factors: primes[..k].iter().map(|&p| (p, 1)).collect(),
    })
}

pub fn gcd_u64(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn brute_divisors(n: u64) -> Vec<u64> {
        (1..=n).filter(|d| n.is_multiple_of(*d)).collect()
    }

    #[test]
    fn factorize_examples() {
        assert!(factorize(1).is_one());
        assert_eq!(factorize(12).factors(), &[(2, 2), (3, 1)]);
        let f = factorize(6469693230);
        let primes: Vec<u64> = f.primes().collect();
        assert_eq!(primes, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
        assert!(f.is_squarefree());
        assert_eq!(f.value(), BigUint::from(6469693230u64));
    }

    #[test]
    fn factorize_large_cofactors() {
        let p = 4294967311u64; // smallest prime above 2^32
        assert_eq!(factorize(p).factors(), &[(p, 1)]);
        assert_eq!(factorize(2 * p).factors(), &[(2, 1), (p, 1)]);
        let q = 65537u64 * 65539;
        assert_eq!(factorize(q).factors(), &[(65537, 1), (65539, 1)]);
        assert_eq!(factorize(u64::MAX).value(), BigUint::from(u64::MAX));
        assert!(factorize_big(&(BigUint::from(u64::MAX) + 1u32)).is_err());
    }

    #[test]
    fn mobius_phi_tau_examples() {
        assert_eq!(mobius(&factorize(1)), 1);
        assert_eq!(mobius(&factorize(6)), 1);
        assert_eq!(mobius(&factorize(12)), 0);
        assert_eq!(mobius(&factorize(30)), -1);

        assert_eq!(euler_phi(&factorize(1)), BigUint::from(1u32));
        let coprime_to_12 = (1..=12u64).filter(|&k| gcd_u64(k, 12) == 1).count();
        assert_eq!(euler_phi(&factorize(12)), BigUint::from(coprime_to_12));
        assert_eq!(euler_phi(&factorize(30)), BigUint::from(8u32));

        assert_eq!(divisor_count(&factorize(1)), BigUint::from(1u32));
        assert_eq!(
            divisor_count(&factorize(12)),
            BigUint::from(brute_divisors(12).len())
        );
        assert_eq!(divisor_count(&factorize(210)), BigUint::from(16u32));
    }

    #[test]
    fn mobius_product_examples() {
        assert_eq!(mobius_product(&factorize(1), 3), ratio(1, 1));
        assert_eq!(mobius_product(&factorize(2), 1), ratio(1, 2));
        // Σ_{l|12} μ(l)/l² by direct divisor sum.
        let direct: Rational = brute_divisors(12)
            .into_iter()
            .map(|l| ratio(mobius(&factorize(l)) as i64, (l * l) as i64))
            .sum();
        assert_eq!(direct, ratio(2, 3));
        assert_eq!(mobius_product(&factorize(12), 2), direct);
    }

    #[test]
    fn theta_examples() {
        assert_eq!(theta(&factorize(1)), ratio(1, 1));
        assert_eq!(theta(&factorize(6)), ratio(3, 1));
        // Independent product over the primes ≤ 29, reduced by Rational::new.
        let primes = [2i64, 3, 5, 7, 11, 13, 17, 19, 23, 29];
        let num: i64 = primes.iter().product();
        let den: i64 = primes.iter().map(|p| p - 1).product();
        assert_eq!(num, 6469693230);
        assert_eq!(den, 1021870080);
        let t = theta(&factorize(6469693230));
        assert_eq!(t, ratio(num, den));
        assert_eq!(crate::rational::to_text(&t), "2800733/442368");
        assert!((crate::rational::to_f64(&t) - 6.3312).abs() < 1e-3);
    }

    #[test]
    fn primorial_stream() {
        let v: Vec<_> = primorials(5).collect();
        assert_eq!(v.len(), 3);
        assert_eq!(v[2].to_string(), "2*3*5");
        let v: Vec<_> = primorials(7).collect();
        assert_eq!(v.len(), 4);
        assert_eq!(v[3].to_string(), "2*3*5*7");
        let v: Vec<_> = primorials(29).collect();
        assert_eq!(v.len(), 10);
        assert_eq!(v[9].value(), BigUint::from(6469693230u64));
        assert!(v.iter().all(Factorization::is_primorial));
        assert!(!factorize(2 * 5).is_primorial());
    }

    #[test]
    fn text_form() {
        let f = factorize(2 * 2 * 2 * 3 * 25);
        assert_eq!(f.to_string(), "2^3*3*5^2");
        assert_eq!("2^3*3*5^2".parse::<Factorization>().unwrap(), f);
        assert_eq!("1".parse::<Factorization>().unwrap(), Factorization::one());
        assert!("3*2".parse::<Factorization>().is_err());
        assert!("4*3".parse::<Factorization>().is_err());
        assert!("2^0".parse::<Factorization>().is_err());
        assert!("x".parse::<Factorization>().is_err());
    }

    #[test]
    fn divisors_and_quotients() {
        let f = factorize(360);
        let mut ds: Vec<u64> = f
            .divisors()
            .iter()
            .map(|d| d.value_u64().unwrap())
            .collect();
        ds.sort_unstable();
        assert_eq!(ds, brute_divisors(360));
        let q = f.div(&factorize(12)).unwrap();
        assert_eq!(q.value_u64(), Some(30));
        assert!(f.div(&factorize(7)).is_none());
        assert!(f.div(&factorize(16)).is_none());
        assert_eq!(factorize(12).mul(&factorize(45)).value_u64(), Some(540));
        let sq: i64 = factorize(30)
            .squarefree_divisors()
            .iter()
            .map(|(_, s)| *s as i64)
            .sum();
        assert_eq!(sq, 0);
    }

    #[test]
    fn sieve_and_primality_agree() {
        let primes = primes_up_to(10_000);
        let flagged: Vec<u64> = (0..=10_000).filter(|&n| is_prime(n)).collect();
        assert_eq!(primes, flagged);
        assert!(is_prime(18446744073709551557));
        assert!(!is_prime(3215031751)); // strong pseudoprime to bases 2, 3, 5, 7
    }
}
