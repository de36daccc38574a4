//! Increasing gauges `F : ℝ⁺ → ℝ⁺` with certified rational brackets.
//!
//! Transcendental gauges are evaluated in fixed point with every rounding
//! directed outward, so `lo <= F(x) <= hi` holds exactly for the returned pair.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

/// Working precisions tried by [`Gauge::ge`], in bits.
pub const PRECISIONS: [u32; 7] = [64, 128, 256, 512, 1024, 2048, 4096];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Gauge {
    /// `F(x) = x`.
    Identity,
    /// `F(x) = a·x + b`.
    Linear {
        #[serde(with = "rational::text")]
        a: Rational,
        #[serde(with = "rational::text")]
        b: Rational,
    },
    /// `F(x) = ln(1 + x)`.
    Log,
    /// `F(x) = e^(a·x)`.
    Exp {
        #[serde(with = "rational::text")]
        a: Rational,
    },
}

impl Gauge {
    pub fn linear(a: Rational, b: Rational) -> Result<Self> {
        if !a.is_positive() || b.is_negative() {
            return Err(Error::domain("linear gauge needs a > 0 and b >= 0"));
        }
        Ok(Gauge::Linear { a, b })
    }

    pub fn exp(a: Rational) -> Result<Self> {
        if !a.is_positive() {
            return Err(Error::domain("exponential gauge needs a > 0"));
        }
        Ok(Gauge::Exp { a })
    }

    /// Rational `(lo, hi)` with `lo <= F(x) <= hi` and `hi − lo` of order
    /// `2^(−bits)` relative to `F(x)`. Exact gauges return `lo == hi`.
    pub fn bracket(&self, x: &Rational, bits: u32) -> Result<(Rational, Rational)> {
        if x.is_negative() {
            return Err(Error::domain("gauges are evaluated on x >= 0"));
        }
        Ok(match self {
            Gauge::Identity => (x.clone(), x.clone()),
            Gauge::Linear { a, b } => {
                let v = a * x + b;
                (v.clone(), v)
            }
            Gauge::Log => ln_bracket(&(x + Rational::one()), bits),
            Gauge::Exp { a } => exp_bracket(&(a * x), bits),
        })
    }

    /// Decides `lhs >= F(x)`, refining the bracket as needed. `None` only if
    /// the two sides agree to the finest precision tried.
    pub fn ge(&self, lhs: &Rational, x: &Rational) -> Result<Option<bool>> {
        for bits in PRECISIONS {
            let (lo, hi) = self.bracket(x, bits)?;
            if *lhs >= hi {
                return Ok(Some(true));
            }
            if *lhs < lo {
                return Ok(Some(false));
            }
        }
        Ok(None)
    }

    /// A certified upper bound for `F(x)`.
    pub fn upper(&self, x: &Rational, bits: u32) -> Result<Rational> {
        self.bracket(x, bits).map(|(_, hi)| hi)
    }
}

impl fmt::Display for Gauge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gauge::Identity => f.write_str("identity"),
            Gauge::Log => f.write_str("log"),
            Gauge::Linear { a, b } => write!(
                f,
                "linear:{},{}",
                rational::to_text(a),
                rational::to_text(b)
            ),
            Gauge::Exp { a } => write!(f, "exp:{}", rational::to_text(a)),
        }
    }
}

impl FromStr for Gauge {
    type Err = Error;

    /// `identity`, `log`, `linear:a,b`, `exp:a`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.split_once(':') {
            None if s == "identity" => Ok(Gauge::Identity),
            None if s == "log" => Ok(Gauge::Log),
            Some(("linear", args)) => {
                let (a, b) = args
                    .split_once(',')
                    .ok_or_else(|| Error::parse(format!("linear gauge needs a,b: {s:?}")))?;
                Gauge::linear(rational::parse(a)?, rational::parse(b)?)
            }
            Some(("exp", a)) => Gauge::exp(rational::parse(a)?),
            _ => Err(Error::parse(format!("unknown gauge {s:?}"))),
        }
    }
}

// Fixed-point helpers: an integer `v` stands for `v / 2^p`.

fn fx_floor(r: &Rational, p: u32) -> BigInt {
    (r.numer() << p as usize).div_floor(r.denom())
}

fn fx_ceil(r: &Rational, p: u32) -> BigInt {
    let (q, rem) = (r.numer() << p as usize).div_mod_floor(r.denom());
    if rem.is_zero() {
        q
    } else {
        q + 1
    }
}

fn mul_floor(a: &BigInt, b: &BigInt, p: u32) -> BigInt {
    (a * b) >> p as usize
}

fn mul_ceil(a: &BigInt, b: &BigInt, p: u32) -> BigInt {
    let prod = a * b;
    let q = &prod >> p as usize;
    if (&q << p as usize) == prod {
        q
    } else {
        q + 1
    }
}

fn div_ceil_int(a: &BigInt, d: u64) -> BigInt {
    let (q, r) = a.div_mod_floor(&BigInt::from(d));
    if r.is_zero() {
        q
    } else {
        q + 1
    }
}

fn fx_to_rational(v: BigInt, p: u32) -> Rational {
    Rational::new(v, BigInt::one() << p as usize)
}

/// Brackets `atanh(z)` for `0 <= z <= 1/3` given as fixed-point bounds.
fn atanh_fx(z_lo: &BigInt, z_hi: &BigInt, p: u32) -> (BigInt, BigInt) {
    let z2_lo = mul_floor(z_lo, z_lo, p);
    let z2_hi = mul_ceil(z_hi, z_hi, p);
    let (mut pow_lo, mut pow_hi) = (z_lo.clone(), z_hi.clone());
    let (mut lo, mut hi) = (BigInt::zero(), BigInt::zero());
    let mut k = 1u64;
    loop {
        lo += &pow_lo / BigInt::from(k);
        hi += div_ceil_int(&pow_hi, k);
        pow_lo = mul_floor(&pow_lo, &z2_lo, p);
        pow_hi = mul_ceil(&pow_hi, &z2_hi, p);
        k += 2;
        // Remaining terms sum to at most pow·(1/(1 − z²))/k <= (9/8)·pow.
        if pow_hi <= BigInt::one() || k > 40 * p as u64 {
            hi += div_ceil_int(&(&pow_hi * 9u32), 8) + 1;
            return (lo, hi);
        }
    }
}

/// `ln y` for rational `y > 0`.
fn ln_bracket(y: &Rational, bits: u32) -> (Rational, Rational) {
    if y.is_one() {
        return (Rational::zero(), Rational::zero());
    }
    // y = 2^k · r with 1 <= r < 2.
    let nb = y.numer().bits() as i64;
    let db = y.denom().bits() as i64;
    let mut k = nb - db;
    let two = rational::int(2);
    let mut r = if k >= 0 {
        y / Rational::from_integer(BigInt::one() << k as usize)
    } else {
        y * Rational::from_integer(BigInt::one() << (-k) as usize)
    };
    while r >= two {
        r /= &two;
        k += 1;
    }
    while r < Rational::one() {
        r *= &two;
        k -= 1;
    }
    let guard = 32 + (64 - k.unsigned_abs().leading_zeros());
    let p = bits + guard;
    // ln r = 2·atanh((r − 1)/(r + 1)), ln 2 = 2·atanh(1/3).
    let z = (&r - Rational::one()) / (&r + Rational::one());
    let (zr_lo, zr_hi) = atanh_fx(&fx_floor(&z, p), &fx_ceil(&z, p), p);
    let third = rational::ratio(1, 3);
    let (l2_lo, l2_hi) = atanh_fx(&fx_floor(&third, p), &fx_ceil(&third, p), p);
    let kk = BigInt::from(k);
    let (lo, hi) = if k >= 0 {
        (&kk * &l2_lo + &zr_lo, &kk * &l2_hi + &zr_hi)
    } else {
        (&kk * &l2_hi + &zr_lo, &kk * &l2_lo + &zr_hi)
    };
    (
        fx_to_rational(lo << 1usize, p),
        fx_to_rational(hi << 1usize, p),
    )
}

/// `e^y` for rational `y`.
fn exp_bracket(y: &Rational, bits: u32) -> (Rational, Rational) {
    if y.is_zero() {
        return (Rational::one(), Rational::one());
    }
    if y.is_negative() {
        let (lo, hi) = exp_bracket(&-y, bits);
        return (hi.recip(), lo.recip());
    }
    // u = y / 2^j <= 1, then e^y = (e^u)^(2^j).
    let ceil_y = y.ceil().to_integer();
    let j = ceil_y.bits() as u32;
    let u = y / Rational::from_integer(BigInt::one() << j as usize);
    // Squaring j times multiplies the relative error by 2^j.
    let p = bits + j + 32;
    let (u_lo, u_hi) = (fx_floor(&u, p), fx_ceil(&u, p));
    let one = BigInt::one() << p as usize;
    let (mut lo, mut hi) = (one.clone(), one.clone());
    let (mut t_lo, mut t_hi) = (one.clone(), one);
    let mut k = 1u64;
    loop {
        t_lo = mul_floor(&t_lo, &u_lo, p) / BigInt::from(k);
        t_hi = div_ceil_int(&mul_ceil(&t_hi, &u_hi, p), k);
        lo += &t_lo;
        hi += &t_hi;
        k += 1;
        // For u <= 1 and k >= 2 the tail after this term is at most the term itself.
        if t_hi <= BigInt::one() {
            hi += &t_hi + 1;
            break;
        }
    }
    for _ in 0..j {
        lo = mul_floor(&lo, &lo, p);
        hi = mul_ceil(&hi, &hi, p);
    }
    debug_assert!(lo.sign() == Sign::Plus);
    (fx_to_rational(lo, p), fx_to_rational(hi, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio, to_f64};

    fn check(g: &Gauge, x: Rational, expect: f64) {
        let (lo, hi) = g.bracket(&x, 80).unwrap();
        assert!(lo <= hi);
        let (lo, hi) = (to_f64(&lo), to_f64(&hi));
        let tol = 1e-12 * expect.abs().max(1.0);
        assert!(
            lo <= expect + tol && expect - tol <= hi,
            "{g} at {x}: [{lo}, {hi}] vs {expect}"
        );
        assert!(hi - lo <= tol, "{g} at {x}: bracket too wide");
    }

    #[test]
    fn log_brackets_contain_ln() {
        for x in [
            ratio(1, 1000),
            ratio(1, 2),
            int(1),
            int(16),
            int(48),
            ratio(7, 3),
            int(1_000_000),
        ] {
            let xf = to_f64(&x);
            check(&Gauge::Log, x, xf.ln_1p());
        }
        assert_eq!(Gauge::Log.bracket(&int(0), 64).unwrap(), (int(0), int(0)));
    }

    #[test]
    fn exp_brackets_contain_exp() {
        for (a, x) in [
            (ratio(1, 10), int(16)),
            (int(2), int(16)),
            (int(1), ratio(1, 3)),
            (ratio(1, 10), int(48)),
        ] {
            let y = to_f64(&(&a * &x));
            check(&Gauge::exp(a).unwrap(), x, y.exp());
        }
        let (lo, hi) = exp_bracket(&int(-1), 64);
        assert!(to_f64(&lo) <= (-1f64).exp() && (-1f64).exp() <= to_f64(&hi) + 1e-18);
    }

    #[test]
    fn ln_two_is_tight_and_ordered() {
        let (lo, hi) = ln_bracket(&int(2), 200);
        assert!(lo < hi);
        assert!(&hi - &lo < Rational::new(BigInt::one(), BigInt::one() << 190usize));
        // 0.693147180559945309417232121458 truncated and rounded up.
        assert!(lo < ratio(693147180559945310, 1_000_000_000_000_000_000));
        assert!(hi > ratio(693147180559945309, 1_000_000_000_000_000_000));
    }

    #[test]
    fn ge_decides_by_refinement() {
        // ln 17 ≈ 2.833213344056216
        assert_eq!(
            Gauge::Log
                .ge(&ratio(2833213344, 1_000_000_000), &int(16))
                .unwrap(),
            Some(false)
        );
        assert_eq!(
            Gauge::Log
                .ge(&ratio(2833213345, 1_000_000_000), &int(16))
                .unwrap(),
            Some(true)
        );
        let lin = Gauge::linear(ratio(1, 4), int(0)).unwrap();
        assert_eq!(lin.ge(&int(4), &int(16)).unwrap(), Some(true));
        assert_eq!(lin.ge(&ratio(39, 10), &int(16)).unwrap(), Some(false));
        assert_eq!(Gauge::Identity.ge(&int(16), &int(16)).unwrap(), Some(true));
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["identity", "log", "linear:1/4,0/1", "exp:2/1", "exp:1/10"] {
            let g: Gauge = s.parse().unwrap();
            assert_eq!(g.to_string(), s);
        }
        assert_eq!(
            "exp:2".parse::<Gauge>().unwrap(),
            Gauge::exp(int(2)).unwrap()
        );
        assert!("exp:0".parse::<Gauge>().is_err());
        assert!("linear:1".parse::<Gauge>().is_err());
        assert!("sqrt".parse::<Gauge>().is_err());
        let json = serde_json::to_string(&Gauge::linear(ratio(1, 4), int(0)).unwrap()).unwrap();
        assert_eq!(json, r#"{"kind":"linear","a":"1/4","b":"0/1"}"#);
        assert_eq!(
            serde_json::from_str::<Gauge>(&json).unwrap(),
            Gauge::linear(ratio(1, 4), int(0)).unwrap()
        );
    }
}
