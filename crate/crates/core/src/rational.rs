//! Exact rational carrier and its canonical text form.
//!
//! Rationals are [`num_rational::BigRational`] values, which are kept in lowest
//! terms with a positive denominator after every operation. The text form is
//! always `a/b`, so `1` is written `1/1`; this makes emitted reports canonical.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = num_rational::BigRational;

pub fn ratio(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn from_biguint(v: &BigUint) -> Rational {
    Rational::from_integer(BigInt::from_biguint(Sign::Plus, v.clone()))
}

/// Canonical `a/b` text.
pub fn to_text(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `a/b`, a bare integer, or a finite decimal such as `0.6` or `-1.25`.
pub fn parse(s: &str) -> Result<Rational> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::parse("empty rational"));
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n
            .trim()
            .parse()
            .map_err(|_| Error::parse(format!("bad numerator in {s:?}")))?;
        let d: BigInt = d
            .trim()
            .parse()
            .map_err(|_| Error::parse(format!("bad denominator in {s:?}")))?;
        if d.is_zero() {
            return Err(Error::parse(format!("zero denominator in {s:?}")));
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let negative = whole.starts_with('-');
        let whole = whole.trim_start_matches(['-', '+']);
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::parse(format!("bad decimal {s:?}")));
        }
        let digits = format!("{}{}", if whole.is_empty() { "0" } else { whole }, frac);
        let n: BigInt = digits
            .parse()
            .map_err(|_| Error::parse(format!("bad decimal {s:?}")))?;
        let d = num_traits::pow(BigInt::from(10u32), frac.len());
        let r = Rational::new(n, d);
        return Ok(if negative { -r } else { r });
    }
    let n: BigInt = s
        .parse()
        .map_err(|_| Error::parse(format!("bad rational {s:?}")))?;
    Ok(Rational::from_integer(n))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn pow(r: &Rational, k: u32) -> Rational {
    Rational::new(
        num_traits::pow(r.numer().clone(), k as usize),
        num_traits::pow(r.denom().clone(), k as usize),
    )
}

pub fn two_pow(k: u32) -> Rational {
    Rational::from_integer(BigInt::one() << k as usize)
}

/// Certified rational lower bound for `6/π²`.
///
/// `π < 355/113`, hence `6/π² > 6·113²/355² = 76614/126025 > 6079/10000`.
pub fn six_over_pi_squared_lower() -> Rational {
    ratio(6079, 10000)
}

/// Largest multiple of `2^-bits` that is `<= r`.
pub fn floor_dyadic(r: &Rational, bits: u32) -> Rational {
    let scale = BigInt::one() << bits as usize;
    let scaled = r.numer() * &scale;
    Rational::new(scaled.div_floor(r.denom()), scale)
}

/// Smallest multiple of `2^-bits` that is `>= r`.
pub fn ceil_dyadic(r: &Rational, bits: u32) -> Rational {
    let scale = BigInt::one() << bits as usize;
    let scaled = r.numer() * &scale;
    let (q, rem) = scaled.div_mod_floor(r.denom());
    let q = if rem.is_zero() { q } else { q + 1 };
    Rational::new(q, scale)
}

pub fn is_positive(r: &Rational) -> bool {
    r.is_positive()
}

/// `#[serde(with = "crate::rational::text")]` helper: rationals as `a/b` strings.
pub mod text {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::Rational;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::to_text(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        super::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Vector-of-rationals variant of [`text`].
pub mod text_vec {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    use super::Rational;

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for r in v {
            seq.serialize_element(&super::to_text(r))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|s| super::parse(s).map_err(serde::de::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_is_always_a_over_b() {
        assert_eq!(to_text(&int(1)), "1/1");
        assert_eq!(to_text(&ratio(2, -4)), "-1/2");
        assert_eq!(to_text(&ratio(6, 60)), "1/10");
    }

    #[test]
    fn parses_fractions_integers_and_decimals() {
        assert_eq!(parse("3/9").unwrap(), ratio(1, 3));
        assert_eq!(parse("7").unwrap(), int(7));
        assert_eq!(parse("0.6").unwrap(), ratio(3, 5));
        assert_eq!(parse("-1.25").unwrap(), ratio(-5, 4));
        assert_eq!(parse(".5").unwrap(), ratio(1, 2));
        assert!(parse("1/0").is_err());
        assert!(parse("abc").is_err());
        assert!(parse("").is_err());
        assert!(parse("1.").is_err());
    }

    #[test]
    fn six_over_pi_squared_proxy_is_certified() {
        // 355/113 exceeds π, so 6·113²/355² is a rational lower bound for 6/π².
        let via_milu = ratio(6 * 113 * 113, 355 * 355);
        assert!(six_over_pi_squared_lower() < via_milu);
        assert!(to_f64(&six_over_pi_squared_lower()) < 6.0 / (std::f64::consts::PI.powi(2)));
    }

    #[test]
    fn dyadic_rounding_brackets() {
        let r = ratio(1, 3);
        let lo = floor_dyadic(&r, 10);
        let hi = ceil_dyadic(&r, 10);
        assert!(lo <= r && r <= hi);
        assert_eq!(&hi - &lo, ratio(1, 1024));
        assert_eq!(floor_dyadic(&ratio(3, 4), 4), ratio(3, 4));
        assert_eq!(ceil_dyadic(&ratio(3, 4), 4), ratio(3, 4));
        assert_eq!(floor_dyadic(&ratio(-1, 3), 2), ratio(-1, 2));
    }
}
