//! A quick battery of exact invariants, for a smoke check of a build.

use num_bigint::BigUint;
use serde::Serialize;

use crate::counterexample::{build_psi, certify, DEFAULT_PRIME_BUDGET};
use crate::gauge::Gauge;
use crate::measures::{
    intersection_measure_nonparallel, measure_b, measure_b_prime, IntVec, SlabSpec,
};
use crate::numtheory::{divisor_count, euler_phi, factorize, mobius, mobius_product, theta};
use crate::rational::{self, int, ratio, Rational};
use crate::series::{
    divisor_sigma, jordan2_over_h, khintchine_partial_sum, phi_chi, phi_chi_enumerated,
    primitive_count, sphere_count, sum_b_prime_measures, ApproxFunction, Convention,
    MultiApproxFunction,
};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name,
        passed,
        detail: detail.into(),
    }
}

fn divisor_sum_identities(limit: u64) -> Check {
    for v in 1..=limit {
        let f = factorize(v);
        let divs = f.divisors();
        let mu: i64 = divs.iter().map(|d| mobius(d) as i64).sum();
        if mu != i64::from(v == 1) {
            return check("divisor_sums", false, format!("Σμ(d) at {v}"));
        }
        let phi: BigUint = divs.iter().map(euler_phi).sum();
        if phi != f.value() {
            return check("divisor_sums", false, format!("Σφ(d) at {v}"));
        }
        let lhs: Rational = divs
            .iter()
            .map(|d| {
                rational::from_biguint(&euler_phi(d))
                    * rational::from_biguint(&euler_phi(&f.div(d).unwrap()))
                    / rational::from_biguint(&d.value())
            })
            .sum();
        if lhs != jordan2_over_h(&f) {
            return check("divisor_sums", false, format!("f at {v}"));
        }
        let g: BigUint = divs
            .iter()
            .map(|d| divisor_count(d) * euler_phi(&f.div(d).unwrap()))
            .sum();
        if g != divisor_sigma(&f) {
            return check("divisor_sums", false, format!("g at {v}"));
        }
        let mut mp = Rational::from_integer(0.into());
        for (d, m) in f.squarefree_divisors() {
            mp += int(m as i64) / rational::pow(&rational::from_biguint(&d.value()), 2);
        }
        if mp != mobius_product(&f, 2) {
            return check("divisor_sums", false, format!("Σμ(d)/d² at {v}"));
        }
    }
    check(
        "divisor_sums",
        true,
        format!("μ, φ, f, g identities for n <= {limit}"),
    )
}

fn lattice_counts() -> Check {
    for h in 1..=200u64 {
        if primitive_count(2, h) != euler_phi(&factorize(h)) * 8u32 {
            return check(
                "lattice_counts",
                false,
                format!("primitive_count(2, {h}) != 8φ({h})"),
            );
        }
        if sphere_count(2, h) != BigUint::from(8 * h) {
            return check(
                "lattice_counts",
                false,
                format!("sphere_count(2, {h}) != 8h"),
            );
        }
    }
    check(
        "lattice_counts",
        true,
        "8h and 8φ(h) in the plane for h <= 200",
    )
}

fn slab_identities() -> Check {
    let a = SlabSpec::new(IntVec::new(vec![2, 2]).unwrap(), ratio(1, 10), 1, true).unwrap();
    let b = SlabSpec::new(IntVec::new(vec![1, 0]).unwrap(), ratio(1, 10), 1, false).unwrap();
    let ok = measure_b_prime(&a) == ratio(1, 10)
        && measure_b(&b) == ratio(1, 5)
        && intersection_measure_nonparallel(&a.with_coprime(false), &b).unwrap() == ratio(1, 25);
    check(
        "slab_measures",
        ok,
        "|B'((2,2),1/10)| = 1/10, |B((1,0),1/10)| = 1/5, product rule",
    )
}

fn sums() -> Check {
    let p = ApproxFunction::power(ratio(1, 4), int(1)).unwrap();
    let k = khintchine_partial_sum(&p, 2, 1, &BigUint::from(100u32)).unwrap();
    let t = ApproxFunction::table([(1, ratio(1, 10))].into()).unwrap();
    let s1 = sum_b_prime_measures(&t, 2, 1, 1).unwrap();
    let lift = MultiApproxFunction::NormLift { psi: p, n: 3 };
    let closed = phi_chi(&lift, 2, &BigUint::from(6u32), Convention::Theorem).unwrap();
    let brute = phi_chi_enumerated(&lift, 2, 6, Convention::Theorem).unwrap();
    let ok = k == int(25) && s1 == ratio(8, 5) && closed == brute;
    check(
        "series",
        ok,
        "Khintchine sum N/4, S_1 = 8/5, Φ/χ closed form against enumeration",
    )
}

fn counterexample() -> Check {
    let run = || -> crate::Result<bool> {
        let (psi, cert) = build_psi(&Gauge::Log, 1, 5, DEFAULT_PRIME_BUDGET)?;
        let ApproxFunction::Sparse(s) = &psi else {
            return Ok(false);
        };
        Ok(certify(s, &Gauge::Log, 2, 1, &cert)?.passed() && theta(&cert.blocks[0].h) > int(5))
    };
    match run() {
        Ok(ok) => check(
            "counterexample",
            ok,
            "log gauge, five blocks, certificate replay",
        ),
        Err(e) => check("counterexample", false, e.to_string()),
    }
}

/// Runs every check; never panics.
pub fn run() -> Vec<Check> {
    vec![
        divisor_sum_identities(2000),
        lattice_counts(),
        slab_identities(),
        sums(),
        counterexample(),
    ]
}
