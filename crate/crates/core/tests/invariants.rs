use kg_core::gauge::Gauge;
use kg_core::measures::{
    exact_measure, intersection_measure_nonparallel, measure_b, measure_b_prime,
    measure_b_prime_bounds, IntVec, SlabSpec,
};
use kg_core::montecarlo::{mc_measure, MCConfig};
use kg_core::numtheory::{euler_phi, factorize, mobius, mobius_product, theta, Factorization};
use kg_core::rational::{self, int, ratio, Rational};
use kg_core::series::{
    divisor_sigma, jordan2_over_h, phi_chi, phi_chi_enumerated, primitive_count, sphere_count,
    ApproxFunction, Convention, MultiApproxFunction,
};
use num_bigint::BigUint;
use num_traits::{One, Zero};
use proptest::prelude::*;

fn nonzero_vec(n: usize) -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-12i64..=12, n).prop_filter("nonzero", |v| v.iter().any(|&c| c != 0))
}

fn delta() -> impl Strategy<Value = Rational> {
    (1i64..50).prop_map(|k| ratio(k, 101))
}

proptest! {
    #[test]
    fn factorization_round_trips(v in 1u64..5_000_000) {
        let f = factorize(v);
        prop_assert_eq!(f.value_u64(), Some(v));
        let text = f.to_string();
        prop_assert_eq!(text.parse::<Factorization>().unwrap(), f);
    }

    #[test]
    fn divisor_sums(v in 1u64..20_000) {
        let f = factorize(v);
        let divs = f.divisors();
        let mu: i64 = divs.iter().map(|d| mobius(d) as i64).sum();
        prop_assert_eq!(mu, (v == 1) as i64);
        let phi: BigUint = divs.iter().map(euler_phi).sum();
        prop_assert_eq!(phi, BigUint::from(v));
        let g: BigUint = divs.iter().map(|d| d.value()).sum();
        prop_assert_eq!(g, divisor_sigma(&f));
        let j2: Rational = divs
            .iter()
            .map(|d| rational::int(mobius(d) as i64) * rational::int(v as i64) / rational::pow(&rational::from_biguint(&d.value()), 2))
            .sum();
        prop_assert_eq!(j2, jordan2_over_h(&f));
    }

    #[test]
    fn mobius_product_is_a_divisor_sum(v in 1u64..5000, m in 1u32..4) {
        let f = factorize(v);
        let s: Rational = f
            .squarefree_divisors()
            .iter()
            .map(|(d, mu)| rational::int(*mu as i64) / rational::pow(&rational::from_biguint(&d.value()), m))
            .sum();
        prop_assert_eq!(s, mobius_product(&f, m));
        prop_assert!(theta(&f) * mobius_product(&f, 1) == Rational::one());
    }

    #[test]
    fn shells_partition_the_cube(n in 1u32..5, h in 1u64..40) {
        let total: BigUint = (1..=h).map(|k| sphere_count(n, k)).sum();
        prop_assert_eq!(total + 1u32, BigUint::from(2 * h + 1).pow(n));
        let prim: BigUint = factorize(h).divisors().iter().map(|d| primitive_count(n, d.value_u64().unwrap())).sum();
        prop_assert_eq!(prim, sphere_count(n, h));
    }

    #[test]
    fn slab_measures_are_ordered(q in nonzero_vec(3), d in delta(), m in 1u32..4) {
        let s = SlabSpec::new(IntVec::new(q).unwrap(), d, m, true).unwrap();
        let b = measure_b(&s);
        let bp = measure_b_prime(&s);
        prop_assert!(bp <= b && bp > Rational::zero());
        let (lo, hi) = measure_b_prime_bounds(&s);
        prop_assert!(lo <= bp && bp <= hi);
        prop_assert_eq!(exact_measure(&s), bp);
        prop_assert_eq!(exact_measure(&s.with_coprime(false)), b);
    }

    #[test]
    fn nonparallel_intersection_is_symmetric(q1 in nonzero_vec(2), q2 in nonzero_vec(2), d1 in delta(), d2 in delta(), cp in any::<bool>()) {
        let a = SlabSpec::new(IntVec::new(q1).unwrap(), d1, 1, cp).unwrap();
        let b = SlabSpec::new(IntVec::new(q2).unwrap(), d2, 1, cp).unwrap();
        match intersection_measure_nonparallel(&a, &b) {
            Ok(v) => {
                prop_assert_eq!(&v, &intersection_measure_nonparallel(&b, &a).unwrap());
                prop_assert!(v <= exact_measure(&a).min(exact_measure(&b)));
            }
            Err(_) => prop_assert!(a.q().is_parallel(b.q())),
        }
    }

    #[test]
    fn rationals_round_trip(n in -10_000i64..10_000, d in 1i64..10_000) {
        let r = ratio(n, d);
        prop_assert_eq!(rational::parse(&rational::to_text(&r)).unwrap(), r);
    }

    #[test]
    fn gauge_brackets_nest(num in 0i64..4000, den in 1i64..50) {
        let x = ratio(num, den);
        for g in [Gauge::Log, Gauge::exp(ratio(1, 3)).unwrap()] {
            let (lo64, hi64) = g.bracket(&x, 64).unwrap();
            let (lo, hi) = g.bracket(&x, 256).unwrap();
            prop_assert!(lo64 <= lo && lo <= hi && hi <= hi64);
            let xf = rational::to_f64(&x);
            let f = match g { Gauge::Log => (1.0 + xf).ln(), _ => (xf / 3.0).exp() };
            prop_assert!(rational::to_f64(&lo) <= f * (1.0 + 1e-12) && f * (1.0 - 1e-12) <= rational::to_f64(&hi));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_forms_match_enumeration(c in 1i64..5, h in 1u64..40, conv in prop_oneof![Just(Convention::Theorem), Just(Convention::Proof)]) {
        let psi = ApproxFunction::power(ratio(c, 9), int(1)).unwrap();
        let lift = MultiApproxFunction::NormLift { psi, n: 2 };
        prop_assert_eq!(
            phi_chi(&lift, 1, &BigUint::from(h), conv).unwrap(),
            phi_chi_enumerated(&lift, 1, h, conv).unwrap()
        );
    }

    #[test]
    fn mc_does_not_depend_on_workers(seed in any::<u64>(), workers in 2usize..5) {
        let s = SlabSpec::new(IntVec::new(vec![2, 3]).unwrap(), ratio(1, 5), 1, true).unwrap();
        let run = |w| mc_measure(|x| kg_core::measures::classify(x, &s), 2, &MCConfig::new(seed, 9000, w)).unwrap();
        prop_assert_eq!(run(1), run(workers));
    }
}
